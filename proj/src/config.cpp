#include "motrans/config.hpp"

#include <sstream>

namespace motrans {

SearchConfig SearchConfig::full_size() { return SearchConfig{}; }

SearchConfig SearchConfig::desk() {
  SearchConfig c;
  c.ffn_dims = {64, 128};
  c.train.embedding_size = 32;
  c.surrogate_src_vocab = 16;
  c.surrogate_tgt_vocab = 16;
  return c;
}

std::vector<std::string> SearchConfig::problems() const {
  std::vector<std::string> out;
  auto check_bounds = [&](const Bounds& b, const char* name) {
    if (b.lower < 1) out.push_back(std::string(name) + " lower bound must be >= 1");
    if (b.upper < b.lower) out.push_back(std::string(name) + " upper bound below lower bound");
  };
  check_bounds(encoder_bounds, "encoder");
  check_bounds(decoder_bounds, "decoder");
  if (heads.empty()) out.push_back("head-count domain is empty");
  if (ffn_dims.empty()) out.push_back("ffn-dim domain is empty");
  for (int h : heads) {
    if (h < 1) {
      out.push_back("head counts must be positive");
    } else if (train.embedding_size % h != 0) {
      out.push_back("embedding size " + std::to_string(train.embedding_size) +
                    " not divisible by head count " + std::to_string(h));
    }
  }
  for (int d : ffn_dims) {
    if (d < 1) out.push_back("ffn dims must be positive");
  }
  if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) out.push_back("crossover probability outside [0,1]");
  if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) out.push_back("mutation probability outside [0,1]");
  if (population < 2) out.push_back("population must be >= 2");
  if (neighbors < 1 || neighbors > population) out.push_back("neighborhood size must be in [1, population]");
  if (generations < 0) out.push_back("generations must be >= 0");
  if (max_evaluations < 0) out.push_back("max_evaluations must be >= 0");
  if (!(k >= 0.0)) out.push_back("k must be non-negative");
  if (train.max_epochs < 1) out.push_back("max_epochs must be >= 1");
  if (train.patience < 1) out.push_back("patience must be >= 1");
  if (train.embedding_size < 1) out.push_back("embedding size must be positive");
  if (train.batch_size < 1) out.push_back("batch size must be positive");
  if (!(train.learning_rate > 0.0)) out.push_back("learning rate must be positive");
  if (train.decode_max_len < 0) out.push_back("decode_max_len must be >= 0");
  if (surrogate_src_vocab < 1 || surrogate_tgt_vocab < 1) out.push_back("surrogate vocab sizes must be positive");
  return out;
}

void SearchConfig::check() const {
  auto ps = problems();
  if (ps.empty()) return;
  std::ostringstream os;
  os << "invalid search config:";
  for (const auto& p : ps) os << "\n  " << p;
  throw ConfigError(os.str());
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"max_epochs", c.max_epochs},         {"patience", c.patience},
       {"embedding_size", c.embedding_size}, {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},   {"decode_max_len", c.decode_max_len}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.embedding_size = j.value("embedding_size", c.embedding_size);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decode_max_len = j.value("decode_max_len", c.decode_max_len);
}

void to_json(nlohmann::json& j, const SearchConfig& c) {
  j = {{"encoder_bounds", {c.encoder_bounds.lower, c.encoder_bounds.upper}},
       {"decoder_bounds", {c.decoder_bounds.lower, c.decoder_bounds.upper}},
       {"heads", c.heads},
       {"ffn_dims", c.ffn_dims},
       {"crossover_prob", c.crossover_prob},
       {"mutation_prob", c.mutation_prob},
       {"population", c.population},
       {"generations", c.generations},
       {"neighbors", c.neighbors},
       {"k", c.k},
       {"max_evaluations", c.max_evaluations},
       {"seed", c.seed},
       {"train", c.train},
       {"surrogate_src_vocab", c.surrogate_src_vocab},
       {"surrogate_tgt_vocab", c.surrogate_tgt_vocab}};
}

namespace {

Bounds bounds_from(const nlohmann::json& j, Bounds fallback) {
  if (j.is_array() && j.size() == 2) return {j[0].get<int>(), j[1].get<int>()};
  if (j.is_object()) return {j.value("lower", fallback.lower), j.value("upper", fallback.upper)};
  throw ConfigError("bounds must be [lower, upper]");
}

}  // namespace

void from_json(const nlohmann::json& j, SearchConfig& c) {
  if (!j.is_object()) throw ConfigError("search config must be a JSON object");
  if (j.contains("encoder_bounds")) c.encoder_bounds = bounds_from(j["encoder_bounds"], c.encoder_bounds);
  if (j.contains("decoder_bounds")) c.decoder_bounds = bounds_from(j["decoder_bounds"], c.decoder_bounds);
  if (j.contains("block_bounds")) {
    c.encoder_bounds = c.decoder_bounds = bounds_from(j["block_bounds"], c.encoder_bounds);
  }
  c.heads = j.value("heads", c.heads);
  c.ffn_dims = j.value("ffn_dims", c.ffn_dims);
  c.crossover_prob = j.value("crossover_prob", c.crossover_prob);
  c.mutation_prob = j.value("mutation_prob", c.mutation_prob);
  c.population = j.value("population", c.population);
  c.generations = j.value("generations", c.generations);
  c.neighbors = j.value("neighbors", c.neighbors);
  c.k = j.value("k", c.k);
  c.max_evaluations = j.value("max_evaluations", c.max_evaluations);
  c.seed = j.value("seed", c.seed);
  if (j.contains("train")) {
    TrainConfig t = c.train;
    from_json(j["train"], t);
    c.train = t;
  }
  c.surrogate_src_vocab = j.value("surrogate_src_vocab", c.surrogate_src_vocab);
  c.surrogate_tgt_vocab = j.value("surrogate_tgt_vocab", c.surrogate_tgt_vocab);
}

}  // namespace motrans
