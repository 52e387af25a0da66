#include "motrans/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "motrans/rng.hpp"

namespace motrans {

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
}

int Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocab id out of range: " + std::to_string(id));
  return tokens_[id];
}

TokenSeq Vocab::encode(const std::vector<std::string>& words) const {
  TokenSeq ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocab::decode(const TokenSeq& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (int i : ids) words.push_back(token(i));
  return words;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

TokenSeq frame_target(TokenSeq body) {
  body.insert(body.begin(), kBosId);
  body.push_back(kEosId);
  return body;
}

}  // namespace

Vocab build_vocab(const std::vector<std::string>& lines, int min_frequency) {
  std::unordered_map<std::string, int> freq;
  std::vector<std::string> order;
  for (const auto& line : lines) {
    for (const auto& w : split_ws(line)) {
      if (freq[w]++ == 0) order.push_back(w);
    }
  }
  Vocab v;
  for (const auto& w : order) {
    if (freq[w] >= min_frequency) v.add(w);
  }
  return v;
}

std::vector<std::string> Corpus::problems() const {
  std::vector<std::string> out;
  auto check = [&](const std::vector<SentencePair>& split, const char* name) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      const auto& p = split[i];
      const std::string where = std::string(name) + " pair " + std::to_string(i);
      for (int t : p.source) {
        if (t < 0 || t >= source_vocab.size()) out.push_back(where + ": source id out of range");
      }
      for (int t : p.target) {
        if (t < 0 || t >= target_vocab.size()) out.push_back(where + ": target id out of range");
      }
      if (p.target.size() < 2 || p.target.front() != kBosId || p.target.back() != kEosId) {
        out.push_back(where + ": target not framed by bos/eos");
      }
    }
  };
  check(train, "train");
  check(validation, "validation");
  return out;
}

SyntheticTask parse_task(const std::string& name) {
  if (name == "copy") return SyntheticTask::Copy;
  if (name == "reverse") return SyntheticTask::Reverse;
  if (name == "sort") return SyntheticTask::Sort;
  throw DataError("unknown task '" + name + "' (expected copy, reverse or sort)");
}

const char* to_string(SyntheticTask task) {
  switch (task) {
    case SyntheticTask::Copy: return "copy";
    case SyntheticTask::Reverse: return "reverse";
    case SyntheticTask::Sort: return "sort";
  }
  return "?";
}

TokenSeq apply_task(SyntheticTask task, const TokenSeq& source) {
  TokenSeq body = source;
  if (task == SyntheticTask::Reverse) std::reverse(body.begin(), body.end());
  if (task == SyntheticTask::Sort) std::sort(body.begin(), body.end());
  return frame_target(std::move(body));
}

Corpus gen_synthetic(const SyntheticSpec& spec) {
  if (spec.vocab_size <= kReservedTokens) throw DataError("synthetic vocab must exceed the reserved tokens");
  if (spec.min_length < 1 || spec.max_length < spec.min_length) throw DataError("invalid length range");
  if (spec.pairs < 1) throw DataError("pair count must be positive");
  const int symbols = spec.vocab_size - kReservedTokens;
  double capacity = 0.0;
  for (int len = spec.min_length; len <= spec.max_length; ++len) capacity += std::pow(symbols, len);
  if (capacity < spec.pairs) throw DataError("not enough distinct sources for the requested pair count");

  Vocab vocab;
  for (int s = 0; s < symbols; ++s) vocab.add(std::to_string(kReservedTokens + s));

  RngStream rng(spec.seed);
  std::set<TokenSeq> seen;
  std::vector<TokenSeq> sources;
  sources.reserve(spec.pairs);
  while (static_cast<int>(sources.size()) < spec.pairs) {
    const int len = static_cast<int>(rng.uniform_int(spec.min_length, spec.max_length));
    TokenSeq src(len);
    for (int& t : src) t = static_cast<int>(rng.uniform_int(kReservedTokens, spec.vocab_size - 1));
    if (seen.insert(src).second) sources.push_back(std::move(src));
  }

  Corpus c;
  c.source_vocab = vocab;
  c.target_vocab = vocab;
  const auto n_valid = static_cast<std::size_t>(spec.pairs / 10);
  const std::size_t n_train = sources.size() - n_valid;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    SentencePair p{sources[i], apply_task(spec.task, sources[i])};
    (i < n_train ? c.train : c.validation).push_back(std::move(p));
  }
  return c;
}

Corpus load_tsv(const std::filesystem::path& path, const TsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> src_lines, tgt_lines;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ": line " + std::to_string(line_no) + ": missing tab separator");
    }
    src_lines.push_back(line.substr(0, tab));
    tgt_lines.push_back(line.substr(tab + 1));
  }
  const std::size_t n = src_lines.size();
  const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * options.validation_fraction));
  const std::size_t n_train = n - n_valid;

  Corpus c;
  c.source_vocab = build_vocab({src_lines.begin(), src_lines.begin() + n_train}, options.min_frequency);
  c.target_vocab = build_vocab({tgt_lines.begin(), tgt_lines.begin() + n_train}, options.min_frequency);
  for (std::size_t i = 0; i < n; ++i) {
    SentencePair p{c.source_vocab.encode(split_ws(src_lines[i])),
                   frame_target(c.target_vocab.encode(split_ws(tgt_lines[i])))};
    (i < n_train ? c.train : c.validation).push_back(std::move(p));
  }
  return c;
}

void save_corpus_cache(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  nlohmann::json header = {{"source_vocab", corpus.source_vocab.tokens()},
                           {"target_vocab", corpus.target_vocab.tokens()}};
  out << header.dump() << '\n';
  auto emit = [&](const std::vector<SentencePair>& split, const char* name) {
    for (const auto& p : split) {
      out << nlohmann::json{{"split", name}, {"src", p.source}, {"tgt", p.target}}.dump() << '\n';
    }
  };
  emit(corpus.train, "train");
  emit(corpus.validation, "validation");
}

Corpus load_corpus_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  Corpus c;
  std::string line;
  int line_no = 0;
  try {
    if (!std::getline(in, line)) throw DataError("empty corpus cache");
    ++line_no;
    auto header = nlohmann::json::parse(line);
    auto load_vocab = [](const nlohmann::json& tokens) {
      Vocab v;
      auto list = tokens.get<std::vector<std::string>>();
      for (std::size_t i = kReservedTokens; i < list.size(); ++i) v.add(list[i]);
      return v;
    };
    c.source_vocab = load_vocab(header.at("source_vocab"));
    c.target_vocab = load_vocab(header.at("target_vocab"));
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      SentencePair p{j.at("src").get<TokenSeq>(), j.at("tgt").get<TokenSeq>()};
      const auto split = j.at("split").get<std::string>();
      if (split == "train") {
        c.train.push_back(std::move(p));
      } else if (split == "validation") {
        c.validation.push_back(std::move(p));
      } else {
        throw DataError("unknown split '" + split + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
  }
  return c;
}

}  // namespace motrans
