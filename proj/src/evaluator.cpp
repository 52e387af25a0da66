#include "motrans/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "motrans/metrics.hpp"
#include "motrans/nn/optim.hpp"
#include "motrans/variation.hpp"

namespace motrans {

namespace {

// JSON has no NaN/Inf; non-finite reals travel as null.
nlohmann::json real_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double real_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const EvalMetrics& m) {
  auto trace = nlohmann::json::array();
  for (double v : m.val_loss_trace) trace.push_back(real_json(v));
  j = {{"bleu", real_json(m.bleu)},
       {"perplexity", real_json(m.perplexity)},
       {"param_count", m.param_count},
       {"epochs_run", m.epochs_run},
       {"val_loss_trace", trace},
       {"diverged", m.diverged}};
}

void from_json(const nlohmann::json& j, EvalMetrics& m) {
  m.bleu = real_from(j.at("bleu"));
  m.perplexity = real_from(j.at("perplexity"));
  m.param_count = j.at("param_count").get<std::int64_t>();
  m.epochs_run = j.value("epochs_run", 0);
  m.val_loss_trace.clear();
  if (j.contains("val_loss_trace")) {
    for (const auto& v : j.at("val_loss_trace")) m.val_loss_trace.push_back(real_from(v));
  }
  m.diverged = j.value("diverged", false);
}

ObjectiveVector to_objectives(const EvalMetrics& m, double k) { return {100.0 - m.bleu, k * m.perplexity}; }

int aligned_wiring_count(const Genome& g) {
  int a = 0;
  // Forced positions carry no choice, so they never count.
  for (int i = 1; i < g.nd(); ++i) {
    if (cross_source_forced(i, g.ne(), g.nd())) continue;
    if (g.decoders[i - 1].ce == aligned_index(i, g.ne(), g.nd())) ++a;
  }
  return a;
}

EvalMetrics surrogate_evaluate(const Genome& g, const ModelGlobals& globals) {
  EvalMetrics m;
  const double depth = static_cast<double>(g.layer_count());
  m.bleu = std::min(100.0, 100.0 * (1.0 - std::exp2(-depth / 4.0)) + 2.0 * aligned_wiring_count(g));
  m.param_count = param_count(g, globals);
  m.perplexity = 1.0 + static_cast<double>(m.param_count) / 1e6;
  return m;
}

bool EarlyStopping::update(double loss) {
  ++epochs_;
  if (epochs_ == 1 || loss < best_) {
    best_ = loss;
    best_epoch_ = epochs_;
    stale_ = 0;
    improved_last_ = true;
  } else {
    ++stale_;
    improved_last_ = false;
  }
  return stale_ >= patience_;
}

int epochs_until_stop(const std::vector<double>& trace, int patience, int max_epochs) {
  EarlyStopping es(patience);
  int run = 0;
  for (double loss : trace) {
    if (run >= max_epochs) break;
    ++run;
    if (es.update(loss)) break;
  }
  return run;
}

namespace {

nn::TokenBatch pad_batch(const std::vector<const TokenSeq*>& seqs, std::size_t drop_front, std::size_t drop_back) {
  nn::TokenBatch b;
  b.rows = seqs.size();
  for (const auto* s : seqs) b.cols = std::max(b.cols, s->size() - drop_front - drop_back);
  b.ids.assign(b.rows * b.cols, kPadId);
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    const auto& s = *seqs[r];
    std::copy(s.begin() + static_cast<std::ptrdiff_t>(drop_front), s.end() - static_cast<std::ptrdiff_t>(drop_back),
              b.ids.begin() + static_cast<std::ptrdiff_t>(r * b.cols));
  }
  return b;
}

struct TeacherBatch {
  nn::TokenBatch src, tgt_in;
  std::vector<int> targets;
};

TeacherBatch make_teacher_batch(const std::vector<SentencePair>& pairs, std::span<const std::size_t> idx) {
  std::vector<const TokenSeq*> srcs, tgts;
  for (auto i : idx) {
    srcs.push_back(&pairs[i].source);
    tgts.push_back(&pairs[i].target);
  }
  TeacherBatch b;
  b.src = pad_batch(srcs, 0, 0);
  b.tgt_in = pad_batch(tgts, 0, 1);
  b.targets = pad_batch(tgts, 1, 0).ids;
  return b;
}

}  // namespace

std::vector<TokenSeq> greedy_decode(const nn::Transformer<float>& model, const std::vector<TokenSeq>& sources,
                                    int max_len, int bos_id, int eos_id) {
  std::vector<TokenSeq> out(sources.size());
  if (sources.empty() || max_len < 1) return out;
  std::vector<const TokenSeq*> srcs;
  for (const auto& s : sources) srcs.push_back(&s);
  const auto src = pad_batch(srcs, 0, 0);
  const auto src_mask = src.mask(kPadId);
  const auto enc = model.encode(src);
  const auto V = static_cast<std::size_t>(model.plan().globals.tgt_vocab);

  std::vector<bool> done(sources.size(), false);
  nn::TokenBatch prefix{sources.size(), 1, std::vector<int>(sources.size(), bos_id)};
  for (int step = 0; step < max_len; ++step) {
    const auto logits = model.decode(prefix, enc, src_mask);
    const auto data = logits.data();
    nn::TokenBatch next{prefix.rows, prefix.cols + 1, std::vector<int>(prefix.rows * (prefix.cols + 1), kPadId)};
    bool all_done = true;
    for (std::size_t r = 0; r < prefix.rows; ++r) {
      std::copy_n(prefix.ids.begin() + static_cast<std::ptrdiff_t>(r * prefix.cols), prefix.cols,
                  next.ids.begin() + static_cast<std::ptrdiff_t>(r * next.cols));
      if (done[r]) continue;
      const float* row = &data[(r * prefix.cols + prefix.cols - 1) * V];
      std::size_t best = 0;
      for (std::size_t c = 1; c < V; ++c) {
        if (row[c] > row[best]) best = c;
      }
      const int tok = static_cast<int>(best);
      out[r].push_back(tok);
      next.ids[r * next.cols + prefix.cols] = tok;
      if (tok == eos_id) done[r] = true;
      all_done = all_done && done[r];
    }
    if (all_done) break;
    prefix = std::move(next);
  }
  return out;
}

double mean_loss(const nn::Transformer<float>& model, const std::vector<SentencePair>& pairs, int batch_size) {
  double total = 0.0;
  std::size_t tokens = 0;
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    const auto b = make_teacher_batch(pairs, std::span(idx).subspan(start, end - start));
    const auto n = nn::count_targets(b.targets, kPadId);
    const auto loss = nn::cross_entropy(model.forward(b.src, b.tgt_in), b.targets, kPadId);
    total += static_cast<double>(loss.item()) * static_cast<double>(n);
    tokens += n;
  }
  if (tokens == 0) throw std::invalid_argument("mean_loss: no target tokens");
  return total / static_cast<double>(tokens);
}

EvalMetrics neural_evaluate(const Genome& g, const Corpus& corpus, const TrainConfig& train, std::uint64_t seed) {
  if (corpus.train.empty() || corpus.validation.empty()) {
    throw DataError("neural evaluation needs non-empty train and validation splits");
  }
  const ModelGlobals globals{train.embedding_size, corpus.source_vocab.size(), corpus.target_vocab.size()};
  const auto flat = encode_flat(g);
  RngStream rng = RngStream::derive(seed, hash_ints(flat));
  nn::Transformer<float> model(nn::build_plan(g, globals), rng);
  nn::Adam<float> optimizer(model.parameters(), train.learning_rate);

  EvalMetrics m;
  m.param_count = model.parameter_count();
  auto fail = [&] {
    m.diverged = true;
    m.bleu = 0.0;
    m.perplexity = kFailurePerplexity;
    return m;
  };

  EarlyStopping stopper(train.patience);
  std::vector<std::vector<float>> best_weights = model.snapshot();
  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(train.batch_size);
  for (int epoch = 0; epoch < train.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto end = std::min(order.size(), start + batch);
      const auto b = make_teacher_batch(corpus.train, std::span(order).subspan(start, end - start));
      model.zero_grad();
      auto loss = nn::cross_entropy(model.forward(b.src, b.tgt_in), b.targets, kPadId);
      if (!std::isfinite(loss.item())) {
        m.epochs_run = epoch + 1;
        m.val_loss_trace.push_back(std::numeric_limits<double>::quiet_NaN());
        return fail();
      }
      loss.backward();
      optimizer.step();
    }
    const double val = mean_loss(model, corpus.validation, train.batch_size);
    m.val_loss_trace.push_back(val);
    m.epochs_run = epoch + 1;
    if (!std::isfinite(val)) return fail();
    const bool stop = stopper.update(val);
    if (stopper.improved_last()) best_weights = model.snapshot();
    if (stop) break;
  }
  model.restore(best_weights);
  m.perplexity = perplexity(stopper.best());

  int max_len = train.decode_max_len;
  if (max_len == 0) {
    std::size_t longest = 0;
    for (const auto& p : corpus.validation) longest = std::max(longest, p.target.size());
    max_len = static_cast<int>(longest) + 5;
  }
  std::vector<TokenSeq> hyps, refs;
  for (std::size_t start = 0; start < corpus.validation.size(); start += batch) {
    const auto end = std::min(corpus.validation.size(), start + batch);
    std::vector<TokenSeq> sources;
    for (std::size_t i = start; i < end; ++i) sources.push_back(corpus.validation[i].source);
    for (auto& h : greedy_decode(model, sources, max_len)) {
      if (!h.empty() && h.back() == kEosId) h.pop_back();
      hyps.push_back(std::move(h));
    }
  }
  for (const auto& p : corpus.validation) refs.emplace_back(p.target.begin() + 1, p.target.end() - 1);
  m.bleu = bleu(hyps, refs);
  return m;
}

NeuralEvaluator::NeuralEvaluator(std::shared_ptr<const Corpus> corpus, TrainConfig train, std::uint64_t seed)
    : corpus_(std::move(corpus)), train_(train), seed_(seed) {
  if (!corpus_) throw std::invalid_argument("NeuralEvaluator: corpus is null");
}

EvalMetrics NeuralEvaluator::evaluate(const Genome& g) const { return neural_evaluate(g, *corpus_, train_, seed_); }

}  // namespace motrans
