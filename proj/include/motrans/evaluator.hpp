#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "motrans/config.hpp"
#include "motrans/data.hpp"
#include "motrans/genome.hpp"
#include "motrans/nn/model.hpp"

namespace motrans {

// Objective values, all minimized.
using ObjectiveVector = std::vector<double>;

// Perplexity reported for a genome whose training diverged or failed.
inline constexpr double kFailurePerplexity = 1e9;

struct EvalMetrics {
  double bleu = 0.0;
  double perplexity = 1.0;
  std::int64_t param_count = 0;
  int epochs_run = 0;
  std::vector<double> val_loss_trace;
  bool diverged = false;

  friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

void to_json(nlohmann::json& j, const EvalMetrics& m);
void from_json(const nlohmann::json& j, EvalMetrics& m);

// (100 - bleu, k * perplexity)
ObjectiveVector to_objectives(const EvalMetrics& m, double k);

// Implementations are deterministic per genome and safe to call concurrently.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvalMetrics evaluate(const Genome& g) const = 0;
  virtual std::string name() const = 0;
};

// Non-last, non-forced decoder blocks wired to their aligned encoder.
int aligned_wiring_count(const Genome& g);

// Closed-form stand-in for training:
//   bleu = min(100, 100 (1 - 2^(-L/4)) + 2 A),  ppl = 1 + params / 1e6
// with L the total layer count and A = aligned_wiring_count(g).
EvalMetrics surrogate_evaluate(const Genome& g, const ModelGlobals& globals);

class SurrogateEvaluator final : public Evaluator {
 public:
  explicit SurrogateEvaluator(ModelGlobals globals) : globals_(globals) {}
  EvalMetrics evaluate(const Genome& g) const override { return surrogate_evaluate(g, globals_); }
  std::string name() const override { return "surrogate"; }

 private:
  ModelGlobals globals_;
};

// Validation-loss patience tracker. A loss counts as an improvement only
// when strictly below the best seen so far.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Records one epoch's loss; true once `patience` epochs pass without improvement.
  bool update(double loss);
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }
  int epochs() const { return epochs_; }
  bool improved_last() const { return improved_last_; }

 private:
  int patience_;
  double best_ = 0.0;
  int best_epoch_ = 0;
  int epochs_ = 0;
  int stale_ = 0;
  bool improved_last_ = false;
};

// Epochs run when replaying `trace` under early stopping and an epoch cap.
int epochs_until_stop(const std::vector<double>& trace, int patience, int max_epochs);

// Argmax decoding from bos until eos or max_len tokens; ties go to the lowest
// id. Returned sequences exclude bos and include eos when it was produced.
std::vector<TokenSeq> greedy_decode(const nn::Transformer<float>& model, const std::vector<TokenSeq>& sources,
                                    int max_len, int bos_id = kBosId, int eos_id = kEosId);

// Token-weighted mean cross-entropy of the model over `pairs` (teacher forcing).
double mean_loss(const nn::Transformer<float>& model, const std::vector<SentencePair>& pairs, int batch_size);

// Trains the genome's model with Adam under early stopping, then reports
// perplexity from the best validation epoch and corpus BLEU of greedy decodes
// of the validation split with the best-epoch weights.
EvalMetrics neural_evaluate(const Genome& g, const Corpus& corpus, const TrainConfig& train, std::uint64_t seed);

class NeuralEvaluator final : public Evaluator {
 public:
  NeuralEvaluator(std::shared_ptr<const Corpus> corpus, TrainConfig train, std::uint64_t seed);
  EvalMetrics evaluate(const Genome& g) const override;
  std::string name() const override { return "neural"; }

 private:
  std::shared_ptr<const Corpus> corpus_;
  TrainConfig train_;
  std::uint64_t seed_;
};

}  // namespace motrans
