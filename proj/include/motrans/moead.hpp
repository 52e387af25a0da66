#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "motrans/config.hpp"
#include "motrans/evaluator.hpp"
#include "motrans/genome.hpp"
#include "motrans/rng.hpp"

namespace motrans {

using WeightVector = std::vector<double>;

// Objective value assigned to f2 when an evaluation throws.
inline constexpr double kFailureObjective = 1e9;

// Evenly spaced bi-objective weights: (i/(n-1), 1 - i/(n-1)), i = 0..n-1.
std::vector<WeightVector> gen_weight_vectors(int n, int m = 2);

// For each weight, the indices of its `t` nearest weights by Euclidean
// distance (itself included), ties going to the lower index.
std::vector<std::vector<int>> neighborhoods(const std::vector<WeightVector>& weights, int t);

// max_j weight_j * |f_j - ideal_j|
double tchebyshev(const ObjectiveVector& f, const WeightVector& weight, const ObjectiveVector& ideal);

// Pareto dominance under minimization.
bool dominates(const ObjectiveVector& f, const ObjectiveVector& g);

// Componentwise minimum.
ObjectiveVector update_ideal(ObjectiveVector ideal, const ObjectiveVector& f);

struct ArchiveEntry {
  Genome genome;
  ObjectiveVector objectives;
  EvalMetrics metrics;
};

// Mutually non-dominated entries with distinct objective vectors.
using EpArchive = std::vector<ArchiveEntry>;

// Drops members dominated by `entry`, then adds it unless a member dominates
// or equals it. Returns whether it was added.
bool ep_update(EpArchive& archive, ArchiveEntry entry);

// Area dominated by the points and bounded by `reference` (both minimized).
double hypervolume_2d(std::vector<ObjectiveVector> points, const ObjectiveVector& reference);

struct Subproblem {
  int index = 0;
  WeightVector weight;
  std::vector<int> neighbors;
  Genome incumbent;
  ObjectiveVector objectives;
};

struct EvalRecord {
  int sequence = 0;
  int generation = 0;  // 0 for the initial population
  std::vector<int> flat;
  EvalMetrics metrics;
  ObjectiveVector objectives;
  bool cached = false;
  bool failed = false;
  std::string error;
};

struct SearchState {
  SearchConfig config;
  bool initialized = false;
  int generation = 0;       // completed sweeps
  int next_subproblem = 0;  // position within the current sweep
  std::vector<Subproblem> subproblems;
  ObjectiveVector ideal;
  EpArchive archive;
  std::string rng_state;
  std::vector<EvalRecord> eval_log;
};

// Decomposition-based search loop. Objective evaluations go through an
// evaluation cache keyed by the flat genome encoding.
class MoeadSearch {
 public:
  MoeadSearch(SearchConfig cfg, const Evaluator& evaluator, RngStream rng);
  MoeadSearch(SearchConfig cfg, const Evaluator& evaluator);  // rng seeded from cfg.seed
  // Continues from a checkpointed state.
  MoeadSearch(SearchState state, const Evaluator& evaluator);

  // Number of threads evaluating the initial population.
  void set_init_workers(int n) { init_workers_ = n < 1 ? 1 : n; }

  // Weights, neighborhoods, initial population, ideal point and archive.
  void initialize();
  // One offspring for the next subproblem. Returns false once finished.
  bool step();
  bool finished() const;
  // Runs to termination. `on_generation` fires after each completed sweep.
  void run(const std::function<void(const SearchState&)>& on_generation = {});

  SearchState state() const;
  const EpArchive& archive() const { return state_.archive; }
  const std::vector<EvalRecord>& history() const { return state_.eval_log; }
  const ObjectiveVector& ideal() const { return state_.ideal; }
  const std::vector<Subproblem>& subproblems() const { return state_.subproblems; }

 private:
  EvalRecord evaluate(const Genome& g);
  EvalRecord record(const std::vector<int>& flat, EvalMetrics metrics, bool cached);
  EvalRecord failure(const std::vector<int>& flat, const std::string& error);

  SearchState state_;
  const Evaluator* evaluator_;
  RngStream rng_;
  std::map<std::vector<int>, EvalMetrics> cache_;
  int init_workers_ = 1;
};

struct SearchResult {
  EpArchive archive;
  SearchState state;
  std::vector<EvalRecord> history;
};

SearchResult run(const SearchConfig& cfg, const Evaluator& evaluator, RngStream rng);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_to_json(const SearchState& state);
SearchState checkpoint_from_json(const nlohmann::json& j);
// Written to a temporary sibling and renamed into place.
void checkpoint_save(const SearchState& state, const std::filesystem::path& destination);
SearchState checkpoint_load(const std::filesystem::path& source);

// Ascending lexicographic objective order; the row order of the Pareto CSV.
EpArchive sorted_by_objectives(EpArchive archive);

// Header genome_flat,bleu,perplexity,f1,f2,params; rows sorted by f1.
void write_pareto_csv(const EpArchive& archive, std::ostream& out);

}  // namespace motrans
