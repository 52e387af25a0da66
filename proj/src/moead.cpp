#include "motrans/moead.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <thread>

#include "motrans/variation.hpp"

namespace motrans {

std::vector<WeightVector> gen_weight_vectors(int n, int m) {
  if (n < 2) throw std::invalid_argument("gen_weight_vectors: need at least 2 vectors");
  if (m != 2) throw std::invalid_argument("gen_weight_vectors: only two objectives are supported");
  std::vector<WeightVector> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double a = static_cast<double>(i) / static_cast<double>(n - 1);
    out.push_back({a, 1.0 - a});
  }
  return out;
}

std::vector<std::vector<int>> neighborhoods(const std::vector<WeightVector>& weights, int t) {
  const int n = static_cast<int>(weights.size());
  if (t < 1 || t > n) throw std::invalid_argument("neighborhoods: size must be in [1, N]");
  std::vector<std::vector<int>> out(n);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> dist;
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < weights[i].size(); ++c) {
        const double diff = weights[i][c] - weights[j][c];
        s += diff * diff;
      }
      dist.emplace_back(std::sqrt(s), j);
    }
    // Distances equal up to rounding count as ties and go to the lower index.
    std::stable_sort(dist.begin(), dist.end(), [](const auto& a, const auto& b) {
      return a.first < b.first - 1e-12 * std::max(1.0, b.first);
    });
    for (int k = 0; k < t; ++k) out[i].push_back(dist[k].second);
  }
  return out;
}

double tchebyshev(const ObjectiveVector& f, const WeightVector& weight, const ObjectiveVector& ideal) {
  if (f.size() != weight.size() || f.size() != ideal.size()) {
    throw std::invalid_argument("tchebyshev: dimension mismatch");
  }
  double g = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) g = std::max(g, weight[j] * std::abs(f[j] - ideal[j]));
  return g;
}

bool dominates(const ObjectiveVector& f, const ObjectiveVector& g) {
  if (f.size() != g.size()) throw std::invalid_argument("dominates: dimension mismatch");
  bool strict = false;
  for (std::size_t j = 0; j < f.size(); ++j) {
    if (f[j] > g[j]) return false;
    if (f[j] < g[j]) strict = true;
  }
  return strict;
}

ObjectiveVector update_ideal(ObjectiveVector ideal, const ObjectiveVector& f) {
  if (ideal.empty()) return f;
  if (ideal.size() != f.size()) throw std::invalid_argument("update_ideal: dimension mismatch");
  for (std::size_t j = 0; j < f.size(); ++j) ideal[j] = std::min(ideal[j], f[j]);
  return ideal;
}

bool ep_update(EpArchive& archive, ArchiveEntry entry) {
  for (const auto& e : archive) {
    if (e.objectives == entry.objectives || dominates(e.objectives, entry.objectives)) return false;
  }
  std::erase_if(archive, [&](const ArchiveEntry& e) { return dominates(entry.objectives, e.objectives); });
  archive.push_back(std::move(entry));
  return true;
}

double hypervolume_2d(std::vector<ObjectiveVector> points, const ObjectiveVector& reference) {
  if (reference.size() != 2) throw std::invalid_argument("hypervolume_2d: reference must be 2-D");
  std::erase_if(points, [&](const ObjectiveVector& p) {
    return p.size() != 2 || !(p[0] < reference[0]) || !(p[1] < reference[1]);
  });
  std::sort(points.begin(), points.end());
  double volume = 0.0;
  double ceiling = reference[1];
  for (const auto& p : points) {
    if (p[1] >= ceiling) continue;
    volume += (reference[0] - p[0]) * (ceiling - p[1]);
    ceiling = p[1];
  }
  return volume;
}

MoeadSearch::MoeadSearch(SearchConfig cfg, const Evaluator& evaluator, RngStream rng)
    : evaluator_(&evaluator), rng_(std::move(rng)) {
  cfg.check();
  state_.config = std::move(cfg);
}

MoeadSearch::MoeadSearch(SearchConfig cfg, const Evaluator& evaluator)
    : MoeadSearch(cfg, evaluator, RngStream(cfg.seed)) {}

MoeadSearch::MoeadSearch(SearchState state, const Evaluator& evaluator)
    : state_(std::move(state)), evaluator_(&evaluator), rng_(RngStream::restore(state_.rng_state)) {
  state_.config.check();
  for (const auto& r : state_.eval_log) {
    if (!r.failed && !r.cached) cache_.emplace(r.flat, r.metrics);
  }
}

EvalRecord MoeadSearch::record(const std::vector<int>& flat, EvalMetrics metrics, bool cached) {
  EvalRecord r;
  r.sequence = static_cast<int>(state_.eval_log.size());
  r.generation = state_.initialized ? state_.generation + 1 : 0;
  r.flat = flat;
  r.objectives = to_objectives(metrics, state_.config.k);
  r.metrics = std::move(metrics);
  r.cached = cached;
  return r;
}

EvalRecord MoeadSearch::failure(const std::vector<int>& flat, const std::string& error) {
  EvalRecord r;
  r.sequence = static_cast<int>(state_.eval_log.size());
  r.generation = state_.initialized ? state_.generation + 1 : 0;
  r.flat = flat;
  r.metrics.bleu = 0.0;
  r.metrics.perplexity = kFailurePerplexity;
  r.metrics.diverged = true;
  r.objectives = {100.0, kFailureObjective};
  r.failed = true;
  r.error = error;
  return r;
}

EvalRecord MoeadSearch::evaluate(const Genome& g) {
  const auto flat = encode_flat(g);
  if (auto it = cache_.find(flat); it != cache_.end()) return record(flat, it->second, true);
  try {
    auto metrics = evaluator_->evaluate(g);
    cache_.emplace(flat, metrics);
    return record(flat, std::move(metrics), false);
  } catch (const std::exception& e) {
    return failure(flat, e.what());
  }
}

void MoeadSearch::initialize() {
  if (state_.initialized) return;
  const auto& cfg = state_.config;
  const auto weights = gen_weight_vectors(cfg.population);
  const auto hoods = neighborhoods(weights, cfg.neighbors);

  std::vector<Genome> population;
  for (int i = 0; i < cfg.population; ++i) population.push_back(init_genome(cfg, rng_));

  // Evaluate distinct uncached genomes up front (possibly in parallel), then
  // log every member in order so the history does not depend on scheduling.
  std::vector<std::vector<int>> flats;
  std::vector<std::size_t> todo;
  std::map<std::vector<int>, std::size_t> first_seen;
  for (std::size_t i = 0; i < population.size(); ++i) {
    flats.push_back(encode_flat(population[i]));
    if (!cache_.contains(flats[i]) && first_seen.emplace(flats[i], i).second) todo.push_back(i);
  }
  std::vector<std::optional<EvalMetrics>> results(population.size());
  std::vector<std::string> errors(population.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < todo.size(); t = next++) {
      const auto i = todo[t];
      try {
        results[i] = evaluator_->evaluate(population[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(init_workers_), todo.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<EvalRecord> records;
  for (std::size_t i = 0; i < population.size(); ++i) {
    EvalRecord r;
    if (auto it = cache_.find(flats[i]); it != cache_.end()) {
      r = record(flats[i], it->second, true);
    } else if (const auto src = first_seen.at(flats[i]); results[src]) {
      cache_.emplace(flats[i], *results[src]);
      r = record(flats[i], *results[src], false);
    } else {
      r = failure(flats[i], errors[src]);
    }
    state_.eval_log.push_back(r);
    records.push_back(std::move(r));
  }

  state_.subproblems.clear();
  state_.ideal.clear();
  for (int i = 0; i < cfg.population; ++i) {
    Subproblem sp;
    sp.index = i;
    sp.weight = weights[i];
    sp.neighbors = hoods[i];
    sp.incumbent = population[i];
    sp.objectives = records[i].objectives;
    state_.ideal = update_ideal(state_.ideal, sp.objectives);
    state_.subproblems.push_back(std::move(sp));
  }
  for (int i = 0; i < cfg.population; ++i) {
    ep_update(state_.archive, {population[i], records[i].objectives, records[i].metrics});
  }
  state_.initialized = true;
  state_.generation = 0;
  state_.next_subproblem = 0;
}

bool MoeadSearch::finished() const {
  const auto& cfg = state_.config;
  if (!state_.initialized) return false;
  if (state_.generation >= cfg.generations) return true;
  return cfg.max_evaluations > 0 && static_cast<int>(state_.eval_log.size()) >= cfg.max_evaluations;
}

bool MoeadSearch::step() {
  if (!state_.initialized) initialize();
  if (finished()) return false;
  const auto& cfg = state_.config;
  auto& subs = state_.subproblems;
  const auto& hood = subs[state_.next_subproblem].neighbors;

  const int k = rng_.pick(hood);
  const int l = rng_.pick(hood);
  Genome y;
  if (rng_.bernoulli(cfg.crossover_prob)) {
    auto [c1, c2] = crossover(subs[k].incumbent, subs[l].incumbent, rng_);
    y = rng_.bernoulli(0.5) ? std::move(c1) : std::move(c2);
  } else {
    y = subs[k].incumbent;
  }
  if (rng_.bernoulli(cfg.mutation_prob)) y = mutate(y, cfg, rng_);
  y = repair(std::move(y));

  auto rec = evaluate(y);
  const auto fy = rec.objectives;
  state_.ideal = update_ideal(state_.ideal, fy);
  for (int j : hood) {
    if (tchebyshev(fy, subs[j].weight, state_.ideal) <= tchebyshev(subs[j].objectives, subs[j].weight, state_.ideal)) {
      subs[j].incumbent = y;
      subs[j].objectives = fy;
    }
  }
  ep_update(state_.archive, {y, fy, rec.metrics});
  state_.eval_log.push_back(std::move(rec));

  if (++state_.next_subproblem == cfg.population) {
    state_.next_subproblem = 0;
    ++state_.generation;
  }
  return true;
}

void MoeadSearch::run(const std::function<void(const SearchState&)>& on_generation) {
  initialize();
  while (!finished()) {
    const int gen = state_.generation;
    step();
    if (on_generation && state_.generation != gen) on_generation(state_);
  }
}

SearchState MoeadSearch::state() const {
  SearchState s = state_;
  s.rng_state = rng_.serialize();
  return s;
}

SearchResult run(const SearchConfig& cfg, const Evaluator& evaluator, RngStream rng) {
  MoeadSearch search(cfg, evaluator, std::move(rng));
  search.run();
  auto state = search.state();
  return {state.archive, state, state.eval_log};
}

EpArchive sorted_by_objectives(EpArchive archive) {
  std::stable_sort(archive.begin(), archive.end(),
                   [](const ArchiveEntry& a, const ArchiveEntry& b) { return a.objectives < b.objectives; });
  return archive;
}

void write_pareto_csv(const EpArchive& archive, std::ostream& out) {
  out << "genome_flat,bleu,perplexity,f1,f2,params\n";
  out << std::setprecision(10);
  for (const auto& e : sorted_by_objectives(archive)) {
    out << flat_to_string(encode_flat(e.genome)) << ',' << e.metrics.bleu << ',' << e.metrics.perplexity << ','
        << e.objectives.at(0) << ',' << e.objectives.at(1) << ',' << e.metrics.param_count << '\n';
  }
}

}  // namespace motrans
