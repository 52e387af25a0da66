#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace motrans {

struct Bounds {
  int lower = 3;
  int upper = 7;
  friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct TrainConfig {
  int max_epochs = 10;
  int patience = 2;
  int embedding_size = 512;
  int batch_size = 32;
  double learning_rate = 1e-3;
  // 0 picks the longest validation target plus a small margin.
  int decode_max_len = 0;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct SearchConfig {
  Bounds encoder_bounds;
  Bounds decoder_bounds;
  std::vector<int> heads{4, 8};
  std::vector<int> ffn_dims{512, 1024};
  double crossover_prob = 0.92;
  double mutation_prob = 0.15;
  int population = 15;
  int generations = 15;
  int neighbors = 3;
  double k = 0.5;
  // Stop once this many evaluations have been logged; 0 means no cap.
  int max_evaluations = 0;
  std::uint64_t seed = 0;
  TrainConfig train;
  // Vocabulary sizes used only for parameter counting by the surrogate evaluator.
  int surrogate_src_vocab = 10000;
  int surrogate_tgt_vocab = 10000;

  // Settings reported for the full-size experiment.
  static SearchConfig full_size();
  // Same search settings at a size that trains on a laptop CPU.
  static SearchConfig desk();

  std::vector<std::string> problems() const;
  // Throws ConfigError listing every problem.
  void check() const;

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SearchConfig& c);
// Missing keys keep the value already present in `c`.
void from_json(const nlohmann::json& j, SearchConfig& c);

}  // namespace motrans
