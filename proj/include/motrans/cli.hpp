#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "motrans/config.hpp"
#include "motrans/data.hpp"
#include "motrans/evaluator.hpp"

namespace motrans::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Evaluator and data settings that sit next to the search settings in a run
// config file.
struct RunOptions {
  std::string evaluator = "surrogate";  // surrogate | neural
  // full | desk | auto (desk for neural, full for surrogate)
  std::string scale = "auto";
  std::string task = "copy";
  std::string tsv;  // non-empty selects a TSV corpus over the synthetic task
  int pairs = 2000;
  int vocab = 16;
  int min_length = 3;
  int max_length = 10;
  int min_frequency = 1;
  friend bool operator==(const RunOptions&, const RunOptions&) = default;
};

struct RunConfig {
  SearchConfig search;
  RunOptions options;
};

// Top level mirrors SearchConfig, plus "evaluator", "scale" and "data".
nlohmann::json run_config_to_json(const RunConfig& rc);
// Starts from the preset picked by evaluator/scale, then applies `j`.
RunConfig run_config_from_json(const nlohmann::json& j);

SearchConfig preset_for(const RunOptions& options);

// Corpus for the neural evaluator: TSV when set, otherwise the synthetic task.
Corpus make_corpus(const RunConfig& rc);
std::unique_ptr<Evaluator> make_evaluator(const RunConfig& rc);

// Writes to a temporary sibling, then renames into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Entry point. Data goes to `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace motrans::cli
