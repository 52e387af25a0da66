#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "motrans/moead.hpp"

namespace motrans {

namespace {

using nlohmann::json;

// JSON has no NaN/Inf; non-finite reals travel as null.
json real(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double real_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json reals(const std::vector<double>& xs) {
  auto a = json::array();
  for (double v : xs) a.push_back(real(v));
  return a;
}

std::vector<double> reals_from(const json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(real_from(v));
  return out;
}

json entry_json(const ArchiveEntry& e) {
  return {{"genome", encode_flat(e.genome)}, {"objectives", reals(e.objectives)}, {"metrics", json(e.metrics)}};
}

ArchiveEntry entry_from(const json& j) {
  return {decode_flat(j.at("genome").get<std::vector<int>>()), reals_from(j.at("objectives")),
          j.at("metrics").get<EvalMetrics>()};
}

}  // namespace

json checkpoint_to_json(const SearchState& s) {
  auto subs = json::array();
  for (const auto& sp : s.subproblems) {
    subs.push_back({{"index", sp.index},
                    {"weight", sp.weight},
                    {"neighbors", sp.neighbors},
                    {"genome", encode_flat(sp.incumbent)},
                    {"objectives", reals(sp.objectives)}});
  }
  auto ep = json::array();
  for (const auto& e : s.archive) ep.push_back(entry_json(e));
  auto log = json::array();
  for (const auto& r : s.eval_log) {
    json item = {{"sequence", r.sequence},
                 {"generation", r.generation},
                 {"genome", r.flat},
                 {"metrics", json(r.metrics)},
                 {"objectives", reals(r.objectives)},
                 {"cached", r.cached},
                 {"failed", r.failed}};
    if (!r.error.empty()) item["error"] = r.error;
    log.push_back(std::move(item));
  }
  return {{"version", kCheckpointVersion},
          {"config", s.config},
          {"initialized", s.initialized},
          {"generation", s.generation},
          {"next_subproblem", s.next_subproblem},
          {"subproblems", subs},
          {"z", reals(s.ideal)},
          {"ep", ep},
          {"rng_state", s.rng_state},
          {"eval_log", log}};
}

SearchState checkpoint_from_json(const json& j) {
  if (!j.is_object() || !j.contains("version")) throw CheckpointError("corrupt payload: missing version");
  if (!j["version"].is_number_integer() || j["version"].get<int>() != kCheckpointVersion) {
    throw CheckpointError("version mismatch: expected " + std::to_string(kCheckpointVersion) + ", found " +
                          j["version"].dump());
  }
  try {
    SearchState s;
    from_json(j.at("config"), s.config);
    s.initialized = j.at("initialized").get<bool>();
    s.generation = j.at("generation").get<int>();
    s.next_subproblem = j.at("next_subproblem").get<int>();
    for (const auto& sj : j.at("subproblems")) {
      Subproblem sp;
      sp.index = sj.at("index").get<int>();
      sp.weight = sj.at("weight").get<std::vector<double>>();
      sp.neighbors = sj.at("neighbors").get<std::vector<int>>();
      sp.incumbent = decode_flat(sj.at("genome").get<std::vector<int>>());
      sp.objectives = reals_from(sj.at("objectives"));
      s.subproblems.push_back(std::move(sp));
    }
    s.ideal = reals_from(j.at("z"));
    for (const auto& e : j.at("ep")) s.archive.push_back(entry_from(e));
    s.rng_state = j.at("rng_state").get<std::string>();
    for (const auto& rj : j.at("eval_log")) {
      EvalRecord r;
      r.sequence = rj.at("sequence").get<int>();
      r.generation = rj.at("generation").get<int>();
      r.flat = rj.at("genome").get<std::vector<int>>();
      r.metrics = rj.at("metrics").get<EvalMetrics>();
      r.objectives = reals_from(rj.at("objectives"));
      r.cached = rj.at("cached").get<bool>();
      r.failed = rj.at("failed").get<bool>();
      r.error = rj.value("error", std::string{});
      s.eval_log.push_back(std::move(r));
    }
    if (s.initialized && static_cast<int>(s.subproblems.size()) != s.config.population) {
      throw CheckpointError("corrupt payload: subproblem count does not match population");
    }
    if (s.next_subproblem < 0 || s.next_subproblem >= std::max(1, s.config.population)) {
      throw CheckpointError("corrupt payload: next_subproblem out of range");
    }
    return s;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt payload: ") + e.what());
  } catch (const GenomeError& e) {
    throw CheckpointError(std::string("corrupt payload: ") + e.what());
  }
}

void checkpoint_save(const SearchState& state, const std::filesystem::path& destination) {
  auto tmp = destination;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << checkpoint_to_json(state).dump(1) << '\n';
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, destination);
}

SearchState checkpoint_load(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + source.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt payload: ") + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace motrans
