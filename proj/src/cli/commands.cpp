#include "motrans/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "motrans/genome.hpp"
#include "motrans/moead.hpp"

namespace motrans::cli {

using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void options_to_json(json& j, const RunOptions& o) {
  j["evaluator"] = o.evaluator;
  j["scale"] = o.scale;
  j["data"] = {{"task", o.task},
               {"tsv", o.tsv},
               {"pairs", o.pairs},
               {"vocab", o.vocab},
               {"min_length", o.min_length},
               {"max_length", o.max_length},
               {"min_frequency", o.min_frequency}};
}

void options_from_json(const json& j, RunOptions& o) {
  o.evaluator = j.value("evaluator", o.evaluator);
  o.scale = j.value("scale", o.scale);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    o.task = d.value("task", o.task);
    o.tsv = d.value("tsv", o.tsv);
    o.pairs = d.value("pairs", o.pairs);
    o.vocab = d.value("vocab", o.vocab);
    o.min_length = d.value("min_length", o.min_length);
    o.max_length = d.value("max_length", o.max_length);
    o.min_frequency = d.value("min_frequency", o.min_frequency);
  }
}

void check_options(const RunOptions& o) {
  if (o.evaluator != "surrogate" && o.evaluator != "neural") {
    throw ConfigError("unknown evaluator '" + o.evaluator + "' (expected surrogate or neural)");
  }
  if (o.scale != "auto" && o.scale != "full" && o.scale != "desk") {
    throw ConfigError("unknown scale '" + o.scale + "' (expected auto, full or desk)");
  }
  try {
    parse_task(o.task);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::string timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Flags shared by search and eval. Presence is checked through the option
// handles so that only flags actually given override the config file.
struct RunFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string evaluator;
  std::string scale;
  std::string task;
  std::string tsv;
  double k = 0;
  int pop = 0;
  int gens = 0;
  int neighbors = 0;
  int max_evals = 0;
  int pairs = 0;
  int epochs = 0;

  CLI::Option* o_seed = nullptr;
  CLI::Option* o_evaluator = nullptr;
  CLI::Option* o_scale = nullptr;
  CLI::Option* o_task = nullptr;
  CLI::Option* o_tsv = nullptr;
  CLI::Option* o_k = nullptr;
  CLI::Option* o_pop = nullptr;
  CLI::Option* o_gens = nullptr;
  CLI::Option* o_neighbors = nullptr;
  CLI::Option* o_max_evals = nullptr;
  CLI::Option* o_pairs = nullptr;
  CLI::Option* o_epochs = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
    o_seed = app->add_option("--seed", seed, "Random seed");
    o_evaluator = app->add_option("--evaluator", evaluator, "surrogate or neural")
                      ->check(CLI::IsMember({"surrogate", "neural"}));
    o_scale = app->add_option("--scale", scale, "Size preset: auto, full or desk")
                  ->check(CLI::IsMember({"auto", "full", "desk"}));
    o_task = app->add_option("--task", task, "Synthetic task: copy, reverse or sort")
                 ->check(CLI::IsMember({"copy", "reverse", "sort"}));
    o_tsv = app->add_option("--tsv", tsv, "Parallel corpus, one source<TAB>target pair per line")
                ->check(CLI::ExistingFile);
    o_k = app->add_option("--k", k, "Perplexity weight in the second objective");
    o_pop = app->add_option("--pop", pop, "Population size");
    o_gens = app->add_option("--gens", gens, "Generations");
    o_neighbors = app->add_option("--neighbors", neighbors, "Neighborhood size");
    o_max_evals = app->add_option("--max-evals", max_evals, "Evaluation cap, 0 for none");
    o_pairs = app->add_option("--pairs", pairs, "Synthetic corpus size");
    o_epochs = app->add_option("--epochs", epochs, "Maximum training epochs");
  }

  RunConfig resolve() const {
    json file = json::object();
    if (!config_path.empty()) {
      try {
        file = json::parse(read_file(config_path));
      } catch (const json::exception& e) {
        throw ConfigError("config " + config_path + ": " + e.what());
      }
      if (!file.is_object()) throw ConfigError("config " + config_path + ": expected a JSON object");
    }
    if (*o_evaluator) file["evaluator"] = evaluator;
    if (*o_scale) file["scale"] = scale;
    RunConfig rc = run_config_from_json(file);
    auto& s = rc.search;
    auto& o = rc.options;
    if (*o_seed) s.seed = seed;
    if (*o_task) o.task = task;
    if (*o_tsv) o.tsv = tsv;
    if (*o_k) s.k = k;
    if (*o_pop) s.population = pop;
    if (*o_gens) s.generations = gens;
    if (*o_neighbors) s.neighbors = neighbors;
    if (*o_max_evals) s.max_evaluations = max_evals;
    if (*o_pairs) o.pairs = pairs;
    if (*o_epochs) s.train.max_epochs = epochs;
    check_options(o);
    s.check();
    return rc;
  }
};

double best_f1(const EpArchive& ep) {
  double best = 0;
  bool first = true;
  for (const auto& e : ep) {
    if (first || e.objectives[0] < best) best = e.objectives[0];
    first = false;
  }
  return best;
}

int cmd_search(const RunFlags& flags, const std::string& out_dir, const std::string& resume, int init_workers,
               std::ostream& err) {
  RunConfig rc = flags.resolve();
  const std::string started = timestamp();
  std::optional<SearchState> state;
  if (!resume.empty()) {
    state = checkpoint_load(resume);
    // The checkpoint fixes the search settings; only the stopping rule may be extended.
    if (*flags.o_gens) state->config.generations = flags.gens;
    if (*flags.o_max_evals) state->config.max_evaluations = flags.max_evals;
    rc.search = state->config;
  }
  auto evaluator = make_evaluator(rc);
  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  const auto checkpoint_path = dir / "checkpoint.json";
  const auto pareto_path = dir / "pareto.csv";
  const auto manifest_path = dir / "manifest.json";

  MoeadSearch search = state ? MoeadSearch(std::move(*state), *evaluator) : MoeadSearch(rc.search, *evaluator);
  search.set_init_workers(init_workers);
  err << "search: evaluator=" << evaluator->name() << " seed=" << rc.search.seed << " N=" << rc.search.population
      << " gens=" << rc.search.generations << '\n';
  search.run([&](const SearchState& s) {
    checkpoint_save(s, checkpoint_path);
    err << "generation " << s.generation << '/' << s.config.generations << "  evals " << s.eval_log.size()
        << "  best_f1 " << best_f1(s.archive) << "  ep " << s.archive.size() << '\n';
  });
  SearchState final_state = search.state();
  checkpoint_save(final_state, checkpoint_path);
  std::ostringstream csv;
  write_pareto_csv(final_state.archive, csv);
  write_file_atomic(pareto_path, csv.str());

  json manifest = {{"config", run_config_to_json(rc)},
                   {"seed", rc.search.seed},
                   {"evaluator", evaluator->name()},
                   {"started_at", started},
                   {"finished_at", timestamp()},
                   {"evaluations", final_state.eval_log.size()},
                   {"generations_completed", final_state.generation},
                   {"pareto_size", final_state.archive.size()},
                   {"resumed_from", resume},
                   {"outputs",
                    {{"pareto", pareto_path.string()},
                     {"checkpoint", checkpoint_path.string()},
                     {"manifest", manifest_path.string()}}}};
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  err << "wrote " << pareto_path.string() << " (" << final_state.archive.size() << " rows)\n";
  return kExitOk;
}

Genome read_genome(const std::string& arg, const SearchConfig& cfg) {
  std::string text = arg;
  if (std::filesystem::is_regular_file(arg)) text = read_file(arg);
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw UsageError("empty genome");
  Genome g;
  try {
    if (text[first] == '{') {
      g = json::parse(text).get<Genome>();
    } else {
      std::vector<int> flat = flat_from_string(text);
      g = decode_flat(flat);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed genome: ") + e.what());
  }
  auto problems = validate(g, cfg);
  if (!problems.empty()) {
    std::string msg = "invalid genome:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw UsageError(msg);
  }
  return g;
}

int cmd_eval(const RunFlags& flags, const std::string& genome_arg, std::ostream& out, std::ostream& err) {
  RunConfig rc = flags.resolve();
  Genome g = read_genome(genome_arg, rc.search);
  auto evaluator = make_evaluator(rc);
  err << "eval: evaluator=" << evaluator->name() << " genome=" << flat_to_string(encode_flat(g)) << '\n';
  EvalMetrics m = evaluator->evaluate(g);
  json j = m;
  out << j.dump(2) << '\n';
  return kExitOk;
}

std::vector<int> domain_or(const std::vector<int>& given, const std::vector<int>& fallback) {
  return given.empty() ? fallback : given;
}

int cmd_space_size(int ne, int nd, const std::vector<int>& heads, const std::vector<int>& dims, std::ostream& out) {
  SearchConfig cfg = SearchConfig::full_size();
  cfg.heads = domain_or(heads, cfg.heads);
  cfg.ffn_dims = domain_or(dims, cfg.ffn_dims);
  if (ne < 1 || nd < 1) throw UsageError("block counts must be positive");
  BigInt n = search_space_size(ne, nd, cfg);
  std::ostringstream sci;
  sci << std::setprecision(3) << std::scientific << n.convert_to<double>();
  out << n.str() << '\n' << sci.str() << '\n';
  return kExitOk;
}

int cmd_export(const std::string& checkpoint, bool pareto, int genome_index, bool dot, const std::string& out_path,
               std::ostream& out) {
  if (pareto == (genome_index >= 0)) throw UsageError("choose exactly one of --pareto csv or --genome INDEX --dot");
  SearchState s = checkpoint_load(checkpoint);
  std::string text;
  if (pareto) {
    std::ostringstream csv;
    write_pareto_csv(s.archive, csv);
    text = csv.str();
  } else {
    if (!dot) throw UsageError("--genome needs --dot");
    auto rows = sorted_by_objectives(s.archive);
    if (genome_index >= static_cast<int>(rows.size())) {
      throw UsageError("genome index " + std::to_string(genome_index) + " out of range (archive has " +
                       std::to_string(rows.size()) + " entries)");
    }
    text = render_dot(rows[genome_index].genome);
  }
  if (out_path.empty()) {
    out << text;
  } else {
    write_file_atomic(out_path, text);
  }
  return kExitOk;
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& rc) {
  json j = rc.search;
  options_to_json(j, rc.options);
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig rc;
  options_from_json(j, rc.options);
  check_options(rc.options);
  rc.search = preset_for(rc.options);
  try {
    from_json(j, rc.search);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return rc;
}

SearchConfig preset_for(const RunOptions& options) {
  bool desk = options.scale == "desk" || (options.scale == "auto" && options.evaluator == "neural");
  return desk ? SearchConfig::desk() : SearchConfig::full_size();
}

Corpus make_corpus(const RunConfig& rc) {
  const auto& o = rc.options;
  if (!o.tsv.empty()) return load_tsv(o.tsv, TsvOptions{o.min_frequency, 0.1});
  SyntheticSpec spec;
  spec.task = parse_task(o.task);
  spec.pairs = o.pairs;
  spec.vocab_size = o.vocab;
  spec.min_length = o.min_length;
  spec.max_length = o.max_length;
  spec.seed = rc.search.seed;
  return gen_synthetic(spec);
}

std::unique_ptr<Evaluator> make_evaluator(const RunConfig& rc) {
  if (rc.options.evaluator == "neural") {
    auto corpus = std::make_shared<const Corpus>(make_corpus(rc));
    return std::make_unique<NeuralEvaluator>(corpus, rc.search.train, rc.search.seed);
  }
  ModelGlobals globals{rc.search.train.embedding_size, rc.search.surrogate_src_vocab, rc.search.surrogate_tgt_vocab};
  return std::make_unique<SurrogateEvaluator>(globals);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << contents;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-objective architecture search over encoder-decoder Transformers", "motrans"};
  app.require_subcommand(1);

  RunFlags search_flags;
  std::string out_dir = "run";
  std::string resume;
  int init_workers = 1;
  auto* search = app.add_subcommand("search", "Run the evolutionary search");
  search_flags.attach(search);
  search->add_option("--out", out_dir, "Output directory");
  search->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  search->add_option("--init-workers", init_workers, "Threads for the initial population")
      ->check(CLI::PositiveNumber);

  RunFlags eval_flags;
  std::string genome_arg;
  auto* eval = app.add_subcommand("eval", "Evaluate one genome and print its metrics as JSON");
  eval_flags.attach(eval);
  eval->add_option("genome", genome_arg, "Genome file (JSON or flat) or inline flat encoding")->required();

  int ne = 0, nd = 0;
  std::vector<int> heads, dims;
  auto* space = app.add_subcommand("space-size", "Count architectures with ne encoder and nd decoder blocks");
  space->add_option("ne", ne)->required();
  space->add_option("nd", nd)->required();
  space->add_option("--heads", heads, "Head-count domain")->delimiter(',');
  space->add_option("--dims", dims, "FFN-dimension domain")->delimiter(',');

  std::string checkpoint, pareto_format, export_out;
  int genome_index = -1;
  bool dot = false;
  auto* exp = app.add_subcommand("export", "Write the Pareto CSV or a DOT schematic from a checkpoint");
  exp->add_option("checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  exp->add_option("--pareto", pareto_format, "Pareto front format")->check(CLI::IsMember({"csv"}));
  exp->add_option("--genome", genome_index, "Archive entry, in Pareto CSV row order")->check(CLI::NonNegativeNumber);
  exp->add_flag("--dot", dot, "Render the entry as Graphviz DOT");
  exp->add_option("--out", export_out, "Output file instead of stdout");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    for (auto* sub : app.get_subcommands()) err << sub->help();
    return kExitUsage;
  }

  try {
    if (*search) return cmd_search(search_flags, out_dir, resume, init_workers, err);
    if (*eval) return cmd_eval(eval_flags, genome_arg, out, err);
    if (*space) return cmd_space_size(ne, nd, heads, dims, out);
    if (*exp) return cmd_export(checkpoint, !pareto_format.empty(), genome_index, dot, export_out, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const GenomeError& e) {
    err << "genome error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace motrans::cli
