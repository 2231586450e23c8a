#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hopfe/checkpoint.hpp"
#include "hopfe/data.hpp"
#include "hopfe/eval.hpp"
#include "hopfe/hopf.hpp"
#include "hopfe/run_config.hpp"
#include "hopfe/training.hpp"

namespace fs = std::filesystem;
using namespace hopfe;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("hopfe");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  const char* env = std::getenv("HOPFE_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("HOPFE_LOG='{}' not one of error|info|debug; using info", level);
  }
}

// Collects config flags for parse_config; a repeated flag keeps its last value.
struct FlagSink {
  FlagValues values;
  std::string config_file;

  void add(CLI::App* cmd, const std::vector<std::string>& keys) {
    for (const std::string& key : keys) {
      cmd->add_option_function<std::string>("--" + key, [this, key](const std::string& v) { values.emplace_back(key, v); })
          ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    cmd->add_option("--config", config_file, "JSON file with option defaults; flags override it");
  }

  RunConfig parse() const {
    const nlohmann::json file = config_file.empty() ? nlohmann::json() : read_config_file(config_file);
    return parse_config(file, values);
  }
};

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void require(const fs::path& value, const char* flag) {
  if (value.empty()) throw ConfigError(flag, "is required");
}

TripleStore load_store(const fs::path& dir) {
  LoadedStore loaded = load_dataset(dir);
  for (const std::string& w : loaded.report.warnings) spdlog::warn("{}", w);
  spdlog::info("loaded {} entities, {} relations, {}/{}/{} train/valid/test triples", loaded.store.num_entities(),
               loaded.store.num_relations(), loaded.report.triples[0], loaded.report.triples[1],
               loaded.report.triples[2]);
  return std::move(loaded.store);
}

Checkpoint load_matching_checkpoint(const fs::path& path, const TripleStore& store) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.params.num_entities() != store.num_entities() || ck.params.num_relations() != store.num_relations()) {
    throw ShapeMismatch("checkpoint holds " + std::to_string(ck.params.num_entities()) + " entities and " +
                        std::to_string(ck.params.num_relations()) + " relations; dataset has " +
                        std::to_string(store.num_entities()) + " and " + std::to_string(store.num_relations()));
  }
  return ck;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

int run_train(const RunConfig& cfg) {
  require(cfg.data, "--data");
  require(cfg.out, "--out");
  const TripleStore store = load_store(cfg.data);
  std::optional<Semantics> semantics;
  if (!cfg.semantics.empty()) {
    const std::size_t width = infer_vector_width(cfg.vectors);
    AttributeReport report;
    AttributeTable table = load_attributes(cfg.semantics, cfg.vectors, width, store.entities, &report);
    spdlog::info("semantics: {} attributes, {} all out-of-vocabulary, {} unknown entities, width {}",
                 report.attributes, report.oov_count, report.unknown_entities, width);
    semantics = Semantics{std::move(table),
                          SemanticProjection::init(cfg.model.dim, cfg.model.heads, width, cfg.train.seed)};
  }
  fs::create_directories(cfg.out);
  auto log = open_output(cfg.out / "train_log.jsonl");
  write_json(cfg.out / "config.json", to_json(cfg));
  TrainHooks hooks;
  hooks.on_log = [&](const LogRecord& r) {
    log << to_json(r).dump() << '\n';
    log.flush();
    spdlog::info("step {} loss {:.6f} mrr {:.4f} hits@10 {:.4f} lr {:.3g}", r.step, r.loss, r.metrics.mrr,
                 r.metrics.hits10, r.lr);
  };
  hooks.on_warning = [](const std::string& w) { spdlog::warn("{}", w); };
  hooks.on_grad_check = [](std::size_t step, const GradCheckResult& g) {
    spdlog::info("step {} gradient check: max relative error {:.3g} over {} coordinates (worst {})", step,
                 g.max_relative_error, g.checked, g.worst);
  };
  const TrainResult result = train(store, cfg.train, cfg.model, hooks, semantics);
  const fs::path ckpt = cfg.checkpoint.empty() ? cfg.out / "model.ckpt" : cfg.checkpoint;
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_checkpoint(ckpt, cfg.model, result.params);
  if (result.projection) {
    write_json(cfg.out / "semantic_projection.json",
               {{"dim", result.projection->dim}, {"heads", result.projection->heads},
                {"width", result.projection->width}, {"weights", result.projection->weights},
                {"bias", result.projection->bias}});
  }
  spdlog::info("wrote {}", ckpt.string());
  return 0;
}

int run_eval(const RunConfig& cfg, const std::string& split, bool raw) {
  require(cfg.data, "--data");
  require(cfg.checkpoint, "--checkpoint");
  Split which;
  try {
    which = parse_split(split);
  } catch (const InvalidConfig& e) {
    throw ConfigError("--split", e.what());
  }
  const TripleStore store = load_store(cfg.data);
  const Checkpoint ck = load_matching_checkpoint(cfg.checkpoint, store);
  const FilterIndex filter(store);
  EvalOptions opt{cfg.train.threads, {.filtered = !raw}};
  const EvalReport report = evaluate_split(which, ck.params, ck.config, store, filter, opt);
  nlohmann::json j = to_json(report);
  j["split"] = split;
  j["filtered"] = !raw;
  write_json(cfg.out, j);
  spdlog::info("{} {}: mrr {:.4f} mr {:.2f} hits@1 {:.4f} hits@3 {:.4f} hits@10 {:.4f}", split,
               raw ? "raw" : "filtered", report.overall.mrr, report.overall.mr, report.overall.hits1,
               report.overall.hits3, report.overall.hits10);
  return 0;
}

std::vector<std::uint32_t> relation_ids(const TripleStore& store, const std::string& spec, const char* flag,
                                        std::size_t expected) {
  std::vector<std::uint32_t> ids;
  std::stringstream ss(spec);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto id = store.relations.find(name);
    if (!id) throw ConfigError(flag, "unknown relation '" + name + "'");
    ids.push_back(*id);
  }
  if (ids.size() != expected) {
    throw ConfigError(flag, "expected " + std::to_string(expected) + " comma-separated relation names, got '" + spec +
                                "'");
  }
  return ids;
}

int run_analyze(const RunConfig& cfg, const std::vector<std::string>& inverse,
                const std::vector<std::string>& composition, std::size_t bins) {
  require(cfg.data, "--data");
  require(cfg.checkpoint, "--checkpoint");
  if (inverse.empty() && composition.empty()) throw ConfigError("--inverse", "give at least one --inverse or --composition set");
  if (bins < 1) throw ConfigError("--bins", "must be at least 1");
  const TripleStore store = load_store(cfg.data);
  const Checkpoint ck = load_matching_checkpoint(cfg.checkpoint, store);
  std::vector<RelationSet> sets;
  for (const auto& s : inverse) sets.push_back({RelationSet::Kind::kInverse, relation_ids(store, s, "--inverse", 2)});
  for (const auto& s : composition) {
    sets.push_back({RelationSet::Kind::kComposition, relation_ids(store, s, "--composition", 3)});
  }
  const auto hists = angle_histograms(sets, ck.params, store.relations, bins);
  if (cfg.out.empty()) {
    write_histograms_csv(std::cout, hists);
  } else {
    auto out = open_output(cfg.out);
    write_histograms_csv(out, hists);
    spdlog::info("wrote {} histograms to {}", hists.size(), cfg.out.string());
  }
  return 0;
}

struct GenerateOptions {
  std::size_t n = 0;
  double avg_degree = 0.0;
  std::size_t relations = 1;
  std::uint64_t seed = 0;
  std::string out;
  bool with_inverse = false;
};

int run_generate(const GenerateOptions& g) {
  if (g.out.empty()) throw ConfigError("--out", "is required");
  if (g.n < 2) throw ConfigError("--n", "must be at least 2");
  if (!(g.avg_degree > 0.0) || !(g.avg_degree < static_cast<double>(g.n))) {
    throw ConfigError("--avg-degree", "must lie in (0, n)");
  }
  if (g.relations < 1) throw ConfigError("--relations", "must be at least 1");
  TripleStore store = generate_er_graph(g.n, g.avg_degree, g.relations, g.seed);
  if (g.with_inverse) store = add_inverse_relation(store, 0, store.relations.name(0) + "_inv");
  write_dataset(g.out, store);
  spdlog::info("wrote {} entities, {} triples to {}", store.num_entities(), store.triples.size(), g.out);
  return 0;
}

std::string safe_file_stem(const std::string& name) {
  std::string out;
  for (char c : name) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return out;
}

int run_project(const RunConfig& cfg, const std::string& entities, std::size_t head, std::size_t samples) {
  require(cfg.data, "--data");
  require(cfg.checkpoint, "--checkpoint");
  require(cfg.out, "--out");
  if (samples < 1) throw ConfigError("--samples", "must be at least 1");
  const TripleStore store = load_store(cfg.data);
  const Checkpoint ck = load_matching_checkpoint(cfg.checkpoint, store);
  if (head >= ck.params.heads()) throw ConfigError("--head", "checkpoint has " + std::to_string(ck.params.heads()) + " head(s)");
  std::vector<std::uint32_t> ids;
  if (entities.empty()) {
    for (std::uint32_t e = 0; e < store.num_entities(); ++e) ids.push_back(e);
  } else {
    std::stringstream ss(entities);
    std::string name;
    while (std::getline(ss, name, ',')) {
      const auto id = store.entities.find(name);
      if (!id) throw ConfigError("--entities", "unknown entity '" + name + "'");
      ids.push_back(*id);
    }
  }
  fs::create_directories(cfg.out);
  for (std::uint32_t e : ids) {
    const EntityView v = ck.params.entity(e);
    std::vector<FiberSample> rows;
    for (std::size_t d = 0; d < v.dim(); ++d) {
      const FiberBase base = inverse_hopf(detail::unit_or_default(v.point(d)));
      // The entity's own fiber point first, then the whole circle.
      rows.push_back({d, v.phase(d, head), stereographic_project(fiber_point(base, v.phase(d, head)))});
      for (std::size_t s = 0; s < samples; ++s) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(s) / static_cast<double>(samples);
        rows.push_back({d, t, stereographic_project(fiber_point(base, t))});
      }
    }
    auto out = open_output(cfg.out / (std::to_string(e) + "_" + safe_file_stem(store.entities.name(e)) + ".csv"));
    write_fiber_csv(out, rows);
  }
  spdlog::info("wrote {} fiber CSV file(s) to {}", ids.size(), cfg.out.string());
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  constexpr double kTolerance = 1e-4;
  double worst = 0.0;
  for (Matching m : {Matching::kMin, Matching::kSinkhorn}) {
    for (Variant v : {Variant::kHopfE, Variant::kNoHopf}) {
      ModelConfig cfg;
      cfg.dim = 2;
      cfg.heads = v == Variant::kHopfE ? 2 : 1;
      cfg.matching = m;
      cfg.variant = v;
      cfg.gamma = 2.0;
      ModelParams params = init_model(4, 2, cfg, seed);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
      for (double& x : params.tables.relation_phases) x = angle(rng);
      std::uniform_int_distribution<std::uint32_t> entity(0, 3), relation(0, 1);
      const FilterIndex none;
      std::vector<BatchItem> batch;
      for (int i = 0; i < 4; ++i) {
        const Triple x{entity(rng), relation(rng), entity(rng)};
        batch.push_back({x, sample_negatives(x, 4, none, 3, rng)});
      }
      const GradCheckResult r = check_gradients(batch, params, cfg, 1e-5, 1e-6);
      std::cout << "matching=" << to_string(m) << " variant=" << to_string(v) << " coordinates=" << r.checked
                << " max_relative_error=" << r.max_relative_error << '\n';
      worst = std::max(worst, r.max_relative_error);
    }
  }
  std::cout << "max relative error: " << worst << '\n';
  if (!(worst < kTolerance)) {
    spdlog::error("gradient check failed: {} >= {}", worst, kTolerance);
    return kExitRuntime;
  }
  return 0;
}

int run_stats(const RunConfig& cfg) {
  require(cfg.data, "--data");
  const TripleStore store = load_store(cfg.data);
  const CategoryStats stats = relation_category_stats(store);
  nlohmann::json j;
  for (int c = 0; c < 4; ++c) j["fractions"][std::string(to_string(static_cast<RelationCategory>(c)))] = stats.fractions[c];
  j["relations"] = nlohmann::json::object();
  for (std::uint32_t r = 0; r < stats.relations.size(); ++r) {
    const RelationStats& s = stats.relations[r];
    j["relations"][store.relations.name(r)] = {{"category", std::string(to_string(s.category))},
                                               {"tails_per_head", s.tails_per_head},
                                               {"heads_per_tail", s.heads_per_tail},
                                               {"train_triples", s.count}};
  }
  write_json(cfg.out, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"HopfE knowledge graph embeddings: train, evaluate and inspect fibered rotation models"};
  app.require_subcommand(1);

  const std::vector<std::string> read_keys{"data", "checkpoint", "out", "threads"};
  FlagSink train_flags, eval_flags, analyze_flags, project_flags, stats_flags;

  auto* train_cmd = app.add_subcommand("train", "train a model; writes a checkpoint and a JSON-lines log into --out");
  train_flags.add(train_cmd, config_keys());

  auto* eval_cmd = app.add_subcommand("eval", "rank a split with a checkpoint; writes the report JSON to --out or stdout");
  eval_flags.add(eval_cmd, read_keys);
  std::string split = "test";
  bool raw = false;
  eval_cmd->add_option("--split", split, "train|valid|test")->capture_default_str();
  eval_cmd->add_flag("--raw", raw, "rank without filtering known triples");

  auto* analyze_cmd = app.add_subcommand("analyze", "relation angle histograms as CSV");
  analyze_flags.add(analyze_cmd, read_keys);
  std::vector<std::string> inverse, composition;
  std::size_t bins = 64;
  analyze_cmd->add_option("--inverse", inverse, "inverse pair 'r1,r2' (repeatable)");
  analyze_cmd->add_option("--composition", composition, "composition 'r1,r2,r3' with r3 = r1 then r2 (repeatable)");
  analyze_cmd->add_option("--bins", bins, "bins over (-pi, pi]")->capture_default_str();

  auto* generate_cmd = app.add_subcommand("generate", "write a random graph dataset");
  GenerateOptions gen;
  generate_cmd->add_option("--n", gen.n, "entities")->required();
  generate_cmd->add_option("--avg-degree", gen.avg_degree, "mean undirected degree")->required();
  generate_cmd->add_option("--relations", gen.relations, "relation types")->capture_default_str();
  generate_cmd->add_option("--seed", gen.seed)->capture_default_str();
  generate_cmd->add_option("--out", gen.out, "output dataset directory")->required();
  generate_cmd->add_flag("--with-inverse", gen.with_inverse, "add the reverse of relation 0 as '<name>_inv'");

  auto* project_cmd = app.add_subcommand("project", "stereographic fiber CSV per entity into --out");
  project_flags.add(project_cmd, read_keys);
  std::string entities;
  std::size_t head = 0, samples = 64;
  project_cmd->add_option("--entities", entities, "comma-separated entity names (default: all)");
  project_cmd->add_option("--head", head, "phase head whose fiber point leads each dimension")->capture_default_str();
  project_cmd->add_option("--samples", samples, "points per fiber circle")->capture_default_str();

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check on a tiny model");
  std::uint64_t grad_seed = 1;
  gradcheck_cmd->add_option("--seed", grad_seed)->capture_default_str();

  auto* stats_cmd = app.add_subcommand("stats", "relation category fractions of the training split as JSON");
  stats_flags.add(stats_cmd, {"data", "out"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return run_train(train_flags.parse());
    if (*eval_cmd) return run_eval(eval_flags.parse(), split, raw);
    if (*analyze_cmd) return run_analyze(analyze_flags.parse(), inverse, composition, bins);
    if (*generate_cmd) return run_generate(gen);
    if (*project_cmd) return run_project(project_flags.parse(), entities, head, samples);
    if (*gradcheck_cmd) return run_gradcheck(grad_seed);
    if (*stats_cmd) return run_stats(stats_flags.parse());
  } catch (const InvalidConfig& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
