// copsref: generate, distract, split, stats, eval, mine-demo, schema-check.
//
// Each command prints a JSON summary on stdout; progress goes to stderr.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 empty result.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "copsref/copsref.hpp"

namespace fs = std::filesystem;
using namespace copsref;

namespace {

constexpr int kOk = 0;
constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kEmptyExit = 4;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::string out_dir;
  std::string summary_path;
};

struct EmptyResult : std::runtime_error {
  using std::runtime_error::runtime_error;
};

PipelineConfig resolve(const Common& common) {
  PipelineConfig c = common.config_path.empty() ? PipelineConfig{} : load_config(common.config_path);
  if (common.seed) c.seed = *common.seed;
  if (!common.out_dir.empty()) c.output_dir = common.out_dir;
  if (common.workers == 0) throw ConfigError("--workers must be at least 1");
  return c;
}

std::string out_path(const PipelineConfig& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  return (fs::path(c.output_dir) / name).string();
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << '\n';
}

void emit(const Common& common, const json& summary) {
  std::cout << summary.dump(2) << std::endl;
  if (!common.summary_path.empty()) write_json(common.summary_path, summary);
}

std::string or_default(const std::string& given, const PipelineConfig& c, const std::string& name) {
  return given.empty() ? (fs::path(c.output_dir) / name).string() : given;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", common.seed, "random seed, overrides the config");
  cmd->add_option("--workers", common.workers, "worker threads")->capture_default_str();
  cmd->add_option("--out-dir", common.out_dir, "output directory, overrides the config");
  cmd->add_option("--summary", common.summary_path, "also write the summary JSON here");
}

// --- commands -------------------------------------------------------------------

int cmd_generate(const Common& common, const std::string& corpus_override) {
  PipelineConfig c = resolve(common);
  if (!corpus_override.empty()) c.corpus = corpus_override;
  const Resources r = load_resources(c);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  const auto run = run_generate(r, c, common.workers);
  const auto path = out_path(c, "expressions.jsonl");
  write_jsonl_file<ExpressionRecord>(path, run.records);
  write_json(out_path(c, "generation_log.json"), run.log.to_json());
  std::cerr << "generate: " << run.records.size() << " expressions from " << run.log.images << " images\n";
  emit(common, {{"command", "generate"},
                {"seed", c.seed},
                {"expressions", run.records.size()},
                {"output", path},
                {"log", run.log.to_json()}});
  if (run.records.empty()) throw EmptyResult("no expressions generated");
  return kOk;
}

int cmd_distract(const Common& common, const std::string& expressions_path, const std::string& corpus_override) {
  PipelineConfig c = resolve(common);
  if (!corpus_override.empty()) c.corpus = corpus_override;
  const Resources r = load_resources(c);
  const auto expressions = read_jsonl_file<ExpressionRecord>(or_default(expressions_path, c, "expressions.jsonl"));
  const auto run = run_distract(r.corpus, expressions, c.per_type, r.lexicon, common.workers);
  for (const auto& [id, reason] : run.log.discarded) std::cerr << "discard " << id << ": " << reason << '\n';
  const auto path = out_path(c, "instances.jsonl");
  write_jsonl_file<TaskInstance>(path, run.instances);
  write_json(out_path(c, "distract_log.json"), run.log.to_json());
  emit(common, {{"command", "distract"},
                {"expressions", run.log.expressions},
                {"instances", run.log.kept},
                {"discarded", run.log.discarded.size()},
                {"output", path}});
  if (run.instances.empty()) throw EmptyResult("every expression was discarded");
  return kOk;
}

int cmd_split(const Common& common, const std::string& instances_path) {
  const PipelineConfig c = resolve(common);
  const auto instances = read_jsonl_file<TaskInstance>(or_default(instances_path, c, "instances.jsonl"));
  if (instances.empty()) throw EmptyResult("no instances to split");
  const auto parts = split(std::span<const TaskInstance>(instances), c.split, c.seed);
  json counts = json::object();
  for (int p = 0; p < 3; ++p) {
    const std::string name(to_string(static_cast<Partition>(p)));
    write_jsonl_file<TaskInstance>(out_path(c, name + ".jsonl"), parts[p]);
    std::set<std::string> images;
    for (const auto& inst : parts[p]) images.insert(inst.target_image);
    counts[name] = {{"instances", parts[p].size()}, {"images", images.size()}};
  }
  emit(common, {{"command", "split"}, {"seed", c.seed}, {"partitions", counts}});
  return kOk;
}

int cmd_stats(const Common& common, const std::string& instances_path, const std::string& expressions_path,
              bool corpus_only, std::size_t top_k, bool table) {
  const PipelineConfig c = resolve(common);
  DatasetStats s;
  std::string source;
  if (corpus_only) {
    s = stats(load_resources(c).corpus, top_k);
    source = "corpus";
  } else if (!expressions_path.empty()) {
    s = stats(std::span<const ExpressionRecord>(read_jsonl_file<ExpressionRecord>(expressions_path)), top_k);
    source = "expressions";
  } else {
    s = stats(std::span<const TaskInstance>(
                  read_jsonl_file<TaskInstance>(or_default(instances_path, c, "instances.jsonl"))),
              top_k);
    source = "instances";
  }
  write_json(out_path(c, "stats.json"), json(s));
  if (table) {
    std::cout << format_table(s);
    if (!common.summary_path.empty()) write_json(common.summary_path, json(s));
    return kOk;
  }
  emit(common, {{"command", "stats"}, {"source", source}, {"stats", s}});
  return kOk;
}

std::unique_ptr<Scorer> make_scorer(const std::string& kind, const std::string& scores, const std::string& command,
                                    double constant, std::uint64_t seed) {
  if (!scores.empty()) return std::make_unique<TableScorer>(TableScorer::load(scores));
  if (!command.empty()) return std::make_unique<SubprocessScorer>(command);
  if (kind == "oracle") return std::make_unique<OracleScorer>();
  if (kind == "random") return std::make_unique<RandomScorer>(seed);
  if (kind == "constant") return std::make_unique<ConstantScorer>(constant);
  throw ConfigError("unknown scorer '" + kind + "'");
}

int cmd_eval(const Common& common, const std::string& instances_path, const std::string& setting_name,
             const std::string& scorer_kind, const std::string& scores, const std::string& command, double constant,
             const std::string& write_scores) {
  const PipelineConfig c = resolve(common);
  const auto instances = read_jsonl_file<TaskInstance>(or_default(instances_path, c, "instances.jsonl"));
  if (instances.empty()) throw EmptyResult("no instances to evaluate");
  const auto scorer = make_scorer(scorer_kind, scores, command, constant, c.seed);

  if (!write_scores.empty()) {
    std::ofstream out(write_scores, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + write_scores);
    for (const auto& inst : instances) {
      for (const auto& [image, regions] : inst.candidate_regions) {
        for (const auto& region : regions) {
          out << json{{"expr_id", inst.expression.expr_id},
                      {"image_id", image},
                      {"object_id", region.object_id},
                      {"score", scorer->score(inst.expression, image, region)}}
                     .dump()
              << '\n';
        }
      }
    }
  }

  std::vector<Setting> settings;
  if (setting_name == "all") {
    settings.assign(kSettings.begin(), kSettings.end());
  } else {
    settings.push_back(setting_from_string(setting_name));
  }
  json reports = json::array();
  json accuracy = json::object();
  for (auto s : settings) {
    const auto report = evaluate(instances, s, *scorer, common.workers);
    reports.push_back(report);
    accuracy[std::string(to_string(s))] = report.accuracy();
    std::cerr << "eval " << to_string(s) << ": " << report.overall.correct << "/" << report.overall.total << '\n';
  }
  write_json(out_path(c, "eval_report.json"), reports);
  emit(common, {{"command", "eval"}, {"instances", instances.size()}, {"accuracy", accuracy}, {"reports", reports}});
  return kOk;
}

int cmd_mine_demo(const Common& common, const std::string& embeddings_path, std::size_t synthetic_count,
                  std::size_t categories, std::size_t dim, std::size_t iterations, bool quiet) {
  const PipelineConfig c = resolve(common);
  std::vector<ModularEmbedding> embeddings;
  if (!embeddings_path.empty()) {
    embeddings = load_embeddings(embeddings_path);
  } else {
    embeddings = synthetic_embeddings(synthetic_count, categories, dim, c.seed);
  }
  if (embeddings.empty()) throw EmptyResult("no embeddings");
  MineDemoOptions opt;
  opt.iterations = iterations;
  opt.refresh_interval = c.refresh_interval;
  opt.margin = c.margin;
  opt.seed = c.seed;
  json result = run_mine_demo(embeddings, opt);
  if (!quiet) {
    for (const auto& t : result["trace"]) {
      const auto& neg = t["negatives"];
      char buf[256];
      std::snprintf(buf, sizeof(buf), "iter %4d epoch %2d pair %-8s sub=%-8s loc=%-8s rel=%-8s rank=%.4f mine=%.4f\n",
                    t["iteration"].get<int>(), t["epoch"].get<int>(), t["pair"].get<std::string>().c_str(),
                    neg["sub"].get<std::string>().c_str(), neg["loc"].get<std::string>().c_str(),
                    neg["rel"].get<std::string>().c_str(), t["rank_loss"].get<double>(),
                    t["mine_loss"].get<double>());
      std::cerr << buf;
    }
  }
  write_json(out_path(c, "mine_trace.json"), result);
  result.erase("trace");
  result["command"] = "mine-demo";
  result["pairs"] = embeddings.size();
  result["margin"] = c.margin;
  result["refresh_interval"] = c.refresh_interval;
  emit(common, result);
  return kOk;
}

int cmd_schema_check(const Common& common, const std::string& kind, const std::vector<std::string>& files) {
  const PipelineConfig c = resolve(common);
  std::size_t checked = 0;
  json errors = json::array();
  auto fail = [&](const std::string& where, const std::string& what) {
    if (errors.size() < 50) errors.push_back({{"where", where}, {"error", what}});
    else errors.back() = {{"where", "..."}, {"error", "further errors omitted"}};
  };
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open " + file);
    if (kind == "corpus" || kind == "config") {
      try {
        if (kind == "corpus") load_corpus(in, SynonymTable{});
        else load_config(file);
      } catch (const Error& e) {
        fail(file, e.what());
      }
      ++checked;
      continue;
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      ++checked;
      const std::string where = file + ":" + std::to_string(lineno);
      try {
        const json j = json::parse(line);
        if (kind == "expressions") {
          validate(j.get<ExpressionRecord>());
        } else if (kind == "instances") {
          validate(j.get<TaskInstance>(), c.per_type);
        } else if (kind == "embeddings") {
          const auto e = j.get<ModularEmbedding>();
          check_embeddings(std::span<const ModularEmbedding>(&e, 1));
        } else if (kind == "scores") {
          std::istringstream one(line);
          TableScorer::parse(one);
        } else {
          throw ConfigError("unknown kind '" + kind + "'");
        }
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        fail(where, e.what());
      }
    }
  }
  const bool ok = errors.empty();
  for (const auto& e : errors) std::cerr << e["where"].get<std::string>() << ": " << e["error"].get<std::string>() << '\n';
  emit(common, {{"command", "schema-check"}, {"kind", kind}, {"schema_version", 1}, {"checked", checked},
                {"valid", ok}, {"errors", errors}});
  return ok ? kOk : kDataExit;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config: return kConfigExit;
    case ErrorKind::EmptyCorpus:
    case ErrorKind::EmptyInput: return kEmptyExit;
    default: return kDataExit;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referring-expression dataset toolchain"};
  app.require_subcommand(1);
  Common common;

  std::string corpus_override, expressions_path, instances_path;
  auto* gen = app.add_subcommand("generate", "generate expressions from scene graphs");
  add_common(gen, common);
  gen->add_option("--corpus", corpus_override, "scene-graph corpus, overrides the config");

  auto* dis = app.add_subcommand("distract", "attach distractor images to expressions");
  add_common(dis, common);
  dis->add_option("--expressions", expressions_path, "expressions JSONL (default: <out>/expressions.jsonl)");
  dis->add_option("--corpus", corpus_override, "scene-graph corpus, overrides the config");

  auto* spl = app.add_subcommand("split", "split instances by target image");
  add_common(spl, common);
  spl->add_option("--instances", instances_path, "instances JSONL (default: <out>/instances.jsonl)");

  bool corpus_only = false, table = false;
  std::size_t top_k = 20;
  auto* sta = app.add_subcommand("stats", "dataset statistics");
  add_common(sta, common);
  sta->add_option("--instances", instances_path, "instances JSONL (default: <out>/instances.jsonl)");
  sta->add_option("--expressions", expressions_path, "expressions JSONL instead of instances");
  sta->add_flag("--corpus-only", corpus_only, "statistics of the configured corpus");
  sta->add_option("--top-k", top_k, "length of the frequency lists")->capture_default_str();
  sta->add_flag("--table", table, "print a human-readable table instead of JSON");

  std::string setting = "all", scorer_kind = "random", scores, command, write_scores;
  double constant = 0.0;
  auto* eva = app.add_subcommand("eval", "evaluate a scorer");
  add_common(eva, common);
  eva->add_option("--instances", instances_path, "instances JSONL (default: <out>/instances.jsonl)");
  eva->add_option("--setting", setting, "Full, DiffCatOnly, CatOnly, CatAttrOnly, CatCatOnly, WithoutDist or all")
      ->capture_default_str();
  eva->add_option("--scorer", scorer_kind, "built-in scorer: oracle, random, constant")->capture_default_str();
  eva->add_option("--constant", constant, "value for the constant scorer");
  eva->add_option("--scores", scores, "scores JSONL keyed by expr_id, image_id, object_id");
  eva->add_option("--command", command, "scorer subprocess speaking line-delimited JSON");
  eva->add_option("--write-scores", write_scores, "dump the scorer's scores for every candidate region");

  std::string embeddings_path;
  std::size_t synthetic_count = 1000, categories = 50, dim = 64, iterations = 200;
  bool quiet = false;
  auto* mine = app.add_subcommand("mine-demo", "sample hard negatives and print loss traces");
  add_common(mine, common);
  mine->add_option("--embeddings", embeddings_path, "embeddings JSONL");
  mine->add_option("--synthetic", synthetic_count, "synthetic pairs when no file is given")->capture_default_str();
  mine->add_option("--categories", categories, "synthetic categories")->capture_default_str();
  mine->add_option("--dim", dim, "synthetic dimensionality")->capture_default_str();
  mine->add_option("--iterations", iterations, "iterations")->capture_default_str();
  mine->add_flag("--quiet", quiet, "no per-iteration trace on stderr");

  std::string kind;
  std::vector<std::string> files;
  auto* chk = app.add_subcommand("schema-check", "validate files against the v1 schemas");
  add_common(chk, common);
  chk->add_option("kind", kind, "expressions, instances, corpus, embeddings, scores or config")->required();
  chk->add_option("files", files, "files to check")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*gen) return cmd_generate(common, corpus_override);
    if (*dis) return cmd_distract(common, expressions_path, corpus_override);
    if (*spl) return cmd_split(common, instances_path);
    if (*sta) return cmd_stats(common, instances_path, expressions_path, corpus_only, top_k, table);
    if (*eva) return cmd_eval(common, instances_path, setting, scorer_kind, scores, command, constant, write_scores);
    if (*mine) return cmd_mine_demo(common, embeddings_path, synthetic_count, categories, dim, iterations, quiet);
    if (*chk) return cmd_schema_check(common, kind, files);
  } catch (const EmptyResult& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kEmptyExit;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataExit;
  }
  return kConfigExit;
}
