#pragma once

#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "copsref/balance.hpp"
#include "copsref/config.hpp"
#include "copsref/distractor.hpp"
#include "copsref/expression.hpp"
#include "copsref/hard_mining.hpp"
#include "copsref/relation_weights.hpp"
#include "copsref/scene_graph.hpp"

namespace copsref {

// fn(i) for i in [0, n) on up to `workers` threads; results in index order.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t workers, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  std::vector<decltype(fn(std::size_t{}))> out(n);
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          out[i] = fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

// --- JSONL --------------------------------------------------------------------

template <typename T>
std::vector<T> read_jsonl(std::istream& in, const std::string& source) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw MalformedDocument(where + ": " + e.what());
    }
    try {
      out.push_back(j.get<T>());
    } catch (const json::exception& e) {
      throw SchemaViolation(where + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaViolation(where + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::vector<T> read_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return read_jsonl<T>(in, path);
}

template <typename T>
void write_jsonl(std::ostream& out, std::span<const T> items) {
  for (const auto& item : items) out << json(item).dump() << '\n';
}

template <typename T>
void write_jsonl_file(const std::string& path, std::span<const T> items) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  write_jsonl(out, items);
}

// --- Resources ----------------------------------------------------------------

struct Resources {
  Corpus corpus;
  SynonymTable synonyms;
  TemplateSet templates;
  AttributeLexicon lexicon;
  std::vector<std::string> warnings;
};

inline Resources load_resources(const PipelineConfig& c) {
  Resources r;
  if (!c.synonyms.empty()) r.synonyms = SynonymTable::load(c.synonyms);
  r.templates = c.templates.empty() ? TemplateSet::builtin() : TemplateSet::load(c.templates);
  r.lexicon = c.attribute_lexicon.empty() ? AttributeLexicon::builtin() : AttributeLexicon::load(c.attribute_lexicon);
  if (c.corpus.empty()) throw ConfigError("no corpus configured");
  r.corpus = load_corpus_file(c.corpus, r.synonyms, &r.warnings);
  return r;
}

// --- Generation ---------------------------------------------------------------

struct GenerationLog {
  std::size_t images = 0;
  std::size_t objects = 0;
  std::size_t targets = 0;
  std::map<std::string, std::size_t> per_form;   // emitted records
  std::map<std::string, std::size_t> discards;   // reason -> count

  json to_json() const {
    return {{"images", images}, {"objects", objects}, {"targets", targets}, {"per_form", per_form},
            {"discards", discards}};
  }
};

struct GenerationRun {
  std::vector<ExpressionRecord> records;
  GenerationLog log;
};

inline GenerationConfig generation_config(const PipelineConfig& c, const AttributeLexicon& lexicon,
                                          const RelationWeights* weights) {
  GenerationConfig g;
  g.forms = c.forms;
  g.max_per_region = c.max_per_region;
  g.synonym_probability = c.synonym_probability;
  g.compose_probability = c.compose_probability;
  g.deep_chain_probability = c.deep_chain_probability;
  if (c.filter_spatial) g.spatial_filter = c.spatial_relations;
  g.parse.lexicon = &lexicon;
  g.parse.relation_weights = weights;
  return g;
}

// Every image is processed independently with its own random stream, so the
// output does not depend on the worker count.
inline GenerationRun run_generate(const Corpus& corpus, const TemplateSet& templates, const SynonymTable& synonyms,
                                  const AttributeLexicon& lexicon, const PipelineConfig& c, std::size_t workers = 1) {
  if (corpus.empty()) throw EmptyCorpus("corpus has no images");
  std::optional<RelationWeights> weights;
  if (c.balance_relations && corpus.edge_count() > 0) weights = relation_weights(corpus);
  const GenerationConfig gen = generation_config(c, lexicon, weights ? &*weights : nullptr);

  std::vector<const SceneGraph*> graphs;
  for (const auto& [_, g] : corpus.graphs()) graphs.push_back(&g);

  struct ImageResult {
    std::vector<ExpressionRecord> records;
    GenerationLog log;
  };
  auto per_image = parallel_map(graphs.size(), workers, [&](std::size_t i) {
    const SceneGraph& g = *graphs[i];
    ImageResult out;
    out.log.objects = g.nodes.size();
    const double image_area = static_cast<double>(g.width) * g.height;
    for (const auto& n : g.nodes) {
      if (n.box.area() / image_area < c.min_area_ratio) {
        ++out.log.discards["area"];
      } else if (c.blacklist.count(n.category)) {
        ++out.log.discards["blacklist"];
      }
    }
    for (const auto& target : eligible_targets(g, c.min_area_ratio, c.blacklist)) {
      ++out.log.targets;
      Rng rng = make_rng(c.seed, "generate", g.image_id, target);
      auto result = generate_detailed(g, target, templates, synonyms, gen, rng);
      for (const auto& [reason, n] : result.discards) out.log.discards[reason] += n;
      for (auto& r : result.records) out.records.push_back(std::move(r));
    }
    return out;
  });

  GenerationRun run;
  run.log.images = graphs.size();
  for (auto& part : per_image) {
    run.log.objects += part.log.objects;
    run.log.targets += part.log.targets;
    for (const auto& [reason, n] : part.log.discards) run.log.discards[reason] += n;
    for (auto& r : part.records) {
      ++run.log.per_form[std::string(to_string(r.form))];
      run.records.push_back(std::move(r));
    }
  }
  return run;
}

inline GenerationRun run_generate(const Resources& r, const PipelineConfig& c, std::size_t workers = 1) {
  return run_generate(r.corpus, r.templates, r.synonyms, r.lexicon, c, workers);
}

// --- Distractors --------------------------------------------------------------

struct DistractLog {
  std::size_t expressions = 0;
  std::size_t kept = 0;
  std::vector<std::pair<std::string, std::string>> discarded;  // expr_id, reason

  json to_json() const {
    json d = json::array();
    for (const auto& [id, reason] : discarded) d.push_back({{"expr_id", id}, {"reason", reason}});
    return {{"expressions", expressions}, {"kept", kept}, {"discarded_count", discarded.size()}, {"discarded", d}};
  }
};

struct DistractRun {
  std::vector<TaskInstance> instances;
  DistractLog log;
};

inline DistractRun run_distract(const Corpus& corpus, std::span<const ExpressionRecord> expressions,
                                std::size_t per_type, const AttributeLexicon& lexicon, std::size_t workers = 1) {
  auto searches = parallel_map(expressions.size(), workers, [&](std::size_t i) {
    const auto& expr = expressions[i];
    if (!corpus.find(expr.image_id)) throw DanglingEdge(expr.expr_id + ": image " + expr.image_id + " not in corpus");
    return find_distractors_detailed(corpus, expr, per_type, lexicon);
  });
  DistractRun run;
  run.log.expressions = expressions.size();
  for (std::size_t i = 0; i < searches.size(); ++i) {
    if (searches[i].instance) {
      run.instances.push_back(std::move(*searches[i].instance));
    } else {
      run.log.discarded.push_back({expressions[i].expr_id, "shortage: " + searches[i].shortage(per_type)});
    }
  }
  run.log.kept = run.instances.size();
  return run;
}

// --- Hard-mining demo ---------------------------------------------------------

struct MineDemoOptions {
  std::size_t iterations = 200;
  std::size_t refresh_interval = kDefaultRefreshInterval;
  double margin = kDefaultMargin;
  double region_noise = 0.6;
  std::uint64_t seed = 0;
};

// Region features stand in as the expression vectors plus seeded noise; the
// score of (region a, expression b) is the mean module cosine.
inline json run_mine_demo(std::span<const ModularEmbedding> embeddings, const MineDemoOptions& opt) {
  check_embeddings(embeddings);
  std::vector<ModularEmbedding> regions(embeddings.begin(), embeddings.end());
  {
    Rng rng = make_rng(opt.seed, "regions");
    for (auto& r : regions) {
      for (std::size_t md = 0; md < 3; ++md) {
        for (auto& x : r.module(md)) x += opt.region_noise * (2.0 * uniform01(rng) - 1.0);
      }
    }
  }
  auto score = [&](std::size_t region, std::size_t expr) {
    double s = 0.0;
    for (std::size_t md = 0; md < 3; ++md) {
      s += module_similarity(regions[region].module(md), embeddings[expr].module(md));
    }
    return s / 3.0;
  };

  TableHolder holder;
  Rng rng = make_rng(opt.seed, "mine-demo");
  json trace = json::array();
  std::size_t refreshes = 0;
  double rank_sum = 0.0, mine_sum = 0.0;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    if (holder.step(it, embeddings, opt.refresh_interval)) ++refreshes;
    const auto table = holder.current();
    std::vector<std::size_t> usable;
    for (std::size_t m = 0; m < table->size(); ++m) {
      if (!table->row(m, 0).empty()) usable.push_back(m);
    }
    if (usable.empty()) throw NoPeers("no pair has a same-category peer");
    const std::size_t m = usable[uniform_index(rng, usable.size())];
    std::size_t other = uniform_index(rng, embeddings.size() - 1);
    if (other >= m) ++other;
    const auto negatives = sample_negatives(*table, m, rng);
    const double s_pos = score(m, m);
    const double rank = rank_loss(s_pos, score(m, other), score(other, m), opt.margin);
    ModuleMap<NegativeScores> mined;
    for (const auto& [md, id] : negatives) {
      const auto n = *table->index_of(id);
      mined[md] = {score(m, n), score(n, m)};
    }
    const double mine = mine_loss(s_pos, mined, opt.margin);
    rank_sum += rank;
    mine_sum += mine;
    trace.push_back({{"iteration", it},
                     {"epoch", table->epoch()},
                     {"pair", table->pair_id(m)},
                     {"negatives", negatives},
                     {"rank_loss", rank},
                     {"mine_loss", mine},
                     {"total_loss", total_loss(rank, mine)}});
  }
  const double n = opt.iterations ? static_cast<double>(opt.iterations) : 1.0;
  return {{"iterations", opt.iterations},
          {"refreshes", refreshes},
          {"mean_rank_loss", rank_sum / n},
          {"mean_mine_loss", mine_sum / n},
          {"trace", trace}};
}

}  // namespace copsref
