#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "copsref/balance.hpp"
#include "copsref/error.hpp"
#include "copsref/hard_mining.hpp"
#include "copsref/reasoning.hpp"
#include "copsref/scene_graph.hpp"
#include "copsref/stats.hpp"

namespace copsref {

// Pipeline configuration, read from a JSON object. Relative paths are taken
// relative to the directory holding the config file.
struct PipelineConfig {
  std::string corpus;
  std::string synonyms;           // empty: no synonyms
  std::string templates;          // empty: builtin templates
  std::string attribute_lexicon;  // empty: builtin lexicon
  std::string output_dir = "out";

  std::uint64_t seed = 0;
  double min_area_ratio = kDefaultMinAreaRatio;
  std::set<std::string> blacklist = default_blacklist();
  std::vector<LogicForm> forms{kLogicForms.begin(), kLogicForms.end()};
  std::size_t max_per_region = 2;
  double synonym_probability = 0.3;
  double compose_probability = 0.5;
  double deep_chain_probability = 0.5;
  bool balance_relations = true;
  bool filter_spatial = true;
  std::set<std::string> spatial_relations = default_spatial_relations();
  std::size_t per_type = 3;
  SplitRatios split;
  double margin = kDefaultMargin;
  std::size_t refresh_interval = kDefaultRefreshInterval;
};

namespace detail {

inline void check_probability(const char* name, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
  detail::check_probability("min_area_ratio", c.min_area_ratio);
  detail::check_probability("synonym_probability", c.synonym_probability);
  detail::check_probability("compose_probability", c.compose_probability);
  detail::check_probability("deep_chain_probability", c.deep_chain_probability);
  if (c.forms.empty()) throw ConfigError("forms must not be empty");
  if (c.max_per_region == 0) throw ConfigError("max_per_region must be at least 1");
  if (c.per_type == 0) throw ConfigError("per_type must be at least 1");
  if (c.margin < 0) throw ConfigError("margin must be non-negative");
  if (c.refresh_interval == 0) throw ConfigError("refresh_interval must be at least 1");
  check_ratios(c.split);
}

inline PipelineConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known{
      "corpus",         "synonyms",          "templates",         "attribute_lexicon", "output_dir",
      "seed",           "min_area_ratio",    "blacklist",         "forms",             "max_per_region",
      "synonym_probability", "compose_probability", "deep_chain_probability", "balance_relations",
      "filter_spatial", "spatial_relations", "per_type",          "split",             "margin",
      "refresh_interval"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  PipelineConfig c;
  auto path = [&](const char* key, std::string& out) {
    if (!j.contains(key) || j[key].is_null()) return;
    std::filesystem::path p = j[key].get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    out = p.lexically_normal().string();
  };
  try {
    path("corpus", c.corpus);
    path("synonyms", c.synonyms);
    path("templates", c.templates);
    path("attribute_lexicon", c.attribute_lexicon);
    path("output_dir", c.output_dir);
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("min_area_ratio")) c.min_area_ratio = j["min_area_ratio"].get<double>();
    if (j.contains("blacklist")) c.blacklist = j["blacklist"].get<std::set<std::string>>();
    if (j.contains("forms")) {
      c.forms.clear();
      for (const auto& f : j["forms"]) c.forms.push_back(logic_form_from_string(f.get<std::string>()));
    }
    if (j.contains("max_per_region")) c.max_per_region = j["max_per_region"].get<std::size_t>();
    if (j.contains("synonym_probability")) c.synonym_probability = j["synonym_probability"].get<double>();
    if (j.contains("compose_probability")) c.compose_probability = j["compose_probability"].get<double>();
    if (j.contains("deep_chain_probability")) c.deep_chain_probability = j["deep_chain_probability"].get<double>();
    if (j.contains("balance_relations")) c.balance_relations = j["balance_relations"].get<bool>();
    if (j.contains("filter_spatial")) c.filter_spatial = j["filter_spatial"].get<bool>();
    if (j.contains("spatial_relations")) c.spatial_relations = j["spatial_relations"].get<std::set<std::string>>();
    if (j.contains("per_type")) c.per_type = j["per_type"].get<std::size_t>();
    if (j.contains("split")) {
      const auto r = j["split"].get<std::vector<double>>();
      if (r.size() != 3) throw ConfigError("split needs three ratios");
      c.split = {r[0], r[1], r[2]};
    }
    if (j.contains("margin")) c.margin = j["margin"].get<double>();
    if (j.contains("refresh_interval")) c.refresh_interval = j["refresh_interval"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  } catch (const SchemaViolation& e) {
    throw ConfigError(e.what());
  }
  validate(c);
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path());
}

inline json to_json(const PipelineConfig& c) {
  std::vector<std::string> forms;
  for (auto f : c.forms) forms.emplace_back(to_string(f));
  auto opt = [](const std::string& s) { return s.empty() ? json(nullptr) : json(s); };
  return {{"corpus", opt(c.corpus)},
          {"synonyms", opt(c.synonyms)},
          {"templates", opt(c.templates)},
          {"attribute_lexicon", opt(c.attribute_lexicon)},
          {"output_dir", c.output_dir},
          {"seed", c.seed},
          {"min_area_ratio", c.min_area_ratio},
          {"blacklist", c.blacklist},
          {"forms", forms},
          {"max_per_region", c.max_per_region},
          {"synonym_probability", c.synonym_probability},
          {"compose_probability", c.compose_probability},
          {"deep_chain_probability", c.deep_chain_probability},
          {"balance_relations", c.balance_relations},
          {"filter_spatial", c.filter_spatial},
          {"spatial_relations", c.spatial_relations},
          {"per_type", c.per_type},
          {"split", {c.split.train, c.split.val, c.split.test}},
          {"margin", c.margin},
          {"refresh_interval", c.refresh_interval}};
}

}  // namespace copsref
