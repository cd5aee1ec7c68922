#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "copsref/common.hpp"
#include "copsref/distractor.hpp"
#include "copsref/error.hpp"
#include "copsref/expression.hpp"

namespace copsref {

// --- Splitting --------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double val = 0.11;
  double test = 0.09;
};

enum class Partition { Train, Val, Test };

inline std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  return "?";
}

inline void check_ratios(const SplitRatios& r) {
  if (r.train <= 0 || r.val <= 0 || r.test <= 0) throw ConfigError("split ratios must be positive");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

// Group keys -> partition. Keys are shuffled with the seed and cut at the
// rounded ratio boundaries.
template <typename Key>
std::map<Key, Partition, IdLess> assign_partitions(std::vector<Key> keys, const SplitRatios& ratios,
                                                   std::uint64_t seed) {
  check_ratios(ratios);
  std::sort(keys.begin(), keys.end(), IdLess{});
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  Rng rng = make_rng(seed, "split");
  shuffle(keys, rng);
  const auto n = keys.size();
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(n * ratios.train)));
  const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(n * ratios.val)));
  std::map<Key, Partition, IdLess> out;
  for (std::size_t i = 0; i < n; ++i) {
    out[keys[i]] = i < n_train ? Partition::Train : i < n_train + n_val ? Partition::Val : Partition::Test;
  }
  return out;
}

// Splits items so that all items sharing a key land in the same partition.
// Input order is kept inside each partition.
template <typename T, typename KeyFn>
std::array<std::vector<T>, 3> split(std::span<const T> items, KeyFn key, const SplitRatios& ratios,
                                    std::uint64_t seed) {
  std::vector<std::string> keys;
  keys.reserve(items.size());
  for (const auto& item : items) keys.push_back(key(item));
  const auto assignment = assign_partitions(keys, ratios, seed);
  std::array<std::vector<T>, 3> parts;
  for (const auto& item : items) parts[static_cast<int>(assignment.at(key(item)))].push_back(item);
  return parts;
}

// Split by target image.
inline std::array<std::vector<TaskInstance>, 3> split(std::span<const TaskInstance> instances,
                                                      const SplitRatios& ratios, std::uint64_t seed) {
  return split(instances, [](const TaskInstance& i) { return i.target_image; }, ratios, seed);
}

// --- Statistics -------------------------------------------------------------

struct FrequencyEntry {
  std::string term;
  std::size_t count = 0;

  bool operator==(const FrequencyEntry&) const = default;
};

struct DatasetStats {
  std::size_t expression_count = 0;
  std::size_t region_count = 0;
  std::size_t image_count = 0;
  double avg_expression_length = 0.0;
  std::size_t vocab_size = 0;
  std::size_t category_count = 0;
  std::size_t attribute_count = 0;
  std::size_t relation_count = 0;
  std::vector<FrequencyEntry> top_names;
  std::vector<FrequencyEntry> top_attributes;
  std::vector<FrequencyEntry> top_relations;
  double avg_candidates = 0.0;
  double avg_same_category_candidates = 0.0;

  bool operator==(const DatasetStats&) const = default;
};

// Words of an expression: whitespace tokens with the terminal period removed.
inline std::vector<std::string> expression_words(const std::string& text) {
  auto words = split_words(text);
  if (!words.empty() && !words.back().empty() && words.back().back() == '.') {
    words.back().pop_back();
    if (words.back().empty()) words.pop_back();
  }
  return words;
}

namespace detail {

using Counter = std::map<std::string, std::size_t>;

inline std::vector<FrequencyEntry> top_k(const Counter& counts, std::size_t k) {
  std::vector<FrequencyEntry> out;
  for (const auto& [term, n] : counts) out.push_back({term, n});
  std::stable_sort(out.begin(), out.end(),
                   [](const FrequencyEntry& a, const FrequencyEntry& b) { return a.count > b.count; });
  if (out.size() > k) out.resize(k);
  return out;
}

struct TermCounts {
  Counter names, attributes, relations;
  std::set<std::string> vocabulary;
  std::size_t words = 0;

  void add_node(const TreeNode& n) {
    ++names[n.category];
    for (const auto& a : n.attributes) ++attributes[a];
    for (const auto& a : n.negated_attributes) ++attributes[a];
  }

  void add_expression(const ExpressionRecord& r) {
    for (int k = 0; k < 3; ++k) {
      if (const TreeNode* n = r.tree.node(k)) add_node(*n);
    }
    for (const auto* e : r.tree.relation_edges()) ++relations[e->predicate];
    for (auto w : expression_words(r.text)) {
      for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      vocabulary.insert(std::move(w));
      ++words;
    }
  }

  void fill(DatasetStats& s, std::size_t k) const {
    s.vocab_size = vocabulary.size();
    s.category_count = names.size();
    s.attribute_count = attributes.size();
    s.relation_count = relations.size();
    s.top_names = top_k(names, k);
    s.top_attributes = top_k(attributes, k);
    s.top_relations = top_k(relations, k);
  }
};

}  // namespace detail

inline DatasetStats stats(std::span<const ExpressionRecord> expressions, std::size_t top_k = 20) {
  if (expressions.empty()) throw EmptyInput("no expressions");
  detail::TermCounts counts;
  std::set<ImageId> images;
  std::set<std::pair<ImageId, ObjectId>> regions;
  for (const auto& r : expressions) {
    counts.add_expression(r);
    images.insert(r.image_id);
    regions.insert({r.image_id, r.target_id});
  }
  DatasetStats s;
  s.expression_count = expressions.size();
  s.image_count = images.size();
  s.region_count = regions.size();
  s.avg_expression_length = static_cast<double>(counts.words) / static_cast<double>(expressions.size());
  counts.fill(s, top_k);
  return s;
}

inline DatasetStats stats(std::span<const TaskInstance> instances, std::size_t top_k = 20) {
  if (instances.empty()) throw EmptyInput("no task instances");
  detail::TermCounts counts;
  std::set<ImageId> images;
  std::set<std::pair<ImageId, ObjectId>> regions;
  std::size_t candidates = 0;
  std::size_t same_category = 0;
  for (const auto& inst : instances) {
    counts.add_expression(inst.expression);
    for (const auto& [image, list] : inst.candidate_regions) {
      images.insert(image);
      for (const auto& r : list) {
        regions.insert({image, r.object_id});
        ++candidates;
        if (r.category == inst.expression.target_category()) ++same_category;
      }
    }
  }
  const auto n = static_cast<double>(instances.size());
  DatasetStats s;
  s.expression_count = instances.size();
  s.image_count = images.size();
  s.region_count = regions.size();
  s.avg_expression_length = static_cast<double>(counts.words) / n;
  s.avg_candidates = static_cast<double>(candidates) / n;
  s.avg_same_category_candidates = static_cast<double>(same_category) / n;
  counts.fill(s, top_k);
  return s;
}

// Scene-graph level statistics (no expressions).
inline DatasetStats stats(const Corpus& corpus, std::size_t top_k = 20) {
  if (corpus.empty()) throw EmptyInput("empty corpus");
  detail::TermCounts counts;
  std::size_t regions = 0;
  for (const auto& [_, g] : corpus.graphs()) {
    for (const auto& n : g.nodes) {
      ++counts.names[n.category];
      for (const auto& a : n.attributes) ++counts.attributes[a];
      ++regions;
    }
    for (const auto& e : g.edges) ++counts.relations[e.predicate];
  }
  DatasetStats s;
  s.image_count = corpus.size();
  s.region_count = regions;
  counts.fill(s, top_k);
  return s;
}

inline void to_json(json& j, const FrequencyEntry& e) { j = json::array({e.term, e.count}); }

inline void to_json(json& j, const DatasetStats& s) {
  j = {{"expression_count", s.expression_count},
       {"region_count", s.region_count},
       {"image_count", s.image_count},
       {"avg_expression_length", s.avg_expression_length},
       {"vocab_size", s.vocab_size},
       {"category_count", s.category_count},
       {"attribute_count", s.attribute_count},
       {"relation_count", s.relation_count},
       {"avg_candidates", s.avg_candidates},
       {"avg_same_category_candidates", s.avg_same_category_candidates},
       {"top_names", s.top_names},
       {"top_attributes", s.top_attributes},
       {"top_relations", s.top_relations}};
}

inline std::string format_table(const DatasetStats& s) {
  std::ostringstream out;
  char buf[128];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(buf, sizeof(buf), "%-30s %s\n", name, value.c_str());
    out << buf;
  };
  auto fixed = [](double v) {
    char b[32];
    std::snprintf(b, sizeof(b), "%.2f", v);
    return std::string(b);
  };
  row("expressions", std::to_string(s.expression_count));
  row("regions", std::to_string(s.region_count));
  row("images", std::to_string(s.image_count));
  row("avg expression length", fixed(s.avg_expression_length));
  row("vocabulary size", std::to_string(s.vocab_size));
  row("object categories", std::to_string(s.category_count));
  row("attributes", std::to_string(s.attribute_count));
  row("relations", std::to_string(s.relation_count));
  row("avg candidates", fixed(s.avg_candidates));
  row("avg same-category candidates", fixed(s.avg_same_category_candidates));
  auto list = [&](const char* title, const std::vector<FrequencyEntry>& entries) {
    out << "\n" << title << "\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "  %2zu. %-24s %zu\n", i + 1, entries[i].term.c_str(), entries[i].count);
      out << buf;
    }
  };
  list("most frequent object names", s.top_names);
  list("most frequent attributes", s.top_attributes);
  list("most frequent relations", s.top_relations);
  return out.str();
}

}  // namespace copsref
