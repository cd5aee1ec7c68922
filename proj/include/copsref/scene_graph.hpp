#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "copsref/common.hpp"
#include "copsref/error.hpp"

namespace copsref {

using json = nlohmann::json;

struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  double area() const { return static_cast<double>(w) * static_cast<double>(h); }
  double center_x() const { return x + w / 2.0; }

  bool operator==(const BoundingBox&) const = default;
};

struct ObjectNode {
  ObjectId id;
  std::string category;
  std::vector<std::string> attributes;  // sorted, unique
  BoundingBox box;

  bool has_attribute(std::string_view a) const {
    return std::binary_search(attributes.begin(), attributes.end(), a, std::less<>{});
  }

  bool operator==(const ObjectNode&) const = default;
};

struct RelationEdge {
  ObjectId subject;
  std::string predicate;
  ObjectId object;

  bool operator==(const RelationEdge&) const = default;
};

inline bool edge_less(const RelationEdge& a, const RelationEdge& b) {
  if (a.subject != b.subject) return id_less(a.subject, b.subject);
  if (a.predicate != b.predicate) return a.predicate < b.predicate;
  return id_less(a.object, b.object);
}

struct SceneGraph {
  ImageId image_id;
  int width = 0;
  int height = 0;
  std::vector<ObjectNode> nodes;  // ascending by id
  std::vector<RelationEdge> edges;  // ascending by (subject, predicate, object)

  const ObjectNode* find(std::string_view id) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                               [](const ObjectNode& n, std::string_view v) { return id_less(n.id, v); });
    if (it == nodes.end() || it->id != id) return nullptr;
    return &*it;
  }

  // Edges whose subject is `id`; contiguous because edges are sorted by subject.
  std::span<const RelationEdge> out_edges(std::string_view id) const {
    auto lo = std::lower_bound(edges.begin(), edges.end(), id,
                               [](const RelationEdge& e, std::string_view v) { return id_less(e.subject, v); });
    auto hi = lo;
    while (hi != edges.end() && hi->subject == id) ++hi;
    return {lo, hi};
  }

  bool has_edge(std::string_view subject, std::string_view predicate, std::string_view object) const {
    for (const auto& e : out_edges(subject)) {
      if (e.predicate == predicate && e.object == object) return true;
    }
    return false;
  }

  bool operator==(const SceneGraph&) const = default;
};

// Throws SchemaViolation / DanglingEdge when an invariant is broken.
inline void validate(const SceneGraph& g) {
  if (g.width <= 0 || g.height <= 0) {
    throw SchemaViolation("image " + g.image_id + ": non-positive image size");
  }
  std::set<ObjectId, IdLess> seen;
  for (const auto& n : g.nodes) {
    const std::string where = "image " + g.image_id + ", object " + n.id;
    if (!seen.insert(n.id).second) throw SchemaViolation(where + ": duplicate object id");
    if (n.category.empty()) throw SchemaViolation(where + ": empty category");
    const auto& b = n.box;
    if (b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0 || b.x + b.w > g.width || b.y + b.h > g.height) {
      throw SchemaViolation(where + ": box outside image bounds");
    }
    if (std::adjacent_find(n.attributes.begin(), n.attributes.end()) != n.attributes.end()) {
      throw SchemaViolation(where + ": duplicate attribute");
    }
  }
  for (const auto& e : g.edges) {
    if (!seen.count(e.subject) || !seen.count(e.object)) {
      throw DanglingEdge("image " + g.image_id + ": edge " + e.subject + " -[" + e.predicate + "]-> " +
                         e.object + " references an absent object");
    }
    if (e.subject == e.object) {
      throw SchemaViolation("image " + g.image_id + ": self-loop on object " + e.subject);
    }
  }
}

// Canonical term -> surface synonyms; the canonical term is entry 0.
class SynonymTable {
 public:
  SynonymTable() = default;

  void add(const std::string& canonical, const std::vector<std::string>& synonyms) {
    auto& list = entries_[canonical];
    if (list.empty()) list.push_back(canonical);
    register_term(canonical, canonical);
    for (const auto& s : synonyms) {
      if (s == canonical) continue;
      register_term(s, canonical);
      if (std::find(list.begin(), list.end(), s) == list.end()) list.push_back(s);
    }
  }

  static SynonymTable from_json(const json& j) {
    if (!j.is_object()) throw SchemaViolation("synonym table must be a JSON object");
    SynonymTable table;
    for (const auto& [canonical, list] : j.items()) {
      if (!list.is_array()) throw SchemaViolation("synonyms of '" + canonical + "' must be an array");
      std::vector<std::string> synonyms;
      for (const auto& s : list) {
        if (!s.is_string()) throw SchemaViolation("synonym of '" + canonical + "' is not a string");
        synonyms.push_back(s.get<std::string>());
      }
      table.add(canonical, synonyms);
    }
    return table;
  }

  static SynonymTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open synonym table " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw MalformedDocument(path + ": " + e.what());
    }
    return from_json(j);
  }

  // Terms absent from the table are their own canonical form.
  std::string canonicalize(const std::string& term) const {
    auto it = to_canonical_.find(term);
    return it == to_canonical_.end() ? term : it->second;
  }

  // Full surface list (canonical first); empty when the term is unknown.
  std::span<const std::string> surfaces(const std::string& canonical) const {
    auto it = entries_.find(canonical);
    if (it == entries_.end()) return {};
    return it->second;
  }

  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  void register_term(const std::string& term, const std::string& canonical) {
    auto [it, inserted] = to_canonical_.emplace(term, canonical);
    if (!inserted && it->second != canonical) {
      throw SchemaViolation("synonym '" + term + "' maps to both '" + it->second + "' and '" + canonical + "'");
    }
  }

  std::map<std::string, std::vector<std::string>> entries_;
  std::map<std::string, std::string> to_canonical_;
};

struct CategoryEntry {
  ImageId image_id;
  ObjectId object_id;

  bool operator==(const CategoryEntry&) const = default;
};

class Corpus {
 public:
  using GraphMap = std::map<ImageId, SceneGraph, IdLess>;
  using CategoryIndex = std::map<std::string, std::vector<CategoryEntry>>;

  Corpus() = default;

  explicit Corpus(std::vector<SceneGraph> graphs) {
    for (auto& g : graphs) {
      validate(g);
      const ImageId id = g.image_id;
      if (!graphs_.emplace(id, std::move(g)).second) throw SchemaViolation("duplicate image id " + id);
    }
    build_index();
  }

  const GraphMap& graphs() const { return graphs_; }
  const CategoryIndex& category_index() const { return category_index_; }
  std::size_t size() const { return graphs_.size(); }
  bool empty() const { return graphs_.empty(); }

  const SceneGraph* find(std::string_view image_id) const {
    auto it = graphs_.find(image_id);
    return it == graphs_.end() ? nullptr : &it->second;
  }

  std::span<const CategoryEntry> objects_of(const std::string& category) const {
    auto it = category_index_.find(category);
    if (it == category_index_.end()) return {};
    return it->second;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& [_, g] : graphs_) n += g.edges.size();
    return n;
  }

  bool operator==(const Corpus& other) const {
    return graphs_ == other.graphs_ && category_index_ == other.category_index_;
  }

 private:
  void build_index() {
    std::size_t nodes = 0;
    for (const auto& [id, g] : graphs_) {
      for (const auto& n : g.nodes) {
        category_index_[n.category].push_back({id, n.id});
        ++nodes;
      }
    }
    std::size_t indexed = 0;
    for (const auto& [_, entries] : category_index_) indexed += entries.size();
    if (indexed != nodes) throw SchemaViolation("category index does not cover every node");
  }

  GraphMap graphs_;
  CategoryIndex category_index_;
};

namespace detail {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaViolation(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaViolation(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

// Parses one GQA-style scene graph entry and canonicalizes its terms.
inline SceneGraph parse_scene_graph(const std::string& image_id, const json& j, const SynonymTable& synonyms,
                                    std::vector<std::string>* warnings = nullptr) {
  const std::string where = "image " + image_id;
  if (!j.is_object()) throw SchemaViolation(where + ": entry is not an object");
  SceneGraph g;
  g.image_id = image_id;
  g.width = detail::required<int>(j, "width", where);
  g.height = detail::required<int>(j, "height", where);
  auto objects = j.find("objects");
  if (objects == j.end() || !objects->is_object()) throw SchemaViolation(where + ": missing field 'objects'");

  for (const auto& [oid, o] : objects->items()) {
    const std::string owhere = where + ", object " + oid;
    if (!o.is_object()) throw SchemaViolation(owhere + ": not an object");
    ObjectNode n;
    n.id = oid;
    n.category = synonyms.canonicalize(detail::required<std::string>(o, "name", owhere));
    n.box = {detail::required<int>(o, "x", owhere), detail::required<int>(o, "y", owhere),
             detail::required<int>(o, "w", owhere), detail::required<int>(o, "h", owhere)};
    if (auto a = o.find("attributes"); a != o.end()) {
      if (!a->is_array()) throw SchemaViolation(owhere + ": 'attributes' must be an array");
      for (const auto& v : *a) {
        if (!v.is_string()) throw SchemaViolation(owhere + ": attribute is not a string");
        n.attributes.push_back(synonyms.canonicalize(v.get<std::string>()));
      }
    }
    std::sort(n.attributes.begin(), n.attributes.end());
    auto last = std::unique(n.attributes.begin(), n.attributes.end());
    if (last != n.attributes.end() && warnings) warnings->push_back(owhere + ": duplicate attributes merged");
    n.attributes.erase(last, n.attributes.end());

    if (auto r = o.find("relations"); r != o.end()) {
      if (!r->is_array()) throw SchemaViolation(owhere + ": 'relations' must be an array");
      for (const auto& rel : *r) {
        if (!rel.is_object()) throw SchemaViolation(owhere + ": relation is not an object");
        g.edges.push_back({oid, synonyms.canonicalize(detail::required<std::string>(rel, "name", owhere)),
                           detail::required<std::string>(rel, "object", owhere)});
      }
    }
    g.nodes.push_back(std::move(n));
  }
  std::sort(g.nodes.begin(), g.nodes.end(), [](const auto& a, const auto& b) { return id_less(a.id, b.id); });
  std::sort(g.edges.begin(), g.edges.end(), edge_less);
  auto last = std::unique(g.edges.begin(), g.edges.end());
  if (last != g.edges.end() && warnings) {
    warnings->push_back(where + ": " + std::to_string(g.edges.end() - last) + " duplicate edge(s) removed");
  }
  g.edges.erase(last, g.edges.end());
  validate(g);
  return g;
}

inline Corpus load_corpus(std::istream& source, const SynonymTable& synonyms,
                          std::vector<std::string>* warnings = nullptr) {
  json doc;
  try {
    doc = json::parse(source);
  } catch (const json::parse_error& e) {
    throw MalformedDocument(e.what());
  }
  if (!doc.is_object()) throw SchemaViolation("corpus document must be a JSON object keyed by image id");
  std::vector<SceneGraph> graphs;
  for (const auto& [image_id, entry] : doc.items()) {
    graphs.push_back(parse_scene_graph(image_id, entry, synonyms, warnings));
  }
  return Corpus(std::move(graphs));
}

inline Corpus load_corpus_file(const std::string& path, const SynonymTable& synonyms,
                               std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus " + path);
  return load_corpus(in, synonyms, warnings);
}

inline json to_json(const SceneGraph& g) {
  json objects = json::object();
  for (const auto& n : g.nodes) {
    json relations = json::array();
    for (const auto& e : g.out_edges(n.id)) relations.push_back({{"name", e.predicate}, {"object", e.object}});
    objects[n.id] = {{"name", n.category}, {"x", n.box.x},          {"y", n.box.y},
                     {"w", n.box.w},       {"h", n.box.h},          {"attributes", n.attributes},
                     {"relations", relations}};
  }
  return {{"width", g.width}, {"height", g.height}, {"objects", objects}};
}

inline json to_json(const Corpus& corpus) {
  json doc = json::object();
  for (const auto& [id, g] : corpus.graphs()) doc[id] = to_json(g);
  return doc;
}

inline const std::set<std::string>& default_blacklist() {
  static const std::set<std::string> list{"sky", "cloud"};
  return list;
}

inline constexpr double kDefaultMinAreaRatio = 0.01;

// Ids of objects large enough to describe and not of an unboxable category,
// ascending by id.
inline std::vector<ObjectId> eligible_targets(const SceneGraph& graph, double min_area_ratio = kDefaultMinAreaRatio,
                                              const std::set<std::string>& blacklist = default_blacklist()) {
  const double image_area = static_cast<double>(graph.width) * graph.height;
  std::vector<ObjectId> ids;
  for (const auto& n : graph.nodes) {
    if (n.box.area() / image_area < min_area_ratio) continue;
    if (blacklist.count(n.category)) continue;
    ids.push_back(n.id);
  }
  return ids;
}

}  // namespace copsref
