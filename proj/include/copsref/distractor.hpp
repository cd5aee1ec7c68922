#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "copsref/common.hpp"
#include "copsref/expression.hpp"
#include "copsref/reasoning.hpp"
#include "copsref/scene_graph.hpp"

namespace copsref {

enum class DistractorType { DiffCat, Cat, CatAttr, CatCat };

inline constexpr std::array<DistractorType, 4> kDistractorTypes{DistractorType::DiffCat, DistractorType::Cat,
                                                                DistractorType::CatAttr, DistractorType::CatCat};

inline std::string_view to_string(DistractorType t) {
  switch (t) {
    case DistractorType::DiffCat: return "DiffCat";
    case DistractorType::Cat: return "Cat";
    case DistractorType::CatAttr: return "CatAttr";
    case DistractorType::CatCat: return "CatCat";
  }
  return "?";
}

inline DistractorType distractor_type_from_string(std::string_view s) {
  for (auto t : kDistractorTypes) {
    if (to_string(t) == s) return t;
  }
  throw SchemaViolation("unknown distractor type '" + std::string(s) + "'");
}

struct CandidateRegion {
  ObjectId object_id;
  std::string category;
  BoundingBox box;

  bool operator==(const CandidateRegion&) const = default;
};

struct TaskInstance {
  ExpressionRecord expression;
  ImageId target_image;
  std::map<DistractorType, std::vector<ImageId>> distractors;
  std::map<ImageId, std::vector<CandidateRegion>, IdLess> candidate_regions;

  bool operator==(const TaskInstance&) const = default;
};

// The tree with every attribute, negation and ordinal removed: only object
// categories and the relational skeleton remain.
inline ReasoningTree relational_skeleton(const ReasoningTree& tree) {
  auto strip = [](TreeNode& n) {
    n.attributes.clear();
    n.negated_attributes.clear();
    n.order.reset();
  };
  ReasoningTree out = tree;
  strip(out.root);
  for (auto& e : out.edges) strip(e.child);
  if (out.chain_extension) strip(out.chain_extension->child);
  return out;
}

inline std::set<std::string> tree_categories(const ReasoningTree& tree) {
  std::set<std::string> cats;
  for (int k = 0; k < 3; ++k) {
    if (const TreeNode* n = tree.node(k)) cats.insert(n->category);
  }
  return cats;
}

inline bool has_category(const SceneGraph& g, std::string_view category) {
  return std::any_of(g.nodes.begin(), g.nodes.end(), [&](const ObjectNode& n) { return n.category == category; });
}

// Whether `graph` is a valid distractor image of `type` for `expr`. Every
// type additionally requires that no object in the image satisfies the tree.
inline bool type_predicate(DistractorType type, const SceneGraph& graph, const ExpressionRecord& expr,
                           const AttributeLexicon& lexicon = AttributeLexicon::builtin()) {
  const auto& tree = expr.tree;
  const std::string& category = tree.root.category;
  bool ok = false;
  switch (type) {
    case DistractorType::DiffCat:
      ok = !has_category(graph, category);
      break;
    case DistractorType::Cat:
      ok = has_category(graph, category);
      break;
    case DistractorType::CatAttr:
      ok = std::any_of(graph.nodes.begin(), graph.nodes.end(), [&](const ObjectNode& n) {
        if (n.category != category) return false;
        return std::all_of(tree.root.attributes.begin(), tree.root.attributes.end(),
                           [&](const std::string& a) { return n.has_attribute(a); });
      });
      break;
    case DistractorType::CatCat: {
      const auto cats = tree_categories(tree);
      ok = std::all_of(cats.begin(), cats.end(), [&](const std::string& c) { return has_category(graph, c); });
      // a tree without edges has no relational skeleton to avoid
      if (ok && !tree.edges.empty()) ok = match(relational_skeleton(tree), graph, lexicon).empty();
      break;
    }
  }
  return ok && match(tree, graph, lexicon).empty();
}

inline std::vector<CandidateRegion> regions_of(const SceneGraph& g) {
  std::vector<CandidateRegion> out;
  out.reserve(g.nodes.size());
  for (const auto& n : g.nodes) out.push_back({n.id, n.category, n.box});
  return out;
}

struct DistractorSearch {
  std::optional<TaskInstance> instance;
  std::map<DistractorType, std::size_t> found;  // per-type counts reached

  // e.g. "CatCat 1/3, DiffCat 2/3"; empty when nothing is short
  std::string shortage(std::size_t per_type) const {
    std::string s;
    for (const auto& [type, n] : found) {
      if (n >= per_type) continue;
      s += (s.empty() ? "" : ", ") + std::string(to_string(type)) + " " + std::to_string(n) + "/" +
           std::to_string(per_type);
    }
    return s;
  }
};

// Scans images in ascending id order. The most constrained types are filled
// first (CatCat, CatAttr, Cat, DiffCat); each takes the smallest image ids
// that satisfy its predicate and are not already assigned.
inline DistractorSearch find_distractors_detailed(const Corpus& corpus, const ExpressionRecord& expr,
                                                  std::size_t per_type = 3,
                                                  const AttributeLexicon& lexicon = AttributeLexicon::builtin()) {
  DistractorSearch search;
  const SceneGraph* target = corpus.find(expr.image_id);
  if (!target || per_type == 0) return search;

  // images holding the target category, via the category index
  std::set<ImageId, IdLess> with_category;
  for (const auto& entry : corpus.objects_of(expr.target_category())) with_category.insert(entry.image_id);
  with_category.erase(expr.image_id);

  std::set<ImageId, IdLess> taken;
  std::map<DistractorType, std::vector<ImageId>> chosen;
  auto fill = [&](DistractorType type, auto&& images) {
    auto& list = chosen[type];
    for (const auto& id : images) {
      if (list.size() >= per_type) break;
      if (taken.count(id)) continue;
      if (type_predicate(type, *corpus.find(id), expr, lexicon)) {
        list.push_back(id);
        taken.insert(id);
      }
    }
    search.found[type] = list.size();
  };
  for (auto type : {DistractorType::CatCat, DistractorType::CatAttr, DistractorType::Cat}) fill(type, with_category);
  std::vector<ImageId> without_category;
  for (const auto& [id, _] : corpus.graphs()) {
    if (id != expr.image_id && !with_category.count(id)) without_category.push_back(id);
  }
  fill(DistractorType::DiffCat, without_category);

  for (auto type : kDistractorTypes) {
    if (search.found[type] < per_type) return search;
  }
  TaskInstance inst;
  inst.expression = expr;
  inst.target_image = expr.image_id;
  inst.candidate_regions[expr.image_id] = regions_of(*target);
  for (auto type : kDistractorTypes) {
    for (const auto& id : chosen[type]) inst.candidate_regions[id] = regions_of(*corpus.find(id));
    inst.distractors[type] = std::move(chosen[type]);
  }
  search.instance = std::move(inst);
  return search;
}

inline std::optional<TaskInstance> find_distractors(const Corpus& corpus, const ExpressionRecord& expr,
                                                    std::size_t per_type = 3,
                                                    const AttributeLexicon& lexicon = AttributeLexicon::builtin()) {
  return find_distractors_detailed(corpus, expr, per_type, lexicon).instance;
}

inline void to_json(json& j, const CandidateRegion& r) {
  j = {{"object_id", r.object_id}, {"category", r.category}, {"box", r.box}};
}

inline void from_json(const json& j, CandidateRegion& r) {
  r.object_id = j.at("object_id").get<std::string>();
  r.category = j.at("category").get<std::string>();
  r.box = j.at("box").get<BoundingBox>();
}

inline void to_json(json& j, const TaskInstance& inst) {
  json distractors = json::object();
  for (const auto& [type, ids] : inst.distractors) distractors[std::string(to_string(type))] = ids;
  // array of pairs keeps the id order stable (json objects sort keys lexically)
  json regions = json::array();
  for (const auto& [image, list] : inst.candidate_regions) regions.push_back({{"image_id", image}, {"regions", list}});
  j = {{"expression", inst.expression},
       {"target_image", inst.target_image},
       {"distractors", distractors},
       {"candidate_regions", regions}};
}

inline void from_json(const json& j, TaskInstance& inst) {
  inst.expression = j.at("expression").get<ExpressionRecord>();
  inst.target_image = j.at("target_image").get<std::string>();
  inst.distractors.clear();
  for (const auto& [name, ids] : j.at("distractors").items()) {
    inst.distractors[distractor_type_from_string(name)] = ids.get<std::vector<std::string>>();
  }
  inst.candidate_regions.clear();
  for (const auto& entry : j.at("candidate_regions")) {
    inst.candidate_regions[entry.at("image_id").get<std::string>()] =
        entry.at("regions").get<std::vector<CandidateRegion>>();
  }
}

// Structural checks that need no corpus: list sizes, disjointness, region
// coverage. Throws SchemaViolation.
inline void validate(const TaskInstance& inst, std::size_t per_type) {
  validate(inst.expression);
  if (inst.target_image != inst.expression.image_id) throw SchemaViolation("target image differs from expression");
  std::set<ImageId> seen{inst.target_image};
  for (auto type : kDistractorTypes) {
    auto it = inst.distractors.find(type);
    if (it == inst.distractors.end() || it->second.size() != per_type) {
      throw SchemaViolation(inst.expression.expr_id + ": " + std::string(to_string(type)) + " list has wrong size");
    }
    for (const auto& id : it->second) {
      if (!seen.insert(id).second) throw SchemaViolation(inst.expression.expr_id + ": image " + id + " reused");
    }
  }
  for (const auto& id : seen) {
    if (!inst.candidate_regions.count(id)) throw SchemaViolation(inst.expression.expr_id + ": no regions for " + id);
  }
  if (inst.candidate_regions.size() != seen.size()) {
    throw SchemaViolation(inst.expression.expr_id + ": regions listed for an image outside the instance");
  }
}

}  // namespace copsref
