#pragma once

// Reference implementations used only by tests. They are written from the
// definitions and share no code with the library beyond plain data types.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "copsref/distractor.hpp"
#include "copsref/reasoning.hpp"
#include "copsref/scene_graph.hpp"

namespace oracle {

using namespace copsref;

inline bool id_before(const std::string& a, const std::string& b) {
  auto digits = [](const std::string& s) {
    return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
  };
  const bool da = digits(a), db = digits(b);
  if (da && db) return a.size() != b.size() ? a.size() < b.size() : a < b;
  if (da != db) return da;
  return a < b;
}

// 1-based position among objects of the same category, left to right by box
// centre, ties by id.
inline int position_from_left(const SceneGraph& g, const ObjectNode& o) {
  int pos = 1;
  const double cx = o.box.x + o.box.w / 2.0;
  for (const auto& p : g.nodes) {
    if (p.id == o.id || p.category != o.category) continue;
    const double px = p.box.x + p.box.w / 2.0;
    if (px < cx || (px == cx && id_before(p.id, o.id))) ++pos;
  }
  return pos;
}

inline int category_count(const SceneGraph& g, const std::string& category) {
  int n = 0;
  for (const auto& p : g.nodes) n += p.category == category;
  return n;
}

inline bool has_attr(const ObjectNode& o, const std::string& a) {
  for (const auto& x : o.attributes) {
    if (x == a) return true;
  }
  return false;
}

inline bool node_ok(const SceneGraph& g, const TreeNode& n, const ObjectNode& o) {
  if (o.category != n.category) return false;
  for (const auto& a : n.attributes) {
    if (!has_attr(o, a)) return false;
  }
  for (const auto& a : n.negated_attributes) {
    if (has_attr(o, a)) return false;
  }
  if (n.order) {
    const int left = position_from_left(g, o);
    const int pos = n.order->direction == Direction::Left ? left : category_count(g, o.category) + 1 - left;
    if (pos != n.order->index) return false;
  }
  return true;
}

inline bool edge_exists(const SceneGraph& g, const std::string& s, const std::string& p, const std::string& o) {
  for (const auto& e : g.edges) {
    if (e.subject == s && e.predicate == p && e.object == o) return true;
  }
  return false;
}

inline bool same_ok(const SceneGraph& g, const TreeEdge& e, const ObjectNode& a, const ObjectNode& b,
                    const AttributeLexicon& lex) {
  if (a.id == b.id) return false;
  for (const auto& v : a.attributes) {
    auto cat = lex.category_of(v);
    if (!cat || *cat != e.same_category || !has_attr(b, v)) continue;
    int others = 0;
    for (const auto& t : g.nodes) {
      if (t.id == a.id || t.id == b.id) continue;
      if ((t.category == a.category || t.category == b.category) && has_attr(t, v)) ++others;
    }
    if (others == 0) return true;
  }
  return false;
}

inline bool link_ok(const SceneGraph& g, const TreeEdge& e, const ObjectNode& parent, const ObjectNode& child,
                    const AttributeLexicon& lex) {
  if (e.is_relation()) return edge_exists(g, parent.id, e.predicate, child.id);
  return same_ok(g, e, parent, child, lex);
}

// Exhaustive search over assignments of objects to the (up to three) tree
// nodes.
inline std::set<std::string> brute_force_match(const ReasoningTree& t, const SceneGraph& g,
                                               const AttributeLexicon& lex = AttributeLexicon::builtin()) {
  std::set<std::string> out;
  const TreeNode* n1 = t.edges.size() >= 1 ? &t.edges[0].child : nullptr;
  const TreeEdge* e1 = t.edges.size() >= 1 ? &t.edges[0] : nullptr;
  const TreeEdge* e2 = t.edges.size() >= 2 ? &t.edges[1] : (t.chain_extension ? &*t.chain_extension : nullptr);
  const TreeNode* n2 = e2 ? &e2->child : nullptr;
  const bool chained = t.chain_extension.has_value();
  std::vector<const ObjectNode*> objs;
  for (const auto& o : g.nodes) objs.push_back(&o);
  std::vector<const ObjectNode*> none{nullptr};
  for (const auto* a0 : objs) {
    if (!node_ok(g, t.root, *a0)) continue;
    bool found = false;
    for (const auto* a1 : n1 ? objs : none) {
      for (const auto* a2 : n2 ? objs : none) {
        const bool first = !n1 || (node_ok(g, *n1, *a1) && link_ok(g, *e1, *a0, *a1, lex));
        bool second = true;
        if (n2) {
          const ObjectNode* parent = chained ? a1 : a0;
          second = node_ok(g, *n2, *a2) && link_ok(g, *e2, *parent, *a2, lex);
        }
        const bool ok = t.form == LogicForm::Or ? (first || second) : (first && second);
        if (ok) found = true;
      }
    }
    if (found) out.insert(a0->id);
  }
  return out;
}

inline bool has_cat(const SceneGraph& g, const std::string& c) {
  for (const auto& o : g.nodes) {
    if (o.category == c) return true;
  }
  return false;
}

inline ReasoningTree strip(ReasoningTree t) {
  auto clear = [](TreeNode& n) {
    n.attributes.clear();
    n.negated_attributes.clear();
    n.order.reset();
  };
  clear(t.root);
  for (auto& e : t.edges) clear(e.child);
  if (t.chain_extension) clear(t.chain_extension->child);
  return t;
}

// Distractor type condition from the definitions, checked without the
// library's predicate.
inline bool type_ok(DistractorType type, const SceneGraph& g, const ReasoningTree& t,
                    const AttributeLexicon& lex = AttributeLexicon::builtin()) {
  if (!brute_force_match(t, g, lex).empty()) return false;
  const std::string& cat = t.root.category;
  switch (type) {
    case DistractorType::DiffCat: return !has_cat(g, cat);
    case DistractorType::Cat: return has_cat(g, cat);
    case DistractorType::CatAttr:
      for (const auto& o : g.nodes) {
        if (o.category != cat) continue;
        bool all = true;
        for (const auto& a : t.root.attributes) all = all && has_attr(o, a);
        if (all) return true;
      }
      return false;
    case DistractorType::CatCat: {
      std::vector<std::string> cats{cat};
      for (const auto& e : t.edges) cats.push_back(e.child.category);
      if (t.chain_extension) cats.push_back(t.chain_extension->child.category);
      for (const auto& c : cats) {
        if (!has_cat(g, c)) return false;
      }
      return t.edges.empty() || brute_force_match(strip(t), g, lex).empty();
    }
  }
  return false;
}

// Full re-verification of one task instance against the corpus. Returns an
// empty string when the instance is sound.
inline std::string verify_instance(const Corpus& corpus, const TaskInstance& inst, std::size_t per_type,
                                   const AttributeLexicon& lex = AttributeLexicon::builtin()) {
  const auto& expr = inst.expression;
  const SceneGraph* target = corpus.find(inst.target_image);
  if (!target) return "target image missing";
  const auto own = brute_force_match(expr.tree, *target, lex);
  if (own != std::set<std::string>{expr.target_id}) return "tree does not single out the target";
  std::set<std::string> used{inst.target_image};
  for (auto type : kDistractorTypes) {
    auto it = inst.distractors.find(type);
    if (it == inst.distractors.end() || it->second.size() != per_type) return "wrong list size";
    for (const auto& id : it->second) {
      if (!used.insert(id).second) return "image reused: " + id;
      const SceneGraph* g = corpus.find(id);
      if (!g) return "unknown image " + id;
      if (!type_ok(type, *g, expr.tree, lex)) return std::string(to_string(type)) + " fails on " + id;
    }
  }
  if (inst.candidate_regions.size() != used.size()) return "region map size";
  for (const auto& id : used) {
    auto it = inst.candidate_regions.find(id);
    if (it == inst.candidate_regions.end()) return "no regions for " + id;
    const SceneGraph* g = corpus.find(id);
    if (it->second.size() != g->nodes.size()) return "region count differs for " + id;
    for (const auto& r : it->second) {
      const ObjectNode* o = g->find(r.object_id);
      if (!o || o->category != r.category || !(o->box == r.box)) return "region mismatch in " + id;
    }
  }
  return {};
}

// Softmax of exp(s) over the given similarities.
inline std::vector<double> softmax(const std::vector<double>& s) {
  double z = 0.0;
  for (double v : s) z += std::exp(v);
  std::vector<double> p;
  for (double v : s) p.push_back(std::exp(v) / z);
  return p;
}

inline double dot_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

// Binomial tolerance: |count - n p| <= z sqrt(n p (1-p)).
inline bool within_sigma(double count, double n, double p, double z = 3.0) {
  return std::abs(count - n * p) <= z * std::sqrt(n * p * (1.0 - p));
}

}  // namespace oracle
