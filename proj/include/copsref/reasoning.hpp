#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "copsref/common.hpp"
#include "copsref/error.hpp"
#include "copsref/relation_weights.hpp"
#include "copsref/scene_graph.hpp"

namespace copsref {

enum class LogicForm { Chain, And, Or, Order, Same, Not };

inline constexpr std::array<LogicForm, 6> kLogicForms{LogicForm::Chain, LogicForm::And,  LogicForm::Or,
                                                      LogicForm::Order, LogicForm::Same, LogicForm::Not};

inline std::string_view to_string(LogicForm f) {
  switch (f) {
    case LogicForm::Chain: return "chain";
    case LogicForm::And: return "and";
    case LogicForm::Or: return "or";
    case LogicForm::Order: return "order";
    case LogicForm::Same: return "same";
    case LogicForm::Not: return "not";
  }
  return "?";
}

inline LogicForm logic_form_from_string(std::string_view s) {
  for (auto f : kLogicForms) {
    if (to_string(f) == s) return f;
  }
  throw SchemaViolation("unknown logic form '" + std::string(s) + "'");
}

enum class Direction { Left, Right };

inline std::string_view to_string(Direction d) { return d == Direction::Left ? "left" : "right"; }

inline Direction direction_from_string(std::string_view s) {
  if (s == "left") return Direction::Left;
  if (s == "right") return Direction::Right;
  throw SchemaViolation("unknown direction '" + std::string(s) + "'");
}

enum class AttributeCategory { Colour, Shape, Material, Gender, Pattern };

inline constexpr std::array<AttributeCategory, 5> kAttributeCategories{
    AttributeCategory::Colour, AttributeCategory::Shape, AttributeCategory::Material, AttributeCategory::Gender,
    AttributeCategory::Pattern};

inline std::string_view to_string(AttributeCategory c) {
  switch (c) {
    case AttributeCategory::Colour: return "colour";
    case AttributeCategory::Shape: return "shape";
    case AttributeCategory::Material: return "material";
    case AttributeCategory::Gender: return "gender";
    case AttributeCategory::Pattern: return "pattern";
  }
  return "?";
}

// Word used in generated text ("the same color as").
inline std::string_view surface_word(AttributeCategory c) {
  return c == AttributeCategory::Colour ? "color" : to_string(c);
}

inline AttributeCategory attribute_category_from_string(std::string_view s) {
  if (s == "color") return AttributeCategory::Colour;
  for (auto c : kAttributeCategories) {
    if (to_string(c) == s) return c;
  }
  throw SchemaViolation("unknown attribute category '" + std::string(s) + "'");
}

enum class Junction { None, And, Or };

inline std::string_view to_string(Junction j) {
  switch (j) {
    case Junction::None: return "none";
    case Junction::And: return "and";
    case Junction::Or: return "or";
  }
  return "?";
}

inline Junction junction_from_string(std::string_view s) {
  if (s == "none") return Junction::None;
  if (s == "and") return Junction::And;
  if (s == "or") return Junction::Or;
  throw SchemaViolation("unknown junction '" + std::string(s) + "'");
}

inline std::string ordinal_word(int index) {
  static constexpr std::array<const char*, 10> words{"first",   "second", "third", "fourth", "fifth",
                                                     "sixth",   "seventh", "eighth", "ninth", "tenth"};
  if (index >= 1 && index <= 10) return words[index - 1];
  const int mod100 = index % 100;
  const char* suffix = (mod100 >= 11 && mod100 <= 13) ? "th"
                       : index % 10 == 1               ? "st"
                       : index % 10 == 2               ? "nd"
                       : index % 10 == 3               ? "rd"
                                                       : "th";
  return std::to_string(index) + suffix;
}

struct OrderSpec {
  int index = 1;  // 1-based
  Direction direction = Direction::Left;

  bool operator==(const OrderSpec&) const = default;
};

struct TreeNode {
  std::string category;
  std::vector<std::string> attributes;  // sorted
  std::optional<OrderSpec> order;
  std::vector<std::string> negated_attributes;

  bool operator==(const TreeNode&) const = default;
};

struct TreeEdge {
  enum class Kind { Relation, SameAttribute };

  Kind kind = Kind::Relation;
  std::string predicate;
  AttributeCategory same_category = AttributeCategory::Colour;
  TreeNode child;

  static TreeEdge relation(std::string predicate, TreeNode child) {
    TreeEdge e;
    e.kind = Kind::Relation;
    e.predicate = std::move(predicate);
    e.child = std::move(child);
    return e;
  }

  static TreeEdge same(AttributeCategory category, TreeNode child) {
    TreeEdge e;
    e.kind = Kind::SameAttribute;
    e.same_category = category;
    e.child = std::move(child);
    return e;
  }

  bool is_relation() const { return kind == Kind::Relation; }

  bool operator==(const TreeEdge& o) const {
    if (kind != o.kind || child != o.child) return false;
    return kind == Kind::Relation ? predicate == o.predicate : same_category == o.same_category;
  }
};

struct ReasoningTree {
  LogicForm form = LogicForm::Chain;
  TreeNode root;
  std::vector<TreeEdge> edges;
  std::optional<TreeEdge> chain_extension;  // hangs off edges[0].child
  Junction junction = Junction::None;

  // Node numbering used by templates: 0 = root, 1 = first related object,
  // 2 = second branch (and/or) or chain extension.
  const TreeNode* node(int k) const {
    if (k == 0) return &root;
    if (k == 1) return edges.empty() ? nullptr : &edges[0].child;
    if (k == 2) {
      if (edges.size() > 1) return &edges[1].child;
      if (chain_extension) return &chain_extension->child;
    }
    return nullptr;
  }

  // Relation edge that leads to node k (k = 1 or 2).
  const TreeEdge* edge_to(int k) const {
    if (k == 1) return edges.empty() ? nullptr : &edges[0];
    if (k == 2) {
      if (edges.size() > 1) return &edges[1];
      if (chain_extension) return &*chain_extension;
    }
    return nullptr;
  }

  std::vector<const TreeEdge*> relation_edges() const {
    std::vector<const TreeEdge*> out;
    for (const auto& e : edges) {
      if (e.is_relation()) out.push_back(&e);
    }
    if (chain_extension && chain_extension->is_relation()) out.push_back(&*chain_extension);
    return out;
  }

  bool operator==(const ReasoningTree&) const = default;
};

// Throws SchemaViolation if the tree breaks a structural invariant of its form.
inline void validate(const ReasoningTree& t) {
  auto fail = [&](const std::string& why) {
    throw SchemaViolation(std::string(to_string(t.form)) + " tree: " + why);
  };
  auto check_plain = [&](const TreeNode& n) {
    if (n.category.empty()) fail("empty category");
    if (n.order) fail("order spec on a related object");
    if (!n.negated_attributes.empty()) fail("negated attributes on a related object");
  };
  if (t.root.category.empty()) fail("empty root category");
  if (t.root.order && t.form != LogicForm::Order) fail("order spec outside an order tree");
  if (!t.root.negated_attributes.empty() && t.form != LogicForm::Not) fail("negation outside a not tree");
  for (const auto& e : t.edges) {
    check_plain(e.child);
    if (!e.is_relation() && t.form != LogicForm::Same) fail("same-attribute edge outside a same tree");
    if (e.is_relation() && e.predicate.empty()) fail("empty predicate");
  }
  if (t.chain_extension) {
    if (t.form != LogicForm::Chain) fail("chain extension outside a chain tree");
    if (!t.chain_extension->is_relation()) fail("chain extension must be a relation");
    check_plain(t.chain_extension->child);
  }
  const auto n = t.edges.size();
  switch (t.form) {
    case LogicForm::Chain:
      if (n != 1) fail("needs exactly one root edge");
      if (t.junction != Junction::None) fail("unexpected junction");
      break;
    case LogicForm::And:
    case LogicForm::Or:
      if (n != 2) fail("needs exactly two root edges");
      if (t.junction != (t.form == LogicForm::And ? Junction::And : Junction::Or)) fail("junction mismatch");
      break;
    case LogicForm::Order:
      if (!t.root.order || t.root.order->index < 1) fail("missing or invalid order spec");
      if (n > 1) fail("at most one root edge");
      break;
    case LogicForm::Not:
      if (t.root.negated_attributes.empty()) fail("no negated attribute");
      if (n > 1) fail("at most one root edge");
      break;
    case LogicForm::Same:
      if (n != 1 || t.edges[0].is_relation()) fail("needs exactly one same-attribute edge");
      break;
  }
  if (t.form != LogicForm::And && t.form != LogicForm::Or && t.junction != Junction::None) {
    fail("unexpected junction");
  }
}

// Attribute value -> attribute category, used by the "same" form.
class AttributeLexicon {
 public:
  void add(const std::string& value, AttributeCategory category) { map_[value] = category; }

  std::optional<AttributeCategory> category_of(const std::string& value) const {
    auto it = map_.find(value);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<std::string, AttributeCategory>& entries() const { return map_; }

  // Accepts {"red": "colour", ...}.
  static AttributeLexicon from_json(const json& j) {
    if (!j.is_object()) throw SchemaViolation("attribute lexicon must be a JSON object");
    AttributeLexicon lex;
    for (const auto& [value, cat] : j.items()) {
      if (!cat.is_string()) throw SchemaViolation("lexicon entry '" + value + "' must be a string");
      lex.add(value, attribute_category_from_string(cat.get<std::string>()));
    }
    return lex;
  }

  static AttributeLexicon load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open attribute lexicon " + path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw MalformedDocument(path + ": " + e.what());
    }
    return from_json(j);
  }

  static const AttributeLexicon& builtin() {
    static const AttributeLexicon lex = [] {
      AttributeLexicon l;
      for (const char* v : {"red", "green", "blue", "yellow", "white", "black", "brown", "gray", "orange", "pink",
                            "purple", "silver", "gold", "beige", "tan", "dark", "light blue"}) {
        l.add(v, AttributeCategory::Colour);
      }
      for (const char* v : {"round", "square", "rectangular", "triangular", "oval", "circular"}) {
        l.add(v, AttributeCategory::Shape);
      }
      for (const char* v : {"wooden", "metal", "plastic", "leather", "glass", "concrete", "brick", "stone",
                            "cotton", "ceramic", "porcelain"}) {
        l.add(v, AttributeCategory::Material);
      }
      for (const char* v : {"male", "female"}) l.add(v, AttributeCategory::Gender);
      for (const char* v : {"striped", "checkered", "plaid", "dotted", "floral", "plain", "patterned"}) {
        l.add(v, AttributeCategory::Pattern);
      }
      return l;
    }();
    return lex;
  }

 private:
  std::map<std::string, AttributeCategory> map_;
};

// --- Matching -------------------------------------------------------------

// Objects of `category` in left-to-right order of box centre x; ties by id.
inline std::vector<const ObjectNode*> order_left_to_right(const SceneGraph& g, std::string_view category) {
  std::vector<const ObjectNode*> objs;
  for (const auto& n : g.nodes) {
    if (n.category == category) objs.push_back(&n);
  }
  std::stable_sort(objs.begin(), objs.end(), [](const ObjectNode* a, const ObjectNode* b) {
    if (a->box.center_x() != b->box.center_x()) return a->box.center_x() < b->box.center_x();
    return id_less(a->id, b->id);
  });
  return objs;
}

// 1-based position of `id` among its category, counted from `dir`. Right is
// the exact reverse of left, so index i from the left is index k+1-i from the
// right.
inline std::optional<int> ordinal_of(const SceneGraph& g, std::string_view id, Direction dir) {
  const ObjectNode* obj = g.find(id);
  if (!obj) return std::nullopt;
  auto ordered = order_left_to_right(g, obj->category);
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (ordered[i]->id == id) {
      const int left = static_cast<int>(i) + 1;
      return dir == Direction::Left ? left : static_cast<int>(ordered.size()) + 1 - left;
    }
  }
  return std::nullopt;
}

namespace detail {

class TreeMatcher {
 public:
  TreeMatcher(const SceneGraph& g, const AttributeLexicon& lex) : g_(g), lex_(lex) {}

  bool node_holds(const TreeNode& node, const ObjectNode& o) {
    if (o.category != node.category) return false;
    for (const auto& a : node.attributes) {
      if (!o.has_attribute(a)) return false;
    }
    for (const auto& a : node.negated_attributes) {
      if (o.has_attribute(a)) return false;
    }
    if (node.order) {
      const auto& ordered = ordering(o.category);
      const int k = static_cast<int>(ordered.size());
      const int pos = node.order->direction == Direction::Left ? node.order->index : k + 1 - node.order->index;
      if (pos < 1 || pos > k || ordered[pos - 1] != &o) return false;
    }
    return true;
  }

  bool edge_holds(const TreeEdge& edge, const ObjectNode& o, const TreeEdge* extension) {
    if (!edge.is_relation()) return same_holds(edge, o);
    for (const auto& e : g_.out_edges(o.id)) {
      if (e.predicate != edge.predicate) continue;
      const ObjectNode* child = g_.find(e.object);
      if (!child || !node_holds(edge.child, *child)) continue;
      if (extension && !edge_holds(*extension, *child, nullptr)) continue;
      return true;
    }
    return false;
  }

  // o shares a value of the edge's attribute category with an object that
  // matches the child node, and no third object of either category has it.
  bool same_holds(const TreeEdge& edge, const ObjectNode& o) {
    for (const auto& c : g_.nodes) {
      if (c.id == o.id || !node_holds(edge.child, c)) continue;
      for (const auto& v : o.attributes) {
        if (lex_.category_of(v) != edge.same_category || !c.has_attribute(v)) continue;
        bool exclusive = true;
        for (const auto& third : g_.nodes) {
          if (third.id == o.id || third.id == c.id) continue;
          if (third.category != o.category && third.category != c.category) continue;
          if (third.has_attribute(v)) {
            exclusive = false;
            break;
          }
        }
        if (exclusive) return true;
      }
    }
    return false;
  }

  bool tree_holds(const ReasoningTree& t, const ObjectNode& o) {
    if (!node_holds(t.root, o)) return false;
    if (t.form == LogicForm::Or) {
      for (const auto& e : t.edges) {
        if (edge_holds(e, o, nullptr)) return true;
      }
      return t.edges.empty();
    }
    for (std::size_t i = 0; i < t.edges.size(); ++i) {
      const TreeEdge* ext = (i == 0 && t.chain_extension) ? &*t.chain_extension : nullptr;
      if (!edge_holds(t.edges[i], o, ext)) return false;
    }
    return true;
  }

 private:
  const std::vector<const ObjectNode*>& ordering(const std::string& category) {
    auto it = orders_.find(category);
    if (it == orders_.end()) it = orders_.emplace(category, order_left_to_right(g_, category)).first;
    return it->second;
  }

  const SceneGraph& g_;
  const AttributeLexicon& lex_;
  std::map<std::string, std::vector<const ObjectNode*>> orders_;
};

}  // namespace detail

// Ids (ascending) of every object in `graph` that satisfies `tree`.
inline std::vector<ObjectId> match(const ReasoningTree& tree, const SceneGraph& graph,
                                   const AttributeLexicon& lexicon = AttributeLexicon::builtin()) {
  detail::TreeMatcher m(graph, lexicon);
  std::vector<ObjectId> ids;
  for (const auto& o : graph.nodes) {
    if (m.tree_holds(tree, o)) ids.push_back(o.id);
  }
  return ids;
}

inline bool matches_only(const ReasoningTree& tree, const SceneGraph& graph, std::string_view target,
                         const AttributeLexicon& lexicon = AttributeLexicon::builtin()) {
  auto ids = match(tree, graph, lexicon);
  return ids.size() == 1 && ids.front() == target;
}

// --- Parsing --------------------------------------------------------------

struct ParseOptions {
  const AttributeLexicon* lexicon = nullptr;          // builtin lexicon when null
  const RelationWeights* relation_weights = nullptr;  // uniform relation choice when null
  int budget = 16;
  int max_attributes = 2;

  const AttributeLexicon& lex() const { return lexicon ? *lexicon : AttributeLexicon::builtin(); }
};

namespace detail {

template <typename Pred>
std::vector<std::string> sample_attributes(const ObjectNode& o, Rng& rng, int max_count, Pred allowed) {
  std::vector<std::string> pool;
  for (const auto& a : o.attributes) {
    if (allowed(a)) pool.push_back(a);
  }
  const std::size_t count = std::min<std::size_t>(uniform_index(rng, static_cast<std::size_t>(max_count) + 1),
                                                  pool.size());
  std::vector<std::string> out;
  for (auto i : sample_without_replacement(pool.size(), count, rng)) out.push_back(pool[i]);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::string> sample_attributes(const ObjectNode& o, Rng& rng, int max_count) {
  return sample_attributes(o, rng, max_count, [](const std::string&) { return true; });
}

inline TreeNode plain_node(const ObjectNode& o, std::vector<std::string> attributes = {}) {
  TreeNode n;
  n.category = o.category;
  n.attributes = std::move(attributes);
  return n;
}

inline const RelationEdge& pick_edge(const std::vector<const RelationEdge*>& candidates, Rng& rng,
                                     const ParseOptions& opts) {
  if (!opts.relation_weights) return *candidates[uniform_index(rng, candidates.size())];
  std::vector<std::string> predicates;
  predicates.reserve(candidates.size());
  for (const auto* e : candidates) predicates.push_back(e->predicate);
  return *candidates[opts.relation_weights->sample(predicates, rng)];
}

template <typename Pred>
std::vector<const RelationEdge*> edges_where(const SceneGraph& g, std::string_view subject, Pred keep) {
  std::vector<const RelationEdge*> out;
  for (const auto& e : g.out_edges(subject)) {
    if (keep(e)) out.push_back(&e);
  }
  return out;
}

inline TreeEdge sampled_relation(const SceneGraph& g, const RelationEdge& e, Rng& rng, const ParseOptions& opts) {
  const ObjectNode& child = *g.find(e.object);
  return TreeEdge::relation(e.predicate, plain_node(child, sample_attributes(child, rng, opts.max_attributes)));
}

}  // namespace detail

// Chain of `depth` (1 or 2) relation hops rooted at the target.
inline std::optional<ReasoningTree> parse_chain(const SceneGraph& graph, std::string_view target, int depth, Rng& rng,
                                                const ParseOptions& opts = {}) {
  const ObjectNode* t = graph.find(target);
  if (!t || depth < 1 || depth > 2) return std::nullopt;
  auto out = detail::edges_where(graph, target, [](const RelationEdge&) { return true; });
  if (out.empty()) return std::nullopt;
  for (int attempt = 0; attempt < opts.budget; ++attempt) {
    const RelationEdge& e0 = detail::pick_edge(out, rng, opts);
    ReasoningTree tree;
    tree.form = LogicForm::Chain;
    tree.root = detail::plain_node(*t, detail::sample_attributes(*t, rng, opts.max_attributes));
    tree.edges.push_back(detail::sampled_relation(graph, e0, rng, opts));
    if (depth == 2) {
      auto next = detail::edges_where(graph, e0.object, [&](const RelationEdge& e) { return e.object != target; });
      if (next.empty()) continue;
      tree.chain_extension = detail::sampled_relation(graph, detail::pick_edge(next, rng, opts), rng, opts);
    }
    if (matches_only(tree, graph, target, opts.lex())) return tree;
  }
  return std::nullopt;
}

// Two root relations to two distinct objects, joined by and/or.
inline std::optional<ReasoningTree> parse_and_or(const SceneGraph& graph, std::string_view target, Junction junction,
                                                 Rng& rng, const ParseOptions& opts = {}) {
  const ObjectNode* t = graph.find(target);
  if (!t || junction == Junction::None) return std::nullopt;
  auto out = detail::edges_where(graph, target, [](const RelationEdge&) { return true; });
  std::set<ObjectId> related;
  for (const auto* e : out) related.insert(e->object);
  if (related.size() < 2) return std::nullopt;
  for (int attempt = 0; attempt < opts.budget; ++attempt) {
    const RelationEdge& e0 = detail::pick_edge(out, rng, opts);
    std::vector<const RelationEdge*> rest;
    for (const auto* e : out) {
      if (e->object != e0.object) rest.push_back(e);
    }
    const RelationEdge& e1 = detail::pick_edge(rest, rng, opts);
    ReasoningTree tree;
    tree.form = junction == Junction::And ? LogicForm::And : LogicForm::Or;
    tree.junction = junction;
    tree.root = detail::plain_node(*t, detail::sample_attributes(*t, rng, opts.max_attributes));
    tree.edges.push_back(detail::sampled_relation(graph, e0, rng, opts));
    tree.edges.push_back(detail::sampled_relation(graph, e1, rng, opts));
    if (matches_only(tree, graph, target, opts.lex())) return tree;
  }
  return std::nullopt;
}

// Ordinal among same-category objects, from whichever side gives the smaller
// index (left on ties), plus at least one attribute or relation when the
// target has any.
inline std::optional<ReasoningTree> parse_order(const SceneGraph& graph, std::string_view target, Rng& rng,
                                                const ParseOptions& opts = {}) {
  const ObjectNode* t = graph.find(target);
  if (!t) return std::nullopt;
  const int left = *ordinal_of(graph, target, Direction::Left);
  const int right = *ordinal_of(graph, target, Direction::Right);
  ReasoningTree tree;
  tree.form = LogicForm::Order;
  tree.root = detail::plain_node(*t, detail::sample_attributes(*t, rng, opts.max_attributes));
  tree.root.order = right < left ? OrderSpec{right, Direction::Right} : OrderSpec{left, Direction::Left};
  if (tree.root.attributes.empty() && !t->attributes.empty()) {
    tree.root.attributes.push_back(t->attributes[uniform_index(rng, t->attributes.size())]);
  } else if (tree.root.attributes.empty()) {
    auto out = detail::edges_where(graph, target, [](const RelationEdge&) { return true; });
    if (!out.empty()) tree.edges.push_back(detail::sampled_relation(graph, detail::pick_edge(out, rng, opts), rng, opts));
  }
  if (!matches_only(tree, graph, target, opts.lex())) return std::nullopt;
  return tree;
}

// Links the target to another object through an attribute value that only
// the two of them carry in the whole image.
inline std::optional<ReasoningTree> parse_same(const SceneGraph& graph, std::string_view target, Rng& rng,
                                               const ParseOptions& opts = {}) {
  const ObjectNode* t = graph.find(target);
  if (!t) return std::nullopt;
  const auto& lex = opts.lex();
  struct Candidate {
    const ObjectNode* other;
    AttributeCategory category;
  };
  std::vector<Candidate> candidates;
  for (const auto& v : t->attributes) {
    auto cat = lex.category_of(v);
    if (!cat) continue;
    std::vector<const ObjectNode*> carriers;
    for (const auto& n : graph.nodes) {
      if (n.has_attribute(v)) carriers.push_back(&n);
    }
    if (carriers.size() != 2) continue;
    const ObjectNode* other = carriers[0]->id == t->id ? carriers[1] : carriers[0];
    candidates.push_back({other, *cat});
  }
  if (candidates.empty()) return std::nullopt;
  shuffle(candidates, rng);
  for (int attempt = 0; attempt < opts.budget; ++attempt) {
    const auto& c = candidates[static_cast<std::size_t>(attempt) % candidates.size()];
    auto not_same_kind = [&](const std::string& a) { return lex.category_of(a) != c.category; };
    ReasoningTree tree;
    tree.form = LogicForm::Same;
    tree.root = detail::plain_node(*t);
    tree.edges.push_back(TreeEdge::same(c.category, detail::plain_node(*c.other)));
    if (attempt >= static_cast<int>(candidates.size())) {
      // bare pair was ambiguous; narrow it with attributes
      tree.root.attributes = detail::sample_attributes(*t, rng, opts.max_attributes, not_same_kind);
      tree.edges[0].child.attributes = detail::sample_attributes(*c.other, rng, opts.max_attributes, not_same_kind);
    }
    if (matches_only(tree, graph, target, lex)) return tree;
  }
  return std::nullopt;
}

// An attribute every other object of the target's category has and the
// target lacks.
inline std::optional<ReasoningTree> parse_not(const SceneGraph& graph, std::string_view target, Rng& rng,
                                              const ParseOptions& opts = {}) {
  const ObjectNode* t = graph.find(target);
  if (!t) return std::nullopt;
  std::vector<const ObjectNode*> peers;
  for (const auto& n : graph.nodes) {
    if (n.category == t->category && n.id != t->id) peers.push_back(&n);
  }
  if (peers.empty()) return std::nullopt;
  std::vector<std::string> shared;
  for (const auto& a : peers.front()->attributes) {
    if (t->has_attribute(a)) continue;
    if (std::all_of(peers.begin(), peers.end(), [&](const ObjectNode* p) { return p->has_attribute(a); })) {
      shared.push_back(a);
    }
  }
  if (shared.empty()) return std::nullopt;
  for (int attempt = 0; attempt < opts.budget; ++attempt) {
    ReasoningTree tree;
    tree.form = LogicForm::Not;
    tree.root = detail::plain_node(*t, detail::sample_attributes(*t, rng, opts.max_attributes));
    tree.root.negated_attributes = {shared[uniform_index(rng, shared.size())]};
    if (matches_only(tree, graph, target, opts.lex())) return tree;
  }
  return std::nullopt;
}

// Adds one relation edge (order/not trees without one) or one root
// attribute, keeping the tree unambiguous.
inline std::optional<ReasoningTree> compose(const ReasoningTree& base, const SceneGraph& graph,
                                            std::string_view target, Rng& rng, const ParseOptions& opts = {}) {
  const ObjectNode* t = graph.find(target);
  if (!t) return std::nullopt;
  const auto& lex = opts.lex();
  ReasoningTree tree = base;
  bool extended = false;
  if ((base.form == LogicForm::Order || base.form == LogicForm::Not) && base.edges.empty()) {
    auto out = detail::edges_where(graph, target, [](const RelationEdge&) { return true; });
    if (!out.empty()) {
      tree.edges.push_back(detail::sampled_relation(graph, detail::pick_edge(out, rng, opts), rng, opts));
      extended = true;
    }
  }
  if (!extended) {
    std::vector<std::string> extra;
    for (const auto& a : t->attributes) {
      if (std::find(tree.root.attributes.begin(), tree.root.attributes.end(), a) != tree.root.attributes.end()) {
        continue;
      }
      if (base.form == LogicForm::Same && lex.category_of(a) == base.edges[0].same_category) continue;
      extra.push_back(a);
    }
    if (extra.empty()) return std::nullopt;
    tree.root.attributes.push_back(extra[uniform_index(rng, extra.size())]);
    std::sort(tree.root.attributes.begin(), tree.root.attributes.end());
  }
  if (!matches_only(tree, graph, target, lex)) return std::nullopt;
  return tree;
}

// --- Serialization --------------------------------------------------------

namespace detail {

inline std::string arrow_node(const TreeNode& n) {
  std::vector<std::string> items;
  if (n.order) {
    items.push_back(ordinal_word(n.order->index));
    items.emplace_back(to_string(n.order->direction));
  }
  for (const auto& a : n.attributes) items.push_back(a);
  for (const auto& a : n.negated_attributes) items.push_back("not " + a);
  std::string s = n.category;
  if (!items.empty()) {
    s += " (";
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
    s += ")";
  }
  return s;
}

inline std::string arrow_edge(const TreeEdge& e) {
  const std::string label = e.is_relation() ? e.predicate : "same " + std::string(surface_word(e.same_category));
  return "-[" + label + "]-> " + arrow_node(e.child);
}

}  // namespace detail

// Compact one-line rendering, e.g. `cat (first, left, sleeping) -[resting on]-> towel (white)`.
inline std::string to_arrow(const ReasoningTree& t) {
  std::string s = detail::arrow_node(t.root);
  for (std::size_t i = 0; i < t.edges.size(); ++i) {
    if (i > 0) s += t.junction == Junction::Or ? " or" : " and";
    s += " " + detail::arrow_edge(t.edges[i]);
    if (i == 0 && t.chain_extension) s += " " + detail::arrow_edge(*t.chain_extension);
  }
  return s;
}

inline void to_json(json& j, const TreeNode& n) {
  j = {{"category", n.category}, {"attributes", n.attributes}, {"negated_attributes", n.negated_attributes}};
  if (n.order) {
    j["order"] = {{"index", n.order->index}, {"direction", to_string(n.order->direction)}};
  } else {
    j["order"] = nullptr;
  }
}

inline void from_json(const json& j, TreeNode& n) {
  n.category = j.at("category").get<std::string>();
  n.attributes = j.at("attributes").get<std::vector<std::string>>();
  n.negated_attributes = j.at("negated_attributes").get<std::vector<std::string>>();
  const auto& o = j.at("order");
  if (o.is_null()) {
    n.order.reset();
  } else {
    n.order = OrderSpec{o.at("index").get<int>(), direction_from_string(o.at("direction").get<std::string>())};
  }
}

inline void to_json(json& j, const TreeEdge& e) {
  if (e.is_relation()) {
    j = {{"kind", "relation"}, {"predicate", e.predicate}, {"child", e.child}};
  } else {
    j = {{"kind", "same"}, {"category", to_string(e.same_category)}, {"child", e.child}};
  }
}

inline void from_json(const json& j, TreeEdge& e) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "relation") {
    e = TreeEdge::relation(j.at("predicate").get<std::string>(), j.at("child").get<TreeNode>());
  } else if (kind == "same") {
    e = TreeEdge::same(attribute_category_from_string(j.at("category").get<std::string>()),
                       j.at("child").get<TreeNode>());
  } else {
    throw SchemaViolation("unknown edge kind '" + kind + "'");
  }
}

inline void to_json(json& j, const ReasoningTree& t) {
  j = {{"form", to_string(t.form)}, {"junction", to_string(t.junction)}, {"root", t.root}, {"edges", t.edges}};
  j["chain_extension"] = t.chain_extension ? json(*t.chain_extension) : json(nullptr);
}

inline void from_json(const json& j, ReasoningTree& t) {
  t.form = logic_form_from_string(j.at("form").get<std::string>());
  t.junction = junction_from_string(j.at("junction").get<std::string>());
  t.root = j.at("root").get<TreeNode>();
  t.edges = j.at("edges").get<std::vector<TreeEdge>>();
  const auto& ext = j.at("chain_extension");
  if (ext.is_null()) {
    t.chain_extension.reset();
  } else {
    t.chain_extension = ext.get<TreeEdge>();
  }
  validate(t);
}

}  // namespace copsref
