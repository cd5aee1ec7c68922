#pragma once

#include <string>
#include <vector>

#include "copsref/copsref.hpp"

namespace fixture {

using namespace copsref;

inline std::string data_path(const std::string& name) { return std::string(COPSREF_DATA_DIR) + "/" + name; }

inline ObjectNode obj(std::string id, std::string category, std::vector<std::string> attrs, BoundingBox box) {
  std::sort(attrs.begin(), attrs.end());
  return {std::move(id), std::move(category), std::move(attrs), box};
}

inline SceneGraph graph(std::string image_id, std::vector<ObjectNode> nodes, std::vector<RelationEdge> edges = {},
                        int width = 640, int height = 480) {
  SceneGraph g;
  g.image_id = std::move(image_id);
  g.width = width;
  g.height = height;
  g.nodes = std::move(nodes);
  g.edges = std::move(edges);
  std::sort(g.nodes.begin(), g.nodes.end(), [](const auto& a, const auto& b) { return id_less(a.id, b.id); });
  std::sort(g.edges.begin(), g.edges.end(), edge_less);
  validate(g);
  return g;
}

inline TreeNode node(std::string category, std::vector<std::string> attrs = {}) {
  TreeNode n;
  n.category = std::move(category);
  std::sort(attrs.begin(), attrs.end());
  n.attributes = std::move(attrs);
  return n;
}

struct ExemplarRow {
  std::string name;
  ReasoningTree tree;
  SceneGraph graph;
  ObjectId target;
  std::string expected;
};

// The six logic-form exemplars, each with a small scene it singles out.
inline std::vector<ExemplarRow> exemplar_rows() {
  std::vector<ExemplarRow> rows;
  {
    ReasoningTree t;
    t.form = LogicForm::Chain;
    t.root = node("girl", {"young"});
    t.edges.push_back(TreeEdge::relation("touching", node("donut", {"glazed"})));
    t.chain_extension = TreeEdge::relation("on", node("table", {"round"}));
    auto g = graph("chain", {obj("1", "girl", {"young"}, {10, 10, 100, 200}), obj("2", "donut", {"glazed"}, {120, 150, 40, 40}),
                             obj("3", "table", {"round"}, {100, 180, 200, 100}), obj("4", "girl", {"young"}, {400, 10, 100, 200}),
                             obj("5", "donut", {"glazed"}, {420, 150, 40, 40}), obj("6", "table", {"square"}, {380, 180, 200, 100})},
                    {{"1", "touching", "2"}, {"2", "on", "3"}, {"4", "touching", "5"}, {"5", "on", "6"}});
    rows.push_back({"chain", t, g, "1", "The young girl that is touching the glazed donut that is on the round table."});
  }
  {
    ReasoningTree t;
    t.form = LogicForm::And;
    t.junction = Junction::And;
    t.root = node("fence", {"white"});
    t.edges.push_back(TreeEdge::relation("near", node("building")));
    t.edges.push_back(TreeEdge::relation("behind", node("woman", {"walking"})));
    auto g = graph("and", {obj("1", "fence", {"white"}, {10, 200, 200, 60}), obj("2", "building", {}, {0, 0, 640, 200}),
                           obj("3", "woman", {"walking"}, {60, 220, 50, 150}), obj("4", "fence", {"white"}, {400, 200, 200, 60})},
                   {{"1", "near", "2"}, {"1", "behind", "3"}, {"4", "near", "2"}});
    rows.push_back({"and", t, g, "1", "The white fence near the building and behind the walking woman."});
  }
  {
    ReasoningTree t;
    t.form = LogicForm::Or;
    t.junction = Junction::Or;
    t.root = node("suitcase", {"green"});
    t.edges.push_back(TreeEdge::relation("behind", node("suitcase", {"black"})));
    t.edges.push_back(TreeEdge::relation("near", node("suitcase", {"yellow"})));
    auto g = graph("or", {obj("1", "suitcase", {"green"}, {10, 10, 80, 80}), obj("2", "suitcase", {"black"}, {100, 10, 80, 80}),
                          obj("3", "suitcase", {"yellow"}, {200, 10, 80, 80}), obj("4", "suitcase", {"green"}, {400, 10, 80, 80})},
                  {{"1", "behind", "2"}, {"1", "near", "3"}});
    rows.push_back({"or", t, g, "1", "The green suitcase behind the black suitcase or near the yellow suitcase."});
  }
  {
    ReasoningTree t;
    t.form = LogicForm::Order;
    t.root = node("glass", {"red"});
    t.root.order = OrderSpec{1, Direction::Left};
    auto g = graph("order", {obj("1", "glass", {"red"}, {50, 100, 40, 80}), obj("2", "glass", {"red"}, {300, 100, 40, 80}),
                             obj("3", "glass", {"blue"}, {500, 100, 40, 80})});
    rows.push_back({"order", t, g, "1", "The first glass from the left that is red."});
  }
  {
    ReasoningTree t;
    t.form = LogicForm::Same;
    t.root = node("bag");
    t.edges.push_back(TreeEdge::same(AttributeCategory::Colour, node("sweater")));
    auto g = graph("same", {obj("1", "bag", {"blue"}, {10, 10, 80, 80}), obj("2", "sweater", {"blue"}, {100, 10, 80, 80}),
                            obj("3", "bag", {"red"}, {200, 10, 80, 80}), obj("4", "sweater", {"green"}, {300, 10, 80, 80})});
    rows.push_back({"same", t, g, "1", "The bag that has the same color as the sweater."});
  }
  {
    ReasoningTree t;
    t.form = LogicForm::Not;
    t.root = node("apple");
    t.root.negated_attributes = {"red"};
    auto g = graph("not", {obj("1", "apple", {"red"}, {10, 10, 50, 50}), obj("2", "apple", {"red"}, {100, 10, 50, 50}),
                           obj("3", "apple", {"green"}, {200, 10, 50, 50})});
    rows.push_back({"not", t, g, "3", "The apple that is not red."});
  }
  return rows;
}

// The cat on the towel.
inline ReasoningTree cat_towel_tree() {
  ReasoningTree t;
  t.form = LogicForm::Order;
  t.root = node("cat", {"sleeping"});
  t.root.order = OrderSpec{1, Direction::Left};
  t.edges.push_back(TreeEdge::relation("resting on", node("towel", {"white"})));
  return t;
}

inline const char* kCatTowelText = "The cat on the left that is sleeping and resting on the white towel.";

}  // namespace fixture
