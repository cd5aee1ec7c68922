#pragma once

#include <set>
#include <string>

#include "copsref/reasoning.hpp"
#include "copsref/relation_weights.hpp"

namespace copsref {

inline const std::set<std::string>& default_spatial_relations() {
  static const std::set<std::string> list{"to the left of", "to the right of", "above", "below",
                                          "behind",         "in front of",     "near"};
  return list;
}

// True when every relation in the tree is a plain spatial one and the form
// carries no other evidence (same/not/order do).
inline bool is_spatial_only(const ReasoningTree& tree,
                            const std::set<std::string>& spatial = default_spatial_relations()) {
  if (tree.form == LogicForm::Same || tree.form == LogicForm::Not || tree.form == LogicForm::Order) return false;
  const auto relations = tree.relation_edges();
  if (relations.empty()) return false;
  for (const auto* e : relations) {
    if (!spatial.count(e->predicate)) return false;
  }
  return true;
}

}  // namespace copsref
