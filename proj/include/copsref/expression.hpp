#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "copsref/balance.hpp"
#include "copsref/common.hpp"
#include "copsref/error.hpp"
#include "copsref/reasoning.hpp"
#include "copsref/scene_graph.hpp"

namespace copsref {

enum class TokenRole { ObjectNoun, Attribute, Relation, Ordinal, Direction, FunctionWord };

inline std::string_view to_string(TokenRole r) {
  switch (r) {
    case TokenRole::ObjectNoun: return "object-noun";
    case TokenRole::Attribute: return "attribute";
    case TokenRole::Relation: return "relation";
    case TokenRole::Ordinal: return "ordinal";
    case TokenRole::Direction: return "direction";
    case TokenRole::FunctionWord: return "function-word";
  }
  return "?";
}

inline TokenRole token_role_from_string(std::string_view s) {
  for (auto r : {TokenRole::ObjectNoun, TokenRole::Attribute, TokenRole::Relation, TokenRole::Ordinal,
                 TokenRole::Direction, TokenRole::FunctionWord}) {
    if (to_string(r) == s) return r;
  }
  throw SchemaViolation("unknown token role '" + std::string(s) + "'");
}

struct Token {
  std::string surface;
  TokenRole role = TokenRole::FunctionWord;

  bool operator==(const Token&) const = default;
};

// Single-spaced tokens, first letter upper-cased, terminal period.
inline std::string render_text(const std::vector<Token>& tokens) {
  std::string text;
  for (const auto& t : tokens) {
    if (!text.empty()) text += ' ';
    text += t.surface;
  }
  if (text.empty()) return text;
  text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
  return text + ".";
}

// --- Templates ------------------------------------------------------------
//
// Pattern syntax: literal words, typed slots and optional groups.
//   <obj0> <obj1> <obj2>   object nouns (0 = target)
//   <att0> <att1> <att2>   attributes of that object, space separated
//   <att0|and>             the same, joined with "and" (predicative use)
//   <rel0> <rel1>          relation leading to object 1 / object 2
//   <idx> <dir> <cat>      ordinal, direction, attribute category of "same"
//   <natt0>                negated attribute of the target
//   [ ... ]                dropped as a whole when any slot inside is empty
// A trailing period is optional; rendered text always ends with one.

struct TemplateSlot {
  enum class Kind { Object, Attribute, Relation, Index, Direction, Category, Negated };

  Kind kind = Kind::Object;
  int node = 0;
  bool conjoined = false;

  bool operator==(const TemplateSlot&) const = default;
};

class Template {
 public:
  struct Piece {
    bool is_slot = false;
    std::string word;
    std::size_t slot = 0;
    int group = -1;
  };

  static Template parse(LogicForm form, std::string_view pattern) {
    Template t;
    t.form_ = form;
    t.pattern_ = std::string(pattern);
    std::string_view p = pattern;
    while (!p.empty() && std::isspace(static_cast<unsigned char>(p.back()))) p.remove_suffix(1);
    if (!p.empty() && p.back() == '.') p.remove_suffix(1);

    int group = -1;
    int groups = 0;
    std::string word;
    auto flush = [&] {
      if (word.empty()) return;
      std::string lower;
      for (char c : word) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      t.pieces_.push_back({false, lower, 0, group});
      word.clear();
    };
    for (std::size_t i = 0; i < p.size(); ++i) {
      const char c = p[i];
      if (c == '[') {
        flush();
        if (group >= 0) throw ConfigError("nested optional group in template '" + t.pattern_ + "'");
        group = groups++;
      } else if (c == ']') {
        flush();
        if (group < 0) throw ConfigError("unbalanced ']' in template '" + t.pattern_ + "'");
        group = -1;
      } else if (c == '<') {
        flush();
        const auto close = p.find('>', i);
        if (close == std::string_view::npos) throw ConfigError("unterminated slot in template '" + t.pattern_ + "'");
        const TemplateSlot slot = parse_slot(p.substr(i + 1, close - i - 1), t.pattern_);
        t.slot_list_.push_back(slot);
        t.pieces_.push_back({true, {}, t.slot_list_.size() - 1, group});
        i = close;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        flush();
      } else {
        word += c;
      }
    }
    flush();
    if (group >= 0) throw ConfigError("unbalanced '[' in template '" + t.pattern_ + "'");
    t.check_required();
    return t;
  }

  LogicForm form() const { return form_; }
  const std::string& pattern() const { return pattern_; }
  const std::vector<TemplateSlot>& slot_list() const { return slot_list_; }
  const std::vector<Piece>& pieces() const { return pieces_; }

  bool has(TemplateSlot::Kind kind, int node = 0) const {
    for (const auto& s : slot_list_) {
      if (s.kind == kind && (s.node == node || kind == TemplateSlot::Kind::Index ||
                             kind == TemplateSlot::Kind::Direction || kind == TemplateSlot::Kind::Category)) {
        return true;
      }
    }
    return false;
  }

  // Empty when the tree can be rendered by this template; otherwise why not.
  std::string mismatch(const ReasoningTree& tree) const {
    using K = TemplateSlot::Kind;
    if (tree.form != form_) return "form mismatch";
    for (int k = 0; k < 3; ++k) {
      const TreeNode* node = tree.node(k);
      const std::string n = std::to_string(k);
      if ((node != nullptr) != has(K::Object, k)) return "object " + n + " presence differs";
      if (!node && has(K::Attribute, k)) return "attribute slot for absent object " + n;
      if (node && !node->attributes.empty() && !has(K::Attribute, k)) return "no slot for attributes of object " + n;
    }
    for (int k = 1; k < 3; ++k) {
      const TreeEdge* edge = tree.edge_to(k);
      const bool relation = edge && edge->is_relation();
      if (relation != has(K::Relation, k - 1)) return "relation " + std::to_string(k - 1) + " presence differs";
    }
    const bool same = !tree.edges.empty() && !tree.edges[0].is_relation();
    if (same != has(K::Category)) return "attribute-category slot presence differs";
    if (tree.root.order.has_value() != has(K::Direction)) return "direction slot presence differs";
    if (!tree.root.order && has(K::Index)) return "ordinal slot without order spec";
    if (tree.root.order && !has(K::Index) && tree.root.order->index != 1) return "template only renders index 1";
    if (tree.root.negated_attributes.empty() == has(K::Negated)) return "negation slot presence differs";
    return {};
  }

  bool fits(const ReasoningTree& tree) const { return mismatch(tree).empty(); }

 private:
  static TemplateSlot parse_slot(std::string_view body, const std::string& pattern) {
    using K = TemplateSlot::Kind;
    TemplateSlot s;
    if (auto bar = body.find('|'); bar != std::string_view::npos) {
      if (body.substr(bar + 1) != "and") throw ConfigError("unknown slot modifier in '" + pattern + "'");
      s.conjoined = true;
      body = body.substr(0, bar);
    }
    auto indexed = [&](std::string_view prefix, K kind, int max_node) {
      if (body.size() != prefix.size() + 1 || body.substr(0, prefix.size()) != prefix) return false;
      const char d = body.back();
      if (d < '0' || d > '0' + max_node) return false;
      s.kind = kind;
      s.node = d - '0';
      return true;
    };
    if (body == "idx") {
      s.kind = K::Index;
    } else if (body == "dir") {
      s.kind = K::Direction;
    } else if (body == "cat") {
      s.kind = K::Category;
    } else if (!(indexed("natt", K::Negated, 0) || indexed("att", K::Attribute, 2) || indexed("obj", K::Object, 2) ||
                 indexed("rel", K::Relation, 1))) {
      throw ConfigError("unknown slot <" + std::string(body) + "> in template '" + pattern + "'");
    }
    if (s.conjoined && s.kind != K::Attribute) throw ConfigError("'|and' only applies to attribute slots");
    return s;
  }

  void check_required() const {
    using K = TemplateSlot::Kind;
    auto need = [&](bool ok, const char* what) {
      if (!ok) {
        throw ConfigError(std::string(to_string(form_)) + " template '" + pattern_ + "' lacks " + what);
      }
    };
    need(has(K::Object, 0), "<obj0>");
    switch (form_) {
      case LogicForm::Chain:
        need(has(K::Relation, 0) && has(K::Object, 1), "<rel0> <obj1>");
        need(has(K::Relation, 1) == has(K::Object, 2), "matching <rel1>/<obj2>");
        break;
      case LogicForm::And:
      case LogicForm::Or:
        need(has(K::Relation, 0) && has(K::Object, 1) && has(K::Relation, 1) && has(K::Object, 2),
             "<rel0> <obj1> <rel1> <obj2>");
        break;
      case LogicForm::Order:
        need(has(K::Direction), "<dir>");
        need(has(K::Relation, 0) == has(K::Object, 1), "matching <rel0>/<obj1>");
        break;
      case LogicForm::Same:
        need(has(K::Category) && has(K::Object, 1), "<cat> <obj1>");
        break;
      case LogicForm::Not:
        need(has(K::Negated, 0), "<natt0>");
        need(has(K::Relation, 0) == has(K::Object, 1), "matching <rel0>/<obj1>");
        break;
    }
  }

  LogicForm form_ = LogicForm::Chain;
  std::string pattern_;
  std::vector<TemplateSlot> slot_list_;
  std::vector<Piece> pieces_;
};

// Templates file: one template per line, `<form> <pattern>`; '#' starts a
// comment line.
class TemplateSet {
 public:
  TemplateSet() = default;
  explicit TemplateSet(std::vector<Template> templates) : templates_(std::move(templates)) {}

  static TemplateSet parse(std::istream& in) {
    std::vector<Template> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      auto sep = line.find_first_of(" \t", first);
      if (sep == std::string::npos) throw ConfigError("templates line " + std::to_string(lineno) + ": missing pattern");
      LogicForm form;
      try {
        form = logic_form_from_string(line.substr(first, sep - first));
      } catch (const Error& e) {
        throw ConfigError("templates line " + std::to_string(lineno) + ": " + e.what());
      }
      auto rest = line.substr(line.find_first_not_of(" \t", sep));
      while (!rest.empty() && (rest.back() == '\r' || rest.back() == ' ')) rest.pop_back();
      out.push_back(Template::parse(form, rest));
    }
    return TemplateSet(std::move(out));
  }

  static TemplateSet load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open templates file " + path);
    return parse(in);
  }

  static const char* builtin_text() {
    return R"(# form   pattern
chain  The <att0> <obj0> that is <rel0> the <att1> <obj1>.
chain  The <att0> <obj0> <rel0> the <att1> <obj1>.
chain  The <att0> <obj0> that is <rel0> the <att1> <obj1> that is <rel1> the <att2> <obj2>.
chain  The <att0> <obj0> <rel0> the <att1> <obj1> that is <rel1> the <att2> <obj2>.
and    The <att0> <obj0> <rel0> the <att1> <obj1> and <rel1> the <att2> <obj2>.
and    The <att0> <obj0> that is <rel0> the <att1> <obj1> and <rel1> the <att2> <obj2>.
or     The <att0> <obj0> <rel0> the <att1> <obj1> or <rel1> the <att2> <obj2>.
or     The <att0> <obj0> that is <rel0> the <att1> <obj1> or <rel1> the <att2> <obj2>.
order  The <idx> <obj0> from the <dir>[ that is <att0|and>].
order  The <obj0> on the <dir>[ that is <att0|and>].
order  The <idx> <obj0> from the <dir> that is[ <att0|and> and] <rel0> the <att1> <obj1>.
order  The <obj0> on the <dir> that is[ <att0|and> and] <rel0> the <att1> <obj1>.
same   The <att0> <obj0> that has the same <cat> as the <att1> <obj1>.
same   The <att0> <obj0> with the same <cat> as the <att1> <obj1>.
not    The <att0> <obj0> that is not <natt0>.
not    The <att0> <obj0> which is not <natt0>.
not    The <att0> <obj0> that is not <natt0> and <rel0> the <att1> <obj1>.
)";
  }

  static const TemplateSet& builtin() {
    static const TemplateSet set = [] {
      std::istringstream in(builtin_text());
      return parse(in);
    }();
    return set;
  }

  const std::vector<Template>& templates() const { return templates_; }

  std::vector<const Template*> applicable(const ReasoningTree& tree) const {
    std::vector<const Template*> out;
    for (const auto& t : templates_) {
      if (t.fits(tree)) out.push_back(&t);
    }
    return out;
  }

 private:
  std::vector<Template> templates_;
};

// --- Records --------------------------------------------------------------

struct ExpressionRecord {
  std::string expr_id;
  std::string text;
  std::vector<Token> tokens;
  LogicForm form = LogicForm::Chain;
  ReasoningTree tree;
  ImageId image_id;
  ObjectId target_id;
  BoundingBox target_box;

  const std::string& target_category() const { return tree.root.category; }
  std::size_t word_count() const { return tokens.size(); }

  bool operator==(const ExpressionRecord&) const = default;
};

inline void to_json(json& j, const Token& t) { j = {{"w", t.surface}, {"role", to_string(t.role)}}; }

inline void from_json(const json& j, Token& t) {
  t.surface = j.at("w").get<std::string>();
  t.role = token_role_from_string(j.at("role").get<std::string>());
}

inline void to_json(json& j, const BoundingBox& b) { j = json::array({b.x, b.y, b.w, b.h}); }

inline void from_json(const json& j, BoundingBox& b) {
  if (!j.is_array() || j.size() != 4) throw SchemaViolation("box must be [x, y, w, h]");
  b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline void to_json(json& j, const ExpressionRecord& r) {
  j = {{"expr_id", r.expr_id},     {"text", r.text},           {"tokens", r.tokens},
       {"form", to_string(r.form)}, {"arrow", to_arrow(r.tree)}, {"tree", r.tree},
       {"image_id", r.image_id},   {"target_id", r.target_id}, {"target_box", r.target_box}};
}

// Checks the record-level invariants; throws SchemaViolation.
inline void validate(const ExpressionRecord& r) {
  if (render_text(r.tokens) != r.text) throw SchemaViolation(r.expr_id + ": tokens do not reproduce text");
  if (r.form != r.tree.form) throw SchemaViolation(r.expr_id + ": form differs from tree form");
  validate(r.tree);
}

inline void from_json(const json& j, ExpressionRecord& r) {
  r.expr_id = j.at("expr_id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.tokens = j.at("tokens").get<std::vector<Token>>();
  r.form = logic_form_from_string(j.at("form").get<std::string>());
  r.tree = j.at("tree").get<ReasoningTree>();
  r.image_id = j.at("image_id").get<std::string>();
  r.target_id = j.at("target_id").get<std::string>();
  r.target_box = j.at("target_box").get<BoundingBox>();
}

// --- Filling --------------------------------------------------------------

namespace detail {

class SlotRenderer {
 public:
  SlotRenderer(const ReasoningTree& tree, const SynonymTable& synonyms, Rng& rng, double probability)
      : tree_(tree), synonyms_(synonyms), rng_(rng), probability_(probability) {}

  std::vector<Token> render(const TemplateSlot& slot) {
    using K = TemplateSlot::Kind;
    std::vector<Token> out;
    switch (slot.kind) {
      case K::Object:
        emit(out, surface(tree_.node(slot.node)->category), TokenRole::ObjectNoun);
        break;
      case K::Attribute: {
        const auto& attrs = tree_.node(slot.node)->attributes;
        for (std::size_t i = 0; i < attrs.size(); ++i) {
          if (i > 0 && slot.conjoined) out.push_back({"and", TokenRole::FunctionWord});
          emit(out, surface(attrs[i]), TokenRole::Attribute);
        }
        break;
      }
      case K::Relation:
        emit(out, surface(tree_.edge_to(slot.node + 1)->predicate), TokenRole::Relation);
        break;
      case K::Index:
        emit(out, ordinal_word(tree_.root.order->index), TokenRole::Ordinal);
        break;
      case K::Direction:
        emit(out, std::string(to_string(tree_.root.order->direction)), TokenRole::Direction);
        break;
      case K::Category:
        emit(out, std::string(surface_word(tree_.edges[0].same_category)), TokenRole::Relation);
        break;
      case K::Negated: {
        const auto& attrs = tree_.root.negated_attributes;
        for (std::size_t i = 0; i < attrs.size(); ++i) {
          if (i > 0) out.push_back({"or", TokenRole::FunctionWord});
          emit(out, surface(attrs[i]), TokenRole::Attribute);
        }
        break;
      }
    }
    return out;
  }

 private:
  std::string surface(const std::string& canonical) {
    auto list = synonyms_.surfaces(canonical);
    if (list.size() < 2 || probability_ <= 0.0) return canonical;
    if (!bernoulli(rng_, probability_)) return canonical;
    return list[1 + uniform_index(rng_, list.size() - 1)];
  }

  static void emit(std::vector<Token>& out, const std::string& phrase, TokenRole role) {
    for (auto& w : split_words(phrase)) out.push_back({std::move(w), role});
  }

  const ReasoningTree& tree_;
  const SynonymTable& synonyms_;
  Rng& rng_;
  double probability_;
};

}  // namespace detail

// Renders `tree` through `tpl`. Image/target fields are left for the caller.
inline ExpressionRecord fill(const Template& tpl, const ReasoningTree& tree, const SynonymTable& synonyms, Rng& rng,
                             double synonym_probability = 0.0) {
  if (auto why = tpl.mismatch(tree); !why.empty()) {
    throw SlotMismatch("template '" + tpl.pattern() + "' cannot render " + to_arrow(tree) + ": " + why);
  }
  detail::SlotRenderer renderer(tree, synonyms, rng, synonym_probability);
  const auto& pieces = tpl.pieces();
  std::vector<std::vector<Token>> rendered(pieces.size());
  std::set<int> dropped_groups;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    if (p.is_slot) {
      rendered[i] = renderer.render(tpl.slot_list()[p.slot]);
      if (rendered[i].empty() && p.group >= 0) dropped_groups.insert(p.group);
    } else {
      rendered[i].push_back({p.word, TokenRole::FunctionWord});
    }
  }
  ExpressionRecord rec;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (pieces[i].group >= 0 && dropped_groups.count(pieces[i].group)) continue;
    for (auto& t : rendered[i]) rec.tokens.push_back(std::move(t));
  }
  rec.text = render_text(rec.tokens);
  rec.form = tree.form;
  rec.tree = tree;
  return rec;
}

// --- Generation -----------------------------------------------------------

struct GenerationConfig {
  std::vector<LogicForm> forms{kLogicForms.begin(), kLogicForms.end()};
  std::size_t max_per_region = 2;
  double synonym_probability = 0.3;
  double compose_probability = 0.5;
  double deep_chain_probability = 0.5;
  // When set, trees whose relations are all in this list are discarded.
  std::optional<std::set<std::string>> spatial_filter;
  ParseOptions parse;
};

struct GenerationResult {
  std::vector<ExpressionRecord> records;
  std::map<std::string, std::size_t> discards;  // reason -> count
};

inline std::string expression_id(const ImageId& image, const ObjectId& target, LogicForm form) {
  return image + "/" + target + "/" + std::string(to_string(form));
}

inline GenerationResult generate_detailed(const SceneGraph& graph, std::string_view target,
                                          const TemplateSet& templates, const SynonymTable& synonyms,
                                          const GenerationConfig& config, Rng& rng) {
  GenerationResult result;
  const ObjectNode* t = graph.find(target);
  if (!t) return result;
  const auto& opts = config.parse;
  std::vector<ExpressionRecord> candidates;
  for (LogicForm form : config.forms) {
    std::optional<ReasoningTree> tree;
    switch (form) {
      case LogicForm::Chain: {
        const int depth = bernoulli(rng, config.deep_chain_probability) ? 2 : 1;
        tree = parse_chain(graph, target, depth, rng, opts);
        if (!tree) tree = parse_chain(graph, target, 3 - depth, rng, opts);
        break;
      }
      case LogicForm::And: tree = parse_and_or(graph, target, Junction::And, rng, opts); break;
      case LogicForm::Or: tree = parse_and_or(graph, target, Junction::Or, rng, opts); break;
      case LogicForm::Order: tree = parse_order(graph, target, rng, opts); break;
      case LogicForm::Same: tree = parse_same(graph, target, rng, opts); break;
      case LogicForm::Not: tree = parse_not(graph, target, rng, opts); break;
    }
    if (!tree) {
      ++result.discards["ambiguous"];
      continue;
    }
    if (bernoulli(rng, config.compose_probability)) {
      if (auto composed = compose(*tree, graph, target, rng, opts)) tree = std::move(composed);
    }
    if (config.spatial_filter && is_spatial_only(*tree, *config.spatial_filter)) {
      ++result.discards["spatial-only"];
      continue;
    }
    auto usable = templates.applicable(*tree);
    if (usable.empty()) {
      ++result.discards["no-template"];
      continue;
    }
    const Template& tpl = *usable[uniform_index(rng, usable.size())];
    ExpressionRecord rec = fill(tpl, *tree, synonyms, rng, config.synonym_probability);
    rec.image_id = graph.image_id;
    rec.target_id = t->id;
    rec.target_box = t->box;
    rec.expr_id = expression_id(graph.image_id, t->id, form);
    candidates.push_back(std::move(rec));
  }
  if (candidates.size() > config.max_per_region) {
    auto keep = sample_without_replacement(candidates.size(), config.max_per_region, rng);
    std::sort(keep.begin(), keep.end());
    result.discards["region-cap"] += candidates.size() - keep.size();
    for (auto i : keep) result.records.push_back(std::move(candidates[i]));
  } else {
    result.records = std::move(candidates);
  }
  return result;
}

// Up to config.max_per_region expressions, each matching only `target`.
inline std::vector<ExpressionRecord> generate(const SceneGraph& graph, std::string_view target,
                                              const TemplateSet& templates, const SynonymTable& synonyms,
                                              const GenerationConfig& config, Rng& rng) {
  return generate_detailed(graph, target, templates, synonyms, config, rng).records;
}

// --- Bias-probe perturbations ---------------------------------------------

inline ExpressionRecord shuffle_words(const ExpressionRecord& record, Rng& rng) {
  ExpressionRecord out = record;
  shuffle(out.tokens, rng);
  out.text = render_text(out.tokens);
  return out;
}

inline ExpressionRecord keep_nouns_adjectives(const ExpressionRecord& record) {
  ExpressionRecord out = record;
  out.tokens.clear();
  for (const auto& t : record.tokens) {
    if (t.role == TokenRole::ObjectNoun || t.role == TokenRole::Attribute) out.tokens.push_back(t);
  }
  out.text = render_text(out.tokens);
  return out;
}

}  // namespace copsref
