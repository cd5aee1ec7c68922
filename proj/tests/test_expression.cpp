#include <gtest/gtest.h>

#include <sstream>

#include "copsref/expression.hpp"
#include "copsref/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace copsref;
using fixture::node;
using fixture::obj;

namespace {

const Template& only_template(const TemplateSet& set, LogicForm form) {
  for (const auto& t : set.templates()) {
    if (t.form() == form) return t;
  }
  throw std::runtime_error("no template");
}

std::vector<std::string> surfaces(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

}  // namespace

TEST(Fill, ExemplarRowsByteExact) {
  const auto set = TemplateSet::load(fixture::data_path("table1_templates.txt"));
  ASSERT_EQ(set.templates().size(), 6u);
  for (const auto& row : fixture::exemplar_rows()) {
    Rng rng(1);
    const auto rec = fill(only_template(set, row.tree.form), row.tree, {}, rng);
    EXPECT_EQ(rec.text, row.expected) << row.name;
    EXPECT_NO_THROW(validate(rec));
  }
}

TEST(Fill, CatOnTowelThroughBuiltinTemplates) {
  const auto usable = TemplateSet::builtin().applicable(fixture::cat_towel_tree());
  std::set<std::string> texts;
  for (const auto* t : usable) {
    Rng rng(1);
    texts.insert(fill(*t, fixture::cat_towel_tree(), {}, rng).text);
  }
  EXPECT_TRUE(texts.count(fixture::kCatTowelText));
  EXPECT_TRUE(texts.count("The first cat from the left that is sleeping and resting on the white towel."));
}

TEST(Fill, OptionalGroupDroppedWhenEmpty) {
  const auto tpl = Template::parse(LogicForm::Order, "The <idx> <obj0> from the <dir>[ that is <att0|and>].");
  ReasoningTree t;
  t.form = LogicForm::Order;
  t.root = node("glass");
  t.root.order = OrderSpec{2, Direction::Right};
  Rng rng(1);
  EXPECT_EQ(fill(tpl, t, {}, rng).text, "The second glass from the right.");
  t.root.attributes = {"red", "tall"};
  EXPECT_EQ(fill(tpl, t, {}, rng).text, "The second glass from the right that is red and tall.");
}

TEST(Fill, TokenRoles) {
  const auto row = fixture::exemplar_rows()[0];
  const auto set = TemplateSet::load(fixture::data_path("table1_templates.txt"));
  Rng rng(1);
  const auto rec = fill(only_template(set, LogicForm::Chain), row.tree, {}, rng);
  std::vector<std::string> nouns, attrs, rels;
  for (const auto& t : rec.tokens) {
    if (t.role == TokenRole::ObjectNoun) nouns.push_back(t.surface);
    if (t.role == TokenRole::Attribute) attrs.push_back(t.surface);
    if (t.role == TokenRole::Relation) rels.push_back(t.surface);
  }
  EXPECT_EQ(nouns, (std::vector<std::string>{"girl", "donut", "table"}));
  EXPECT_EQ(attrs, (std::vector<std::string>{"young", "glazed", "round"}));
  EXPECT_EQ(rels, (std::vector<std::string>{"touching", "on"}));
}

TEST(Fill, MismatchedTreeRejected) {
  const auto row = fixture::exemplar_rows()[1];  // and-form
  const auto chain = Template::parse(LogicForm::Chain, "The <obj0> <rel0> the <obj1>.");
  Rng rng(1);
  EXPECT_FALSE(chain.fits(row.tree));
  EXPECT_THROW(fill(chain, row.tree, {}, rng), SlotMismatch);

  // attributes present but no slot for them
  const auto bare = Template::parse(LogicForm::And, "The <obj0> <rel0> the <obj1> and <rel1> the <att2> <obj2>.");
  EXPECT_NE(bare.mismatch(row.tree), "");

  const auto on_the = Template::parse(LogicForm::Order, "The <obj0> on the <dir>.");
  ReasoningTree second;
  second.form = LogicForm::Order;
  second.root = node("cup");
  second.root.order = OrderSpec{2, Direction::Left};
  EXPECT_EQ(on_the.mismatch(second), "template only renders index 1");
  second.root.order->index = 1;
  EXPECT_TRUE(on_the.fits(second));
}

TEST(TemplateParse, Errors) {
  EXPECT_THROW(Template::parse(LogicForm::Chain, "The <obj0> <rel0> the <obj9>."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Chain, "The <thing> <rel0> the <obj1>."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Chain, "The <obj0 <rel0> the <obj1>."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Order, "The <obj0> [on [the] <dir>]."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Order, "The <obj0> on the <dir>]."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Order, "The <obj0> [on the <dir>."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Chain, "The <obj0> near the <obj1>."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Not, "The <obj0>."), ConfigError);
  EXPECT_THROW(Template::parse(LogicForm::Same, "The <obj0> <obj1|and>."), ConfigError);
  std::istringstream bad_form("maybe The <obj0>.\n");
  EXPECT_THROW(TemplateSet::parse(bad_form), ConfigError);
  std::istringstream no_pattern("chain\n");
  EXPECT_THROW(TemplateSet::parse(no_pattern), ConfigError);
  EXPECT_THROW(TemplateSet::load("/nonexistent/templates.txt"), ConfigError);
}

TEST(TemplateParse, BuiltinMatchesShippedFile) {
  const auto file = TemplateSet::load(fixture::data_path("templates.txt"));
  const auto& builtin = TemplateSet::builtin();
  ASSERT_EQ(file.templates().size(), builtin.templates().size());
  for (std::size_t i = 0; i < file.templates().size(); ++i) {
    EXPECT_EQ(file.templates()[i].pattern(), builtin.templates()[i].pattern());
  }
  std::set<LogicForm> covered;
  for (const auto& t : builtin.templates()) covered.insert(t.form());
  EXPECT_EQ(covered.size(), kLogicForms.size());
}

TEST(Synonyms, ProbabilityExtremes) {
  SynonymTable syn;
  syn.add("cup", {"mug"});
  ReasoningTree t;
  t.form = LogicForm::Not;
  t.root = node("cup");
  t.root.negated_attributes = {"red"};
  const auto tpl = Template::parse(LogicForm::Not, "The <obj0> that is not <natt0>.");
  for (int i = 0; i < 50; ++i) {
    Rng rng(i);
    EXPECT_EQ(fill(tpl, t, syn, rng, 0.0).text, "The cup that is not red.");
    EXPECT_EQ(fill(tpl, t, syn, rng, 1.0).text, "The mug that is not red.");
  }
}

TEST(Synonyms, SubstitutionRate) {
  SynonymTable syn;
  syn.add("cup", {"mug"});
  ReasoningTree t;
  t.form = LogicForm::Not;
  t.root = node("cup");
  t.root.negated_attributes = {"red"};
  const auto tpl = Template::parse(LogicForm::Not, "The <obj0> that is not <natt0>.");
  Rng rng(5);
  const int n = 20000;
  int swapped = 0;
  for (int i = 0; i < n; ++i) swapped += fill(tpl, t, syn, rng, 0.3).tokens[1].surface == "mug";
  EXPECT_TRUE(oracle::within_sigma(swapped, n, 0.3)) << swapped;
}

TEST(Synonyms, MultiWordSurfaceSplitsIntoTokens) {
  SynonymTable syn;
  syn.add("bench", {"park bench"});
  ReasoningTree t;
  t.form = LogicForm::Not;
  t.root = node("bench");
  t.root.negated_attributes = {"red"};
  const auto tpl = Template::parse(LogicForm::Not, "The <obj0> that is not <natt0>.");
  Rng rng(1);
  const auto rec = fill(tpl, t, syn, rng, 1.0);
  EXPECT_EQ(rec.text, "The park bench that is not red.");
  EXPECT_EQ(rec.tokens[1].role, TokenRole::ObjectNoun);
  EXPECT_EQ(rec.tokens[2].role, TokenRole::ObjectNoun);
}

TEST(Perturb, ShufflePreservesMultiset) {
  const auto set = TemplateSet::load(fixture::data_path("table1_templates.txt"));
  const auto row = fixture::exemplar_rows()[0];
  Rng rng(2);
  const auto rec = fill(only_template(set, LogicForm::Chain), row.tree, {}, rng);
  const auto shuffled = shuffle_words(rec, rng);
  auto a = surfaces(rec.tokens), b = surfaces(shuffled.tokens);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(render_text(shuffled.tokens), shuffled.text);
  EXPECT_EQ(shuffled.tree, rec.tree);
}

TEST(Perturb, KeepNounsAndAdjectives) {
  const auto set = TemplateSet::load(fixture::data_path("table1_templates.txt"));
  const auto row = fixture::exemplar_rows()[0];
  Rng rng(2);
  const auto rec = keep_nouns_adjectives(fill(only_template(set, LogicForm::Chain), row.tree, {}, rng));
  EXPECT_EQ(rec.text, "Young girl glazed donut round table.");
  for (const auto& t : rec.tokens) {
    EXPECT_TRUE(t.role == TokenRole::ObjectNoun || t.role == TokenRole::Attribute);
  }
}

TEST(Generate, EveryRecordIsSoundOnSyntheticCorpus) {
  const Corpus corpus = load_corpus_file(fixture::data_path("synthetic_corpus.json"), {});
  const auto syn = SynonymTable::load(fixture::data_path("synonyms.json"));
  GenerationConfig cfg;
  cfg.max_per_region = 3;
  cfg.spatial_filter = default_spatial_relations();
  std::size_t total = 0;
  std::map<LogicForm, std::size_t> per_form;
  for (const auto& [id, g] : corpus.graphs()) {
    for (const auto& target : eligible_targets(g)) {
      Rng rng = make_rng(4, id, target);
      const auto records = generate(g, target, TemplateSet::builtin(), syn, cfg, rng);
      ASSERT_LE(records.size(), cfg.max_per_region);
      std::set<std::string> ids;
      for (const auto& r : records) {
        ++total;
        ++per_form[r.form];
        ASSERT_NO_THROW(validate(r));
        EXPECT_EQ(oracle::brute_force_match(r.tree, g), std::set<std::string>{target}) << r.text;
        EXPECT_EQ(r.expr_id, id + "/" + target + "/" + std::string(to_string(r.form)));
        EXPECT_EQ(r.image_id, id);
        EXPECT_EQ(r.target_box, g.find(target)->box);
        EXPECT_FALSE(is_spatial_only(r.tree));
        EXPECT_TRUE(ids.insert(r.expr_id).second);
        EXPECT_FALSE(TemplateSet::builtin().applicable(r.tree).empty());
      }
    }
  }
  EXPECT_GT(total, 100u);
  for (auto f : kLogicForms) EXPECT_GT(per_form[f], 0u) << to_string(f);
}

TEST(Generate, SameSeedSameOutput) {
  const Corpus corpus = synthetic_corpus({.images = 4, .seed = 2});
  GenerationConfig cfg;
  for (const auto& [id, g] : corpus.graphs()) {
    for (const auto& target : eligible_targets(g)) {
      Rng a = make_rng(1, target), b = make_rng(1, target);
      EXPECT_EQ(generate(g, target, TemplateSet::builtin(), {}, cfg, a),
                generate(g, target, TemplateSet::builtin(), {}, cfg, b));
    }
  }
}

TEST(Generate, UnknownTargetYieldsNothing) {
  const auto row = fixture::exemplar_rows()[0];
  Rng rng(1);
  EXPECT_TRUE(generate(row.graph, "99", TemplateSet::builtin(), {}, GenerationConfig{}, rng).empty());
}

TEST(Records, JsonRoundTrip) {
  const auto set = TemplateSet::load(fixture::data_path("table1_templates.txt"));
  for (const auto& row : fixture::exemplar_rows()) {
    Rng rng(1);
    auto rec = fill(only_template(set, row.tree.form), row.tree, {}, rng);
    rec.image_id = row.graph.image_id;
    rec.target_id = row.target;
    rec.target_box = row.graph.find(row.target)->box;
    rec.expr_id = expression_id(rec.image_id, rec.target_id, rec.form);
    const json j = rec;
    EXPECT_EQ(j.get<ExpressionRecord>(), rec);
    EXPECT_EQ(j.at("arrow"), to_arrow(rec.tree));
  }
}
