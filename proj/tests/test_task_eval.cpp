#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "copsref/pipeline.hpp"
#include "copsref/task_eval.hpp"
#include "copsref/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace copsref;

namespace {

const std::vector<TaskInstance>& instances() {
  static const std::vector<TaskInstance> v = [] {
    const Corpus corpus = synthetic_corpus({.images = 60, .seed = 3});
    PipelineConfig cfg;
    cfg.seed = 2;
    const auto exprs = run_generate(corpus, TemplateSet::builtin(), {}, AttributeLexicon::builtin(), cfg, 1);
    return run_distract(corpus, exprs.records, cfg.per_type, AttributeLexicon::builtin(), 1).instances;
  }();
  return v;
}

bool is_hit(const TaskInstance& inst, const RegionRef& r) {
  return r.image_id == inst.expression.image_id && r.object_id == inst.expression.target_id;
}

// Flattened region list in (image, object) order, built without the library's
// setting helpers.
std::vector<RegionRef> flat_regions(const TaskInstance& inst, Setting s) {
  std::vector<std::string> images{inst.target_image};
  for (const auto& [type, ids] : inst.distractors) {
    const bool in = s == Setting::Full || (s == Setting::DiffCatOnly && type == DistractorType::DiffCat) ||
                    (s == Setting::CatOnly && type == DistractorType::Cat) ||
                    (s == Setting::CatAttrOnly && type == DistractorType::CatAttr) ||
                    (s == Setting::CatCatOnly && type == DistractorType::CatCat);
    if (in) images.insert(images.end(), ids.begin(), ids.end());
  }
  std::vector<RegionRef> out;
  for (const auto& image : images) {
    for (const auto& r : inst.candidate_regions.at(image)) out.push_back({image, r.object_id});
  }
  std::sort(out.begin(), out.end(), [](const RegionRef& a, const RegionRef& b) {
    if (a.image_id != b.image_id) return oracle::id_before(a.image_id, b.image_id);
    return oracle::id_before(a.object_id, b.object_id);
  });
  return out;
}

RegionRef brute_argmax(const TaskInstance& inst, Setting s, const Scorer& scorer) {
  const auto all = flat_regions(inst, s);
  RegionRef best = all.front();
  double best_score = -INFINITY;
  for (const auto& r : all) {
    CandidateRegion c;
    c.object_id = r.object_id;
    const double v = scorer.score(inst.expression, r.image_id, c);
    if (v > best_score) {
      best = r;
      best_score = v;
    }
  }
  return best;
}

class TransformedScorer : public Scorer {
 public:
  explicit TransformedScorer(const Scorer& base) : base_(base) {}
  double score(const ExpressionRecord& e, const ImageId& i, const CandidateRegion& r) const override {
    return std::exp(3.0 * base_.score(e, i, r)) - 7.0;
  }

 private:
  const Scorer& base_;
};

// Right on instances whose expression id is in `good`, confidently wrong elsewhere.
class SelectiveScorer : public Scorer {
 public:
  explicit SelectiveScorer(std::set<std::string> good) : good_(std::move(good)) {}
  double score(const ExpressionRecord& e, const ImageId& i, const CandidateRegion& r) const override {
    const bool truth = i == e.image_id && r.object_id == e.target_id;
    return good_.count(e.expr_id) ? truth : !truth;
  }

 private:
  std::set<std::string> good_;
};

}  // namespace

TEST(CombinedScore, Examples) {
  EXPECT_DOUBLE_EQ(combined_score({{"sub", 1}, {"loc", 1}, {"rel", 1}}, {{"sub", 0.5}, {"loc", 0.3}, {"rel", 0.2}}), 1.0);
  EXPECT_DOUBLE_EQ(combined_score({{"sub", 0}, {"loc", 0}, {"rel", 0}}, {{"sub", 4}, {"loc", -2}, {"rel", 9}}), 0.0);
  EXPECT_THROW(combined_score({{"sub", 1}, {"loc", 1}}, {{"sub", 1}, {"loc", 1}, {"rel", 1}}), KeyMismatch);
  EXPECT_THROW(combined_score({{"sub", 1}, {"loc", 1}, {"rel", 1}}, {{"sub", 1}, {"loc", 1}, {"obj", 1}}), KeyMismatch);
}

TEST(CombinedScore, MatchesDotProduct) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    double s[3], w[3];
    for (int k = 0; k < 3; ++k) {
      s[k] = 4 * uniform01(rng) - 2;
      w[k] = 4 * uniform01(rng) - 2;
    }
    const double dot = s[0] * w[0] + s[1] * w[1] + s[2] * w[2];
    EXPECT_NEAR(combined_score({{"sub", s[0]}, {"loc", s[1]}, {"rel", s[2]}}, {{"sub", w[0]}, {"loc", w[1]}, {"rel", w[2]}}),
                dot, 1e-12);
  }
}

TEST(Settings, ImageSets) {
  const auto& inst = instances().front();
  EXPECT_EQ(setting_images(inst, Setting::Full).size(), 13u);
  EXPECT_EQ(setting_images(inst, Setting::CatOnly).size(), 4u);
  EXPECT_EQ(setting_images(inst, Setting::WithoutDist), std::vector<ImageId>{inst.target_image});
  for (auto s : kSettings) {
    EXPECT_EQ(setting_from_string(to_string(s)), s);
    EXPECT_EQ(candidate_count(inst, s), flat_regions(inst, s).size());
  }
  EXPECT_THROW(setting_from_string("Half"), ConfigError);
}

TEST(Select, OracleAlwaysRight) {
  ASSERT_GT(instances().size(), 50u);
  for (auto s : kSettings) {
    const auto report = evaluate(instances(), s, OracleScorer{});
    EXPECT_DOUBLE_EQ(report.accuracy(), 1.0) << to_string(s);
  }
}

TEST(Select, ConstantPicksFirstInTieOrder) {
  for (const auto& inst : instances()) {
    for (auto s : kSettings) EXPECT_EQ(select_region(inst, s, ConstantScorer(0.25)), flat_regions(inst, s).front());
  }
}

TEST(Select, MatchesBruteForceArgmax) {
  std::size_t n = 0;
  for (const auto& inst : instances()) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const RandomScorer scorer(seed);
      for (auto s : kSettings) EXPECT_EQ(select_region(inst, s, scorer), brute_argmax(inst, s, scorer));
    }
    if (++n == 50) break;
  }
  EXPECT_EQ(n, 50u);
}

TEST(Select, ArgmaxInvariantUnderIncreasingTransform) {
  const RandomScorer base(11);
  const TransformedScorer transformed(base);
  for (const auto& inst : instances()) {
    for (auto s : kSettings) EXPECT_EQ(select_region(inst, s, base), select_region(inst, s, transformed));
  }
}

TEST(Select, EmptyImageIsNoCandidates) {
  auto inst = instances().front();
  inst.candidate_regions[inst.target_image].clear();
  EXPECT_THROW(select_region(inst, Setting::WithoutDist, ConstantScorer{}), NoCandidates);
}

TEST(Evaluate, HalfCorrectScorerScoresHalf) {
  std::vector<TaskInstance> even(instances().begin(), instances().begin() + (instances().size() / 2) * 2);
  std::set<std::string> good;
  for (std::size_t i = 0; i < even.size(); i += 2) good.insert(even[i].expression.expr_id);
  const auto report = evaluate(even, Setting::Full, SelectiveScorer(good));
  EXPECT_DOUBLE_EQ(report.accuracy(), 0.5);
}

TEST(Evaluate, RandomScorerNearChanceRate) {
  for (auto s : {Setting::Full, Setting::CatOnly, Setting::WithoutDist}) {
    double hits = 0, expected = 0, variance = 0, trials = 0;
    for (std::uint64_t seed = 0; trials < 10000; ++seed) {
      const auto report = evaluate(instances(), s, RandomScorer(seed));
      hits += static_cast<double>(report.overall.correct);
      for (const auto& inst : instances()) {
        const double p = 1.0 / static_cast<double>(candidate_count(inst, s));
        expected += p;
        variance += p * (1 - p);
        trials += 1;
      }
    }
    EXPECT_LE(std::abs(hits - expected), 3.0 * std::sqrt(variance)) << to_string(s) << " " << hits << " vs " << expected;
  }
}

TEST(Evaluate, MonotoneDifficulty) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const RandomScorer scorer(seed);
    const double full = evaluate(instances(), Setting::Full, scorer).accuracy();
    const double without = evaluate(instances(), Setting::WithoutDist, scorer).accuracy();
    for (auto s : {Setting::DiffCatOnly, Setting::CatOnly, Setting::CatAttrOnly, Setting::CatCatOnly}) {
      const double only = evaluate(instances(), s, scorer).accuracy();
      EXPECT_LE(full, only);
      EXPECT_LE(only, without);
    }
  }
}

TEST(Evaluate, OrderAndWorkerInvariant) {
  const RandomScorer scorer(5);
  const auto base = evaluate(instances(), Setting::Full, scorer);
  auto shuffled = instances();
  Rng rng(1);
  shuffle(shuffled, rng);
  const auto other = evaluate(shuffled, Setting::Full, scorer, 4);
  EXPECT_EQ(base.overall, other.overall);
  EXPECT_EQ(base.by_form, other.by_form);
  EXPECT_EQ(base.by_length, other.by_length);
  const auto parallel = evaluate(instances(), Setting::Full, scorer, 3);
  EXPECT_EQ(base.predictions, parallel.predictions);
}

TEST(Evaluate, Breakdowns) {
  const auto report = evaluate(instances(), Setting::Full, OracleScorer{});
  std::size_t forms = 0, lengths = 0;
  for (const auto& [_, t] : report.by_form) forms += t.total;
  for (const auto& [_, t] : report.by_length) lengths += t.total;
  EXPECT_EQ(forms, instances().size());
  EXPECT_EQ(lengths, instances().size());
  EXPECT_EQ(length_bucket(9), LengthBucket::Short);
  EXPECT_EQ(length_bucket(10), LengthBucket::Middle);
  EXPECT_EQ(length_bucket(20), LengthBucket::Middle);
  EXPECT_EQ(length_bucket(21), LengthBucket::Long);
  EXPECT_THROW(evaluate({}, Setting::Full, OracleScorer{}), EmptyInput);
  const json j = report;
  EXPECT_EQ(j.at("accuracy"), 1.0);
}

TEST(TableScorer, ParsesScoresAndModules) {
  std::istringstream in(R"({"expr_id": "e", "image_id": "1", "object_id": "11", "score": 0.25}

{"expr_id": "e", "image_id": "1", "object_id": "12", "modules": {"sub": 1, "loc": 2, "rel": 3}, "weights": {"sub": 0.5, "loc": 0.25, "rel": 0.25}}
)");
  const auto t = TableScorer::parse(in);
  EXPECT_EQ(t.size(), 2u);
  ExpressionRecord e;
  e.expr_id = "e";
  CandidateRegion r;
  r.object_id = "11";
  EXPECT_DOUBLE_EQ(t.score(e, "1", r), 0.25);
  r.object_id = "12";
  EXPECT_DOUBLE_EQ(t.score(e, "1", r), 1.75);
  r.object_id = "13";
  EXPECT_THROW(t.score(e, "1", r), KeyMismatch);
}

TEST(TableScorer, Errors) {
  std::istringstream bad_json("{nope\n");
  EXPECT_THROW(TableScorer::parse(bad_json), MalformedDocument);
  std::istringstream no_score(R"({"expr_id": "e", "image_id": "1", "object_id": "11"})");
  EXPECT_THROW(TableScorer::parse(no_score), SchemaViolation);
  std::istringstream bad_keys(
      R"({"expr_id": "e", "image_id": "1", "object_id": "11", "modules": {"sub": 1}, "weights": {"sub": 1}})");
  EXPECT_THROW(TableScorer::parse(bad_keys), KeyMismatch);
  EXPECT_THROW(TableScorer::load("/nonexistent/scores.jsonl"), ConfigError);
}

TEST(SubprocessScorer, OracleScriptScoresPerfectly) {
  const std::string script =
      "python3 -u -c 'import sys, json\n"
      "for line in sys.stdin:\n"
      "    q = json.loads(line)\n"
      "    img, obj, _ = q[\"expr_id\"].split(\"/\")\n"
      "    print(json.dumps({\"score\": 1.0 if (q[\"image_id\"], q[\"object_id\"]) == (img, obj) else 0.0}))\n'";
  SubprocessScorer scorer(script);
  std::vector<TaskInstance> few(instances().begin(), instances().begin() + 10);
  EXPECT_DOUBLE_EQ(evaluate(few, Setting::Full, scorer, 4).accuracy(), 1.0);
}

TEST(SubprocessScorer, BareNumberReplies) {
  SubprocessScorer scorer("while read -r line; do echo 0.5; done");
  const auto& inst = instances().front();
  EXPECT_EQ(select_region(inst, Setting::CatOnly, scorer), flat_regions(inst, Setting::CatOnly).front());
}

TEST(SubprocessScorer, DeadProcessIsAnError) {
  SubprocessScorer scorer("exit 0");
  EXPECT_THROW(select_region(instances().front(), Setting::WithoutDist, scorer), Error);
}
