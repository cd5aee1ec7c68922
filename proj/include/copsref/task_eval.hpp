#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <csignal>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "copsref/common.hpp"
#include "copsref/distractor.hpp"
#include "copsref/error.hpp"
#include "copsref/stats.hpp"

namespace copsref {

enum class Setting { Full, DiffCatOnly, CatOnly, CatAttrOnly, CatCatOnly, WithoutDist };

inline constexpr std::array<Setting, 6> kSettings{Setting::Full,        Setting::DiffCatOnly, Setting::CatOnly,
                                                  Setting::CatAttrOnly, Setting::CatCatOnly,  Setting::WithoutDist};

inline std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::Full: return "Full";
    case Setting::DiffCatOnly: return "DiffCatOnly";
    case Setting::CatOnly: return "CatOnly";
    case Setting::CatAttrOnly: return "CatAttrOnly";
    case Setting::CatCatOnly: return "CatCatOnly";
    case Setting::WithoutDist: return "WithoutDist";
  }
  return "?";
}

inline Setting setting_from_string(std::string_view s) {
  for (auto v : kSettings) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown setting '" + std::string(s) + "'");
}

// Images searched under a setting, in tie-break order.
inline std::vector<ImageId> setting_images(const TaskInstance& inst, Setting setting) {
  std::vector<ImageId> images{inst.target_image};
  auto add = [&](DistractorType t) {
    auto it = inst.distractors.find(t);
    if (it != inst.distractors.end()) images.insert(images.end(), it->second.begin(), it->second.end());
  };
  switch (setting) {
    case Setting::Full:
      for (auto t : kDistractorTypes) add(t);
      break;
    case Setting::DiffCatOnly: add(DistractorType::DiffCat); break;
    case Setting::CatOnly: add(DistractorType::Cat); break;
    case Setting::CatAttrOnly: add(DistractorType::CatAttr); break;
    case Setting::CatCatOnly: add(DistractorType::CatCat); break;
    case Setting::WithoutDist: break;
  }
  std::sort(images.begin(), images.end(), IdLess{});
  images.erase(std::unique(images.begin(), images.end()), images.end());
  return images;
}

inline std::size_t candidate_count(const TaskInstance& inst, Setting setting) {
  std::size_t n = 0;
  for (const auto& id : setting_images(inst, setting)) {
    auto it = inst.candidate_regions.find(id);
    if (it != inst.candidate_regions.end()) n += it->second.size();
  }
  return n;
}

// Weighted sum of modular scores. Key sets must be {sub, loc, rel} on both sides.
inline double combined_score(const ModuleMap<double>& scores, const ModuleMap<double>& weights) {
  if (!has_module_keys(scores) || !has_module_keys(weights)) {
    throw KeyMismatch("modular scores and weights need exactly the keys sub, loc, rel");
  }
  double total = 0.0;
  for (auto md : kModules) total += weights.find(md)->second * scores.find(md)->second;
  return total;
}

// --- Scorers ------------------------------------------------------------------

class Scorer {
 public:
  virtual ~Scorer() = default;
  // Higher is a better match. Must be deterministic for fixed inputs.
  virtual double score(const ExpressionRecord& expr, const ImageId& image, const CandidateRegion& region) const = 0;
  virtual bool thread_safe() const { return true; }
};

// 1 on the ground-truth region, 0 elsewhere.
class OracleScorer : public Scorer {
 public:
  double score(const ExpressionRecord& expr, const ImageId& image, const CandidateRegion& region) const override {
    return image == expr.image_id && region.object_id == expr.target_id ? 1.0 : 0.0;
  }
};

class ConstantScorer : public Scorer {
 public:
  explicit ConstantScorer(double value = 0.0) : value_(value) {}
  double score(const ExpressionRecord&, const ImageId&, const CandidateRegion&) const override { return value_; }

 private:
  double value_;
};

// Uniform in [0,1), a pure hash of (seed, expression, image, region).
class RandomScorer : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  double score(const ExpressionRecord& expr, const ImageId& image, const CandidateRegion& region) const override {
    const auto h = stream_seed(seed_, expr.expr_id, image, region.object_id);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t seed_;
};

// Scores read from a JSONL file keyed by (expr_id, image_id, object_id).
// A line carries either "score" or "modules" plus "weights".
class TableScorer : public Scorer {
 public:
  using Key = std::tuple<std::string, std::string, std::string>;

  void set(const std::string& expr_id, const std::string& image_id, const std::string& object_id, double score) {
    scores_[{expr_id, image_id, object_id}] = score;
  }

  std::size_t size() const { return scores_.size(); }

  static TableScorer parse(std::istream& in, const std::string& source = "<scores>") {
    TableScorer t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = source + ":" + std::to_string(lineno);
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw MalformedDocument(where + ": " + e.what());
      }
      try {
        double s;
        if (j.contains("score")) {
          s = j.at("score").get<double>();
        } else if (j.contains("modules") && j.contains("weights")) {
          s = combined_score(j.at("modules").get<ModuleMap<double>>(), j.at("weights").get<ModuleMap<double>>());
        } else {
          throw SchemaViolation("line has neither score nor modules/weights");
        }
        t.set(j.at("expr_id").get<std::string>(), j.at("image_id").get<std::string>(),
              j.at("object_id").get<std::string>(), s);
      } catch (const json::exception& e) {
        throw SchemaViolation(where + ": " + e.what());
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::KeyMismatch) throw KeyMismatch(where + ": " + e.what());
        throw SchemaViolation(where + ": " + e.what());
      }
    }
    return t;
  }

  static TableScorer load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scores file " + path);
    return parse(in, path);
  }

  double score(const ExpressionRecord& expr, const ImageId& image, const CandidateRegion& region) const override {
    auto it = scores_.find({expr.expr_id, image, region.object_id});
    if (it == scores_.end()) {
      throw KeyMismatch("no score for " + expr.expr_id + " " + image + " " + region.object_id);
    }
    return it->second;
  }

 private:
  std::map<Key, double> scores_;
};

// Talks to a child process over pipes: one JSON request line out, one reply
// line back (a bare number or {"score": x}).
class SubprocessScorer : public Scorer {
 public:
  explicit SubprocessScorer(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw ConfigError("pipe failed");
    std::signal(SIGPIPE, SIG_IGN);
    pid_ = fork();
    if (pid_ < 0) throw ConfigError("fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    out_ = fdopen(to_child[1], "w");
    in_ = fdopen(from_child[0], "r");
  }

  SubprocessScorer(const SubprocessScorer&) = delete;
  SubprocessScorer& operator=(const SubprocessScorer&) = delete;

  ~SubprocessScorer() override {
    if (out_) std::fclose(out_);
    if (in_) std::fclose(in_);
    if (pid_ > 0) waitpid(pid_, nullptr, 0);
  }

  bool thread_safe() const override { return false; }

  double score(const ExpressionRecord& expr, const ImageId& image, const CandidateRegion& region) const override {
    std::lock_guard lock(mu_);
    const json request = {{"expr_id", expr.expr_id}, {"text", expr.text},        {"image_id", image},
                          {"object_id", region.object_id}, {"category", region.category}, {"box", region.box}};
    const std::string line = request.dump() + "\n";
    if (std::fputs(line.c_str(), out_) < 0 || std::fflush(out_) != 0) {
      throw ConfigError("scorer process closed its input");
    }
    std::string reply;
    int c;
    while ((c = std::fgetc(in_)) != EOF && c != '\n') reply.push_back(static_cast<char>(c));
    if (reply.empty() && c == EOF) throw ConfigError("scorer process exited");
    try {
      const json j = json::parse(reply);
      return j.is_number() ? j.get<double>() : j.at("score").get<double>();
    } catch (const json::exception& e) {
      throw MalformedDocument("bad scorer reply '" + reply + "': " + e.what());
    }
  }

 private:
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  FILE* in_ = nullptr;
  mutable std::mutex mu_;
};

// --- Selection and accuracy ---------------------------------------------------

struct RegionRef {
  ImageId image_id;
  ObjectId object_id;

  bool operator==(const RegionRef&) const = default;
};

// Highest-scoring candidate over the setting's images. Ties go to the
// smallest image id, then the smallest object id.
inline RegionRef select_region(const TaskInstance& inst, Setting setting, const Scorer& scorer) {
  const auto images = setting_images(inst, setting);
  std::optional<RegionRef> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& image : images) {
    auto it = inst.candidate_regions.find(image);
    if (it == inst.candidate_regions.end() || it->second.empty()) {
      throw NoCandidates(inst.expression.expr_id + ": image " + image + " has no candidate regions");
    }
    std::vector<const CandidateRegion*> regions;
    for (const auto& r : it->second) regions.push_back(&r);
    std::sort(regions.begin(), regions.end(),
              [](const CandidateRegion* a, const CandidateRegion* b) { return id_less(a->object_id, b->object_id); });
    for (const auto* r : regions) {
      const double s = scorer.score(inst.expression, image, *r);
      if (!best || s > best_score) {
        best = RegionRef{image, r->object_id};
        best_score = s;
      }
    }
  }
  if (!best) throw NoCandidates(inst.expression.expr_id + ": no candidate regions");
  return *best;
}

enum class LengthBucket { Short, Middle, Long };

inline std::string_view to_string(LengthBucket b) {
  switch (b) {
    case LengthBucket::Short: return "short";
    case LengthBucket::Middle: return "middle";
    case LengthBucket::Long: return "long";
  }
  return "?";
}

inline LengthBucket length_bucket(std::size_t words) {
  if (words < 10) return LengthBucket::Short;
  if (words <= 20) return LengthBucket::Middle;
  return LengthBucket::Long;
}

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  bool operator==(const Tally&) const = default;
};

struct EvalReport {
  Setting setting = Setting::Full;
  Tally overall;
  std::map<std::string, Tally> by_form;
  std::map<std::string, Tally> by_length;
  std::vector<RegionRef> predictions;  // input order

  double accuracy() const { return overall.accuracy(); }
};

inline EvalReport evaluate(std::span<const TaskInstance> instances, Setting setting, const Scorer& scorer,
                           std::size_t workers = 1) {
  if (instances.empty()) throw EmptyInput("no task instances to evaluate");
  std::vector<std::optional<RegionRef>> picks(instances.size());
  std::mutex serial;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < instances.size(); i = next++) {
      try {
        if (scorer.thread_safe()) {
          picks[i] = select_region(instances[i], setting, scorer);
        } else {
          std::lock_guard lock(serial);
          picks[i] = select_region(instances[i], setting, scorer);
        }
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = instances.size();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, instances.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport report;
  report.setting = setting;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& expr = instances[i].expression;
    const bool hit = picks[i]->image_id == expr.image_id && picks[i]->object_id == expr.target_id;
    for (Tally* t : {&report.overall, &report.by_form[std::string(to_string(expr.form))],
                     &report.by_length[std::string(to_string(length_bucket(expression_words(expr.text).size())))]}) {
      ++t->total;
      if (hit) ++t->correct;
    }
    report.predictions.push_back(*picks[i]);
  }
  return report;
}

inline void to_json(json& j, const Tally& t) {
  j = {{"correct", t.correct}, {"total", t.total}, {"accuracy", t.accuracy()}};
}

inline void to_json(json& j, const EvalReport& r) {
  j = {{"setting", to_string(r.setting)},
       {"accuracy", r.accuracy()},
       {"correct", r.overall.correct},
       {"total", r.overall.total},
       {"by_form", r.by_form},
       {"by_length", r.by_length}};
}

}  // namespace copsref
