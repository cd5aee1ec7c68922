#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "copsref/common.hpp"
#include "copsref/error.hpp"
#include "copsref/scene_graph.hpp"

namespace copsref {

inline constexpr double kDefaultMargin = 0.1;
inline constexpr std::size_t kDefaultRefreshInterval = 50;

struct ModularEmbedding {
  std::string pair_id;
  std::string category;
  std::vector<double> sub, loc, rel;

  const std::vector<double>& module(std::size_t md) const { return md == 0 ? sub : md == 1 ? loc : rel; }
  std::vector<double>& module(std::size_t md) { return md == 0 ? sub : md == 1 ? loc : rel; }
  std::size_t dim() const { return sub.size(); }

  bool operator==(const ModularEmbedding&) const = default;
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("vectors of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroNorm("cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Module similarity: a zero vector on either side counts as 0.
inline double module_similarity(std::span<const double> a, std::span<const double> b) {
  try {
    return cosine_similarity(a, b);
  } catch (const ZeroNorm&) {
    return 0.0;
  }
}

inline void check_embeddings(std::span<const ModularEmbedding> embeddings) {
  std::optional<std::size_t> dim;
  std::set<std::string_view> ids;
  for (const auto& e : embeddings) {
    if (!ids.insert(e.pair_id).second) throw SchemaViolation("duplicate pair id " + e.pair_id);
    for (std::size_t md = 0; md < 3; ++md) {
      const auto n = e.module(md).size();
      if (n == 0) throw DimensionMismatch(e.pair_id + ": empty " + std::string(kModules[md]) + " vector");
      if (!dim) dim = n;
      if (n != *dim) {
        throw DimensionMismatch(e.pair_id + ": " + std::string(kModules[md]) + " has length " + std::to_string(n) +
                                ", expected " + std::to_string(*dim));
      }
    }
  }
}

// Softmax rows over same-category peers, one per pair and module. Rows are
// stored per category group as G x G blocks whose diagonal is 0.
class SamplingTable {
 public:
  std::uint64_t epoch() const { return epoch_; }
  std::size_t size() const { return pair_ids_.size(); }
  const std::string& pair_id(std::size_t m) const { return pair_ids_[m]; }
  const std::string& category(std::size_t m) const { return groups_[group_of_[m]].category; }

  std::optional<std::size_t> index_of(std::string_view pair_id) const {
    auto it = index_.find(std::string(pair_id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Pair indices aligned with row(m, md); includes m itself.
  std::span<const std::size_t> peers(std::size_t m) const { return groups_[group_of_[m]].members; }

  // Empty when m has no same-category peer.
  std::span<const double> row(std::size_t m, std::size_t md) const {
    const auto& g = groups_[group_of_[m]];
    const auto n = g.members.size();
    if (n < 2) return {};
    return std::span<const double>(g.probs[md]).subspan(slot_[m] * n, n);
  }

  double probability(std::size_t m, std::size_t md, std::size_t n) const {
    const auto r = row(m, md);
    const auto p = peers(m);
    for (std::size_t k = 0; k < r.size(); ++k) {
      if (p[k] == n) return r[k];
    }
    return 0.0;
  }

  friend SamplingTable build_sampling_table(std::span<const ModularEmbedding>, std::uint64_t, std::size_t);

 private:
  struct Group {
    std::string category;
    std::vector<std::size_t> members;
    std::array<std::vector<double>, 3> probs;
  };
  std::uint64_t epoch_ = 0;
  std::vector<std::string> pair_ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Group> groups_;
  std::vector<std::size_t> group_of_;
  std::vector<std::size_t> slot_;
};

inline SamplingTable build_sampling_table(std::span<const ModularEmbedding> embeddings, std::uint64_t epoch = 0,
                                          std::size_t workers = 1) {
  check_embeddings(embeddings);
  SamplingTable t;
  t.epoch_ = epoch;
  const auto count = embeddings.size();
  t.pair_ids_.reserve(count);
  t.group_of_.resize(count);
  t.slot_.resize(count);
  std::map<std::string, std::size_t> group_index;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& e = embeddings[i];
    t.pair_ids_.push_back(e.pair_id);
    t.index_[e.pair_id] = i;
    auto [it, fresh] = group_index.try_emplace(e.category, t.groups_.size());
    if (fresh) t.groups_.push_back({e.category, {}, {}});
    auto& g = t.groups_[it->second];
    t.group_of_[i] = it->second;
    t.slot_[i] = g.members.size();
    g.members.push_back(i);
  }

  // unit vectors once, so each similarity is a plain dot product
  const std::size_t dim = count ? embeddings[0].dim() : 0;
  std::array<std::vector<double>, 3> unit;
  std::array<std::vector<char>, 3> zero;
  for (std::size_t md = 0; md < 3; ++md) {
    unit[md].resize(count * dim);
    zero[md].assign(count, 0);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& v = embeddings[i].module(md);
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm == 0.0) zero[md][i] = 1;
      for (std::size_t d = 0; d < dim; ++d) unit[md][i * dim + d] = norm == 0.0 ? 0.0 : v[d] / norm;
    }
  }

  auto build_group = [&](SamplingTable::Group& g) {
    const auto n = g.members.size();
    if (n < 2) return;
    std::vector<double> sim(n * n);
    for (std::size_t md = 0; md < 3; ++md) {
      const double* u = unit[md].data();
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
          const auto ia = g.members[a], ib = g.members[b];
          double s = 0.0;
          if (!zero[md][ia] && !zero[md][ib]) {
            for (std::size_t d = 0; d < dim; ++d) s += u[ia * dim + d] * u[ib * dim + d];
            s = std::clamp(s, -1.0, 1.0);
          }
          sim[a * n + b] = sim[b * n + a] = s;
        }
      }
      auto& probs = g.probs[md];
      probs.assign(n * n, 0.0);
      for (std::size_t a = 0; a < n; ++a) {
        double z = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          if (b != a) z += std::exp(sim[a * n + b]);
        }
        for (std::size_t b = 0; b < n; ++b) {
          if (b != a) probs[a * n + b] = std::exp(sim[a * n + b]) / z;
        }
      }
    }
  };

  workers = std::max<std::size_t>(1, std::min(workers, t.groups_.size()));
  if (workers == 1) {
    for (auto& g : t.groups_) build_group(g);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < t.groups_.size(); i = next++) build_group(t.groups_[i]);
      });
    }
    for (auto& th : pool) th.join();
  }
  return t;
}

// One negative per module, drawn from that module's row.
inline ModuleMap<std::string> sample_negatives(const SamplingTable& table, std::size_t m, Rng& rng) {
  ModuleMap<std::string> out;
  for (std::size_t md = 0; md < 3; ++md) {
    const auto r = table.row(m, md);
    if (r.empty()) throw NoPeers(table.pair_id(m) + " has no same-category peer");
    out[std::string(kModules[md])] = table.pair_id(table.peers(m)[weighted_index(r, rng)]);
  }
  return out;
}

inline ModuleMap<std::string> sample_negatives(const SamplingTable& table, std::string_view pair_id, Rng& rng) {
  auto m = table.index_of(pair_id);
  if (!m) throw NoPeers("unknown pair " + std::string(pair_id));
  return sample_negatives(table, *m, rng);
}

// --- Losses -------------------------------------------------------------------

inline double hinge(double x) { return x > 0.0 ? x : 0.0; }

inline void check_margin(double margin) {
  if (!(margin >= 0.0)) throw std::invalid_argument("margin must be non-negative");
}

// s_neg_expr scores the positive region against a negative expression,
// s_neg_region a negative region against the positive expression.
inline double rank_loss(double s_pos, double s_neg_expr, double s_neg_region, double margin = kDefaultMargin) {
  check_margin(margin);
  return hinge(margin - s_pos + s_neg_expr) + hinge(margin - s_pos + s_neg_region);
}

struct NegativeScores {
  double expr = 0.0;    // positive region, negative expression
  double region = 0.0;  // negative region, positive expression
};

inline double mine_loss(double s_pos, const ModuleMap<NegativeScores>& negatives, double margin = kDefaultMargin) {
  check_margin(margin);
  if (!has_module_keys(negatives)) throw KeyMismatch("mining loss needs negatives for sub, loc and rel");
  double total = 0.0;
  for (auto md : kModules) {
    const auto& n = negatives.find(md)->second;
    total += hinge(margin - s_pos + n.expr) + hinge(margin - s_pos + n.region);
  }
  return total;
}

inline double total_loss(double rank, double mine) { return rank + mine; }

inline bool refresh_policy(std::uint64_t iteration, std::uint64_t interval = kDefaultRefreshInterval) {
  if (interval == 0) throw std::invalid_argument("refresh interval must be at least 1");
  return iteration % interval == 0;
}

// Holds the current table. Readers get a complete epoch; replace() swaps the
// whole table at once.
class TableHolder {
 public:
  std::shared_ptr<const SamplingTable> current() const {
    std::lock_guard lock(mu_);
    return table_;
  }

  void replace(SamplingTable table) {
    auto next = std::make_shared<const SamplingTable>(std::move(table));
    std::lock_guard lock(mu_);
    table_ = std::move(next);
  }

  // Rebuilds when the policy says so. Returns whether a refresh happened.
  bool step(std::uint64_t iteration, std::span<const ModularEmbedding> embeddings,
            std::uint64_t interval = kDefaultRefreshInterval) {
    if (!refresh_policy(iteration, interval)) return false;
    const auto cur = current();
    replace(build_sampling_table(embeddings, cur ? cur->epoch() + 1 : 0));
    return true;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const SamplingTable> table_;
};

// --- Embeddings IO ------------------------------------------------------------

inline void to_json(json& j, const ModularEmbedding& e) {
  j = {{"pair_id", e.pair_id}, {"category", e.category}, {"sub", e.sub}, {"loc", e.loc}, {"rel", e.rel}};
}

inline void from_json(const json& j, ModularEmbedding& e) {
  e.pair_id = j.at("pair_id").get<std::string>();
  e.category = j.at("category").get<std::string>();
  e.sub = j.at("sub").get<std::vector<double>>();
  e.loc = j.at("loc").get<std::vector<double>>();
  e.rel = j.at("rel").get<std::vector<double>>();
}

inline std::vector<ModularEmbedding> read_embeddings(std::istream& in, const std::string& source = "<embeddings>") {
  std::vector<ModularEmbedding> out;
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
      out.push_back(j.get<ModularEmbedding>());
    } catch (const json::exception& e) {
      throw SchemaViolation(where + ": " + e.what());
    }
  }
  check_embeddings(out);
  return out;
}

inline std::vector<ModularEmbedding> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open embeddings file " + path);
  return read_embeddings(in, path);
}

inline void write_embeddings(std::ostream& out, std::span<const ModularEmbedding> embeddings) {
  for (const auto& e : embeddings) out << json(e).dump() << '\n';
}

}  // namespace copsref
