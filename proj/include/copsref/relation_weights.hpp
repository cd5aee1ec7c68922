#pragma once

#include <map>
#include <string>
#include <vector>

#include "copsref/common.hpp"
#include "copsref/error.hpp"
#include "copsref/scene_graph.hpp"

namespace copsref {

// Inverse-frequency relation weights: weight(p) = K / frequency(p), with K
// chosen so the weights over all predicates sum to 1. Sampling renormalizes
// over whatever candidate set is offered.
class RelationWeights {
 public:
  RelationWeights() = default;

  explicit RelationWeights(std::map<std::string, std::size_t> frequencies) : frequencies_(std::move(frequencies)) {
    double inverse_sum = 0.0;
    for (const auto& [p, f] : frequencies_) {
      if (f == 0) throw SchemaViolation("relation '" + p + "' has zero frequency");
      inverse_sum += 1.0 / static_cast<double>(f);
    }
    constant_ = inverse_sum > 0.0 ? 1.0 / inverse_sum : 0.0;
    for (const auto& [p, f] : frequencies_) weights_[p] = constant_ / static_cast<double>(f);
  }

  const std::map<std::string, double>& weights() const { return weights_; }
  const std::map<std::string, std::size_t>& frequencies() const { return frequencies_; }
  double constant() const { return constant_; }
  bool empty() const { return frequencies_.empty(); }

  // Unseen predicates get the weight of a frequency-1 predicate.
  double weight(const std::string& predicate) const {
    auto it = weights_.find(predicate);
    if (it != weights_.end()) return it->second;
    return constant_ > 0.0 ? constant_ : 1.0;
  }

  // Normalized probabilities over `candidates` (which may repeat predicates).
  std::vector<double> probabilities(std::span<const std::string> candidates) const {
    std::vector<double> p;
    p.reserve(candidates.size());
    double total = 0.0;
    for (const auto& c : candidates) {
      p.push_back(weight(c));
      total += p.back();
    }
    for (auto& v : p) v /= total;
    return p;
  }

  std::size_t sample(std::span<const std::string> candidates, Rng& rng) const {
    std::vector<double> w;
    w.reserve(candidates.size());
    for (const auto& c : candidates) w.push_back(weight(c));
    return weighted_index(w, rng);
  }

 private:
  std::map<std::string, std::size_t> frequencies_;
  std::map<std::string, double> weights_;
  double constant_ = 0.0;
};

inline RelationWeights relation_weights(const Corpus& corpus) {
  std::map<std::string, std::size_t> freq;
  for (const auto& [_, g] : corpus.graphs()) {
    for (const auto& e : g.edges) ++freq[e.predicate];
  }
  if (freq.empty()) throw EmptyCorpus("corpus has no relation edges");
  return RelationWeights(std::move(freq));
}

}  // namespace copsref
