#pragma once

#include <array>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "copsref/common.hpp"
#include "copsref/hard_mining.hpp"
#include "copsref/scene_graph.hpp"

namespace copsref {

// Small random scene graphs for tests and demos. Categories recur across
// images often enough that most expressions find distractor images.
struct SyntheticCorpusOptions {
  std::size_t images = 20;
  std::size_t categories_per_image = 6;
  std::size_t objects_per_image = 8;
  int width = 640;
  int height = 480;
  std::uint64_t seed = 1;
};

namespace detail {

inline const std::vector<std::string>& synthetic_categories() {
  static const std::vector<std::string> c{"person", "dog", "cat",  "car",   "table",
                                          "cup",    "chair", "bag", "bench", "tree"};
  return c;
}

// (subject category, predicate, object category); "*" is any category.
inline const std::vector<std::array<std::string, 3>>& synthetic_relations() {
  static const std::vector<std::array<std::string, 3>> r{
      {"person", "holding", "cup"},  {"person", "holding", "bag"},   {"person", "sitting on", "chair"},
      {"person", "sitting on", "bench"}, {"person", "walking", "dog"}, {"dog", "lying on", "bench"},
      {"cat", "lying on", "chair"},  {"cat", "sitting on", "table"}, {"cup", "on", "table"},
      {"bag", "on", "bench"},        {"bag", "on", "chair"},         {"car", "parked near", "tree"},
      {"dog", "chasing", "cat"},     {"chair", "next to", "table"},  {"*", "near", "*"},
      {"*", "behind", "*"}};
  return r;
}

}  // namespace detail

inline std::vector<SceneGraph> synthetic_scene_graphs(const SyntheticCorpusOptions& opt) {
  const auto& cats = detail::synthetic_categories();
  static const std::vector<std::string> colours{"red", "blue", "green", "white", "black"};
  static const std::vector<std::string> materials{"wooden", "metal", "plastic"};
  static const std::vector<std::string> states{"large", "small"};
  static const std::set<std::string> made_things{"car", "table", "cup", "chair", "bag", "bench"};
  std::vector<SceneGraph> graphs;
  for (std::size_t img = 0; img < opt.images; ++img) {
    SceneGraph g;
    g.image_id = std::to_string(img + 1);
    g.width = opt.width;
    g.height = opt.height;
    Rng rng = make_rng(opt.seed, "synthetic-corpus", g.image_id);
    std::vector<std::string> chosen;
    for (auto i : sample_without_replacement(cats.size(), std::min(opt.categories_per_image, cats.size()), rng)) {
      chosen.push_back(cats[i]);
    }
    for (std::size_t k = 0; k < opt.objects_per_image; ++k) {
      ObjectNode n;
      n.id = g.image_id + std::to_string(k + 1);
      n.category = k < chosen.size() ? chosen[k] : chosen[uniform_index(rng, chosen.size())];
      if (bernoulli(rng, 0.8)) n.attributes.push_back(colours[uniform_index(rng, colours.size())]);
      if (made_things.count(n.category) && bernoulli(rng, 0.4)) {
        n.attributes.push_back(materials[uniform_index(rng, materials.size())]);
      }
      if (bernoulli(rng, 0.25)) n.attributes.push_back(states[uniform_index(rng, states.size())]);
      std::sort(n.attributes.begin(), n.attributes.end());
      n.box.w = 40 + static_cast<int>(uniform_index(rng, 160));
      n.box.h = 40 + static_cast<int>(uniform_index(rng, 160));
      n.box.x = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(opt.width - n.box.w)));
      n.box.y = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(opt.height - n.box.h)));
      g.nodes.push_back(std::move(n));
    }
    for (const auto& a : g.nodes) {
      for (const auto& b : g.nodes) {
        if (a.id == b.id) continue;
        std::vector<std::string> options;
        for (const auto& [s, p, o] : detail::synthetic_relations()) {
          if ((s == "*" || s == a.category) && (o == "*" || o == b.category)) options.push_back(p);
        }
        const bool specific = options.size() > 2;
        if (bernoulli(rng, specific ? 0.6 : 0.12)) {
          const std::string p = specific ? options[uniform_index(rng, options.size() - 2)]
                                         : options[uniform_index(rng, options.size())];
          g.edges.push_back({a.id, p, b.id});
        }
        // spatial relations are common, as in real scene graphs
        if (bernoulli(rng, 0.3)) {
          const bool left = a.box.center_x() < b.box.center_x();
          g.edges.push_back({a.id, left ? "to the left of" : "to the right of", b.id});
        }
      }
    }
    std::sort(g.nodes.begin(), g.nodes.end(), [](const auto& x, const auto& y) { return id_less(x.id, y.id); });
    std::sort(g.edges.begin(), g.edges.end(), edge_less);
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    graphs.push_back(std::move(g));
  }
  return graphs;
}

inline Corpus synthetic_corpus(const SyntheticCorpusOptions& opt = {}) { return Corpus(synthetic_scene_graphs(opt)); }

// Embeddings clustered by category: each module vector is a per-category
// centre plus uniform noise.
inline std::vector<ModularEmbedding> synthetic_embeddings(std::size_t count, std::size_t categories, std::size_t dim,
                                                          std::uint64_t seed, double noise = 0.5) {
  std::vector<std::array<std::vector<double>, 3>> centres(categories);
  Rng crng = make_rng(seed, "centres");
  for (auto& c : centres) {
    for (auto& v : c) {
      v.resize(dim);
      for (auto& x : v) x = 2.0 * uniform01(crng) - 1.0;
    }
  }
  std::vector<ModularEmbedding> out(count);
  Rng rng = make_rng(seed, "embeddings");
  for (std::size_t i = 0; i < count; ++i) {
    auto& e = out[i];
    const std::size_t c = i % categories;
    e.pair_id = "p" + std::to_string(i);
    e.category = "c" + std::to_string(c);
    for (std::size_t md = 0; md < 3; ++md) {
      auto& v = e.module(md);
      v.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) v[d] = centres[c][md][d] + noise * (2.0 * uniform01(rng) - 1.0);
    }
  }
  return out;
}

}  // namespace copsref
