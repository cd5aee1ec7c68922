// Parses the cat-and-towel scene, composes an order tree and renders it
// through every template that fits.
//
//   ./fig1_walkthrough data/fig1_corpus.json

#include <iostream>

#include "copsref/copsref.hpp"

using namespace copsref;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: " << argv[0] << " fig1_corpus.json\n";
    return 2;
  }
  const Corpus corpus = load_corpus_file(argv[1], {});
  const SceneGraph& g = corpus.graphs().begin()->second;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng = make_rng(seed, "walkthrough");
    auto tree = parse_order(g, "1", rng);
    if (!tree) continue;
    if (auto longer = compose(*tree, g, "1", rng)) tree = longer;
    std::cout << "seed " << seed << ": " << to_arrow(*tree) << '\n';
    for (const auto* tpl : TemplateSet::builtin().applicable(*tree)) {
      std::cout << "    " << fill(*tpl, *tree, {}, rng).text << '\n';
    }
  }
}
