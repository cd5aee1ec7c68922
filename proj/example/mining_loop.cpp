// A toy training loop around the hard-negative sampler: the table is rebuilt
// every 50 iterations and each step reports the mining loss of one pair.

#include <cstdio>

#include "copsref/copsref.hpp"

using namespace copsref;

int main() {
  const auto embeddings = synthetic_embeddings(2000, 20, 32, 4);
  TableHolder holder;
  holder.replace(build_sampling_table(embeddings));
  Rng rng = make_rng(4, "loop");
  double running = 0.0;
  for (std::uint64_t it = 1; it <= 200; ++it) {
    holder.step(it, embeddings);
    const auto table = holder.current();
    const std::size_t m = uniform_index(rng, table->size());
    const auto& pos = embeddings[m];
    ModuleMap<NegativeScores> negatives;
    for (const auto& [md, id] : sample_negatives(*table, m, rng)) {
      const auto& neg = embeddings[*table->index_of(id)];
      const std::size_t k = md == "sub" ? 0 : md == "loc" ? 1 : 2;
      const double s = module_similarity(pos.module(k), neg.module(k));
      negatives[md] = {s, s};
    }
    running += mine_loss(0.9, negatives);
    if (it % 50 == 0) {
      std::printf("iter %3llu  epoch %llu  mean mining loss %.4f\n", static_cast<unsigned long long>(it),
                  static_cast<unsigned long long>(table->epoch()), running / 50.0);
      running = 0.0;
    }
  }
}
