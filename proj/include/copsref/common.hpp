#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace copsref {

using ImageId = std::string;
using ObjectId = std::string;

namespace detail {

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

// Total order on string identifiers. Numeric ids compare by value (GQA ids are
// decimal strings of varying length) and sort before non-numeric ids.
inline bool id_less(std::string_view a, std::string_view b) {
  const bool na = detail::all_digits(a);
  const bool nb = detail::all_digits(b);
  if (na != nb) return na;
  if (na && a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

struct IdLess {
  using is_transparent = void;
  bool operator()(std::string_view a, std::string_view b) const { return id_less(a, b); }
};

// --- Random numbers -------------------------------------------------------
//
// Only the raw engine output of std::mt19937_64 is used. Derived draws are
// computed here so that seeded runs produce identical bytes on every
// standard library.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view a = {}, std::string_view b = {},
                                 std::string_view c = {}) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ fnv1a(a));
  h = splitmix64(h ^ fnv1a(b));
  h = splitmix64(h ^ fnv1a(c));
  return h;
}

inline Rng make_rng(std::uint64_t seed, std::string_view a = {}, std::string_view b = {},
                    std::string_view c = {}) {
  return Rng(stream_seed(seed, a, b, c));
}

// Uniform integer in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const unsigned __int128 product = static_cast<unsigned __int128>(rng()) * n;
  return static_cast<std::size_t>(product >> 64);
}

// Uniform real in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline bool bernoulli(Rng& rng, double p) { return p > 0.0 && uniform01(rng) < p; }

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

// Draws an index with probability proportional to weights[i]. Weights must be
// non-negative with a positive sum.
inline std::size_t weighted_index(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // u landed on the rounding sliver; return the last positive weight
  for (std::size_t i = weights.size(); i > 0; --i) {
    if (weights[i - 1] > 0.0) return i - 1;
  }
  return weights.size() - 1;
}

// k distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  }
  pool.resize(k);
  return pool;
}

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

// Modular phrase components.
inline constexpr std::array<std::string_view, 3> kModules{"sub", "loc", "rel"};

template <typename T>
using ModuleMap = std::map<std::string, T, std::less<>>;

template <typename T>
bool has_module_keys(const ModuleMap<T>& m) {
  if (m.size() != kModules.size()) return false;
  for (auto md : kModules) {
    if (!m.count(md)) return false;
  }
  return true;
}

}  // namespace copsref
