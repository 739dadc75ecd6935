#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace demlearn {

// The mt19937_64 sequence is fixed by the standard. Distributions come from
// Boost because the std:: ones are implementation-defined across toolchains.
using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <class T>
void shuffle(std::span<T> values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    boost::random::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(values[i - 1], values[pick(rng)]);
  }
}

inline double normal(Rng& rng, double mean, double stddev) {
  boost::random::normal_distribution<double> dist(mean, stddev);
  return dist(rng);
}

}  // namespace demlearn
