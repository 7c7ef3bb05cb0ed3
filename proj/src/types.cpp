#include "s2s/types.hpp"

#include <cmath>

namespace s2s {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(a + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ splitmix64(b + 0x85157af5ULL));
  return Rng(h);
}

cdouble complex_normal(Rng& rng) {
  std::normal_distribution<double> normal(0.0, M_SQRT1_2);
  const double re = normal(rng);
  const double im = normal(rng);
  return {re, im};
}

}  // namespace s2s
