// Small deterministic generators for the property tests.
#pragma once

#include <cstdint>
#include <vector>

#include "hima/script.hpp"

namespace hima::gen {

inline std::vector<double> uniform_vector(SplitMix64& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

/// Values drawn from a handful of levels so ties are common.
inline std::vector<double> tied_vector(SplitMix64& rng, std::size_t n, std::size_t levels) {
  std::vector<double> v(n);
  for (auto& x : v) x = static_cast<double>(rng.next() % levels) / static_cast<double>(levels);
  return v;
}

inline std::size_t pick(SplitMix64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.next() % (hi - lo + 1));
}

}  // namespace hima::gen
