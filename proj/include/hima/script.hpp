// SPDX-License-Identifier: Apache-2.0
//
// Seeded interface-vector scripts. The generator is SplitMix64 with its
// published constants; draws happen in a fixed field order so a (seed,
// geometry, steps) triple names the same script on every platform.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hima/dnc.hpp"

namespace hima {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform in [-1, 1).
  double symmetric() { return 2.0 * uniform() - 1.0; }

 private:
  std::uint64_t state_;
};

namespace detail {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double softplus(double z) { return std::log1p(std::exp(z)); }

}  // namespace detail

/// Draw order: write key, write strength, write vector, erase vector, free
/// gates, allocation gate, write gate, read keys (row-major), read strengths,
/// read modes (row-major). Gates are logistic(6x), strengths 1 + softplus(4x),
/// read modes softmax(3x) over each row, with x uniform in [-1, 1).
template <class Real>
InterfaceInput<Real> random_interface(SplitMix64& rng, const MemoryGeometry& g) {
  using detail::logistic;
  using detail::softplus;
  InterfaceInput<Real> in;
  auto vec = [&](std::size_t n, auto&& f) {
    Vector<Real> v(n);
    for (auto& x : v) x = static_cast<Real>(f());
    return v;
  };
  auto sym = [&] { return rng.symmetric(); };
  auto gate = [&] { return logistic(6.0 * rng.symmetric()); };
  auto strength = [&] { return 1.0 + softplus(4.0 * rng.symmetric()); };

  in.write_key = vec(g.W, sym);
  in.write_strength = static_cast<Real>(strength());
  in.write_vector = vec(g.W, sym);
  in.erase_vector = vec(g.W, gate);
  in.free_gates = vec(g.R, gate);
  in.alloc_gate = static_cast<Real>(gate());
  in.write_gate = static_cast<Real>(gate());
  in.read_keys = Matrix<Real>(g.R, g.W);
  for (auto& x : in.read_keys.data()) x = static_cast<Real>(sym());
  in.read_strengths = vec(g.R, strength);
  in.read_modes = Matrix<Real>(g.R, 3);
  for (std::size_t r = 0; r < g.R; ++r) {
    double z[3];
    double total = 0.0;
    for (double& v : z) {
      v = std::exp(3.0 * rng.symmetric());
      total += v;
    }
    for (std::size_t m = 0; m < 3; ++m) in.read_modes(r, m) = static_cast<Real>(z[m] / total);
  }
  return in;
}

template <class Real>
std::vector<InterfaceInput<Real>> make_script(const MemoryGeometry& g, std::size_t steps, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<InterfaceInput<Real>> script;
  script.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) script.push_back(random_interface<Real>(rng, g));
  return script;
}

/// Seed of tile `tile`'s sub-script: the first SplitMix64 output for seed + tile.
inline std::uint64_t tile_seed(std::uint64_t seed, std::size_t tile) {
  return SplitMix64(seed + static_cast<std::uint64_t>(tile)).next();
}

/// One sub-script per tile for distributed execution; tile geometry is (N/N_t, W, R).
template <class Real>
std::vector<std::vector<InterfaceInput<Real>>> make_tile_scripts(const MemoryGeometry& local, std::size_t tiles,
                                                                 std::size_t steps, std::uint64_t seed) {
  std::vector<std::vector<InterfaceInput<Real>>> scripts;
  scripts.reserve(tiles);
  for (std::size_t t = 0; t < tiles; ++t) scripts.push_back(make_script<Real>(local, steps, tile_seed(seed, t)));
  return scripts;
}

}  // namespace hima
