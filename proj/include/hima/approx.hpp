// SPDX-License-Identifier: Apache-2.0
//
// Efficiency approximations for the memory unit: a piecewise-linear exp
// (chords between uniform knots, stored as a LUT of affine pieces) for the
// softmax, and usage skimming ahead of the sort/allocation kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "hima/core.hpp"

namespace hima {

struct AffinePiece {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Piecewise-linear approximation of exp over [-bound, 0]. Immutable once built.
class AffineTable {
 public:
  AffineTable(std::vector<AffinePiece> pieces, double bound)
      : pieces_(std::move(pieces)), bound_(bound), width_(bound / static_cast<double>(pieces_.size())) {}

  std::size_t segment_count() const noexcept { return pieces_.size(); }
  double bound() const noexcept { return bound_; }
  std::span<const AffinePiece> pieces() const noexcept { return pieces_; }

  /// Left knot of segment s.
  double knot(std::size_t s) const noexcept {
    return -bound_ + static_cast<double>(s) * width_;
  }

  std::size_t segment_of(double x) const noexcept {
    x = std::clamp(x, -bound_, 0.0);
    auto s = static_cast<std::size_t>((x + bound_) / width_);
    return std::min(s, pieces_.size() - 1);
  }

  /// One multiply and one add after the LUT lookup.
  double operator()(double x) const noexcept {
    x = std::clamp(x, -bound_, 0.0);
    const auto& p = pieces_[segment_of(x)];
    return p.slope * x + p.intercept;
  }

  /// CSV dump: `knot,slope,intercept`, one row per segment.
  void write_csv(std::ostream& os) const;

 private:
  std::vector<AffinePiece> pieces_;
  double bound_;
  double width_;
};

/// Chord interpolation of exp at `segments + 1` uniform knots over [-bound, 0].
inline AffineTable build_exp_pla(int segments, double bound) {
  if (segments < 1) throw std::invalid_argument("build_exp_pla: segment count must be >= 1");
  if (!(bound > 0.0)) throw std::invalid_argument("build_exp_pla: domain bound must be > 0");
  const double width = bound / segments;
  std::vector<AffinePiece> pieces;
  pieces.reserve(static_cast<std::size_t>(segments));
  for (int s = 0; s < segments; ++s) {
    const double a = -bound + s * width;
    // last right knot is exactly 0 so the piece hits exp(0) = 1 exactly
    const double b = (s + 1 == segments) ? 0.0 : -bound + (s + 1) * width;
    const double ea = std::exp(a);
    const double eb = std::exp(b);
    const double slope = (eb - ea) / (b - a);
    pieces.push_back({slope, eb - slope * b});
  }
  return AffineTable(std::move(pieces), bound);
}

inline const AffineTable& default_exp_table() {
  static const AffineTable table = build_exp_pla(32, 16.0);
  return table;
}

inline void AffineTable::write_csv(std::ostream& os) const {
  os << "knot,slope,intercept\n";
  os.precision(17);
  for (std::size_t s = 0; s < pieces_.size(); ++s)
    os << knot(s) << ',' << pieces_[s].slope << ',' << pieces_[s].intercept << '\n';
}

enum class SoftmaxMode { exact, approx };

template <class Real>
Vector<Real> softmax_exact(std::span<const Real> x) {
  detail::require(!x.empty(), "softmax: empty input");
  const Real peak = *std::max_element(x.begin(), x.end());
  Vector<Real> out(x.size());
  Real sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - peak);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

/// Max-shifted softmax with exp replaced by the affine table.
template <class Real>
Vector<Real> softmax_pla(std::span<const Real> x, const AffineTable& table) {
  detail::require(!x.empty(), "softmax_pla: empty input");
  const Real peak = *std::max_element(x.begin(), x.end());
  Vector<Real> out(x.size());
  Real sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<Real>(table(static_cast<double>(x[i] - peak)));
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

template <class Real>
Vector<Real> softmax(std::span<const Real> x, SoftmaxMode mode) {
  return mode == SoftmaxMode::exact ? softmax_exact(x) : softmax_pla(x, default_exp_table());
}

// ---------------------------------------------------------------------------
// usage skimming

enum class SkimPolicy { skim_largest, skim_smallest };

struct SkimConfig {
  double K = 0.0;  // fraction of N, in [0, 1)
  SkimPolicy policy = SkimPolicy::skim_largest;

  void validate() const {
    if (!(K >= 0.0 && K < 1.0)) throw std::invalid_argument("SkimConfig: K must lie in [0, 1)");
  }
  std::size_t dropped(std::size_t n) const {
    return static_cast<std::size_t>(std::floor(K * static_cast<double>(n)));
  }
};

/// Ascending order of `u` restricted to `indices`; ties keep lower index first.
template <class Real>
std::vector<std::size_t> stable_argsort(std::span<const Real> u, std::vector<std::size_t> indices) {
  std::stable_sort(indices.begin(), indices.end(),
                   [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
  return indices;
}

template <class Real>
std::vector<std::size_t> stable_argsort(std::span<const Real> u) {
  std::vector<std::size_t> idx(u.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return stable_argsort(u, std::move(idx));
}

namespace detail {

/// out[order[i]] = (1 - u[order[i]]) * prod_{j<i} u[order[j]]; other entries untouched.
template <class Real>
void allocate_along(std::span<const Real> u, std::span<const std::size_t> order, std::span<Real> out) {
  Real carry = 1;
  for (std::size_t idx : order) {
    out[idx] = (Real{1} - u[idx]) * carry;
    carry *= u[idx];
  }
}

}  // namespace detail

/// Indices kept after skimming, in original index order.
template <class Real>
std::vector<std::size_t> skim_usage(std::span<const Real> u, const SkimConfig& cfg) {
  cfg.validate();
  const std::size_t drop = cfg.dropped(u.size());
  auto order = stable_argsort(u);
  std::vector<std::size_t> kept;
  if (cfg.policy == SkimPolicy::skim_largest)
    kept.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(drop));
  else
    kept.assign(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Allocation over the kept indices only; skimmed locations get weight 0.
template <class Real>
Vector<Real> allocation_skimmed(std::span<const Real> u, const SkimConfig& cfg) {
  auto order = stable_argsort(u, skim_usage(u, cfg));
  Vector<Real> out(u.size(), Real{0});
  detail::allocate_along<Real>(u, order, out);
  return out;
}

}  // namespace hima
