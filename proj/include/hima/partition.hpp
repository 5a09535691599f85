// SPDX-License-Identifier: Apache-2.0
//
// Inter-tile traffic of submatrix partitions. A partition splits a memory into
// n_h block rows and n_w block columns, n_h * n_w = N_t, one block per tile.
// Costs are in word transfers.
#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hima/core.hpp"

namespace hima {

struct PartitionSpec {
  std::size_t n_h = 1;  // block rows
  std::size_t n_w = 1;  // block columns

  std::size_t tiles() const { return n_h * n_w; }
  bool operator==(const PartitionSpec&) const = default;
};

/// Every (n_h, n_w) with n_h * n_w = N_t, ascending in n_w.
inline std::vector<PartitionSpec> enumerate_partitions(std::size_t n_t) {
  if (n_t < 1) throw std::invalid_argument("enumerate_partitions: N_t must be >= 1");
  std::vector<PartitionSpec> out;
  for (std::size_t w = 1; w <= n_t; ++w)
    if (n_t % w == 0) out.push_back({n_t / w, w});
  return out;
}

/// External-memory partitions with N divisible by n_h and W by n_w.
inline std::vector<PartitionSpec> external_partitions(std::size_t n, std::size_t w, std::size_t n_t) {
  std::vector<PartitionSpec> out;
  for (const auto& p : enumerate_partitions(n_t))
    if (n % p.n_h == 0 && w % p.n_w == 0) out.push_back(p);
  return out;
}

/// Linkage partitions with N divisible by both block counts.
inline std::vector<PartitionSpec> linkage_partitions(std::size_t n, std::size_t n_t) {
  std::vector<PartitionSpec> out;
  for (const auto& p : enumerate_partitions(n_t))
    if (n % p.n_h == 0 && n % p.n_w == 0) out.push_back(p);
  return out;
}

/// Normalization 2N(n_w - 1) plus similarity 2(n_h - 1).
inline double content_cost(std::size_t n, const PartitionSpec& p) {
  return 2.0 * static_cast<double>(n) * static_cast<double>(p.n_w - 1) + 2.0 * static_cast<double>(p.n_h - 1);
}

/// Transpose n_w(n_w - 1) N / N_t plus mat-vec W(n_h - 1).
inline double read_cost(std::size_t n, std::size_t w, std::size_t n_t, const PartitionSpec& p) {
  const double nw = static_cast<double>(p.n_w);
  return nw * (nw - 1.0) * static_cast<double>(n) / static_cast<double>(n_t) +
         static_cast<double>(w) * static_cast<double>(p.n_h - 1);
}

/// Forward term n_h(n_h-1)/N_t + n_w plus backward term n_w(n_w-1)/N_t + n_h.
/// Dimensionless; multiply by N for words per read head.
inline double linkage_cost(std::size_t n_t, const PartitionSpec& p) {
  const double h = static_cast<double>(p.n_h);
  const double w = static_cast<double>(p.n_w);
  const double t = static_cast<double>(n_t);
  return h * (h - 1.0) / t + w + w * (w - 1.0) / t + h;
}

/// argmin of content_cost + read_cost; ties go to the larger n_h.
inline PartitionSpec optimal_external(std::size_t n, std::size_t w, std::size_t n_t) {
  auto candidates = external_partitions(n, w, n_t);
  if (candidates.empty()) throw std::invalid_argument("optimal_external: no partition divides the memory");
  PartitionSpec best = candidates.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& p : candidates) {
    const double c = content_cost(n, p) + read_cost(n, w, n_t, p);
    if (c < best_cost || (c == best_cost && p.n_h > best.n_h)) {
      best = p;
      best_cost = c;
    }
  }
  return best;
}

/// argmin of linkage_cost; ties go to the larger n_h. `n` = 0 skips the divisibility filter.
inline PartitionSpec optimal_linkage(std::size_t n_t, std::size_t n = 0) {
  auto candidates = n == 0 ? enumerate_partitions(n_t) : linkage_partitions(n, n_t);
  if (candidates.empty()) throw std::invalid_argument("optimal_linkage: no partition divides the linkage memory");
  PartitionSpec best = candidates.front();
  double best_cost = std::numeric_limits<double>::infinity();
  for (const auto& p : candidates) {
    const double c = linkage_cost(n_t, p);
    if (c < best_cost || (c == best_cost && p.n_h > best.n_h)) {
      best = p;
      best_cost = c;
    }
  }
  return best;
}

enum class SweepKernel { read, linkage };

inline const char* to_string(SweepKernel k) { return k == SweepKernel::read ? "read" : "linkage"; }

struct SweepPoint {
  std::size_t n_t = 0;
  std::size_t n_w = 0;
  std::size_t n_h = 0;
  double cost = 0.0;
  SweepKernel kernel = SweepKernel::read;
};

/// Cost surface over every valid partition of every N_t, rows ordered by (N_t, n_w).
inline std::vector<SweepPoint> sweep_costs(std::size_t n, std::size_t w, const std::vector<std::size_t>& n_ts,
                                           SweepKernel kernel) {
  std::vector<SweepPoint> rows;
  for (std::size_t n_t : n_ts) {
    auto parts = kernel == SweepKernel::read ? external_partitions(n, w, n_t) : linkage_partitions(n, n_t);
    for (const auto& p : parts) {
      const double c = kernel == SweepKernel::read ? read_cost(n, w, n_t, p) : linkage_cost(n_t, p);
      rows.push_back({n_t, p.n_w, p.n_h, c, kernel});
    }
  }
  return rows;
}

}  // namespace hima
