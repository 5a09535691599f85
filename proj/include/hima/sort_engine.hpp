// SPDX-License-Identifier: Apache-2.0
//
// Local-global two-stage usage sort.
//
// Stage 1 (per PT): the local usage slice of length n is laid out as a P x P
// register file and sorted by row/column passes through a P-input dual-mode
// pipelined bitonic sorter (DPBS). Stage 2 (CT): an N_t-input parallel merge
// sorter (PMS) merges the sorted runs.
//
// Cycle model: a pass over the register file streams P lines through the DPBS,
// P + D_DPBS cycles; the local sort is costed at 6 passes. The merge emits N_t
// outputs per cycle, n + D_PMS cycles.
//
// The functional pass schedule is snake-order shear sort, which needs
// ceil(log2 P) + 1 row passes and ceil(log2 P) column passes to be correct for
// every input. Six passes are not enough for arbitrary data, so the functional
// model runs the full schedule and reports it in `phases_executed`; the cycle
// model keeps the 6-pass figure.
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hima/core.hpp"

namespace hima {

/// Sort key; ties on value resolve by original index so permutations are deterministic.
struct SortKey {
  double value = 0.0;
  std::size_t index = 0;

  friend bool operator<(const SortKey& a, const SortKey& b) {
    return a.value < b.value || (a.value == b.value && a.index < b.index);
  }
  friend bool operator==(const SortKey&, const SortKey&) = default;

  static SortKey sentinel() {
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<std::size_t>::max()};
  }
  bool is_sentinel() const { return index == std::numeric_limits<std::size_t>::max(); }
};

enum class SortDirection { ascending, descending };

inline std::size_t default_dpbs_depth(std::size_t p) {
  const std::size_t lg = detail::ceil_log2(p);
  return std::max<std::size_t>(1, std::min<std::size_t>(lg * (lg + 1) / 2, 5));
}

struct SortConfig {
  std::size_t n = 0;        // local vector length N / N_t
  std::size_t p = 0;        // register file dimension, P*P >= n
  std::size_t d_dpbs = 5;   // DPBS pipeline depth
  std::size_t n_t = 1;      // number of runs merged by the PMS
  std::size_t d_pms = 7;    // PMS pipeline depth

  static SortConfig for_usage(std::size_t total, std::size_t n_t, std::optional<std::size_t> d_dpbs = {},
                              std::size_t d_pms = 7) {
    detail::require(total >= 1, "SortConfig: empty usage vector");
    detail::require(n_t >= 1 && total % n_t == 0, "SortConfig: N must be divisible by N_t");
    SortConfig cfg;
    cfg.n = total / n_t;
    cfg.p = detail::ceil_sqrt(cfg.n);
    cfg.d_dpbs = d_dpbs.value_or(default_dpbs_depth(cfg.p));
    cfg.n_t = n_t;
    cfg.d_pms = d_pms;
    cfg.validate();
    return cfg;
  }

  void validate() const {
    detail::require(p * p >= n, "SortConfig: P*P must cover n");
    detail::require(d_dpbs >= 1 && d_pms >= 1, "SortConfig: pipeline depths must be >= 1");
    detail::require(n_t >= 1, "SortConfig: N_t must be >= 1");
  }

  std::size_t local_cycles() const { return 6 * (p + d_dpbs); }
  std::size_t global_cycles() const { return n_t > 1 ? n + d_pms : 0; }
};

struct CycleReport {
  std::size_t local_cycles = 0;
  std::size_t global_cycles = 0;
  std::size_t total_cycles = 0;
};

/// Bitonic sorting network over the keys. Non-power-of-two widths are padded with sentinels.
inline std::vector<SortKey> dpbs_sort(std::vector<SortKey> keys, SortDirection direction) {
  const std::size_t width = keys.size();
  std::size_t padded = 1;
  while (padded < width) padded <<= 1;
  keys.resize(padded, SortKey::sentinel());

  for (std::size_t block = 2; block <= padded; block <<= 1) {
    for (std::size_t stride = block >> 1; stride > 0; stride >>= 1) {
      for (std::size_t i = 0; i < padded; ++i) {
        const std::size_t j = i ^ stride;
        if (j <= i) continue;
        const bool up = (i & block) == 0;
        if (up ? keys[j] < keys[i] : keys[i] < keys[j]) std::swap(keys[i], keys[j]);
      }
    }
  }
  keys.resize(width);  // sentinels sort to the tail
  if (direction == SortDirection::descending) std::reverse(keys.begin(), keys.end());
  return keys;
}

inline std::vector<SortKey> dpbs_sort(std::span<const double> values, SortDirection direction) {
  std::vector<SortKey> keys(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) keys[i] = {values[i], i};
  return dpbs_sort(std::move(keys), direction);
}

struct MdsaResult {
  std::vector<SortKey> sorted;
  std::vector<std::size_t> permutation;  // original indices in ascending order
  std::size_t cycles = 0;
  std::size_t phases_executed = 0;
};

/// Sort keys laid out on a P x P register file. Sentinels pad the tail and never reach the output.
inline MdsaResult mdsa_sort(std::vector<SortKey> keys, const SortConfig& cfg) {
  cfg.validate();
  detail::require(keys.size() <= cfg.p * cfg.p, "mdsa_sort: input longer than P*P");
  const std::size_t p = cfg.p;
  const std::size_t count = keys.size();
  keys.resize(p * p, SortKey::sentinel());

  MdsaResult result;
  const std::size_t row_passes = detail::ceil_log2(p) + 1;
  for (std::size_t pass = 0; pass < row_passes; ++pass) {
    for (std::size_t r = 0; r < p; ++r) {  // snake rows
      std::vector<SortKey> line(keys.begin() + static_cast<std::ptrdiff_t>(r * p),
                                keys.begin() + static_cast<std::ptrdiff_t>((r + 1) * p));
      line = dpbs_sort(std::move(line), r % 2 == 0 ? SortDirection::ascending : SortDirection::descending);
      std::copy(line.begin(), line.end(), keys.begin() + static_cast<std::ptrdiff_t>(r * p));
    }
    ++result.phases_executed;
    if (pass + 1 == row_passes) break;
    for (std::size_t c = 0; c < p; ++c) {
      std::vector<SortKey> line(p);
      for (std::size_t r = 0; r < p; ++r) line[r] = keys[r * p + c];
      line = dpbs_sort(std::move(line), SortDirection::ascending);
      for (std::size_t r = 0; r < p; ++r) keys[r * p + c] = line[r];
    }
    ++result.phases_executed;
  }

  result.sorted.reserve(count);
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t k = 0; k < p; ++k) {
      const auto& key = keys[r * p + (r % 2 == 0 ? k : p - 1 - k)];
      if (!key.is_sentinel()) result.sorted.push_back(key);
    }
  result.permutation.reserve(count);
  for (const auto& key : result.sorted) result.permutation.push_back(key.index);
  result.cycles = cfg.local_cycles();
  return result;
}

inline MdsaResult mdsa_sort(std::span<const double> values, const SortConfig& cfg) {
  std::vector<SortKey> keys(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) keys[i] = {values[i], i};
  return mdsa_sort(std::move(keys), cfg);
}

struct MergeResult {
  std::vector<SortKey> merged;
  std::size_t cycles = 0;
};

/// N_t-way merge of ascending runs.
inline MergeResult parallel_merge(const std::vector<std::vector<SortKey>>& runs, const SortConfig& cfg) {
  for (const auto& run : runs)
    if (!std::is_sorted(run.begin(), run.end()))
      throw std::invalid_argument("parallel_merge: run is not sorted ascending");
  MergeResult result;
  std::vector<std::size_t> head(runs.size(), 0);
  std::size_t total = 0;
  for (const auto& run : runs) total += run.size();
  result.merged.reserve(total);
  while (result.merged.size() < total) {
    std::size_t best = runs.size();
    for (std::size_t k = 0; k < runs.size(); ++k) {
      if (head[k] == runs[k].size()) continue;
      if (best == runs.size() || runs[k][head[k]] < runs[best][head[best]]) best = k;
    }
    result.merged.push_back(runs[best][head[best]++]);
  }
  result.cycles = cfg.n + cfg.d_pms;
  return result;
}

struct TwoStageResult {
  std::vector<std::size_t> permutation;
  CycleReport cycles;
};

/// Ascending argsort of `usage` split across `cfg.n_t` tiles of `cfg.n` entries each.
template <class Real>
TwoStageResult two_stage_sort(std::span<const Real> usage, const SortConfig& cfg) {
  cfg.validate();
  detail::require(!usage.empty(), "two_stage_sort: empty usage vector");
  detail::require(usage.size() == cfg.n * cfg.n_t, "two_stage_sort: N != n * N_t");

  std::vector<std::vector<SortKey>> runs(cfg.n_t);
  TwoStageResult result;
  for (std::size_t t = 0; t < cfg.n_t; ++t) {
    std::vector<SortKey> keys(cfg.n);
    for (std::size_t k = 0; k < cfg.n; ++k) {
      const std::size_t idx = t * cfg.n + k;
      keys[k] = {static_cast<double>(usage[idx]), idx};
    }
    runs[t] = mdsa_sort(std::move(keys), cfg).sorted;
  }
  result.cycles.local_cycles = cfg.local_cycles();
  if (cfg.n_t == 1) {
    result.permutation.reserve(cfg.n);
    for (const auto& key : runs[0]) result.permutation.push_back(key.index);
  } else {
    auto merged = parallel_merge(runs, cfg);
    result.permutation.reserve(merged.merged.size());
    for (const auto& key : merged.merged) result.permutation.push_back(key.index);
    result.cycles.global_cycles = merged.cycles;
  }
  result.cycles.total_cycles = result.cycles.local_cycles + result.cycles.global_cycles;
  return result;
}

template <class Real>
TwoStageResult two_stage_sort(std::span<const Real> usage, std::size_t n_t) {
  return two_stage_sort(usage, SortConfig::for_usage(usage.size(), n_t));
}

/// Centralized merge-sort baseline, N * ceil(log2 N) cycles.
inline std::size_t baseline_nlogn_cycles(std::size_t n) { return n * detail::ceil_log2(n); }

}  // namespace hima
