// SPDX-License-Identifier: Apache-2.0
//
// Tiled-architecture model: one CT plus N_t PTs on a NoC. Each DNC kernel is
// mapped under the external and linkage partitions to a per-tile compute cost
// and a list of traffic phases; phases are run through the NoC simulator and
// kernels are separated by barriers.
//
// Functional execution is blockwise: every reduction forms one partial sum per
// tile and combines the partials in tile order, so results differ from the
// single-address-space kernels only by reassociation (and not at all at N_t = 1).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hima/approx.hpp"
#include "hima/core.hpp"
#include "hima/dnc.hpp"
#include "hima/kernels.hpp"
#include "hima/noc.hpp"
#include "hima/partition.hpp"
#include "hima/sort_engine.hpp"

namespace hima {

enum class ModelKind { dnc, dnc_d };

inline const char* to_string(ModelKind m) { return m == ModelKind::dnc ? "dnc" : "dnc-d"; }

inline ModelKind parse_model(std::string_view s) {
  if (s == "dnc") return ModelKind::dnc;
  if (s == "dnc-d") return ModelKind::dnc_d;
  throw std::invalid_argument("unknown model '" + std::string(s) + "'");
}

enum class KernelKind {
  normalize,
  similarity,
  memory_write,
  memory_read,
  retention,
  usage,
  usage_sort,
  allocation,
  write_merge,
  linkage,
  precedence,
  forward_backward,
  read_merge
};

/// Execution order within one step: soft write, then soft read.
inline constexpr std::array<KernelKind, 13> kKernelOrder{
    KernelKind::normalize,  KernelKind::similarity,  KernelKind::retention,   KernelKind::usage,
    KernelKind::usage_sort, KernelKind::allocation,  KernelKind::write_merge, KernelKind::memory_write,
    KernelKind::linkage,    KernelKind::precedence,  KernelKind::forward_backward,
    KernelKind::read_merge, KernelKind::memory_read};

inline const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::normalize: return "normalize";
    case KernelKind::similarity: return "similarity";
    case KernelKind::memory_write: return "memory-write";
    case KernelKind::memory_read: return "memory-read";
    case KernelKind::retention: return "retention";
    case KernelKind::usage: return "usage";
    case KernelKind::usage_sort: return "usage-sort";
    case KernelKind::allocation: return "allocation";
    case KernelKind::write_merge: return "write-merge";
    case KernelKind::linkage: return "linkage";
    case KernelKind::precedence: return "precedence";
    case KernelKind::forward_backward: return "forward-backward";
    case KernelKind::read_merge: return "read-merge";
  }
  return "?";
}

/// Access kernels touch the external memory; state kernels maintain history.
inline bool is_access_kernel(KernelKind k) {
  return k == KernelKind::normalize || k == KernelKind::similarity || k == KernelKind::memory_write ||
         k == KernelKind::memory_read;
}

inline const char* kernel_type(KernelKind k) { return is_access_kernel(k) ? "access" : "state"; }

inline bool is_reduction_kernel(KernelKind k) {
  switch (k) {
    case KernelKind::normalize:
    case KernelKind::similarity:
    case KernelKind::memory_read:
    case KernelKind::allocation:
    case KernelKind::precedence:
    case KernelKind::forward_backward: return true;
    default: return false;
  }
}

struct SortTiming {
  std::optional<std::size_t> d_dpbs;  // default: derived from P
  std::size_t d_pms = 7;
};

struct ArchConfig {
  MemoryGeometry geometry{1024, 64, 4};
  std::size_t n_t = 16;
  std::optional<PartitionSpec> ext_partition;      // unset: lowest content + read traffic
  std::optional<PartitionSpec> linkage_partition;  // unset: lowest linkage traffic
  TopologyKind topology = TopologyKind::hima_multimode;
  SimParams router{};
  std::size_t pe_lanes = 64;
  ModelKind model = ModelKind::dnc;
  SkimConfig skim{};
  SoftmaxMode softmax = SoftmaxMode::exact;
  SortTiming sort{};

  PartitionSpec external() const {
    if (model == ModelKind::dnc_d) return {1, 1};
    return ext_partition.value_or(optimal_external(geometry.N, geometry.W, n_t));
  }
  PartitionSpec linkage() const {
    if (model == ModelKind::dnc_d) return {1, 1};
    return linkage_partition.value_or(optimal_linkage(n_t, geometry.N));
  }

  /// Geometry each PT holds: the whole memory's share under DNC-D, the global memory otherwise.
  MemoryGeometry local_geometry() const {
    return model == ModelKind::dnc_d ? MemoryGeometry{geometry.N / n_t, geometry.W, geometry.R} : geometry;
  }

  void validate() const {
    geometry.validate(true);
    detail::require(n_t >= 1, "ArchConfig: N_t must be >= 1");
    detail::require(geometry.N % n_t == 0, "ArchConfig: N must be divisible by N_t");
    detail::require(pe_lanes >= 1, "ArchConfig: pe_lanes must be >= 1");
    skim.validate();
    if (model == ModelKind::dnc) {
      const auto e = external();
      const auto l = linkage();
      detail::require(e.tiles() == n_t, "ArchConfig: external partition must cover N_t tiles");
      detail::require(l.tiles() == n_t, "ArchConfig: linkage partition must cover N_t tiles");
      detail::require(geometry.N % e.n_h == 0 && geometry.W % e.n_w == 0,
                      "ArchConfig: external partition must divide N x W");
      detail::require(geometry.N % l.n_h == 0 && geometry.N % l.n_w == 0,
                      "ArchConfig: linkage partition must divide N x N");
    }
    (void)build_topology(topology, n_t);  // throws on an unsupported (kind, N_t)
  }
};

/// Words of one step's interface vector: keys W(R+1), write and erase vectors
/// 2W, strengths R+1, free gates R, two gates, read modes 3R.
inline std::size_t interface_words(const MemoryGeometry& g) { return g.W * (g.R + 3) + 5 * g.R + 3; }

// ---------------------------------------------------------------------------
// compute model

inline std::size_t softmax_cycles_per_element(SoftmaxMode mode) { return mode == SoftmaxMode::approx ? 1 : 10; }

/// PE-array cycles for E elements on one tile. Elementwise kernels take
/// ceil(E / lanes); reductions add a log-depth tree; the usage sort uses the
/// local sort-engine formula for an E-entry slice.
inline std::size_t compute_cycles(KernelKind kernel, std::size_t elements, std::size_t lanes,
                                  std::size_t softmax_elements = 0, SoftmaxMode mode = SoftmaxMode::exact) {
  detail::require(lanes >= 1, "compute_cycles: lanes must be >= 1");
  std::size_t cycles = 0;
  if (elements > 0) {
    if (kernel == KernelKind::usage_sort) {
      cycles = SortConfig::for_usage(elements, 1).local_cycles();
    } else {
      cycles = detail::ceil_div(elements, lanes);
      if (is_reduction_kernel(kernel)) cycles += detail::ceil_log2(lanes);
    }
  }
  return cycles + softmax_elements * softmax_cycles_per_element(mode);
}

/// Per-step compute cycles of one kernel on the slowest tile.
inline std::size_t kernel_compute_cycles(KernelKind k, const ArchConfig& cfg) {
  const auto g = cfg.local_geometry();
  const bool distributed = cfg.model == ModelKind::dnc;
  const std::size_t tiles = distributed ? cfg.n_t : 1;
  const auto e = cfg.external();
  const auto l = cfg.linkage();
  const std::size_t lanes = cfg.pe_lanes;
  const std::size_t rows_e = g.N / e.n_h;
  const std::size_t mem_block = rows_e * (g.W / e.n_w);
  const std::size_t slice = g.N / tiles;
  const std::size_t link_block = (g.N / l.n_h) * (g.N / l.n_w);
  const std::size_t content_calls = 1 + g.R;
  const std::size_t kept = g.N - cfg.skim.dropped(g.N);

  switch (k) {
    case KernelKind::normalize: return content_calls * compute_cycles(k, mem_block, lanes);
    case KernelKind::similarity: return content_calls * compute_cycles(k, mem_block, lanes, rows_e, cfg.softmax);
    case KernelKind::memory_write: return compute_cycles(k, mem_block, lanes);
    case KernelKind::memory_read: {
      std::size_t c = g.R * compute_cycles(k, mem_block, lanes);
      // DNC-D: the CT forms the alpha-weighted sum of N_t local read vectors
      if (!distributed && cfg.n_t > 1)
        c += compute_cycles(KernelKind::read_merge, g.R * g.W * cfg.n_t, lanes);
      return c;
    }
    case KernelKind::retention: return compute_cycles(k, slice * g.R, lanes);
    case KernelKind::usage: return compute_cycles(k, slice, lanes);
    case KernelKind::usage_sort: {
      const auto sc = SortConfig::for_usage(g.N, tiles, cfg.sort.d_dpbs, cfg.sort.d_pms);
      return sc.local_cycles() + sc.global_cycles();
    }
    case KernelKind::allocation: return compute_cycles(k, detail::ceil_div(kept, tiles), lanes);
    case KernelKind::write_merge: return compute_cycles(k, slice, lanes);
    case KernelKind::linkage: return compute_cycles(k, link_block, lanes);
    case KernelKind::precedence: return compute_cycles(k, slice, lanes);
    case KernelKind::forward_backward: return g.R * compute_cycles(k, 2 * link_block, lanes);
    case KernelKind::read_merge: return compute_cycles(k, slice * g.R, lanes);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// traffic model

/// One barrier-delimited batch of messages, repeated `repeat` times per step.
struct TrafficPhase {
  std::string name;
  RouterMode mode = RouterMode::full;  // preferred; falls back to full when something is unreachable
  TrafficTrace messages;
  std::size_t repeat = 1;
};

namespace detail {

inline void add_message(TrafficTrace& trace, std::size_t src, std::size_t dst, std::size_t words, std::string tag) {
  if (words > 0) trace.push_back({0, src, dst, words, std::move(tag)});
}

inline std::size_t overlap(std::size_t a0, std::size_t a1, std::size_t b0, std::size_t b1) {
  const std::size_t lo = std::max(a0, b0), hi = std::min(a1, b1);
  return hi > lo ? hi - lo : 0;
}

inline std::vector<TrafficPhase> dnc_phases(KernelKind k, const ArchConfig& cfg) {
  const auto& g = cfg.geometry;
  const std::size_t nt = cfg.n_t;
  const std::size_t ct = nt;
  const auto e = cfg.external();
  const auto l = cfg.linkage();
  const std::size_t eh = e.n_h, ew = e.n_w, lh = l.n_h, lw = l.n_w;
  auto ext = [&](std::size_t h, std::size_t w) { return h * ew + w; };
  auto lnk = [&](std::size_t a, std::size_t b) { return a * lw + b; };
  const std::string name = to_string(k);
  // phase() hands out references into `phases`; the reservation keeps them valid
  constexpr std::size_t max_phases = 3;
  std::vector<TrafficPhase> phases;
  phases.reserve(max_phases);
  auto phase = [&](std::string suffix, RouterMode mode, std::size_t repeat) -> TrafficTrace& {
    detail::require(phases.size() < max_phases, "dnc_phases: too many phases for one kernel");
    phases.push_back({name + "/" + suffix, mode, {}, repeat});
    return phases.back().messages;
  };
  const std::size_t content_calls = 1 + g.R;

  switch (k) {
    case KernelKind::normalize: {
      if (nt > 1) {
        auto& iface = phase("interface", RouterMode::broadcast_collect, 1);
        for (std::size_t t = 0; t < nt; ++t) add_message(iface, ct, t, interface_words(g), "interface");
      }
      auto& up = phase("partial-norms", RouterMode::ring, content_calls);
      auto& down = phase("norms", RouterMode::ring, content_calls);
      for (std::size_t h = 0; h < eh; ++h)
        for (std::size_t w = 1; w < ew; ++w) {
          add_message(up, ext(h, w), ext(h, 0), g.N / eh, "partial-norms");
          add_message(down, ext(h, 0), ext(h, w), g.N / eh, "norms");
        }
      break;
    }
    case KernelKind::similarity: {
      auto& up = phase("collect", RouterMode::full, content_calls);
      auto& down = phase("broadcast", RouterMode::full, content_calls);
      for (std::size_t h = 1; h < eh; ++h) {
        add_message(up, ext(h, 0), ext(0, 0), 1, "psum");
        add_message(down, ext(0, 0), ext(h, 0), 1, "normalizer");
      }
      break;
    }
    case KernelKind::memory_write: {
      auto& tr = phase("write-weights", RouterMode::ring, 1);
      for (std::size_t h = 0; h < eh; ++h)
        for (std::size_t w = 1; w < ew; ++w) add_message(tr, ext(h, 0), ext(h, w), g.N / eh, "write-weights");
      break;
    }
    case KernelKind::memory_read: {
      auto& diag = phase("transpose", RouterMode::diagonal, g.R);
      for (std::size_t w = 0; w < ew; ++w)
        for (std::size_t w2 = 0; w2 < ew; ++w2)
          if (w != w2) add_message(diag, ext(w % eh, w), ext(w2 % eh, w2), g.N / nt, "transpose");
      auto& red = phase("reduce", RouterMode::mesh_xy, g.R);
      for (std::size_t w = 0; w < ew; ++w)
        for (std::size_t h = 1; h < eh; ++h) add_message(red, ext(h, w), ext(0, w), g.W / ew, "psum");
      if (nt > 1) {
        auto& out = phase("readout", RouterMode::broadcast_collect, g.R);
        for (std::size_t w = 0; w < ew; ++w) add_message(out, ext(0, w), ct, g.W / ew, "read-vector");
      }
      break;
    }
    case KernelKind::usage_sort: {
      if (nt > 1) {
        auto& up = phase("runs", RouterMode::broadcast_collect, 1);
        auto& down = phase("order", RouterMode::broadcast_collect, 1);
        for (std::size_t t = 0; t < nt; ++t) {
          add_message(up, t, ct, g.N / nt, "sorted-run");
          add_message(down, ct, t, g.N / nt, "order");
        }
      }
      break;
    }
    case KernelKind::allocation: {
      auto& tr = phase("carry", RouterMode::ring, 1);
      for (std::size_t t = 0; t + 1 < nt; ++t) add_message(tr, t, t + 1, 1, "carry");
      break;
    }
    case KernelKind::linkage: {
      // block (a, b) needs w^w over its rows and w^w, p_{t-1} over its columns;
      // PT t owns state entries [t N/N_t, (t+1) N/N_t)
      auto& tr = phase("gather", RouterMode::full, 1);
      const std::size_t slice = g.N / nt, rows = g.N / lh, cols = g.N / lw;
      for (std::size_t a = 0; a < lh; ++a)
        for (std::size_t b = 0; b < lw; ++b)
          for (std::size_t o = 0; o < nt; ++o) {
            if (o == lnk(a, b)) continue;
            const std::size_t words = overlap(o * slice, (o + 1) * slice, a * rows, (a + 1) * rows) +
                                      2 * overlap(o * slice, (o + 1) * slice, b * cols, (b + 1) * cols);
            add_message(tr, o, lnk(a, b), words, "write-weights");
          }
      break;
    }
    case KernelKind::precedence: {
      auto& up = phase("collect", RouterMode::full, 1);
      auto& down = phase("broadcast", RouterMode::full, 1);
      for (std::size_t t = 1; t < nt; ++t) {
        add_message(up, t, 0, 1, "psum");
        add_message(down, 0, t, 1, "sum");
      }
      break;
    }
    case KernelKind::forward_backward: {
      auto& diag = phase("transpose", RouterMode::diagonal, g.R);
      for (std::size_t a = 0; a < lh; ++a)
        for (std::size_t a2 = 0; a2 < lh; ++a2)
          if (a != a2) add_message(diag, lnk(a, a % lw), lnk(a2, a2 % lw), g.N / nt, "forward-operand");
      for (std::size_t b = 0; b < lw; ++b)
        for (std::size_t b2 = 0; b2 < lw; ++b2)
          if (b != b2) add_message(diag, lnk(b % lh, b), lnk(b2 % lh, b2), g.N / nt, "backward-operand");
      auto& ring = phase("reduce", RouterMode::ring, g.R);
      for (std::size_t t = 0; t < nt; ++t) {
        add_message(ring, t, (t + 1) % nt, g.N / lh, "forward-psum");
        add_message(ring, t, (t + 1) % nt, g.N / lw, "backward-psum");
      }
      break;
    }
    case KernelKind::retention:
    case KernelKind::usage:
    case KernelKind::write_merge:
    case KernelKind::read_merge: break;
  }
  return phases;
}

inline std::vector<TrafficPhase> dncd_phases(KernelKind k, const ArchConfig& cfg) {
  const auto& g = cfg.geometry;
  const std::size_t nt = cfg.n_t;
  std::vector<TrafficPhase> phases;
  if (nt == 1) return phases;
  if (k == KernelKind::normalize) {
    phases.push_back({"normalize/interface", RouterMode::broadcast_collect, {}, 1});
    for (std::size_t t = 0; t < nt; ++t) add_message(phases.back().messages, nt, t, interface_words(g), "interface");
  } else if (k == KernelKind::memory_read) {
    phases.push_back({"memory-read/readout", RouterMode::broadcast_collect, {}, 1});
    for (std::size_t t = 0; t < nt; ++t) add_message(phases.back().messages, t, nt, g.R * g.W, "read-vectors");
  }
  return phases;
}

}  // namespace detail

/// Traffic phases of one kernel for one step.
inline std::vector<TrafficPhase> kernel_traffic(KernelKind k, const ArchConfig& cfg) {
  return cfg.model == ModelKind::dnc ? detail::dnc_phases(k, cfg) : detail::dncd_phases(k, cfg);
}

/// Every message of one invocation of the kernel, phases concatenated.
inline TrafficTrace generate_kernel_trace(KernelKind k, const ArchConfig& cfg) {
  TrafficTrace out;
  for (auto& p : kernel_traffic(k, cfg))
    for (auto& m : p.messages) out.push_back(std::move(m));
  return out;
}

struct WordCount {
  std::uint64_t inter_pt = 0;  // PT to PT, including a tile's transfers to itself
  std::uint64_t ct_pt = 0;     // one endpoint is the CT
};

inline WordCount count_words(const TrafficTrace& trace, std::size_t n_t) {
  WordCount c;
  for (const auto& m : trace) (m.src < n_t && m.dst < n_t ? c.inter_pt : c.ct_pt) += m.words;
  return c;
}

// ---------------------------------------------------------------------------
// timing

struct KernelReport {
  KernelKind kernel = KernelKind::normalize;
  std::uint64_t compute_cycles = 0;
  std::uint64_t traffic_cycles = 0;
  std::uint64_t total_cycles = 0;
  std::uint64_t inter_pt_words = 0;
  std::uint64_t ct_pt_words = 0;

  bool operator==(const KernelReport&) const = default;
};

struct SimReport {
  std::vector<KernelReport> kernels;  // one step, in execution order
  std::uint64_t step_cycles = 0;
  std::size_t steps = 0;
  std::uint64_t total_cycles = 0;
  std::uint64_t inter_pt_flits = 0;  // over all steps
  std::uint64_t ct_pt_flits = 0;
  std::uint64_t noc_stalls = 0;      // per step
  std::uint64_t baseline_step_cycles = 0;
  double speedup = 1.0;
  double max_rel_error = 0.0;

  bool operator==(const SimReport&) const = default;
};

/// NoC cycles of one phase. Transfers a tile makes to itself are buffer moves
/// and cost no NoC time. On the multi-mode grid the preferred mode is used when
/// it reaches every destination, otherwise the phase runs in full mode.
inline std::uint64_t phase_cycles(const TrafficPhase& phase, const Topology& topo, const SimParams& params,
                                  std::uint64_t* stalls = nullptr) {
  TrafficTrace remote;
  for (const auto& m : phase.messages)
    if (m.src != m.dst) remote.push_back(m);
  if (remote.empty()) return 0;
  RouterMode mode = RouterMode::full;
  if (is_grid(topo.kind())) {
    mode = phase.mode;
    try {
      for (const auto& m : remote) (void)detail::route_links(topo, mode, m.src, m.dst);
    } catch (const unreachable_error&) {
      mode = RouterMode::full;
    }
  }
  const auto report = simulate(remote, topo, mode, params);
  if (stalls) *stalls += report.stalls * phase.repeat;
  return report.finish_cycle;
}

/// Per-step cycle and traffic breakdown; independent of the data.
inline SimReport step_timing(const ArchConfig& cfg) {
  cfg.validate();
  const auto topo = build_topology(cfg.topology, cfg.n_t);
  SimReport r;
  for (KernelKind k : kKernelOrder) {
    KernelReport kr;
    kr.kernel = k;
    kr.compute_cycles = kernel_compute_cycles(k, cfg);
    for (const auto& phase : kernel_traffic(k, cfg)) {
      kr.traffic_cycles += phase.repeat * phase_cycles(phase, topo, cfg.router, &r.noc_stalls);
      const auto words = count_words(phase.messages, cfg.n_t);
      kr.inter_pt_words += phase.repeat * words.inter_pt;
      kr.ct_pt_words += phase.repeat * words.ct_pt;
    }
    // the memory write streams its operands in as they arrive
    kr.total_cycles = k == KernelKind::memory_write ? std::max(kr.compute_cycles, kr.traffic_cycles)
                                                     : kr.compute_cycles + kr.traffic_cycles;
    r.step_cycles += kr.total_cycles;
    r.inter_pt_flits += kr.inter_pt_words;
    r.ct_pt_flits += kr.ct_pt_words;
    r.kernels.push_back(kr);
  }
  return r;
}

/// The same model on a single tile: compute only, no NoC traffic.
inline ArchConfig single_tile(ArchConfig cfg) {
  cfg.n_t = 1;
  cfg.ext_partition.reset();
  cfg.linkage_partition.reset();
  return cfg;
}

/// Per-step timing for `steps` steps, with the speedup over a single tile filled in.
inline SimReport timing_report(const ArchConfig& cfg, std::size_t steps) {
  SimReport r = step_timing(cfg);
  r.steps = steps;
  r.total_cycles = r.step_cycles * steps;
  r.inter_pt_flits *= steps;
  r.ct_pt_flits *= steps;
  r.baseline_step_cycles = cfg.n_t == 1 ? r.step_cycles : step_timing(single_tile(cfg)).step_cycles;
  r.speedup = r.step_cycles == 0 ? 1.0
                                 : static_cast<double>(r.baseline_step_cycles) / static_cast<double>(r.step_cycles);
  return r;
}

struct SweepRow {
  ModelKind model = ModelKind::dnc;
  TopologyKind topology = TopologyKind::hima_multimode;
  std::size_t n_t = 1;
  std::uint64_t step_cycles = 0;
  double speedup = 1.0;
};

/// Per-step cycles and speedup over N_t = 1 for every (topology, N_t) pair.
/// Pairs a topology cannot realize (a tree over a non-power-of-two N_t) are skipped.
inline std::vector<SweepRow> speedup_sweep(const ArchConfig& base, const std::vector<std::size_t>& n_ts,
                                           const std::vector<TopologyKind>& topologies) {
  std::vector<SweepRow> rows;
  const std::uint64_t baseline = step_timing(single_tile(base)).step_cycles;
  for (TopologyKind kind : topologies)
    for (std::size_t n_t : n_ts) {
      ArchConfig cfg = base;
      cfg.topology = kind;
      cfg.n_t = n_t;
      cfg.ext_partition.reset();
      cfg.linkage_partition.reset();
      if ((kind == TopologyKind::h_tree || kind == TopologyKind::binary_tree_x) && !detail::is_pow2(n_t)) continue;
      const auto r = step_timing(cfg);
      rows.push_back({cfg.model, kind, n_t, r.step_cycles,
                      static_cast<double>(baseline) / static_cast<double>(r.step_cycles)});
    }
  return rows;
}

// ---------------------------------------------------------------------------
// functional tiled execution

namespace detail {

/// Sum of x(k) for k in [0, n), one partial per block of `block` entries, partials added in block order.
template <class Real, class F>
Real blocked_sum(std::size_t n, std::size_t block, F&& x) {
  Real acc = 0;
  for (std::size_t b0 = 0; b0 < n; b0 += block) {
    Real part = 0;
    for (std::size_t k = b0; k < b0 + block; ++k) part += x(k);
    acc += part;
  }
  return acc;
}

template <class Real>
Vector<Real> tiled_content_weighting(const Matrix<Real>& m, std::span<const Real> key, Real strength,
                                     SoftmaxMode mode, const PartitionSpec& e) {
  const std::size_t n = m.rows(), w = m.cols();
  const std::size_t cols = w / e.n_w, rows = n / e.n_h;
  const Real key_norm = std::sqrt(blocked_sum<Real>(w, cols, [&](std::size_t j) { return key[j] * key[j]; }));
  Vector<Real> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = m.row(i);
    const Real row_norm = std::sqrt(blocked_sum<Real>(w, cols, [&](std::size_t j) { return row[j] * row[j]; }));
    const Real d = blocked_sum<Real>(w, cols, [&](std::size_t j) { return row[j] * key[j]; });
    c[i] = d / (row_norm * key_norm + static_cast<Real>(kCosineEpsilon));
    c[i] *= strength;
  }
  const Real peak = *std::max_element(c.begin(), c.end());
  Vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = mode == SoftmaxMode::exact ? std::exp(c[i] - peak)
                                        : static_cast<Real>(default_exp_table()(static_cast<double>(c[i] - peak)));
  const Real total = blocked_sum<Real>(n, rows, [&](std::size_t i) { return out[i]; });
  for (auto& v : out) v /= total;
  return out;
}

template <class Real>
ForwardBackward<Real> tiled_forward_backward(const Matrix<Real>& link, const Matrix<Real>& w_prev,
                                             const PartitionSpec& l) {
  const std::size_t n = link.rows(), heads = w_prev.cols();
  const std::size_t rows = n / l.n_h, cols = n / l.n_w;
  ForwardBackward<Real> fb{Matrix<Real>(n, heads), Matrix<Real>(n, heads)};
  for (std::size_t r = 0; r < heads; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      fb.forward(i, r) = blocked_sum<Real>(n, cols, [&](std::size_t j) { return link(i, j) * w_prev(j, r); });
      fb.backward(i, r) = blocked_sum<Real>(n, rows, [&](std::size_t j) { return link(j, i) * w_prev(j, r); });
    }
  return fb;
}

template <class Real>
Matrix<Real> tiled_memory_read(const Matrix<Real>& m, const Matrix<Real>& wr, const PartitionSpec& e) {
  const std::size_t rows = m.rows() / e.n_h;
  Matrix<Real> out(wr.cols(), m.cols());
  for (std::size_t r = 0; r < wr.cols(); ++r)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(r, j) = blocked_sum<Real>(m.rows(), rows, [&](std::size_t i) { return m(i, j) * wr(i, r); });
  return out;
}

/// One step executed block by block on the tiles of `cfg`.
template <class Real>
std::pair<MemoryState<Real>, StepOutput<Real>> tiled_step(const MemoryState<Real>& state,
                                                          const InterfaceInput<Real>& in, const ArchConfig& cfg) {
  const auto g = state.geometry();
  in.validate(g);
  const auto e = cfg.external();
  const auto l = cfg.linkage();
  const std::size_t slice = g.N / cfg.n_t;
  StepOptions opt{cfg.softmax, cfg.skim, SortBackend::two_stage, cfg.n_t};

  MemoryState<Real> next;
  StepOutput<Real> out;
  auto& im = out.intermediates;
  im.content_write = tiled_content_weighting<Real>(state.memory, in.write_key, in.write_strength, cfg.softmax, e);
  im.retention = retention<Real>(in.free_gates, state.read_weights);
  im.usage = usage_update<Real>(state.usage, state.write_weights, im.retention);
  im.sort_order = usage_order<Real>(im.usage, opt);
  im.allocation.assign(g.N, Real{0});
  allocate_along<Real>(im.usage, im.sort_order, im.allocation);
  im.write_weights = write_weighting<Real>(im.content_write, im.allocation, in.write_gate, in.alloc_gate);
  next.memory = memory_write<Real>(state.memory, im.write_weights, in.erase_vector, in.write_vector);

  next.linkage = linkage_update<Real>(state.linkage, im.write_weights, state.precedence);
  const Real written = blocked_sum<Real>(g.N, slice, [&](std::size_t i) { return im.write_weights[i]; });
  next.precedence.resize(g.N);
  for (std::size_t i = 0; i < g.N; ++i)
    next.precedence[i] = (Real{1} - written) * state.precedence[i] + im.write_weights[i];
  im.read_content = Matrix<Real>(g.N, g.R);
  for (std::size_t r = 0; r < g.R; ++r) {
    auto w = tiled_content_weighting<Real>(next.memory, in.read_keys.row(r), in.read_strengths[r], cfg.softmax, e);
    for (std::size_t i = 0; i < g.N; ++i) im.read_content(i, r) = w[i];
  }
  auto fb = tiled_forward_backward<Real>(next.linkage, state.read_weights, l);
  im.forward = std::move(fb.forward);
  im.backward = std::move(fb.backward);
  im.read_weights = read_weighting<Real>(in.read_modes, im.backward, im.read_content, im.forward);
  out.read_vectors = tiled_memory_read<Real>(next.memory, im.read_weights, e);

  next.usage = im.usage;
  next.write_weights = im.write_weights;
  next.read_weights = im.read_weights;
  return {std::move(next), std::move(out)};
}

template <class Real>
double equivalence_tolerance() {
  return std::is_same_v<Real, float> ? 1e-4 : 1e-9;
}

}  // namespace detail

template <class Real>
struct RunResult {
  std::vector<Matrix<Real>> read_vectors;  // one R x W matrix per step
  SimReport report;
};

/// Runs the script on the tiled model and checks every kernel's output against
/// the single-address-space reference.
///
/// Each tiled step starts from the reference state. Reassociated sums can split
/// usage values the reference holds exactly equal, and the usage sort turns a
/// one-ulp split into a different allocation, so free-running trajectories are
/// not comparable past the first near-tie. Within a step the sort input is
/// elementwise and therefore identical.
template <class Real>
RunResult<Real> run_dnc(const ArchConfig& cfg, const std::vector<InterfaceInput<Real>>& script) {
  detail::require(cfg.model == ModelKind::dnc, "run_dnc: config model must be dnc");
  cfg.validate();
  RunResult<Real> result;
  result.report = timing_report(cfg, script.size());

  auto ref = MemoryState<Real>::zeros(cfg.geometry);
  const StepOptions ref_opt{cfg.softmax, cfg.skim, SortBackend::reference, 1};
  const double tol = detail::equivalence_tolerance<Real>();
  double worst = 0.0;
  for (std::size_t t = 0; t < script.size(); ++t) {
    auto [tiled_next, tiled_out] = detail::tiled_step(ref, script[t], cfg);
    auto [ref_next, ref_out] = dnc_step(ref, script[t], ref_opt);
    const auto& a = tiled_out.intermediates;
    const auto& b = ref_out.intermediates;
    auto check = [&](const char* kernel, std::span<const Real> x, std::span<const Real> y) {
      const double err = normwise_rel_error<Real>(x, y);
      worst = std::max(worst, err);
      if (!(err <= tol)) throw equivalence_error(kernel, t, err);
    };
    check("similarity", a.content_write, b.content_write);
    check("usage", a.usage, b.usage);
    check("allocation", a.allocation, b.allocation);
    check("write-merge", a.write_weights, b.write_weights);
    check("memory-write", tiled_next.memory.data(), ref_next.memory.data());
    check("linkage", tiled_next.linkage.data(), ref_next.linkage.data());
    check("precedence", tiled_next.precedence, ref_next.precedence);
    check("similarity", a.read_content.data(), b.read_content.data());
    check("forward-backward", a.forward.data(), b.forward.data());
    check("forward-backward", a.backward.data(), b.backward.data());
    check("read-merge", a.read_weights.data(), b.read_weights.data());
    check("memory-read", tiled_out.read_vectors.data(), ref_out.read_vectors.data());
    result.read_vectors.push_back(std::move(tiled_out.read_vectors));
    ref = std::move(ref_next);
  }
  result.report.max_rel_error = worst;
  return result;
}

/// Merge weights of the distributed model: alpha(i, r) weighs tile i's read vector for head r.
struct DncdConfig {
  Matrix<double> alpha;  // N_t x R

  /// One weight per tile shared by every head.
  static DncdConfig shared(std::span<const double> per_tile, std::size_t heads) {
    DncdConfig c{Matrix<double>(per_tile.size(), heads)};
    for (std::size_t i = 0; i < per_tile.size(); ++i)
      for (std::size_t r = 0; r < heads; ++r) c.alpha(i, r) = per_tile[i];
    return c;
  }
  static DncdConfig uniform(std::size_t tiles, std::size_t heads) {
    std::vector<double> w(tiles, 1.0 / static_cast<double>(tiles));
    return shared(w, heads);
  }

  void validate(std::size_t tiles, std::size_t heads) const {
    detail::require(alpha.rows() == tiles && alpha.cols() == heads, "DncdConfig: alpha must be N_t x R");
    for (double a : alpha.data()) detail::require(a >= 0.0 && a <= 1.0, "DncdConfig: alpha must lie in [0,1]");
  }
};

/// Distributed model: every PT runs the full memory unit on its own N/N_t rows
/// with its own interface vector; the CT combines the local read vectors.
template <class Real>
RunResult<Real> run_dncd(const ArchConfig& cfg, const DncdConfig& dncd,
                         const std::vector<std::vector<InterfaceInput<Real>>>& tile_scripts) {
  detail::require(cfg.model == ModelKind::dnc_d, "run_dncd: config model must be dnc-d");
  cfg.validate();
  const auto local = cfg.local_geometry();
  local.validate(false);
  dncd.validate(cfg.n_t, local.R);
  detail::require(tile_scripts.size() == cfg.n_t, "run_dncd: need one script per tile");
  const std::size_t steps = tile_scripts.front().size();
  for (const auto& s : tile_scripts) detail::require(s.size() == steps, "run_dncd: tile scripts differ in length");

  RunResult<Real> result;
  result.report = timing_report(cfg, steps);
  const StepOptions opt{cfg.softmax, cfg.skim, SortBackend::reference, 1};
  std::vector<MemoryState<Real>> states(cfg.n_t, MemoryState<Real>::zeros(local));
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix<Real> v(local.R, local.W);
    for (std::size_t tile = 0; tile < cfg.n_t; ++tile) {
      auto [next, out] = dnc_step(states[tile], tile_scripts[tile][t], opt);
      for (std::size_t r = 0; r < local.R; ++r)
        for (std::size_t j = 0; j < local.W; ++j)
          v(r, j) += static_cast<Real>(dncd.alpha(tile, r)) * out.read_vectors(r, j);
      states[tile] = std::move(next);
    }
    result.read_vectors.push_back(std::move(v));
  }
  return result;
}

}  // namespace hima
