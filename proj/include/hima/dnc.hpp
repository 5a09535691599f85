// SPDX-License-Identifier: Apache-2.0
//
// Reference DNC memory unit: state, interface bundle and the per-step dataflow.
// Write pipeline (content weighting on M_{t-1}, retention, usage, sort,
// allocation, write merge, memory write) completes before the read pipeline
// (linkage with p_{t-1}, precedence, content weighting on M_t, forward/backward
// with w^r_{t-1}, read merge, memory read).
#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hima/approx.hpp"
#include "hima/core.hpp"
#include "hima/kernels.hpp"
#include "hima/sort_engine.hpp"

namespace hima {

struct MemoryGeometry {
  std::size_t N = 0;  // locations
  std::size_t W = 0;  // word width
  std::size_t R = 0;  // read heads

  /// `tall` additionally requires N > W (global memories; DNC-D sub-memories may be square).
  void validate(bool tall = true) const {
    detail::require(N >= 1 && W >= 1 && R >= 1, "MemoryGeometry: N, W, R must be >= 1");
    if (tall) detail::require(N > W, "MemoryGeometry: N must exceed W");
  }
  bool operator==(const MemoryGeometry&) const = default;
};

template <class Real>
struct MemoryState {
  Matrix<Real> memory;         // N x W
  Vector<Real> usage;          // N
  Vector<Real> precedence;     // N
  Matrix<Real> linkage;        // N x N, zero diagonal
  Vector<Real> write_weights;  // N, previous step
  Matrix<Real> read_weights;   // N x R, previous step

  static MemoryState zeros(const MemoryGeometry& g) {
    return {Matrix<Real>(g.N, g.W), Vector<Real>(g.N, 0), Vector<Real>(g.N, 0), Matrix<Real>(g.N, g.N),
            Vector<Real>(g.N, 0), Matrix<Real>(g.N, g.R)};
  }

  MemoryGeometry geometry() const { return {memory.rows(), memory.cols(), read_weights.cols()}; }
  bool operator==(const MemoryState&) const = default;
};

/// One step's post-activation interface vector.
template <class Real>
struct InterfaceInput {
  Vector<Real> write_key;     // W
  Real write_strength = 1;    // >= 1
  Vector<Real> write_vector;  // W
  Vector<Real> erase_vector;  // W, in [0,1]
  Vector<Real> free_gates;    // R, in [0,1]
  Real alloc_gate = 0;        // [0,1]
  Real write_gate = 0;        // [0,1]
  Matrix<Real> read_keys;     // R x W
  Vector<Real> read_strengths;  // R, >= 1
  Matrix<Real> read_modes;    // R x 3 (backward, content, forward), rows on the simplex

  void validate(const MemoryGeometry& g) const {
    auto in01 = [](Real x) { return x >= Real{0} && x <= Real{1}; };
    detail::require(write_key.size() == g.W && write_vector.size() == g.W && erase_vector.size() == g.W,
                    "InterfaceInput: write vectors must have width W");
    detail::require(free_gates.size() == g.R && read_strengths.size() == g.R,
                    "InterfaceInput: per-head vectors must have length R");
    detail::require(read_keys.rows() == g.R && read_keys.cols() == g.W, "InterfaceInput: read keys must be R x W");
    detail::require(read_modes.rows() == g.R && read_modes.cols() == 3, "InterfaceInput: read modes must be R x 3");
    detail::require(write_strength >= Real{1}, "InterfaceInput: write strength must be >= 1");
    detail::require(in01(alloc_gate) && in01(write_gate), "InterfaceInput: gates must lie in [0,1]");
    for (Real v : erase_vector) detail::require(in01(v), "InterfaceInput: erase vector must lie in [0,1]");
    for (Real v : free_gates) detail::require(in01(v), "InterfaceInput: free gates must lie in [0,1]");
    for (Real v : read_strengths) detail::require(v >= Real{1}, "InterfaceInput: read strengths must be >= 1");
    for (std::size_t r = 0; r < g.R; ++r) {
      Real s = 0;
      for (std::size_t m = 0; m < 3; ++m) {
        detail::require(read_modes(r, m) >= Real{0}, "InterfaceInput: read modes must be nonnegative");
        s += read_modes(r, m);
      }
      detail::require(std::abs(static_cast<double>(s) - 1.0) <= 1e-6, "InterfaceInput: read modes must sum to 1");
    }
  }
};

template <class Real>
struct StepIntermediates {
  Vector<Real> content_write;  // w^u
  Vector<Real> retention;      // psi
  Vector<Real> usage;          // u_t
  std::vector<std::size_t> sort_order;  // I^s (kept indices only when skimming)
  Vector<Real> allocation;     // w^a
  Vector<Real> write_weights;  // w^w
  Matrix<Real> read_content;   // r^u, N x R
  Matrix<Real> forward;        // f, N x R
  Matrix<Real> backward;       // b, N x R
  Matrix<Real> read_weights;   // w^r, N x R
};

template <class Real>
struct StepOutput {
  Matrix<Real> read_vectors;  // R x W
  StepIntermediates<Real> intermediates;
};

enum class SortBackend { reference, two_stage };

struct StepOptions {
  SoftmaxMode softmax = SoftmaxMode::exact;
  SkimConfig skim{};
  SortBackend sorter = SortBackend::reference;
  std::size_t sort_tiles = 1;  // N_t used by the two-stage sorter
};

namespace detail {

template <class Real>
Vector<Real> column(const Matrix<Real>& m, std::size_t c) {
  Vector<Real> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, c);
  return out;
}

template <class Real>
std::vector<std::size_t> usage_order(std::span<const Real> usage, const StepOptions& opt) {
  if (opt.skim.dropped(usage.size()) > 0) return stable_argsort(usage, skim_usage(usage, opt.skim));
  if (opt.sorter == SortBackend::two_stage) return two_stage_sort(usage, opt.sort_tiles).permutation;
  return stable_argsort(usage);
}

}  // namespace detail

template <class Real>
std::pair<MemoryState<Real>, StepOutput<Real>> dnc_step(const MemoryState<Real>& state,
                                                        const InterfaceInput<Real>& input,
                                                        const StepOptions& opt = {}) {
  const MemoryGeometry g = state.geometry();
  input.validate(g);
  opt.skim.validate();

  MemoryState<Real> next;
  StepOutput<Real> out;
  auto& im = out.intermediates;

  // soft write
  im.content_write = content_weighting<Real>(state.memory, input.write_key, input.write_strength, opt.softmax);
  im.retention = retention<Real>(input.free_gates, state.read_weights);
  im.usage = usage_update<Real>(state.usage, state.write_weights, im.retention);
  im.sort_order = detail::usage_order<Real>(im.usage, opt);
  if (opt.skim.dropped(g.N) > 0) {
    im.allocation.assign(g.N, Real{0});
    detail::allocate_along<Real>(im.usage, im.sort_order, im.allocation);
  } else {
    im.allocation = allocation<Real>(im.usage, im.sort_order);
  }
  im.write_weights = write_weighting<Real>(im.content_write, im.allocation, input.write_gate, input.alloc_gate);
  next.memory = memory_write<Real>(state.memory, im.write_weights, input.erase_vector, input.write_vector);

  // soft read
  next.linkage = linkage_update<Real>(state.linkage, im.write_weights, state.precedence);
  next.precedence = precedence_update<Real>(state.precedence, im.write_weights);
  im.read_content = Matrix<Real>(g.N, g.R);
  for (std::size_t r = 0; r < g.R; ++r) {
    auto w = content_weighting<Real>(next.memory, input.read_keys.row(r), input.read_strengths[r], opt.softmax);
    for (std::size_t i = 0; i < g.N; ++i) im.read_content(i, r) = w[i];
  }
  auto fb = forward_backward<Real>(next.linkage, state.read_weights);
  im.forward = std::move(fb.forward);
  im.backward = std::move(fb.backward);
  im.read_weights = read_weighting<Real>(input.read_modes, im.backward, im.read_content, im.forward);
  out.read_vectors = memory_read<Real>(next.memory, im.read_weights);

  next.usage = im.usage;
  next.write_weights = im.write_weights;
  next.read_weights = im.read_weights;
  return {std::move(next), std::move(out)};
}

/// First violated state invariant, if any. `check_allocation_sum` skips the
/// telescoping identity when skimming is active.
template <class Real>
std::optional<std::string> check_invariants(const MemoryState<Real>& s, const StepIntermediates<Real>* im = nullptr,
                                            bool check_allocation_sum = true) {
  const double tol = std::is_same_v<Real, float> ? 1e-5 : 1e-9;
  auto in01 = [&](Real x) { return x >= Real{0} && x <= Real{1}; };
  std::ostringstream why;
  const std::size_t n = s.usage.size();
  for (std::size_t i = 0; i < n; ++i)
    if (!in01(s.usage[i])) return (why << "usage[" << i << "] = " << s.usage[i] << " outside [0,1]", why.str());
  for (std::size_t i = 0; i < n; ++i) {
    if (s.linkage(i, i) != Real{0}) return (why << "linkage diagonal L[" << i << "," << i << "] nonzero", why.str());
    for (std::size_t j = 0; j < n; ++j)
      if (!in01(s.linkage(i, j)))
        return (why << "linkage L[" << i << "," << j << "] = " << s.linkage(i, j) << " outside [0,1]", why.str());
  }
  auto simplex_like = [&](std::span<const Real> v, const char* name) -> std::optional<std::string> {
    double total = 0.0;
    for (Real x : v) {
      if (x < Real{0}) return std::string(name) + " has a negative entry";
      total += static_cast<double>(x);
    }
    if (total > 1.0 + tol) return std::string(name) + " sums to " + std::to_string(total) + " > 1";
    return std::nullopt;
  };
  if (auto e = simplex_like(s.precedence, "precedence")) return e;
  if (auto e = simplex_like(s.write_weights, "write weighting")) return e;
  for (std::size_t r = 0; r < s.read_weights.cols(); ++r) {
    auto col = detail::column(s.read_weights, r);
    if (auto e = simplex_like(col, "read weighting")) return e;
  }
  if (im) {
    for (Real x : im->retention)
      if (!in01(x)) return std::string("retention outside [0,1]");
    for (const auto* m : {&im->forward, &im->backward})
      for (Real x : m->data())
        if (x < Real{0} || static_cast<double>(x) > 1.0 + tol) return std::string("forward/backward entry outside [0,1]");
    if (check_allocation_sum) {
      double prod = 1.0;
      for (Real u : im->usage) prod *= static_cast<double>(u);
      const double total = static_cast<double>(sum<Real>(im->allocation));
      const double atol = std::is_same_v<Real, float> ? 1e-5 : 1e-12;
      if (std::abs(total - (1.0 - prod)) > atol)
        return (why << "allocation sums to " << total << ", expected 1 - prod(u) = " << 1.0 - prod, why.str());
    }
  }
  return std::nullopt;
}

}  // namespace hima
