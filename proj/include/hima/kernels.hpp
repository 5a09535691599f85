// SPDX-License-Identifier: Apache-2.0
//
// The memory-unit kernels, one function each, in single-address-space form.
// These are the golden model the tiled simulator is checked against.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "hima/approx.hpp"
#include "hima/core.hpp"

namespace hima {

/// Added to the cosine denominator so zero rows or zero keys give similarity 0.
inline constexpr double kCosineEpsilon = 1e-6;

template <class Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  Real acc = 0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

template <class Real>
Vector<Real> cosine_similarity(const Matrix<Real>& memory, std::span<const Real> key) {
  detail::require(key.size() == memory.cols(), "cosine_similarity: key width mismatch");
  const Real key_norm = std::sqrt(dot(key, key));
  Vector<Real> out(memory.rows());
  for (std::size_t i = 0; i < memory.rows(); ++i) {
    auto row = memory.row(i);
    const Real row_norm = std::sqrt(dot<Real>(row, row));
    out[i] = dot<Real>(row, key) / (row_norm * key_norm + static_cast<Real>(kCosineEpsilon));
  }
  return out;
}

/// softmax(strength * cosine(M[i,:], key)).
template <class Real>
Vector<Real> content_weighting(const Matrix<Real>& memory, std::span<const Real> key, Real strength,
                               SoftmaxMode mode = SoftmaxMode::exact) {
  auto c = cosine_similarity(memory, key);
  for (auto& v : c) v *= strength;
  return softmax<Real>(c, mode);
}

/// psi_i = prod_r (1 - gF[r] * wR_prev[i, r]).
template <class Real>
Vector<Real> retention(std::span<const Real> free_gates, const Matrix<Real>& read_weights_prev) {
  detail::require(free_gates.size() == read_weights_prev.cols(), "retention: head count mismatch");
  Vector<Real> psi(read_weights_prev.rows(), Real{1});
  for (std::size_t i = 0; i < psi.size(); ++i)
    for (std::size_t r = 0; r < free_gates.size(); ++r)
      psi[i] *= Real{1} - free_gates[r] * read_weights_prev(i, r);
  return psi;
}

template <class Real>
Vector<Real> usage_update(std::span<const Real> usage_prev, std::span<const Real> write_weights_prev,
                          std::span<const Real> psi) {
  Vector<Real> u(usage_prev.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = (usage_prev[i] + write_weights_prev[i] - usage_prev[i] * write_weights_prev[i]) * psi[i];
  return u;
}

/// Allocation weighting from usage and its ascending order.
template <class Real>
Vector<Real> allocation(std::span<const Real> usage, std::span<const std::size_t> order) {
  std::vector<char> seen(usage.size(), 0);
  if (order.size() != usage.size())
    throw std::invalid_argument("allocation: order is not a permutation of 0..N-1");
  for (std::size_t idx : order) {
    if (idx >= usage.size() || seen[idx])
      throw std::invalid_argument("allocation: order is not a permutation of 0..N-1");
    seen[idx] = 1;
  }
  Vector<Real> out(usage.size(), Real{0});
  detail::allocate_along<Real>(usage, order, out);
  return out;
}

template <class Real>
Vector<Real> write_weighting(std::span<const Real> content, std::span<const Real> alloc, Real write_gate,
                             Real alloc_gate) {
  Vector<Real> w(content.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = write_gate * (alloc_gate * alloc[i] + (Real{1} - alloc_gate) * content[i]);
  return w;
}

/// M'[i,j] = M[i,j] (1 - wW_i vE_j) + wW_i vW_j.
template <class Real>
Matrix<Real> memory_write(const Matrix<Real>& memory, std::span<const Real> write_weights,
                          std::span<const Real> erase, std::span<const Real> values) {
  Matrix<Real> out(memory.rows(), memory.cols());
  for (std::size_t i = 0; i < memory.rows(); ++i)
    for (std::size_t j = 0; j < memory.cols(); ++j)
      out(i, j) = memory(i, j) * (Real{1} - write_weights[i] * erase[j]) + write_weights[i] * values[j];
  return out;
}

template <class Real>
Real sum(std::span<const Real> v) {
  Real acc = 0;
  for (Real x : v) acc += x;
  return acc;
}

template <class Real>
Vector<Real> precedence_update(std::span<const Real> precedence_prev, std::span<const Real> write_weights) {
  const Real keep = Real{1} - sum(write_weights);
  Vector<Real> p(precedence_prev.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = keep * precedence_prev[i] + write_weights[i];
  return p;
}

/// One linkage entry. The N x N expansion of wW is never built.
template <class Real>
Real linkage_entry(Real link_prev, Real w_i, Real w_j, Real p_j) {
  return (Real{1} - w_i - w_j) * link_prev + w_i * p_j;
}

template <class Real>
Matrix<Real> linkage_update(const Matrix<Real>& link_prev, std::span<const Real> write_weights,
                            std::span<const Real> precedence_prev) {
  const std::size_t n = link_prev.rows();
  Matrix<Real> link(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      link(i, j) = i == j ? Real{0}
                          : linkage_entry(link_prev(i, j), write_weights[i], write_weights[j],
                                          precedence_prev[j]);
  return link;
}

template <class Real>
struct ForwardBackward {
  Matrix<Real> forward;   // N x R, L * w
  Matrix<Real> backward;  // N x R, L^T * w
};

template <class Real>
ForwardBackward<Real> forward_backward(const Matrix<Real>& link, const Matrix<Real>& read_weights_prev) {
  const std::size_t n = link.rows();
  const std::size_t heads = read_weights_prev.cols();
  ForwardBackward<Real> fb{Matrix<Real>(n, heads), Matrix<Real>(n, heads)};
  for (std::size_t r = 0; r < heads; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      Real f = 0;
      Real b = 0;
      for (std::size_t j = 0; j < n; ++j) {
        f += link(i, j) * read_weights_prev(j, r);
        b += link(j, i) * read_weights_prev(j, r);
      }
      fb.forward(i, r) = f;
      fb.backward(i, r) = b;
    }
  }
  return fb;
}

/// Read modes per head: (backward, content, forward).
template <class Real>
Matrix<Real> read_weighting(const Matrix<Real>& read_modes, const Matrix<Real>& backward,
                            const Matrix<Real>& content, const Matrix<Real>& forward) {
  Matrix<Real> w(content.rows(), content.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t r = 0; r < w.cols(); ++r)
      w(i, r) = read_modes(r, 0) * backward(i, r) + read_modes(r, 1) * content(i, r) +
                read_modes(r, 2) * forward(i, r);
  return w;
}

/// vR[r, :] = M^T wR[:, r].
template <class Real>
Matrix<Real> memory_read(const Matrix<Real>& memory, const Matrix<Real>& read_weights) {
  Matrix<Real> out(read_weights.cols(), memory.cols());
  for (std::size_t r = 0; r < read_weights.cols(); ++r)
    for (std::size_t j = 0; j < memory.cols(); ++j) {
      Real acc = 0;
      for (std::size_t i = 0; i < memory.rows(); ++i) acc += memory(i, j) * read_weights(i, r);
      out(r, j) = acc;
    }
  return out;
}

}  // namespace hima
