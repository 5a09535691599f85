// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hima {

/// A destination that cannot be reached with the currently enabled router ports.
class unreachable_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The NoC simulator stopped making progress with flits still in flight.
class deadlock_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The tiled model diverged from the single-address-space reference.
class equivalence_error : public std::runtime_error {
 public:
  equivalence_error(std::string kernel, std::size_t step, double error)
      : std::runtime_error("tiled execution diverged from reference at step " +
                           std::to_string(step) + ", kernel '" + kernel +
                           "' (relative error " + std::to_string(error) + ")"),
        kernel_(std::move(kernel)),
        step_(step),
        error_(error) {}

  const std::string& kernel() const noexcept { return kernel_; }
  std::size_t step() const noexcept { return step_; }
  double error() const noexcept { return error_; }

 private:
  std::string kernel_;
  std::size_t step_;
  double error_;
};

/// Dense row-major matrix. Only what the memory kernels need.
template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * cols_ + j];
  }

  std::span<T> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <class T>
using Vector = std::vector<T>;

namespace detail {

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

inline bool is_pow2(std::size_t x) { return x != 0 && (x & (x - 1)) == 0; }

inline std::size_t ceil_log2(std::size_t x) {
  std::size_t r = 0;
  while ((std::size_t{1} << r) < x) ++r;
  return r;
}

inline std::size_t ceil_sqrt(std::size_t x) {
  auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(x)));
  while (r * r < x) ++r;
  while (r > 0 && (r - 1) * (r - 1) >= x) --r;
  return r;
}

inline void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace detail

/// max|a-b| / max|ref|; 0 when both are exactly zero.
template <class T>
double normwise_rel_error(std::span<const T> value, std::span<const T> ref) {
  detail::require(value.size() == ref.size(), "normwise_rel_error: size mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    diff = std::max(diff, std::abs(static_cast<double>(value[i]) - static_cast<double>(ref[i])));
    scale = std::max(scale, std::abs(static_cast<double>(ref[i])));
  }
  if (diff == 0.0) return 0.0;
  return scale == 0.0 ? diff : diff / scale;
}

}  // namespace hima
