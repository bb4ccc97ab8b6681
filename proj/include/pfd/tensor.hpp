// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace pfd {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream tag so independent components draw from
/// independent generators (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

/// Dense row-major tensor of doubles. Most of the code uses rank-2 tensors;
/// rank-1 tensors behave as a single row.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap as_matrix(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}
inline ConstMatrixMap as_matrix(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

/// Columns [begin, begin + width) of a rank-2 tensor, copied out.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t width);
/// Writes `src` into columns starting at `begin` of `dst` (rows must match).
void write_cols(Tensor& dst, const Tensor& src, std::size_t begin);
/// Horizontal concatenation; empty (zero-column) parts are skipped.
Tensor concat_cols(std::span<const Tensor* const> parts);

/// A trainable tensor and its gradient accumulator. Embedding tables mark the
/// rows they touch so the optimizer can skip untouched rows.
struct Param {
  Param() = default;
  Param(std::string name, std::vector<std::size_t> shape, bool sparse_rows = false);

  std::string name;
  Tensor value;
  Tensor grad;
  bool sparse_rows = false;
  std::vector<std::size_t> touched_rows;

  void mark_row(std::size_t r);
  void zero_grad();

 private:
  std::vector<std::uint8_t> touched_flag_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& weight, Rng& rng);
void uniform_fill(Tensor& t, double range, Rng& rng);

}  // namespace pfd
