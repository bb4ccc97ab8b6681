// SPDX-License-Identifier: Apache-2.0
#include "pfd/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "pfd/errors.hpp"

namespace pfd {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}
}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (product(shape_) != values_.size()) {
    throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " +
                      std::to_string(values_.size()) + " values");
  }
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? shape_[0] : shape_[1];
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t width) {
  if (begin + width > x.cols()) throw ConfigError("column slice out of range");
  Tensor out = Tensor::matrix(x.rows(), width);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* src = x.data() + r * x.cols() + begin;
    std::copy(src, src + width, out.data() + r * width);
  }
  return out;
}

void write_cols(Tensor& dst, const Tensor& src, std::size_t begin) {
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw ConfigError("column write out of range: " + shape_string(src.shape()) + " into " +
                      shape_string(dst.shape()));
  }
  const std::size_t w = src.cols();
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::copy(src.data() + r * w, src.data() + (r + 1) * w, dst.data() + r * dst.cols() + begin);
  }
}

Tensor concat_cols(std::span<const Tensor* const> parts) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool have_rows = false;
  for (const Tensor* p : parts) {
    if (p->cols() == 0) continue;
    if (have_rows && p->rows() != rows) throw ConfigError("concat: row count mismatch");
    rows = p->rows();
    have_rows = true;
    cols += p->cols();
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t at = 0;
  for (const Tensor* p : parts) {
    if (p->cols() == 0) continue;
    write_cols(out, *p, at);
    at += p->cols();
  }
  return out;
}

Param::Param(std::string n, std::vector<std::size_t> shape, bool sparse)
    : name(std::move(n)), value(shape), grad(shape), sparse_rows(sparse) {
  if (sparse_rows) touched_flag_.assign(value.rows(), 0);
}

void Param::mark_row(std::size_t r) {
  if (!touched_flag_[r]) {
    touched_flag_[r] = 1;
    touched_rows.push_back(r);
  }
}

void Param::zero_grad() {
  if (!sparse_rows) {
    grad.fill(0.0);
    return;
  }
  const std::size_t w = grad.cols();
  for (std::size_t r : touched_rows) {
    std::fill(grad.data() + r * w, grad.data() + (r + 1) * w, 0.0);
    touched_flag_[r] = 0;
  }
  touched_rows.clear();
}

void glorot_uniform(Tensor& weight, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(weight.rows() + weight.cols()));
  uniform_fill(weight, limit, rng);
}

void uniform_fill(Tensor& t, double range, Rng& rng) {
  std::uniform_real_distribution<double> dist(-range, range);
  for (double& v : t.values()) v = dist(rng);
}

}  // namespace pfd
