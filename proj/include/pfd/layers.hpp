// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfd/tensor.hpp"

namespace pfd {

inline constexpr double kDefaultLeakySlope = 0.01;
inline constexpr double kNormEps = 1e-12;

// ---------------------------------------------------------------------------
// Stateless kernels. The layer classes below wrap these with parameter
// storage and a single-use forward cache.
// ---------------------------------------------------------------------------

/// y = x * weight + bias, x is [batch x in], weight [in x out], bias [out].
Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct DenseGrads {
  Tensor x;
  Tensor weight;
  Tensor bias;
};
DenseGrads dense_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weight);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& grad_out, const Tensor& x, double slope);

/// Row-wise x / max(||x||, kNormEps).
Tensor l2_normalize(const Tensor& x);
/// Exact Jacobian-vector product of l2_normalize at x.
Tensor l2_normalize_backward(const Tensor& grad_out, const Tensor& x);

// ---------------------------------------------------------------------------

class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in, std::size_t out);

  void init(Rng& rng);  // glorot weights, zero bias
  Tensor forward(const Tensor& x);
  /// Accumulates into weight.grad / bias.grad and returns dL/dx. Consumes the
  /// cache of the preceding forward.
  Tensor backward(const Tensor& grad_out);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }
  std::vector<Param*> params() { return {&weight, &bias}; }

  Param weight;
  Param bias;

 private:
  std::optional<Tensor> cache_x_;
};

class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = kDefaultLeakySlope);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  double slope() const { return slope_; }

 private:
  double slope_;
  std::optional<Tensor> cache_x_;
};

class L2Normalize {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

 private:
  std::optional<Tensor> cache_x_;
};

enum class NormMode { Train, Eval };

/// Batch normalization over the batch dimension of a [batch x dim] input.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t dim, double momentum = 0.99, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  void set_mode(NormMode m) { mode_ = m; }
  NormMode mode() const { return mode_; }
  double momentum() const { return momentum_; }
  double eps() const { return eps_; }
  std::vector<Param*> params() { return {&gamma, &beta}; }

  Param gamma;
  Param beta;
  Tensor running_mean;
  Tensor running_var;

 private:
  struct Cache {
    Tensor x_hat;
    std::vector<double> inv_std;
    NormMode mode;
  };
  double momentum_ = 0.99;
  double eps_ = 1e-5;
  NormMode mode_ = NormMode::Train;
  std::optional<Cache> cache_;
};

/// Per-row layer normalization with learned gain and bias.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim, double eps = 1e-5);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  std::vector<Param*> params() { return {&gain, &bias}; }

  Param gain;
  Param bias;

 private:
  struct Cache {
    Tensor x_hat;
    std::vector<double> inv_std;
  };
  double eps_ = 1e-5;
  std::optional<Cache> cache_;
};

/// Categorical id -> dense row. Row 0 is reserved: ids >= vocab_size (out of
/// vocabulary) and the padding id 0 both read it.
class EmbeddingTable {
 public:
  EmbeddingTable(const std::string& name, std::size_t vocab_size, std::size_t dim);

  void init(Rng& rng, double range = 0.01);

  std::size_t vocab_size() const { return table_.value.rows(); }
  std::size_t dim() const { return table_.value.cols(); }
  std::size_t row_of(std::int64_t id) const;

  Tensor lookup(std::span<const std::int64_t> ids) const;
  /// Scatter-adds grads[i] into the row of ids[i]; duplicate ids sum.
  void accumulate_grad(std::span<const std::int64_t> ids, const Tensor& grads);
  /// Same, reading grads[i] from columns [col, col + dim) of a wider tensor.
  void accumulate_grad(std::span<const std::int64_t> ids, const Tensor& grads, std::size_t col);

  Param& param() { return table_; }
  const Param& param() const { return table_; }

 private:
  Param table_;
};

}  // namespace pfd
