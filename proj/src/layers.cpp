// SPDX-License-Identifier: Apache-2.0
#include "pfd/layers.hpp"

#include <cmath>

#include "pfd/errors.hpp"

namespace pfd {

Tensor dense_forward(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.cols() != weight.rows() || bias.size() != weight.cols()) {
    throw ConfigError("dense: input " + shape_string(x.shape()) + " vs weight " +
                      shape_string(weight.shape()) + " / bias " + shape_string(bias.shape()));
  }
  Tensor y = Tensor::matrix(x.rows(), weight.cols());
  if (x.rows() == 0) return y;
  auto ym = as_matrix(y);
  ym.noalias() = as_matrix(x) * as_matrix(weight);
  const Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(bias.size()));
  ym.rowwise() += b;
  return y;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& x, const Tensor& weight) {
  if (grad_out.rows() != x.rows() || grad_out.cols() != weight.cols() ||
      x.cols() != weight.rows()) {
    throw ConfigError("dense backward: shape mismatch");
  }
  DenseGrads g{Tensor::matrix(x.rows(), x.cols()), Tensor(weight.shape()),
               Tensor({weight.cols()})};
  if (x.rows() == 0) return g;
  const auto go = as_matrix(grad_out);
  as_matrix(g.x).noalias() = go * as_matrix(weight).transpose();
  as_matrix(g.weight).noalias() = as_matrix(x).transpose() * go;
  Eigen::Map<Eigen::RowVectorXd>(g.bias.data(), static_cast<Eigen::Index>(g.bias.size())) =
      go.colwise().sum();
  return g;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return y;
}

Tensor leaky_relu_backward(const Tensor& grad_out, const Tensor& x, double slope) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_out[i] : slope * grad_out[i];
  return g;
}

Tensor l2_normalize(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.data() + r * d;
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += xr[c] * xr[c];
    const double denom = std::max(std::sqrt(sq), kNormEps);
    double* yr = y.data() + r * d;
    for (std::size_t c = 0; c < d; ++c) yr[c] = xr[c] / denom;
  }
  return y;
}

Tensor l2_normalize_backward(const Tensor& grad_out, const Tensor& x) {
  Tensor g(x.shape());
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.data() + r * d;
    const double* gr = grad_out.data() + r * d;
    double* out = g.data() + r * d;
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += xr[c] * xr[c];
    const double norm = std::sqrt(sq);
    if (norm <= kNormEps) {
      // Inside the guard the map is linear: x / eps.
      for (std::size_t c = 0; c < d; ++c) out[c] = gr[c] / kNormEps;
      continue;
    }
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += xr[c] * gr[c];
    const double inv = 1.0 / norm;
    for (std::size_t c = 0; c < d; ++c) out[c] = (gr[c] - xr[c] * inv * inv * dot) * inv;
  }
  return g;
}

// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", {in, out}), bias(name + ".bias", {out}) {}

void DenseLayer::init(Rng& rng) {
  glorot_uniform(weight.value, rng);
  bias.value.fill(0.0);
}

Tensor DenseLayer::forward(const Tensor& x) {
  Tensor y = dense_forward(x, weight.value, bias.value);
  cache_x_ = x;
  return y;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  if (!cache_x_) throw ContractError("dense backward (" + weight.name + ") without forward cache");
  DenseGrads g = dense_backward(grad_out, *cache_x_, weight.value);
  as_matrix(weight.grad) += as_matrix(g.weight);
  for (std::size_t i = 0; i < g.bias.size(); ++i) bias.grad[i] += g.bias[i];
  cache_x_.reset();
  return std::move(g.x);
}

LeakyRelu::LeakyRelu(double slope) : slope_(slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("leaky relu slope must be in (0,1)");
}

Tensor LeakyRelu::forward(const Tensor& x) {
  cache_x_ = x;
  return leaky_relu(x, slope_);
}

Tensor LeakyRelu::backward(const Tensor& grad_out) {
  if (!cache_x_) throw ContractError("leaky relu backward without forward cache");
  Tensor g = leaky_relu_backward(grad_out, *cache_x_, slope_);
  cache_x_.reset();
  return g;
}

Tensor L2Normalize::forward(const Tensor& x) {
  cache_x_ = x;
  return l2_normalize(x);
}

Tensor L2Normalize::backward(const Tensor& grad_out) {
  if (!cache_x_) throw ContractError("l2 normalize backward without forward cache");
  Tensor g = l2_normalize_backward(grad_out, *cache_x_);
  cache_x_.reset();
  return g;
}

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(const std::string& name, std::size_t dim, double momentum, double eps)
    : gamma(name + ".gamma", {dim}),
      beta(name + ".beta", {dim}),
      running_mean({dim}, 0.0),
      running_var({dim}, 1.0),
      momentum_(momentum),
      eps_(eps) {
  if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("batch norm momentum must be in (0,1)");
  gamma.value.fill(1.0);
}

Tensor BatchNorm::forward(const Tensor& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (d != gamma.value.size()) throw ConfigError("batch norm: width mismatch");
  Cache cache{Tensor(x.shape()), std::vector<double>(d), mode_};
  Tensor y(x.shape());
  if (mode_ == NormMode::Train) {
    if (n < 2) throw ConfigError("batch norm in train mode needs batch >= 2");
    for (std::size_t c = 0; c < d; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += x(r, c);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double dv = x(r, c) - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(n);
      const double inv_std = 1.0 / std::sqrt(var + eps_);
      cache.inv_std[c] = inv_std;
      for (std::size_t r = 0; r < n; ++r) {
        const double xh = (x(r, c) - mean) * inv_std;
        cache.x_hat(r, c) = xh;
        y(r, c) = gamma.value[c] * xh + beta.value[c];
      }
      running_mean[c] = momentum_ * running_mean[c] + (1.0 - momentum_) * mean;
      running_var[c] = momentum_ * running_var[c] + (1.0 - momentum_) * var;
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      const double inv_std = 1.0 / std::sqrt(running_var[c] + eps_);
      cache.inv_std[c] = inv_std;
      for (std::size_t r = 0; r < n; ++r) {
        const double xh = (x(r, c) - running_mean[c]) * inv_std;
        cache.x_hat(r, c) = xh;
        y(r, c) = gamma.value[c] * xh + beta.value[c];
      }
    }
  }
  cache_ = std::move(cache);
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  if (!cache_) throw ContractError("batch norm backward (" + gamma.name + ") without forward cache");
  const Cache& cache = *cache_;
  const std::size_t n = grad_out.rows();
  const std::size_t d = grad_out.cols();
  Tensor gx(grad_out.shape());
  for (std::size_t c = 0; c < d; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      sum_g += grad_out(r, c);
      sum_gx += grad_out(r, c) * cache.x_hat(r, c);
    }
    gamma.grad[c] += sum_gx;
    beta.grad[c] += sum_g;
    const double scale = gamma.value[c] * cache.inv_std[c];
    if (cache.mode == NormMode::Train) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        gx(r, c) = scale * (grad_out(r, c) - inv_n * sum_g - cache.x_hat(r, c) * inv_n * sum_gx);
      }
    } else {
      for (std::size_t r = 0; r < n; ++r) gx(r, c) = scale * grad_out(r, c);
    }
  }
  cache_.reset();
  return gx;
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, std::size_t dim, double eps)
    : gain(name + ".gain", {dim}), bias(name + ".bias", {dim}), eps_(eps) {
  gain.value.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (d != gain.value.size()) throw ConfigError("layer norm: width mismatch");
  Cache cache{Tensor(x.shape()), std::vector<double>(n)};
  Tensor y(x.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    cache.inv_std[r] = inv_std;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (xr[c] - mean) * inv_std;
      cache.x_hat(r, c) = xh;
      y(r, c) = gain.value[c] * xh + bias.value[c];
    }
  }
  cache_ = std::move(cache);
  return y;
}

Tensor LayerNorm::backward(const Tensor& grad_out) {
  if (!cache_) throw ContractError("layer norm backward (" + gain.name + ") without forward cache");
  const Cache& cache = *cache_;
  const std::size_t n = grad_out.rows();
  const std::size_t d = grad_out.cols();
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor gx(grad_out.shape());
  std::vector<double> gxh(d);
  for (std::size_t r = 0; r < n; ++r) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double g = grad_out(r, c);
      gain.grad[c] += g * cache.x_hat(r, c);
      bias.grad[c] += g;
      gxh[c] = g * gain.value[c];
      sum_g += gxh[c];
      sum_gx += gxh[c] * cache.x_hat(r, c);
    }
    for (std::size_t c = 0; c < d; ++c) {
      gx(r, c) = cache.inv_std[r] * (gxh[c] - inv_d * sum_g - cache.x_hat(r, c) * inv_d * sum_gx);
    }
  }
  cache_.reset();
  return gx;
}

// ---------------------------------------------------------------------------

EmbeddingTable::EmbeddingTable(const std::string& name, std::size_t vocab_size, std::size_t dim)
    : table_(name, {vocab_size, dim}, /*sparse_rows=*/true) {
  if (vocab_size == 0 || dim == 0) throw ConfigError("embedding " + name + ": empty table");
}

void EmbeddingTable::init(Rng& rng, double range) { uniform_fill(table_.value, range, rng); }

std::size_t EmbeddingTable::row_of(std::int64_t id) const {
  if (id < 0) throw ContractError("embedding " + table_.name + ": negative id " + std::to_string(id));
  const auto u = static_cast<std::size_t>(id);
  return u < vocab_size() ? u : 0;
}

Tensor EmbeddingTable::lookup(std::span<const std::int64_t> ids) const {
  const std::size_t d = dim();
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* src = table_.value.data() + row_of(ids[i]) * d;
    std::copy(src, src + d, out.data() + i * d);
  }
  return out;
}

void EmbeddingTable::accumulate_grad(std::span<const std::int64_t> ids, const Tensor& grads) {
  if (grads.cols() != dim()) throw ConfigError("embedding grad width mismatch");
  accumulate_grad(ids, grads, 0);
}

void EmbeddingTable::accumulate_grad(std::span<const std::int64_t> ids, const Tensor& grads,
                                     std::size_t col) {
  if (grads.rows() != ids.size() || col + dim() > grads.cols()) {
    throw ConfigError("embedding " + table_.name + ": grad shape mismatch");
  }
  const std::size_t d = dim();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t r = row_of(ids[i]);
    table_.mark_row(r);
    double* dst = table_.grad.data() + r * d;
    const double* src = grads.data() + i * grads.cols() + col;
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
}

}  // namespace pfd
