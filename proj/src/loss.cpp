// SPDX-License-Identifier: Apache-2.0
#include "pfd/loss.hpp"

#include <cmath>
#include <string>

#include "pfd/errors.hpp"

namespace pfd {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double binary_entropy(double t) {
  double h = 0.0;
  if (t > 0.0) h -= t * std::log(t);
  if (t < 1.0) h -= (1.0 - t) * std::log1p(-t);
  return h;
}

LossResult logistic_loss(std::span<const double> logits, std::span<const double> targets) {
  if (logits.size() != targets.size()) throw ConfigError("logistic loss: length mismatch");
  const std::size_t n = logits.size();
  LossResult out{0.0, std::vector<double>(n)};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = targets[i];
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ContractError("logistic loss: target " + std::to_string(t) + " outside [0,1]");
    }
    const double f = logits[i];
    out.value += t * softplus(-f) + (1.0 - t) * softplus(f);
    out.grad[i] = (sigmoid(f) - t) * inv_n;
  }
  out.value *= inv_n;
  return out;
}

LossResult mse_loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw ConfigError("mse: length mismatch");
  const std::size_t n = predictions.size();
  LossResult out{0.0, std::vector<double>(n)};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = predictions[i] - targets[i];
    out.value += d * d;
    out.grad[i] = 2.0 * d * inv_n;
  }
  out.value *= inv_n;
  return out;
}

}  // namespace pfd
