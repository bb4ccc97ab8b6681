// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace pfd {

double sigmoid(double x);
/// log(1 + e^x) without overflow.
double softplus(double x);
/// -t log t - (1-t) log(1-t), with 0 log 0 = 0.
double binary_entropy(double t);

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;  // d value / d input, already divided by N
};

/// Mean over i of t_i log(1+e^{-f_i}) + (1-t_i) log(1+e^{f_i}). Hard labels
/// (t in {0,1}) give the log-loss, soft targets give the cross entropy.
LossResult logistic_loss(std::span<const double> logits, std::span<const double> targets);

/// Mean squared error and its gradient with respect to the predictions.
LossResult mse_loss(std::span<const double> predictions, std::span<const double> targets);

}  // namespace pfd
