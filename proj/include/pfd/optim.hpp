// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include "pfd/tensor.hpp"

namespace pfd {

struct AdagradConfig {
  double base_lr = 0.01;
  double eps = 1e-6;
  std::size_t warmup_steps = 1000;
};

/// Learning rate used by the `step`-th update (1-based):
/// base_lr * min(1, step / warmup_steps).
double warmup_lr(const AdagradConfig& cfg, std::size_t step);

/// Accumulators for one parameter tensor plus the shared schedule position.
struct AdagradState {
  AdagradConfig config;
  std::vector<double> accumulators;
  std::size_t step = 0;
};

/// One dense Adagrad update: G += g^2; w -= lr(step) * g / (sqrt(G) + eps).
/// Increments state.step before computing the rate.
void adagrad_step(std::span<double> params, std::span<const double> grads, AdagradState& state);

/// Adagrad over a registered set of parameters sharing one schedule. A
/// parameter registered twice (shared between models) keeps a single state
/// and receives its summed gradient. Sparse parameters update touched rows
/// only, which is equivalent to a dense update with zero gradient elsewhere.
class Adagrad {
 public:
  explicit Adagrad(AdagradConfig cfg) : cfg_(cfg) {}

  void add(Param& p);
  void add(std::span<Param* const> ps) {
    for (Param* p : ps) add(*p);
  }
  /// Applies the update to every registered parameter and zeroes gradients.
  void step();
  void zero_grad();

  std::size_t steps() const { return step_; }
  double next_lr() const { return warmup_lr(cfg_, step_ + 1); }
  const AdagradConfig& config() const { return cfg_; }
  const std::vector<double>& accumulators(const Param& p) const;
  std::size_t num_params() const { return params_.size(); }

 private:
  AdagradConfig cfg_;
  std::size_t step_ = 0;
  std::vector<Param*> params_;
  std::unordered_map<const Param*, std::vector<double>> accum_;
};

}  // namespace pfd
