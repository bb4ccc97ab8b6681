// SPDX-License-Identifier: Apache-2.0
#include "pfd/optim.hpp"

#include <algorithm>
#include <cmath>

#include "pfd/errors.hpp"

namespace pfd {

double warmup_lr(const AdagradConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0) return cfg.base_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return cfg.base_lr * std::min(1.0, frac);
}

namespace {
inline void update_coord(double& w, double g, double& acc, double lr, double eps) {
  acc += g * g;
  w -= lr * g / (std::sqrt(acc) + eps);
}
}  // namespace

void adagrad_step(std::span<double> params, std::span<const double> grads, AdagradState& state) {
  if (params.size() != grads.size()) throw ConfigError("adagrad: params/grads size mismatch");
  if (state.accumulators.empty()) state.accumulators.assign(params.size(), 0.0);
  if (state.accumulators.size() != params.size()) throw ConfigError("adagrad: state size mismatch");
  ++state.step;
  const double lr = warmup_lr(state.config, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    update_coord(params[i], grads[i], state.accumulators[i], lr, state.config.eps);
  }
}

void Adagrad::add(Param& p) {
  if (accum_.contains(&p)) return;
  accum_.emplace(&p, std::vector<double>(p.value.size(), 0.0));
  params_.push_back(&p);
}

void Adagrad::step() {
  ++step_;
  const double lr = warmup_lr(cfg_, step_);
  for (Param* p : params_) {
    auto& acc = accum_.at(p);
    double* w = p->value.data();
    const double* g = p->grad.data();
    if (p->sparse_rows) {
      const std::size_t d = p->value.cols();
      // Row order does not matter: rows are disjoint.
      for (std::size_t r : p->touched_rows) {
        for (std::size_t i = r * d; i < (r + 1) * d; ++i) update_coord(w[i], g[i], acc[i], lr, cfg_.eps);
      }
    } else {
      for (std::size_t i = 0; i < p->value.size(); ++i) update_coord(w[i], g[i], acc[i], lr, cfg_.eps);
    }
    p->zero_grad();
  }
}

void Adagrad::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

const std::vector<double>& Adagrad::accumulators(const Param& p) const { return accum_.at(&p); }

}  // namespace pfd
