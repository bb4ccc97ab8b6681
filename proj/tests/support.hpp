// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit and acceptance tests: central-difference
// gradient checks and small seeded datasets.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pfd/generator.hpp"
#include "pfd/loss.hpp"
#include "pfd/models.hpp"

namespace pfd::testing {

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "name[i]" of the largest relative error
};

inline std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

/// Relative error with a 1e-5 floor on the denominator: central differences
/// in double carry ~1e-10 of roundoff, so gradients that are exactly zero
/// (key biases under softmax, biases feeding batch norm) cannot be resolved
/// relatively.
inline double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients already in p->grad against central
/// differences of `loss`. At most `per_param` entries per tensor are probed
/// (chosen by `rng`); for sparse tables only touched rows are probed.
inline GradCheck check_params(const std::function<double()>& loss, const std::vector<Param*>& params, Rng& rng,
                              std::size_t per_param = 6, double h = 1e-6) {
  GradCheck out;
  for (Param* p : params) {
    std::vector<std::size_t> candidates;
    if (p->sparse_rows) {
      const std::size_t cols = p->value.cols();
      for (std::size_t r : p->touched_rows) {
        for (std::size_t c = 0; c < cols; ++c) candidates.push_back(r * cols + c);
      }
    } else {
      candidates.resize(p->value.size());
      std::iota(candidates.begin(), candidates.end(), 0);
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    if (candidates.size() > per_param) candidates.resize(per_param);
    for (std::size_t i : candidates) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = loss();
      p->value[i] = orig - h;
      const double down = loss();
      p->value[i] = orig;
      const double rel = rel_error(p->grad[i], (up - down) / (2 * h));
      ++out.checked;
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = p->name + "[" + std::to_string(i) + "] analytic " + format_g(p->grad[i]) + " numeric " +
                    format_g((up - down) / (2 * h));
      }
    }
  }
  return out;
}

/// Same for an input tensor with a known analytic gradient.
inline GradCheck check_input(const std::function<double()>& loss, Tensor& x, const Tensor& grad, double h = 1e-6) {
  GradCheck out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = loss();
    x[i] = orig - h;
    const double down = loss();
    x[i] = orig;
    const double rel = rel_error(grad[i], (up - down) / (2 * h));
    ++out.checked;
    if (rel > out.max_rel) {
      out.max_rel = rel;
      out.worst = "input[" + std::to_string(i) + "]";
    }
  }
  return out;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, sd);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

/// Fixed random projection so a tensor output becomes a scalar loss whose
/// gradient is the projection itself.
inline double project(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

inline GeneratorConfig small_generator(std::uint64_t seed = 1, std::size_t train = 2000, std::size_t test = 500) {
  GeneratorConfig g;
  g.num_users = 200;
  g.num_items = 100;
  g.num_records = train;
  g.test_records = test;
  g.seed = seed;
  return g;
}

inline const Dataset& small_dataset() {
  static const Dataset d = generate(small_generator());
  return d;
}

/// Redraws every embedding table uniformly in [-0.5, 0.5]. At the default
/// 0.01 init all rows look alike, batch norm divides by a variance near its
/// eps, and activation kinks crowd the finite-difference window.
inline void spread_embeddings(ModelGraph& g, Rng& rng) {
  for (Param* p : g.all_params()) {
    if (p->sparse_rows) uniform_fill(p->value, 0.5, rng);
  }
}

/// Model loss of one batch: student logistic loss, or teacher L_t.
inline double model_loss(Model& m, const Batch& b) {
  StepContext ctx(b);
  return logistic_loss(m.forward(ctx), b.labels).value;
}

/// Fills the gradients of `m` for its logistic loss on `b`.
inline void model_backward(ModelGraph& g, Model& m, const Batch& b) {
  for (Param* p : g.all_params()) p->zero_grad();
  StepContext ctx(b);
  const auto f = m.forward(ctx);
  m.backward(ctx, logistic_loss(f, b.labels).grad);
  ctx.backward();
}

/// Scores of one user against `items` through the full two-tower forward
/// on serving batches (no index involved).
inline std::vector<double> direct_scores(ModelGraph& g, const UserFeatures& user,
                                         std::span<const ItemFeatures> items) {
  std::vector<Record> recs(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    recs[i].user_id = user.user_id;
    recs[i].user_feats = user.user_feats;
    recs[i].behavior = user.behavior;
    recs[i].item_id = items[i].item_id;
    recs[i].item_feats = items[i].item_feats;
  }
  std::vector<std::size_t> rows(recs.size());
  std::iota(rows.begin(), rows.end(), 0);
  return student_forward_ctr(g, make_batch(g.schema, recs, rows, false));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("pfdlab-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace pfd::testing
