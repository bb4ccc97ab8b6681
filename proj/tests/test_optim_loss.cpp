// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "pfd/distill.hpp"
#include "pfd/errors.hpp"
#include "pfd/loss.hpp"
#include "pfd/optim.hpp"
#include "support.hpp"

using namespace pfd;
using namespace pfd::testing;

TEST(Warmup, LinearRampThenFlat) {
  AdagradConfig c{0.1, 1e-6, 4};
  EXPECT_DOUBLE_EQ(warmup_lr(c, 1), 0.025);
  EXPECT_DOUBLE_EQ(warmup_lr(c, 2), 0.05);
  EXPECT_DOUBLE_EQ(warmup_lr(c, 4), 0.1);
  EXPECT_DOUBLE_EQ(warmup_lr(c, 400), 0.1);
  AdagradConfig none{0.1, 1e-6, 0};
  EXPECT_DOUBLE_EQ(warmup_lr(none, 1), 0.1);
}

TEST(Adagrad, MatchesHandComputedUpdates) {
  AdagradConfig c{0.5, 1e-6, 2};
  AdagradState st{c, {0.0, 0.0}, 0};
  std::vector<double> w{1.0, -2.0};
  const std::vector<double> g1{0.3, -0.4};
  adagrad_step(w, g1, st);
  // step 1: lr 0.25, G = g^2
  EXPECT_NEAR(w[0], 1.0 - 0.25 * 0.3 / (0.3 + 1e-6), 1e-15);
  EXPECT_NEAR(w[1], -2.0 + 0.25 * 0.4 / (0.4 + 1e-6), 1e-15);
  const double w0 = w[0];
  const std::vector<double> g2{0.1, 0.0};
  adagrad_step(w, g2, st);
  EXPECT_NEAR(w[0], w0 - 0.5 * 0.1 / (std::sqrt(0.09 + 0.01) + 1e-6), 1e-15);
  EXPECT_EQ(st.step, 2u);
}

TEST(Adagrad, SharedParamGetsOneSummedUpdate) {
  // Registered twice, stepped once with the summed gradient, against a
  // reference that sees the sum directly.
  Param shared("p", {1, 2});
  shared.value[0] = 1.0;
  shared.value[1] = 1.0;
  Adagrad opt({0.1, 1e-6, 1});
  opt.add(shared);
  opt.add(shared);
  EXPECT_EQ(opt.num_params(), 1u);
  shared.grad[0] = 0.2 + 0.3;  // student + teacher contributions
  shared.grad[1] = -0.1 + 0.4;
  opt.step();

  AdagradState ref{{0.1, 1e-6, 1}, {0.0, 0.0}, 0};
  std::vector<double> w{1.0, 1.0};
  const std::vector<double> g{0.5, 0.3};
  adagrad_step(w, g, ref);
  EXPECT_EQ(shared.value[0], w[0]);
  EXPECT_EQ(shared.value[1], w[1]);
  EXPECT_EQ(shared.grad[0], 0.0);
}

TEST(Adagrad, SparseRowsMatchDenseUpdate) {
  EmbeddingTable t("t", 4, 2);
  Rng rng(5);
  t.init(rng, 0.5);
  Param dense = t.param();
  dense.sparse_rows = false;
  Adagrad a({0.2, 1e-6, 1}), b({0.2, 1e-6, 1});
  a.add(t.param());
  b.add(dense);
  for (int step = 0; step < 3; ++step) {
    const std::vector<std::int64_t> ids{step + 1, 2};
    const Tensor g = random_tensor({2, 2}, rng);
    t.accumulate_grad(ids, g);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t c = 0; c < 2; ++c) dense.grad(static_cast<std::size_t>(ids[i]), c) += g(i, c);
    }
    a.step();
    b.step();
  }
  for (std::size_t i = 0; i < dense.value.size(); ++i) EXPECT_EQ(t.param().value[i], dense.value[i]);
}

TEST(Loss, LogisticMatchesDefinitionAndGradient) {
  const std::vector<double> f{-2.0, 0.0, 3.0, 0.5};
  const std::vector<double> t{0.0, 1.0, 1.0, 0.3};
  const LossResult r = logistic_loss(f, t);
  double want = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    want += t[i] * std::log1p(std::exp(-f[i])) + (1 - t[i]) * std::log1p(std::exp(f[i]));
  }
  EXPECT_NEAR(r.value, want / 4, 1e-15);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.grad[i], (1 / (1 + std::exp(-f[i])) - t[i]) / 4, 1e-15);
}

TEST(Loss, LogisticStableForLargeLogits) {
  const std::vector<double> f{1000.0, -1000.0};
  const std::vector<double> t{0.0, 1.0};
  const LossResult r = logistic_loss(f, t);
  EXPECT_NEAR(r.value, 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(r.grad[0]) && std::isfinite(r.grad[1]));
  EXPECT_NEAR(r.grad[0], 0.5, 1e-12);
  EXPECT_NEAR(r.grad[1], -0.5, 1e-12);
}

TEST(Loss, SoftTargetMinimumIsEntropy) {
  // At f = logit(t) the cross entropy equals the binary entropy of t.
  for (double t : {0.1, 0.5, 0.83}) {
    const std::vector<double> f{std::log(t / (1 - t))};
    const std::vector<double> tt{t};
    EXPECT_NEAR(logistic_loss(f, tt).value, binary_entropy(t), 1e-12);
    EXPECT_NEAR(logistic_loss(f, tt).grad[0], 0.0, 1e-12);
  }
  EXPECT_EQ(binary_entropy(0.0), 0.0);
}

TEST(Loss, LogisticGradcheck) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor f = random_tensor({1, 8}, rng, 2.0);
    std::vector<double> t(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : t) v = u(rng);
    const auto r = logistic_loss(f.values(), t);
    auto loss = [&] { return logistic_loss(f.values(), t).value; };
    EXPECT_LT(check_input(loss, f, Tensor({1, 8}, r.grad)).max_rel, 1e-4);
  }
}

TEST(Loss, DistillationIsLogisticOnTeacherProbability) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor fs = random_tensor({1, 6}, rng, 2.0);
    const Tensor ft = random_tensor({1, 6}, rng, 2.0);
    const auto d = distillation_loss(ft.values(), fs.values());
    double want = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      const double p = 1 / (1 + std::exp(-ft[i]));
      want += -p * std::log(1 / (1 + std::exp(-fs[i]))) - (1 - p) * std::log(1 - 1 / (1 + std::exp(-fs[i])));
    }
    EXPECT_NEAR(d.value, want / 6, 1e-12);
    auto loss = [&] { return distillation_loss(ft.values(), fs.values()).value; };
    EXPECT_LT(check_input(loss, fs, Tensor({1, 6}, d.grad)).max_rel, 1e-4);
  }
}

TEST(Loss, MseGradcheck) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Tensor p = random_tensor({1, 5}, rng);
    const Tensor t = random_tensor({1, 5}, rng);
    const auto r = mse_loss(p.values(), t.values());
    auto loss = [&] { return mse_loss(p.values(), t.values()).value; };
    EXPECT_LT(check_input(loss, p, Tensor({1, 5}, r.grad)).max_rel, 1e-4);
  }
}

TEST(Loss, LengthMismatchThrows) {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  EXPECT_THROW(logistic_loss(a, b), ConfigError);
  EXPECT_THROW(mse_loss(a, b), ConfigError);
}
