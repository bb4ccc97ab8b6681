// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "pfd/errors.hpp"
#include "pfd/experiment.hpp"
#include "support.hpp"

using namespace pfd;
using namespace pfd::testing;

TEST(MetricsCsv, RoundTripIsExact) {
  std::vector<MetricsRow> rows{{"baseline", "-", "-", 0.0, 1, 0.7123456789012345, std::nullopt, 0.0125},
                               {"pfd", "ind", "sync", 0.5, 2, 0.74, 0.7712345678901234, 1.5e-3}};
  const std::string text = metrics_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsHeader);
  EXPECT_EQ(parse_metrics_csv(text), rows);
  EXPECT_THROW(parse_metrics_csv("method,oops\n"), DataError);
}

TEST(MetricsCsv, TableGroupsSeeds) {
  std::vector<MetricsRow> rows{{"pfd", "share", "sync", 0.5, 1, 0.70, 0.75, 0.01},
                               {"pfd", "share", "sync", 0.5, 2, 0.72, 0.77, 0.01},
                               {"baseline", "-", "-", 0.0, 1, 0.69, std::nullopt, 0.01}};
  const std::string t = render_table(rows);
  EXPECT_NE(t.find("0.7100 +- 0.0141"), std::string::npos) << t;
  EXPECT_NE(t.find("baseline"), std::string::npos);
}

TEST(Experiment, SeedDerivesInitializationSeeds) {
  const DistillConfig base;
  const DistillConfig a = config_for_seed(base, 3), b = config_for_seed(base, 3), c = config_for_seed(base, 4);
  EXPECT_EQ(a.seed, 3u);
  EXPECT_EQ(a.model.student_seed, b.model.student_seed);
  EXPECT_NE(a.model.student_seed, c.model.student_seed);
  EXPECT_NE(a.model.student_seed, a.model.teacher_seed);
}

TEST(Experiment, GridShape) {
  const auto& d = small_dataset();
  ExperimentSpec spec;
  spec.base.model.student_hidden = {8};
  spec.base.model.teacher_hidden = {8};
  spec.base.batch_size = 250;
  spec.base.optim = {0.05, 1e-6, 2};
  spec.methods = {Method::Baseline, Method::Pfd};
  spec.sharings = {SharingMode::Independent, SharingMode::ShareAll};
  spec.orders = {TrainOrder::Sync, TrainOrder::Async};
  spec.lambdas = {0.1, 0.9};
  spec.seeds = {1, 2};
  const auto rows = run_experiment(d, spec);
  // baseline once per seed; pfd: (ind x {sync, async} + share x sync) x 2 lambdas x 2 seeds
  std::size_t base = 0, pfd = 0, async = 0;
  for (const auto& r : rows) {
    if (r.method == "baseline") {
      ++base;
      EXPECT_EQ(r.sharing, "-");
      EXPECT_FALSE(r.teacher_auc.has_value());
    } else {
      ++pfd;
      EXPECT_TRUE(r.teacher_auc.has_value());
    }
    if (r.train_order == "async") {
      ++async;
      EXPECT_EQ(r.sharing, "ind");
    }
    EXPECT_GT(r.step_time_s, 0.0);
  }
  EXPECT_EQ(base, 2u);
  EXPECT_EQ(pfd, 12u);
  EXPECT_EQ(async, 4u);
}
