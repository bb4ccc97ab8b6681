// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pfd/distill.hpp"

namespace pfd {

struct MetricsRow {
  std::string method;
  std::string sharing;
  std::string train_order;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  double student_auc = 0.0;
  std::optional<double> teacher_auc;
  double step_time_s = 0.0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

inline constexpr const char* kMetricsHeader =
    "method,sharing,train_order,lambda,seed,student_auc,teacher_auc,step_time_s";

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

/// One line per (method, sharing, order, lambda) cell: seed count, mean and
/// sample standard deviation of the AUCs, median step time.
std::string render_table(const std::vector<MetricsRow>& rows);

/// Grid of training runs. Methods without a teacher (baseline, MTL) run once
/// per seed, ignoring the sharing, order and lambda axes. Async cells run
/// only with independent sharing; other Async cells are skipped.
struct ExperimentSpec {
  DistillConfig base;
  std::vector<Method> methods{Method::Baseline, Method::Lupi, Method::Md, Method::Pfd, Method::PfdMd};
  std::vector<SharingMode> sharings{SharingMode::ShareAll};
  std::vector<TrainOrder> orders{TrainOrder::Sync};
  std::vector<double> lambdas{0.5};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

/// Seed s sets the data order and derives the student and teacher
/// initialization seeds, so methods sharing a seed start from the same
/// student.
DistillConfig config_for_seed(const DistillConfig& base, std::uint64_t seed);

using RowCallback = std::function<void(const MetricsRow&)>;
std::vector<MetricsRow> run_experiment(const Dataset& data, const ExperimentSpec& spec,
                                       const RowCallback& on_row = {});

}  // namespace pfd
