// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfd/data.hpp"
#include "pfd/loss.hpp"
#include "pfd/models.hpp"
#include "pfd/optim.hpp"

namespace pfd {

enum class TrainOrder { Sync, Async };
std::string to_string(TrainOrder o);
TrainOrder parse_train_order(const std::string& s);

struct DistillConfig {
  ModelConfig model;
  double lambda = 0.5;
  /// Steps before the distillation loss switches on; unset means 10% of
  /// the run.
  std::optional<std::size_t> swap_step;
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;  // data order
  TrainOrder train_order = TrainOrder::Sync;
  AdagradConfig optim;

  void validate() const;
  KeyValues to_key_values() const;  // includes the model keys
  static DistillConfig from_key_values(const KeyValues& kv);
  static DistillConfig from_key_values(const KeyValues& kv, DistillConfig base);
  static std::vector<std::string> keys();
};

/// Losses of one step. combined is (1 - lambda) L_s + lambda L_d after the
/// swap and L_s before it (plus weighted auxiliary losses for MTL).
struct LossBreakdown {
  std::size_t step = 0;  // 0-based
  double L_s = 0.0;
  std::optional<double> L_t;
  std::optional<double> L_d;
  double combined = 0.0;
  double lr = 0.0;
};

/// logistic_loss(student, sigmoid(teacher)); the gradient is with respect to
/// the student logits only.
LossResult distillation_loss(std::span<const double> teacher_logits, std::span<const double> student_logits);

/// Shuffled mini-batches for each epoch; trailing batches smaller than 2 are
/// dropped (batch norm needs two rows).
std::vector<std::vector<std::size_t>> batch_schedule(std::size_t num_records, std::size_t batch_size,
                                                     std::size_t epochs, std::uint64_t seed);

/// Synchronous training steps over a graph: student and teacher in one pass.
/// One Adagrad state per parameter tensor; shared tensors get the summed
/// student and teacher gradients in one update per step.
class Trainer {
 public:
  Trainer(ModelGraph& graph, const DistillConfig& cfg, std::size_t swap_step);

  /// Student update from L_s before swap_step and from
  /// (1 - lambda) L_s + lambda L_d afterwards; teacher update from L_t only.
  LossBreakdown train_step(const Batch& batch);

  std::size_t steps_done() const { return step_; }
  Adagrad& optimizer() { return opt_; }

 private:
  ModelGraph& graph_;
  DistillConfig cfg_;
  std::size_t swap_step_;
  Adagrad opt_;
  std::size_t step_ = 0;
};

using StepCallback = std::function<void(const LossBreakdown&, const ModelGraph&)>;

struct TrainResult {
  ModelGraph graph;
  std::vector<LossBreakdown> log;          // student phase (every step for Sync)
  std::vector<LossBreakdown> teacher_log;  // Async teacher phase
  std::vector<double> step_seconds;        // per logged step
  double total_seconds = 0.0;              // all training steps, both phases
  std::size_t swap_step = 0;
};

/// Sync: student and teacher step together. Async: the teacher is trained
/// alone first, then frozen in eval mode while the student trains with
/// lambda active from step 0. Async requires independent components.
TrainResult train(const Dataset& data, const DistillConfig& cfg, const StepCallback& on_step = {});

/// The teacher trained on L_t alone, exactly as in the Async first phase.
TrainResult train_teacher_standalone(const Dataset& data, const DistillConfig& cfg);

struct EvalResult {
  double student_auc = 0.0;
  std::optional<double> teacher_auc;
};
/// Eval-mode AUC on `records`. Leaves the graph in eval mode.
EvalResult evaluate(ModelGraph& graph, std::span<const Record> records, std::size_t batch_size = 1024);

/// step,L_s,L_t,L_d,combined,lr; absent losses are empty cells.
void write_training_log(const std::vector<LossBreakdown>& log, const std::string& path);

/// Median of the last 80% of per-step times.
double median_step_time(std::span<const double> seconds);

}  // namespace pfd
