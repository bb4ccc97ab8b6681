// SPDX-License-Identifier: Apache-2.0
#include "pfd/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "pfd/errors.hpp"
#include "pfd/features.hpp"
#include "pfd/metrics.hpp"

namespace pfd {

std::string to_string(TrainOrder o) { return o == TrainOrder::Sync ? "sync" : "async"; }

TrainOrder parse_train_order(const std::string& s) {
  if (s == "sync") return TrainOrder::Sync;
  if (s == "async") return TrainOrder::Async;
  throw ConfigError("unknown train order '" + s + "'");
}

// ---------------------------------------------------------------------------

void DistillConfig::validate() const {
  model.validate();
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0,1]");
  if (batch_size < 2) throw ConfigError("batch-size must be at least 2");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(optim.base_lr > 0.0) || !(optim.eps > 0.0)) throw ConfigError("lr and adagrad eps must be positive");
  if (train_order == TrainOrder::Async && has_teacher(model.method) &&
      model.sharing != SharingMode::Independent) {
    throw ConfigError("async training needs sharing=ind (a frozen teacher cannot share trainable components)");
  }
}

std::vector<std::string> DistillConfig::keys() {
  auto k = ModelConfig::keys();
  for (const char* s : {"lambda", "swap-step", "batch-size", "epochs", "seed", "train-order", "lr",
                        "adagrad-eps", "warmup"}) {
    k.emplace_back(s);
  }
  return k;
}

KeyValues DistillConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  kv.set("lambda", format_double(lambda));
  if (swap_step) kv.set("swap-step", std::to_string(*swap_step));
  kv.set("batch-size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("seed", std::to_string(seed));
  kv.set("train-order", to_string(train_order));
  kv.set("lr", format_double(optim.base_lr));
  kv.set("adagrad-eps", format_double(optim.eps));
  kv.set("warmup", std::to_string(optim.warmup_steps));
  return kv;
}

DistillConfig DistillConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, DistillConfig{}); }

DistillConfig DistillConfig::from_key_values(const KeyValues& kv, DistillConfig c) {
  c.model = ModelConfig::from_key_values(kv, c.model);
  c.lambda = kv.get_double("lambda", c.lambda);
  if (kv.has("swap-step")) c.swap_step = kv.get_uint("swap-step", 0);
  c.batch_size = kv.get_uint("batch-size", c.batch_size);
  c.epochs = kv.get_uint("epochs", c.epochs);
  c.seed = kv.get_uint("seed", c.seed);
  if (auto v = kv.get("train-order")) c.train_order = parse_train_order(*v);
  c.optim.base_lr = kv.get_double("lr", c.optim.base_lr);
  c.optim.eps = kv.get_double("adagrad-eps", c.optim.eps);
  c.optim.warmup_steps = kv.get_uint("warmup", c.optim.warmup_steps);
  return c;
}

// ---------------------------------------------------------------------------

LossResult distillation_loss(std::span<const double> teacher_logits, std::span<const double> student_logits) {
  if (teacher_logits.size() != student_logits.size()) {
    throw ContractError("distillation_loss: teacher and student logits differ in length");
  }
  std::vector<double> soft(teacher_logits.size());
  std::transform(teacher_logits.begin(), teacher_logits.end(), soft.begin(), sigmoid);
  return logistic_loss(student_logits, soft);
}

std::vector<std::vector<std::size_t>> batch_schedule(std::size_t num_records, std::size_t batch_size,
                                                     std::size_t epochs, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> perm(num_records);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, 0x4441 + e));
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t b = 0; b < num_records; b += batch_size) {
      const std::size_t end = std::min(num_records, b + batch_size);
      if (end - b < 2) break;
      out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b), perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return out;
}

namespace {

void check_finite(double v, const char* what, const Batch& batch, std::size_t step, std::uint64_t seed) {
  if (std::isfinite(v)) return;
  char buf[200];
  std::snprintf(buf, sizeof buf, "non-finite %s at step %zu (batch id %llu, seed %llu)", what, step,
                static_cast<unsigned long long>(batch.batch_id), static_cast<unsigned long long>(seed));
  throw TrainingError(buf);
}

/// Student loss for a forward pass; MTL adds its weighted auxiliary losses.
struct StudentPass {
  std::vector<double> logits;
  LossResult main;
  std::vector<LossResult> aux;
  double aux_total = 0.0;
};

StudentPass student_forward(Model& student, StepContext& ctx) {
  StudentPass p;
  const Batch& b = ctx.batch();
  if (auto* mtl = dynamic_cast<MtlModel*>(&student)) {
    auto out = mtl->forward_all(ctx);
    p.logits = std::move(out.main);
    if (b.aux_targets.size() != out.aux.size()) throw ContractError("mtl: batch lacks auxiliary targets");
    for (std::size_t k = 0; k < out.aux.size(); ++k) {
      p.aux.push_back(mtl->aux_losses()[k] == AuxLoss::Mse ? mse_loss(out.aux[k], b.aux_targets[k])
                                                           : logistic_loss(out.aux[k], b.aux_targets[k]));
      p.aux_total += mtl->aux_weight() * p.aux.back().value;
    }
  } else {
    p.logits = student.forward(ctx);
  }
  p.main = logistic_loss(p.logits, b.labels);
  return p;
}

void student_backward(Model& student, StepContext& ctx, const StudentPass& p, std::span<const double> grad) {
  if (auto* mtl = dynamic_cast<MtlModel*>(&student)) {
    std::vector<std::vector<double>> gaux;
    for (const auto& a : p.aux) {
      gaux.push_back(a.grad);
      for (double& g : gaux.back()) g *= mtl->aux_weight();
    }
    mtl->backward_all(ctx, grad, gaux);
  } else {
    student.backward(ctx, grad);
  }
}

}  // namespace

Trainer::Trainer(ModelGraph& graph, const DistillConfig& cfg, std::size_t swap_step)
    : graph_(graph), cfg_(cfg), swap_step_(swap_step), opt_(cfg.optim) {
  opt_.add(graph_.all_params());
}

LossBreakdown Trainer::train_step(const Batch& batch) {
  LossBreakdown lb;
  lb.step = step_;
  lb.lr = opt_.next_lr();
  StepContext ctx(batch);

  StudentPass sp = student_forward(*graph_.student, ctx);
  lb.L_s = sp.main.value;
  check_finite(lb.L_s, "student loss", batch, step_, cfg_.seed);
  std::vector<double> grad = sp.main.grad;
  lb.combined = lb.L_s + sp.aux_total;

  if (graph_.teacher) {
    const auto ft = graph_.teacher->forward(ctx);
    const LossResult lt = logistic_loss(ft, batch.labels);
    lb.L_t = lt.value;
    check_finite(lt.value, "teacher loss", batch, step_, cfg_.seed);
    if (step_ >= swap_step_) {
      const LossResult ld = distillation_loss(ft, sp.logits);
      check_finite(ld.value, "distillation loss", batch, step_, cfg_.seed);
      lb.L_d = ld.value;
      const double lam = cfg_.lambda;
      lb.combined = (1.0 - lam) * lb.L_s + lam * ld.value;
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = (1.0 - lam) * grad[i] + lam * ld.grad[i];
    }
    // The teacher sees L_t only; L_d never reaches it.
    graph_.teacher->backward(ctx, lt.grad);
  }
  student_backward(*graph_.student, ctx, sp, grad);
  ctx.backward();
  opt_.step();
  ++step_;
  return lb;
}

// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Teacher-only pass on L_t (Async first phase and standalone teacher).
void train_teacher_phase(ModelGraph& g, const Dataset& data, const DistillConfig& cfg,
                         const std::vector<std::vector<std::size_t>>& schedule, TrainResult& res) {
  Adagrad opt(cfg.optim);
  opt.add(g.teacher_params());
  g.teacher->set_mode(NormMode::Train);
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    Batch batch = make_batch(g.schema, data.train, schedule[s]);
    batch.batch_id = s;
    const auto t0 = Clock::now();
    StepContext ctx(batch);
    LossBreakdown lb;
    lb.step = s;
    lb.lr = opt.next_lr();
    const auto ft = g.teacher->forward(ctx);
    const LossResult lt = logistic_loss(ft, batch.labels);
    check_finite(lt.value, "teacher loss", batch, s, cfg.seed);
    g.teacher->backward(ctx, lt.grad);
    ctx.backward();
    opt.step();
    res.total_seconds += seconds_since(t0);
    lb.L_t = lt.value;
    lb.combined = lt.value;
    res.teacher_log.push_back(lb);
  }
}

}  // namespace

TrainResult train(const Dataset& data, const DistillConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  TrainResult res{build_model(cfg.model, data.schema), {}, {}, {}, 0.0, 0};
  ModelGraph& g = res.graph;
  const auto schedule = batch_schedule(data.train.size(), cfg.batch_size, cfg.epochs, cfg.seed);
  if (schedule.empty()) throw ConfigError("training split too small for one batch");
  const bool async = cfg.train_order == TrainOrder::Async && g.teacher;

  if (!async) {
    res.swap_step = cfg.swap_step.value_or(schedule.size() / 10);
    g.set_mode(NormMode::Train);
    Trainer trainer(g, cfg, res.swap_step);
    for (std::size_t s = 0; s < schedule.size(); ++s) {
      Batch batch = make_batch(g.schema, data.train, schedule[s], /*with_privileged=*/g.teacher || cfg.model.method == Method::Mtl);
      batch.batch_id = s;
      const auto t0 = Clock::now();
      res.log.push_back(trainer.train_step(batch));
      const double dt = seconds_since(t0);
      res.step_seconds.push_back(dt);
      res.total_seconds += dt;
      if (on_step) on_step(res.log.back(), g);
    }
    return res;
  }

  // Async: teacher to completion, then the student against the frozen teacher.
  res.swap_step = 0;
  train_teacher_phase(g, data, cfg, schedule, res);
  g.teacher->set_mode(NormMode::Eval);
  g.student->set_mode(NormMode::Train);
  Adagrad opt(cfg.optim);
  opt.add(g.student_params());
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    Batch batch = make_batch(g.schema, data.train, schedule[s]);
    batch.batch_id = s;
    const auto t0 = Clock::now();
    LossBreakdown lb;
    lb.step = s;
    lb.lr = opt.next_lr();
    StepContext ctx(batch);
    StudentPass sp = student_forward(*g.student, ctx);
    check_finite(sp.main.value, "student loss", batch, s, cfg.seed);
    const auto ft = g.teacher->forward(ctx);
    const LossResult lt = logistic_loss(ft, batch.labels);
    const LossResult ld = distillation_loss(ft, sp.logits);
    check_finite(ld.value, "distillation loss", batch, s, cfg.seed);
    const double lam = cfg.lambda;
    std::vector<double> grad(sp.main.grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = (1.0 - lam) * sp.main.grad[i] + lam * ld.grad[i];
    student_backward(*g.student, ctx, sp, grad);
    ctx.backward();
    opt.step();
    const double dt = seconds_since(t0);
    lb.L_s = sp.main.value;
    lb.L_t = lt.value;
    lb.L_d = ld.value;
    lb.combined = (1.0 - lam) * lb.L_s + lam * ld.value;
    res.log.push_back(lb);
    res.step_seconds.push_back(dt);
    res.total_seconds += dt;
    if (on_step) on_step(lb, g);
  }
  return res;
}

TrainResult train_teacher_standalone(const Dataset& data, const DistillConfig& cfg) {
  cfg.validate();
  if (!has_teacher(cfg.model.method)) throw ConfigError("method " + to_string(cfg.model.method) + " has no teacher");
  TrainResult res{build_model(cfg.model, data.schema), {}, {}, {}, 0.0, 0};
  const auto schedule = batch_schedule(data.train.size(), cfg.batch_size, cfg.epochs, cfg.seed);
  train_teacher_phase(res.graph, data, cfg, schedule, res);
  return res;
}

EvalResult evaluate(ModelGraph& graph, std::span<const Record> records, std::size_t batch_size) {
  graph.set_mode(NormMode::Eval);
  std::vector<double> s_scores, t_scores;
  std::vector<int> labels;
  s_scores.reserve(records.size());
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < records.size(); b += batch_size) {
    rows.resize(std::min(batch_size, records.size() - b));
    std::iota(rows.begin(), rows.end(), b);
    const Batch batch = make_batch(graph.schema, records, rows, true);
    StepContext ctx(batch);
    for (double v : graph.student->forward(ctx)) s_scores.push_back(v);
    if (graph.teacher) {
      for (double v : graph.teacher->forward(ctx)) t_scores.push_back(v);
    }
    for (double y : batch.labels) labels.push_back(static_cast<int>(y));
  }
  EvalResult r;
  r.student_auc = auc(s_scores, labels);
  if (graph.teacher) r.teacher_auc = auc(t_scores, labels);
  return r;
}

void write_training_log(const std::vector<LossBreakdown>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  out << "step,L_s,L_t,L_d,combined,lr\n";
  for (const auto& l : log) {
    out << l.step << ',' << format_double(l.L_s) << ',' << cell(l.L_t) << ',' << cell(l.L_d) << ','
        << format_double(l.combined) << ',' << format_double(l.lr) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

double median_step_time(std::span<const double> seconds) {
  if (seconds.empty()) return 0.0;
  const std::size_t skip = seconds.size() / 5;
  std::vector<double> tail(seconds.begin() + static_cast<std::ptrdiff_t>(skip), seconds.end());
  const std::size_t mid = tail.size() / 2;
  std::nth_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(mid), tail.end());
  if (tail.size() % 2 == 1) return tail[mid];
  const double hi = tail[mid];
  const double lo = *std::max_element(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace pfd
