// SPDX-License-Identifier: Apache-2.0
// pfdlab: data generation, training, evaluation, comparison tables and
// serving-cost reports for privileged-features distillation.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "pfd/checkpoint.hpp"
#include "pfd/data.hpp"
#include "pfd/distill.hpp"
#include "pfd/errors.hpp"
#include "pfd/experiment.hpp"
#include "pfd/features.hpp"
#include "pfd/generator.hpp"
#include "pfd/serving.hpp"

namespace fs = std::filesystem;
using namespace pfd;

namespace {

/// Flag values keyed by config-file key; a flag given on the command line
/// overrides the same key from --config.
struct KeyedFlags {
  std::vector<std::string> keys;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app, const std::vector<std::string>& ks) {
    for (const auto& k : ks) {
      keys.push_back(k);
      app->add_option("--" + k, values[k]);
    }
  }

  KeyValues collect(CLI::App* app, const std::string& config_path) const {
    KeyValues kv;
    if (!config_path.empty()) {
      kv = KeyValues::load(config_path);
      const auto unknown = kv.unknown_keys(keys);
      if (!unknown.empty()) throw ConfigError(config_path + ": unknown key '" + unknown.front() + "'");
    }
    for (const auto& k : keys) {
      if (app->count("--" + k) > 0) kv.set(k, values.at(k));
    }
    return kv;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

DistillConfig distill_config(const KeyValues& kv) {
  DistillConfig cfg = DistillConfig::from_key_values(kv);
  // Unless pinned, both initialization seeds follow --seed.
  const auto seeded = config_for_seed(cfg, cfg.seed);
  if (!kv.has("student-seed")) cfg.model.student_seed = seeded.model.student_seed;
  if (!kv.has("teacher-seed")) cfg.model.teacher_seed = seeded.model.teacher_seed;
  cfg.validate();
  return cfg;
}

nlohmann::json eval_json(const EvalResult& ev) {
  nlohmann::json j{{"student_auc", ev.student_auc}};
  j["teacher_auc"] = ev.teacher_auc ? nlohmann::json(*ev.teacher_auc) : nlohmann::json(nullptr);
  return j;
}

std::vector<std::size_t> dims_arg(const std::string& text) {
  auto d = parse_sizes(text);
  if (d.size() < 2) throw ConfigError("--dims needs at least input and output widths");
  return d;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(CLI::App* app, const KeyedFlags& flags, const std::string& config, const std::string& out) {
  const auto kv = flags.collect(app, config);
  const GeneratorConfig gc = GeneratorConfig::from_key_values(kv);
  gc.validate();
  fs::create_directories(out);
  const Dataset d = generate(gc);
  write_jsonl(d, (fs::path(out) / "dataset.jsonl").string());
  write_propensity_csv(d, (fs::path(out) / "propensities.csv").string());
  write_text(fs::path(out) / "effective_config.txt", gc.to_key_values().to_text());
  std::cout << "wrote " << d.train.size() << " train and " << d.test.size() << " test records to " << out << "\n";
  return 0;
}

int cmd_train(CLI::App* app, const KeyedFlags& flags, const std::string& config, const std::string& data_path,
              const std::string& out, const std::string& run_dir_flag) {
  const DistillConfig cfg = distill_config(flags.collect(app, config));
  const Dataset data = read_jsonl(data_path);
  const fs::path run_dir = run_dir_flag.empty()
                               ? fs::path(out) / ("run-" + timestamp() + "-seed" + std::to_string(cfg.seed))
                               : fs::path(run_dir_flag);
  fs::create_directories(run_dir);
  write_text(run_dir / "effective_config.txt", cfg.to_key_values().to_text());

  TrainResult res = train(data, cfg);
  write_training_log(res.log, (run_dir / "train_log.csv").string());
  if (!res.teacher_log.empty()) write_training_log(res.teacher_log, (run_dir / "teacher_log.csv").string());
  const std::string ckpt = (run_dir / "checkpoint.bin").string();
  save_checkpoint(res.graph, ckpt);
  const std::string hash = checkpoint_hash(ckpt);

  const EvalResult ev = evaluate(res.graph, data.test);
  auto metrics = eval_json(ev);
  metrics["checkpoint_hash"] = hash;
  metrics["steps"] = res.log.size();
  metrics["swap_step"] = res.swap_step;
  write_text(run_dir / "metrics.json", metrics.dump(2) + "\n");

  if (cfg.model.task == Task::Ctr) {
    const auto items = item_catalog(data.train);
    save_index(build_index(res.graph, items, hash), (run_dir / "index.bin").string());
  }
  std::cout << run_dir.string() << "\n";
  std::cerr << "trained " << res.log.size() << " steps in " << res.total_seconds << " s, student auc "
            << ev.student_auc << "\n";
  return 0;
}

int cmd_evaluate(const std::string& run_dir, const std::string& checkpoint, const std::string& data_path,
                 const std::string& out) {
  if (run_dir.empty() == checkpoint.empty()) throw ConfigError("give exactly one of --run-dir and --checkpoint");
  const std::string ckpt = checkpoint.empty() ? (fs::path(run_dir) / "checkpoint.bin").string() : checkpoint;
  ModelGraph g = load_checkpoint(ckpt);
  const Dataset data = read_jsonl(data_path, &g.schema);
  auto j = eval_json(evaluate(g, data.test));
  j["checkpoint_hash"] = checkpoint_hash(ckpt);
  if (!out.empty()) write_text(out, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_compare(CLI::App* app, const KeyedFlags& flags, const std::string& config, const std::string& data_path,
                const std::string& out, const std::string& methods, const std::string& sharings,
                const std::string& orders, const std::string& lambdas, const std::string& seeds) {
  ExperimentSpec spec;
  spec.base = distill_config(flags.collect(app, config));
  spec.methods.clear();
  for (const auto& m : split_list(methods)) spec.methods.push_back(parse_method(m));
  spec.sharings.clear();
  for (const auto& s : split_list(sharings)) spec.sharings.push_back(parse_sharing(s));
  spec.orders.clear();
  for (const auto& o : split_list(orders)) spec.orders.push_back(parse_train_order(o));
  spec.lambdas = parse_doubles(lambdas);
  spec.seeds.clear();
  for (auto s : parse_sizes(seeds)) spec.seeds.push_back(s);
  if (spec.methods.empty() || spec.sharings.empty() || spec.orders.empty() || spec.lambdas.empty() ||
      spec.seeds.empty()) {
    throw ConfigError("compare: every grid axis needs at least one value");
  }

  const Dataset data = read_jsonl(data_path);
  const auto rows = run_experiment(data, spec, [](const MetricsRow& r) {
    std::cerr << r.method << " " << r.sharing << " " << r.train_order << " lambda=" << r.lambda
              << " seed=" << r.seed << " student_auc=" << r.student_auc << "\n";
  });
  const std::string table = render_table(rows);
  if (!out.empty()) {
    fs::create_directories(out);
    write_metrics_csv(rows, (fs::path(out) / "comparison.csv").string());
    write_text(fs::path(out) / "table.txt", table);
  }
  std::cout << table;
  return 0;
}

int cmd_flops(const std::string& dims_text, const std::string& out) {
  const auto dims = dims_arg(dims_text);
  const std::vector<std::size_t> hidden(dims.begin() + 1, dims.end() - 1);
  const FlopsReport r = flops_count(dims.front(), hidden, dims.back());
  if (!out.empty()) write_text(out, r.to_json() + "\n");
  std::cout << "mapping_flops=" << r.mapping_flops << "\n"
            << "inner_product_flops=" << r.inner_product_flops << "\n"
            << "ratio=" << format_double(r.ratio) << "\n";
  return 0;
}

int cmd_serve_bench(std::size_t items, std::size_t repeats, const std::string& dims_text, std::uint64_t seed,
                    const std::string& out) {
  const auto dims = dims_arg(dims_text);
  const LatencyReport r = latency_bench(items, repeats, dims, seed);
  const std::vector<std::size_t> hidden(dims.begin() + 1, dims.end() - 1);
  const FlopsReport f = flops_count(dims.front(), hidden, dims.back());
  if (!out.empty()) write_text(out, r.to_json() + "\n");
  std::cout << "candidates=" << r.num_candidates << " repeats=" << r.repeats << "\n"
            << "mapping_time_s=" << r.mapping_time_s << "\n"
            << "inner_product_time_s=" << r.inner_product_time_s << "\n"
            << "measured_ratio=" << r.ratio << "\n"
            << "flops_ratio=" << format_double(f.ratio) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privileged-features distillation lab"};
  app.require_subcommand(1);

  std::string config, out, data_path, run_dir, checkpoint;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  KeyedFlags gen_flags;
  gen_flags.attach(gen, GeneratorConfig::keys());
  gen->add_option("--config", config, "key = value file");
  gen->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a student (and teacher)");
  KeyedFlags train_flags;
  train_flags.attach(tr, DistillConfig::keys());
  tr->add_option("--config", config, "key = value file");
  tr->add_option("--data", data_path, "dataset.jsonl")->required();
  tr->add_option("--out", out, "Parent directory for the run directory")->default_val("runs");
  tr->add_option("--run-dir", run_dir, "Exact run directory (overrides --out naming)");

  auto* ev = app.add_subcommand("evaluate", "Test-split AUC of a checkpoint");
  ev->add_option("--run-dir", run_dir, "Run directory holding checkpoint.bin");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file");
  ev->add_option("--data", data_path, "dataset.jsonl")->required();
  ev->add_option("--out", out, "Write the metrics JSON here");

  auto* cmp = app.add_subcommand("compare", "Train a method grid and tabulate AUCs");
  KeyedFlags cmp_flags;
  cmp_flags.attach(cmp, DistillConfig::keys());
  std::string methods = "baseline,lupi,md,pfd,pfd_md", sharings = "share", orders = "sync", lambdas = "0.5",
              seeds = "1,2,3,4,5";
  cmp->add_option("--config", config, "key = value file");
  cmp->add_option("--data", data_path, "dataset.jsonl")->required();
  cmp->add_option("--out", out, "Directory for comparison.csv and table.txt");
  cmp->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
  cmp->add_option("--sharings", sharings, "ind, share, share_star")->capture_default_str();
  cmp->add_option("--orders", orders, "sync, async")->capture_default_str();
  cmp->add_option("--lambda-grid", lambdas, "Comma-separated lambdas")->capture_default_str();
  cmp->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();

  auto* fl = app.add_subcommand("flops", "Tower versus inner-product multiply-adds");
  std::string dims;
  fl->add_option("--dims", dims, "input,hidden...,output")->required();
  fl->add_option("--out", out, "Write the JSON report here");

  auto* sb = app.add_subcommand("serve-bench", "Time tower forwards against inner products");
  std::size_t items = 1000, repeats = 100;
  std::uint64_t seed = 1;
  std::string bench_dims = "1024,512,256,128";
  sb->add_option("--items", items, "Candidates per request")->capture_default_str();
  sb->add_option("--repeats", repeats, "Timed rounds")->capture_default_str();
  sb->add_option("--dims", bench_dims, "input,hidden...,output")->capture_default_str();
  sb->add_option("--seed", seed)->capture_default_str();
  sb->add_option("--out", out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen, gen_flags, config, out);
    if (tr->parsed()) return cmd_train(tr, train_flags, config, data_path, out, run_dir);
    if (ev->parsed()) return cmd_evaluate(run_dir, checkpoint, data_path, out);
    if (cmp->parsed()) {
      return cmd_compare(cmp, cmp_flags, config, data_path, out, methods, sharings, orders, lambdas, seeds);
    }
    if (fl->parsed()) return cmd_flops(dims, out);
    if (sb->parsed()) return cmd_serve_bench(items, repeats, bench_dims, seed, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
