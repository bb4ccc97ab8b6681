// SPDX-License-Identifier: Apache-2.0
#include "pfd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "pfd/errors.hpp"

namespace pfd {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double_cell(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("metrics csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << r.sharing << ',' << r.train_order << ',' << g17(r.lambda) << ',' << r.seed << ','
        << g17(r.student_auc) << ',' << (r.teacher_auc ? g17(*r.teacher_auc) : "") << ',' << g17(r.step_time_s)
        << '\n';
  }
  return out.str();
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw DataError("metrics csv: bad header");
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 8) throw DataError("metrics csv line " + std::to_string(lineno) + ": expected 8 cells");
    MetricsRow r;
    r.method = cells[0];
    r.sharing = cells[1];
    r.train_order = cells[2];
    r.lambda = parse_double_cell(cells[3], lineno);
    r.seed = static_cast<std::uint64_t>(parse_double_cell(cells[4], lineno));
    r.student_auc = parse_double_cell(cells[5], lineno);
    if (!cells[6].empty()) r.teacher_auc = parse_double_cell(cells[6], lineno);
    r.step_time_s = parse_double_cell(cells[7], lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << metrics_csv(rows);
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metrics_csv(ss.str());
}

std::string render_table(const std::vector<MetricsRow>& rows) {
  using Key = std::tuple<std::string, std::string, std::string, double>;
  struct Cell {
    std::vector<double> student, teacher, step;
  };
  std::vector<Key> order;
  std::map<Key, Cell> cells;
  for (const auto& r : rows) {
    Key k{r.method, r.sharing, r.train_order, r.lambda};
    if (!cells.contains(k)) order.push_back(k);
    auto& c = cells[k];
    c.student.push_back(r.student_auc);
    if (r.teacher_auc) c.teacher.push_back(*r.teacher_auc);
    c.step.push_back(r.step_time_s);
  }
  auto mean_sd = [](const std::vector<double>& v) {
    if (v.empty()) return std::string("-");
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", m, sd);
    return std::string(buf);
  };
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-9s %-10s %-6s %6s %5s  %-17s %-17s %10s\n", "method", "sharing", "order",
                "lambda", "seeds", "student_auc", "teacher_auc", "step_ms");
  out << line;
  for (const auto& k : order) {
    const auto& c = cells[k];
    std::vector<double> st = c.step;
    std::sort(st.begin(), st.end());
    const double med = st.empty() ? 0.0 : st[st.size() / 2];
    std::snprintf(line, sizeof line, "%-9s %-10s %-6s %6.2f %5zu  %-17s %-17s %10.3f\n", std::get<0>(k).c_str(),
                  std::get<1>(k).c_str(), std::get<2>(k).c_str(), std::get<3>(k), c.student.size(),
                  mean_sd(c.student).c_str(), mean_sd(c.teacher).c_str(), med * 1e3);
    out << line;
  }
  return out.str();
}

DistillConfig config_for_seed(const DistillConfig& base, std::uint64_t seed) {
  DistillConfig c = base;
  c.seed = seed;
  c.model.student_seed = derive_seed(seed, 11);
  c.model.teacher_seed = derive_seed(seed, 12);
  return c;
}

std::vector<MetricsRow> run_experiment(const Dataset& data, const ExperimentSpec& spec, const RowCallback& on_row) {
  std::vector<MetricsRow> rows;
  auto run = [&](DistillConfig cfg, std::uint64_t seed) {
    TrainResult res = train(data, cfg);
    const EvalResult ev = evaluate(res.graph, data.test);
    const bool teacherless = !has_teacher(cfg.model.method);
    MetricsRow r;
    r.method = to_string(cfg.model.method);
    r.sharing = teacherless ? "-" : to_string(cfg.model.sharing);
    r.train_order = teacherless ? "-" : to_string(cfg.train_order);
    r.lambda = teacherless ? 0.0 : cfg.lambda;
    r.seed = seed;
    r.student_auc = ev.student_auc;
    r.teacher_auc = ev.teacher_auc;
    r.step_time_s = median_step_time(res.step_seconds);
    rows.push_back(r);
    if (on_row) on_row(r);
  };
  for (Method m : spec.methods) {
    for (std::uint64_t seed : spec.seeds) {
      DistillConfig cfg = config_for_seed(spec.base, seed);
      cfg.model.method = m;
      if (!has_teacher(m)) {
        cfg.model.sharing = SharingMode::Independent;
        cfg.train_order = TrainOrder::Sync;
        run(cfg, seed);
        continue;
      }
      for (SharingMode sh : spec.sharings) {
        for (TrainOrder o : spec.orders) {
          if (o == TrainOrder::Async && sh != SharingMode::Independent) continue;
          for (double lam : spec.lambdas) {
            cfg.model.sharing = sh;
            cfg.train_order = o;
            cfg.lambda = lam;
            run(cfg, seed);
          }
        }
      }
    }
  }
  return rows;
}

}  // namespace pfd
