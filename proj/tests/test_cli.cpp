// SPDX-License-Identifier: Apache-2.0
// Drives the pfdlab binary end to end.
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(PFDLAB_BIN) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmall = "--users 100 --items 50 --records 1200 --test-records 300";
const char* kFast = "--student-hidden 8 --teacher-hidden 8 --tower-hidden 8 --tower-out 4 --batch-size 200 --warmup 3";

}  // namespace

TEST(Cli, FlopsPrintsExactCounts) {
  const Result r = run("flops --dims 1024,512,256,128");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "mapping_flops=688128\ninner_product_flops=128\nratio=5376\n");
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("gen-data").code, 2);                       // missing --out
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("flops --dims 12").code, 2);
  EXPECT_EQ(run("train --data x.jsonl --lambda 2").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, MissingDataExitsOne) {
  EXPECT_EQ(run("train --data /nonexistent/d.jsonl --run-dir /tmp/pfdlab-never").code, 1);
}

TEST(Cli, GenDataIsByteDeterministic) {
  const auto dir = pfd::testing::temp_dir("cli-gen");
  ASSERT_EQ(run(std::string("gen-data ") + kSmall + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(run(std::string("gen-data ") + kSmall + " --out " + (dir / "b").string()).code, 0);
  for (const char* f : {"dataset.jsonl", "propensities.csv", "effective_config.txt"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  ASSERT_EQ(run(std::string("gen-data ") + kSmall + " --seed 2 --out " + (dir / "c").string()).code, 0);
  EXPECT_NE(slurp(dir / "a" / "dataset.jsonl"), slurp(dir / "c" / "dataset.jsonl"));
}

TEST(Cli, ConfigFileAndFlagOverride) {
  const auto dir = pfd::testing::temp_dir("cli-config");
  std::ofstream(dir / "gen.conf") << "# small\nusers = 100\nitems = 50\nrecords = 600\ntest-records = 100\nseed = 5\n";
  ASSERT_EQ(run("gen-data --config " + (dir / "gen.conf").string() + " --seed 6 --out " + (dir / "d").string()).code,
            0);
  const std::string eff = slurp(dir / "d" / "effective_config.txt");
  EXPECT_NE(eff.find("seed = 6"), std::string::npos) << eff;
  EXPECT_NE(eff.find("records = 600"), std::string::npos) << eff;
  std::ofstream(dir / "bad.conf") << "userz = 3\n";
  EXPECT_EQ(run("gen-data --config " + (dir / "bad.conf").string() + " --out " + (dir / "e").string()).code, 2);
}

TEST(Cli, TrainEvaluateAndDeterminism) {
  const auto dir = pfd::testing::temp_dir("cli-train");
  const std::string data = (dir / "d" / "dataset.jsonl").string();
  ASSERT_EQ(run(std::string("gen-data ") + kSmall + " --out " + (dir / "d").string()).code, 0);
  const std::string common = std::string("train --data ") + data + " " + kFast + " --task ctr --method pfd --seed 3";
  ASSERT_EQ(run(common + " --run-dir " + (dir / "r1").string()).code, 0);
  ASSERT_EQ(run(common + " --run-dir " + (dir / "r2").string()).code, 0);
  for (const char* f : {"checkpoint.bin", "train_log.csv", "index.bin", "metrics.json", "effective_config.txt"}) {
    ASSERT_TRUE(fs::exists(dir / "r1" / f)) << f;
    EXPECT_EQ(slurp(dir / "r1" / f), slurp(dir / "r2" / f)) << f;
  }
  const auto m = nlohmann::json::parse(slurp(dir / "r1" / "metrics.json"));
  const Result ev = run("evaluate --run-dir " + (dir / "r1").string() + " --data " + data);
  ASSERT_EQ(ev.code, 0);
  const auto e = nlohmann::json::parse(ev.out);
  EXPECT_EQ(e["student_auc"], m["student_auc"]);
  EXPECT_EQ(e["checkpoint_hash"], m["checkpoint_hash"]);

  // Timestamped run directory under --out.
  const Result r = run(common + " --out " + (dir / "runs").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("run-"), std::string::npos);
  EXPECT_NE(r.out.find("-seed3"), std::string::npos);
}

TEST(Cli, SwapStepShowsInLog) {
  const auto dir = pfd::testing::temp_dir("cli-swap");
  const std::string data = (dir / "d" / "dataset.jsonl").string();
  ASSERT_EQ(run(std::string("gen-data ") + kSmall + " --out " + (dir / "d").string()).code, 0);
  ASSERT_EQ(run(std::string("train --data ") + data + " " + kFast + " --epochs 2 --swap-step 4 --run-dir " +
                (dir / "r").string())
                .code,
            0);
  std::istringstream log(slurp(dir / "r" / "train_log.csv"));
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, "step,L_s,L_t,L_d,combined,lr");
  int step = 0;
  while (std::getline(log, line)) {
    std::vector<std::string> cells;
    std::string c;
    std::istringstream ls(line);
    while (std::getline(ls, c, ',')) cells.push_back(c);
    EXPECT_EQ(!cells[3].empty(), step >= 4) << line;
    ++step;
  }
  EXPECT_EQ(step, 12);
}

TEST(Cli, CompareWritesCsvAndTable) {
  const auto dir = pfd::testing::temp_dir("cli-compare");
  const std::string data = (dir / "d" / "dataset.jsonl").string();
  ASSERT_EQ(run(std::string("gen-data ") + kSmall + " --out " + (dir / "d").string()).code, 0);
  const Result r = run(std::string("compare --data ") + data + " " + kFast +
                       " --methods baseline,pfd --lambda-grid 0.1,0.9 --seeds 1 --out " + (dir / "c").string());
  ASSERT_EQ(r.code, 0);
  const std::string csv = slurp(dir / "c" / "comparison.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,sharing,train_order,lambda,seed,student_auc,teacher_auc,step_time_s");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(slurp(dir / "c" / "table.txt"), r.out);
}
