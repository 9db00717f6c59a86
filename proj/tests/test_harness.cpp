// Copyright 2026 The npgfisher Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "npg/harness.hpp"

using namespace npg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("npg_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_experiment(const fs::path& out, const std::string& label) {
  ExperimentConfig e;
  e.trainer.hidden = {4};
  e.trainer.batch_size = 32;
  e.trainer.total_env_steps = 96;
  e.trainer.eval_episodes = 1;
  e.trainer.record_wallclock = false;
  e.envs = {"lqr"};
  e.seeds = {0};
  e.output_dir = out.string();
  e.label = label;
  return e;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GridCellResult cell(double perf, double damping, StepMode mode, int batch) {
  GridCellResult r;
  r.performance = perf;
  r.config.damping = damping;
  r.config.step_mode = mode;
  r.config.batch_size = batch;
  return r;
}

CellMetrics metrics_cell(const std::string& backend, const std::string& env, double perf,
                         double stab, std::optional<double> eff, double time) {
  CellMetrics m;
  m.record = {backend, env, perf, stab, eff, time};
  m.total_env_steps = 1000;
  return m;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) row.push_back(f);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("one cell writes a manifest, config and trace") {
  TempDir tmp("one");
  const ExperimentConfig e = tiny_experiment(tmp.path, "base");
  const RunSummary s = run_experiment(e, 1);
  CHECK(s.trained == 1);
  CHECK(s.skipped == 0);
  REQUIRE(s.cells.size() == 1);
  const CellRecord& c = s.cells[0];
  CHECK(c.valid);
  CHECK(c.backend == "kfac");
  CHECK(fs::exists(s.store / "manifest.json"));
  CHECK(fs::exists(s.store / "configs" / (c.hash + ".cfg")));
  CHECK(fs::exists(s.store / "traces" / (c.hash + ".jsonl")));

  const auto manifest = nlohmann::json::parse(slurp(s.store / "manifest.json"));
  CHECK(manifest.at("label") == "base");
  CHECK(manifest.at("cells").size() == 1);

  const ResultStore store(s.store);
  const RunTrace t = store.load_trace(c);
  CHECK(t.checkpoints.size() == 3);
  CHECK(t.config_hash == c.hash);

  // the stored config reproduces the hash
  std::istringstream cfg(slurp(store.config_path(c.hash)));
  TrainerConfig back;
  for (const auto& [k, v] : parse_key_values(cfg)) apply_trainer_key(back, k, v);
  CHECK(config_hash(back) == c.hash);
}

TEST_CASE("rerunning skips completed cells") {
  TempDir tmp("rerun");
  const ExperimentConfig e = tiny_experiment(tmp.path, "base");
  const RunSummary first = run_experiment(e, 1);
  const fs::path trace = first.store / "traces" / (first.cells[0].hash + ".jsonl");
  const auto stamp = fs::last_write_time(trace);
  const RunSummary second = run_experiment(e, 1);
  CHECK(second.trained == 0);
  CHECK(second.skipped == 1);
  CHECK(fs::last_write_time(trace) == stamp);

  // a missing trace is retrained
  fs::remove(trace);
  const RunSummary third = run_experiment(e, 1);
  CHECK(third.trained == 1);
  CHECK(fs::exists(trace));
}

TEST_CASE("every env and seed gets its own cell") {
  TempDir tmp("grid6");
  ExperimentConfig e = tiny_experiment(tmp.path, "multi");
  e.envs = {"lqr", "pointmass"};
  e.seeds = {0, 1, 2};
  const RunSummary s = run_experiment(e, 3);
  CHECK(s.trained == 6);
  std::set<std::string> hashes, variants;
  for (const auto& c : s.cells) {
    hashes.insert(c.hash);
    variants.insert(c.variant);
    CHECK(c.valid);
  }
  CHECK(hashes.size() == 6);
  CHECK(variants.size() == 2);
  CHECK(ResultStore(s.store).cells().size() == 6);
}

TEST_CASE("a label cannot be reused for a different experiment") {
  TempDir tmp("label");
  ExperimentConfig e = tiny_experiment(tmp.path, "same");
  run_experiment(e, 1);
  e.trainer.damping = 0.5;
  CHECK_THROWS_AS(run_experiment(e, 1), HarnessError);
  e.label = "other";
  CHECK_NOTHROW(run_experiment(e, 1));
}

TEST_CASE("worker count comes from the environment") {
  ::unsetenv("NPG_WORKERS");
  CHECK(worker_count() == 1);
  ::setenv("NPG_WORKERS", "3", 1);
  CHECK(worker_count() == 3);
  ::setenv("NPG_WORKERS", "zero", 1);
  CHECK_THROWS_AS(worker_count(), ConfigError);
  ::unsetenv("NPG_WORKERS");
}

TEST_CASE("selection tie-breaks") {
  using M = StepMode;
  CHECK(select_best({cell(1, 0.1, M::kClip, 512), cell(2, 0.1, M::kClip, 512)}) == 1);
  CHECK(select_best({cell(2, 0.1, M::kClip, 512), cell(2, 0.01, M::kClip, 512)}) == 1);
  CHECK(select_best({cell(2, 0.1, M::kClip, 512), cell(2, 0.1, M::kLineSearch, 512)}) == 1);
  CHECK(select_best({cell(2, 0.1, M::kClip, 512), cell(2, 0.1, M::kClip, 256)}) == 1);
  CHECK(select_best({cell(2, 0.1, M::kClip, 512), cell(2, 0.1, M::kClip, 512)}) == 0);
  CHECK_THROWS_AS(select_best({}), HarnessError);

  // planted optimum among random cells
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10.0, 0.0);
  std::vector<GridCellResult> cells;
  for (int i = 0; i < 40; ++i) cells.push_back(cell(u(rng), 0.1, M::kClip, 512));
  cells[17].performance = 1.0;
  CHECK(select_best(cells) == 17);
}

TEST_CASE("grid search writes selections and tuned configs") {
  TempDir tmp("gridrun");
  std::ostringstream spec;
  spec << "seeds = 0, 1\nhidden = 4\ntotal_env_steps = 64\nbatch_size = 32\neval_episodes = 1\n"
       << "record_wallclock = false\noutput_dir = " << tmp.path.string() << "\nlabel = tune\n"
       << "grid.backend = diagonal, tengrad\ngrid.damping = 0.1, 0.01\n"
       << "grid.step_mode = line_search, clip\ngrid.max_lr = 0.1\n";
  std::istringstream in(spec.str());
  const GridSpec g = parse_grid_spec(in);
  const GridSummary s = run_grid(g, 2);
  CHECK(s.cells.size() == 2 * 2 * 2);
  CHECK(s.runs.trained == 16);
  REQUIRE(s.best.size() == 2);
  CHECK(s.best[0].config.backend == FisherBackendKind::kDiagonal);
  CHECK(s.best[1].config.backend == FisherBackendKind::kTENGraD);
  for (const auto& b : s.best) {
    double top = -1e300;
    for (const auto& c : s.cells)
      if (c.config.backend == b.config.backend) top = std::max(top, c.performance);
    CHECK(b.performance == top);
  }
  const fs::path root = tmp.path / "tune";
  CHECK(parse_csv(slurp(root / "grid_results.csv")).size() == 9);
  CHECK(parse_csv(slurp(root / "selection.csv")).size() == 3);

  const ExperimentConfig tuned = load_experiment_config((root / "best" / "tengrad.cfg").string());
  CHECK(tuned.label == "tengrad");
  CHECK(fs::path(tuned.output_dir) == tmp.path / "tune-tuned");
  CHECK(tuned.trainer.backend == FisherBackendKind::kTENGraD);
  CHECK(tuned.seeds == std::vector<std::uint64_t>{0, 1});

  const GridSummary again = run_grid(g, 1);
  CHECK(again.runs.trained == 0);
  CHECK(again.runs.skipped == 16);
}

TEST_CASE("metrics over a results directory") {
  TempDir tmp("metrics");
  ExperimentConfig e = tiny_experiment(tmp.path, "kfac");
  e.envs = {"lqr", "pointmass"};
  e.seeds = {0, 1};
  run_experiment(e, 1);
  e.label = "diagonal";
  e.trainer.backend = FisherBackendKind::kDiagonal;
  run_experiment(e, 1);

  write_metrics(tmp.path);
  const auto rows = parse_csv(slurp(tmp.path / "metrics.csv"));
  CHECK(rows.size() == 5);
  CHECK(fs::exists(tmp.path / "thresholds.csv"));
  const auto agg = nlohmann::json::parse(slurp(tmp.path / "aggregate.json"));
  // LQR returns are all negative and cannot be normalized
  CHECK(agg.at("skipped_environments") == nlohmann::json::array({"lqr"}));
  CHECK(agg.at("backends").size() == 2);
  CHECK(agg.at("total_env_steps") == 96);

  const auto cells = collect_metrics(tmp.path);
  CHECK(cells.size() == 4);
  const ThresholdTable th = load_or_compute_thresholds(tmp.path);
  for (const auto& c : cells) {
    CHECK(c.seeds == 2);
    CHECK(th.at(c.record.environment) <= c.record.performance);
    // every cell reaches the lowest performance
    CHECK(c.record.sample_efficiency.has_value());
  }
}

TEST_CASE("report of a run against itself shows no change") {
  TempDir tmp("report");
  ExperimentConfig e = tiny_experiment(tmp.path, "kfac");
  e.seeds = {0, 1};
  run_experiment(e, 1);
  const auto rows = parse_csv(report(tmp.path, tmp.path));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == "backend");
  for (int k = 2; k <= 4; ++k) {
    CHECK(rows[1][k].find("(+0%)") != std::string::npos);
    CHECK(rows[1][k].find('*') == std::string::npos);
  }
  CHECK(rows[1][6] == "96");
}

TEST_CASE("report formatting and flags") {
  const std::vector<CellMetrics> base{metrics_cell("kfac", "lqr", 100, -10, -4000, -20),
                                      metrics_cell("kfac", "pendulum", -160, -20, std::nullopt, -30)};
  const std::vector<CellMetrics> tuned{metrics_cell("kfac", "lqr", 181, -5, std::nullopt, -10),
                                       metrics_cell("kfac", "pendulum", 130, -25, -2500, -30)};
  const auto rows = parse_csv(report_csv(base, tuned));
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][2] == "181.00 (+81%)");
  CHECK(rows[2][2] == "130.00 (+181%) *");
  CHECK(rows[1][3] == "-5.00 (+50%) *");
  CHECK(rows[2][3] == "-25.00 (-25%)");
  CHECK(rows[1][4] == "NaN");
  CHECK(rows[2][4] == "-2.5 (NaN%)");
  CHECK(rows[1][5] == "-10.00 (+50%) *");
  CHECK(rows[2][5] == "-30.00 (+0%)");

  CHECK_THROWS_AS(report_csv({base[0]}, tuned), HarnessError);
  CHECK_THROWS_AS(find_stores(fs::path("/nonexistent")), HarnessError);
}

}  // TEST_SUITE
