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

// Command line front end: train, grid, report, metrics.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "npg/config.hpp"
#include "npg/harness.hpp"

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

void print_summary(const npg::RunSummary& s) {
  std::printf("store: %s\n", s.store.string().c_str());
  std::printf("trained %d, skipped %d (already complete), invalid %d\n", s.trained, s.skipped,
              s.invalid);
  for (const auto& c : s.cells) {
    std::printf("  %s  %-8s %-10s seed %-4llu %s\n", c.hash.c_str(), c.backend.c_str(),
                c.env.c_str(), static_cast<unsigned long long>(c.seed), c.valid ? "ok" : "INVALID");
  }
}

int cmd_train(const std::string& path) {
  const auto summary = npg::run(path);
  print_summary(summary);
  return summary.invalid > 0 ? kRuntimeError : 0;
}

int cmd_grid(const std::string& path) {
  const auto g = npg::grid(path);
  print_summary(g.runs);
  std::printf("\nselected per backend (performance on the tuning environment):\n");
  for (const auto& b : g.best) {
    std::printf("  %-8s perf %.4f  damping %g  critic_lr %g  %s  max_lr %g  batch %d  critic %s\n",
                npg::to_string(b.config.backend).c_str(), b.performance, b.config.damping,
                b.config.critic_lr, npg::to_string(b.config.step_mode).c_str(), b.config.max_lr,
                b.config.batch_size, npg::to_string(b.config.critic_mode).c_str());
  }
  std::printf("tuned experiment configs: %s\n", (g.runs.store / "best").string().c_str());
  return g.runs.invalid > 0 ? kRuntimeError : 0;
}

int cmd_report(const std::string& baseline, const std::string& tuned, const std::string& out) {
  const std::string csv = npg::report(baseline, tuned);
  const std::filesystem::path dest = out.empty() ? std::filesystem::path(tuned) / "report.csv" : std::filesystem::path(out);
  std::ofstream f(dest, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + dest.string());
  f << csv;
  std::cout << csv;
  return 0;
}

int cmd_metrics(const std::string& dir) {
  npg::write_metrics(dir);
  std::ifstream in(std::filesystem::path(dir) / "metrics.csv");
  std::cout << in.rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Natural policy gradient benchmark harness"};
  app.require_subcommand(1);

  std::string train_path, grid_path, baseline, tuned, out, metrics_dir;
  auto* train = app.add_subcommand("train", "Train every (env, seed) cell of an experiment config");
  train->add_option("config", train_path, "Experiment config file")->required();
  auto* grid = app.add_subcommand("grid", "Run a grid search and select one config per backend");
  grid->add_option("gridspec", grid_path, "Grid spec file")->required();
  auto* report = app.add_subcommand("report", "Compare tuned results against a baseline");
  report->add_option("--baseline", baseline, "Baseline results directory")->required();
  report->add_option("--tuned", tuned, "Tuned results directory")->required();
  report->add_option("--out", out, "Output CSV (default <tuned>/report.csv)");
  auto* metrics = app.add_subcommand("metrics", "Compute metric tables for a results directory");
  metrics->add_option("dir", metrics_dir, "Results directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*train) return cmd_train(train_path);
    if (*grid) return cmd_grid(grid_path);
    if (*report) return cmd_report(baseline, tuned, out);
    if (*metrics) return cmd_metrics(metrics_dir);
  } catch (const npg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
