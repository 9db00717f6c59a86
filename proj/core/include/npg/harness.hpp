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

#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "npg/config.hpp"
#include "npg/metrics.hpp"
#include "npg/trainer.hpp"

namespace npg {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One trained (config, env, seed) cell as listed in a manifest.
struct CellRecord {
  std::string hash;     // config_hash of the cell's TrainerConfig
  std::string variant;  // config_hash with the seed zeroed; groups seeds
  std::string backend;
  std::string env;
  std::uint64_t seed = 0;
  bool valid = false;
};

/// On-disk layout under `root`:
///   manifest.json        label, experiment hash, cells
///   configs/<hash>.cfg   canonical trainer config
///   traces/<hash>.jsonl  run trace
/// Manifest writes are serialized and atomic (write + rename).
class ResultStore {
 public:
  /// Opens or creates a store. Throws HarnessError when the directory
  /// already holds a different experiment under this label.
  ResultStore(std::filesystem::path root, std::string label, std::string experiment_hash,
              std::int64_t timing_window_steps);

  /// Opens an existing store for reading.
  explicit ResultStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  const std::string& label() const { return label_; }
  std::int64_t timing_window_steps() const { return timing_window_steps_; }

  /// Valid cell with this hash whose trace exists.
  std::optional<CellRecord> completed(const std::string& hash) const;
  std::vector<CellRecord> cells() const;

  void store(const TrainerConfig& config, const RunTrace& trace);
  RunTrace load_trace(const CellRecord& cell) const;

  std::filesystem::path trace_path(const std::string& hash) const;
  std::filesystem::path config_path(const std::string& hash) const;

 private:
  void write_manifest() const;

  std::filesystem::path root_;
  std::string label_;
  std::string experiment_hash_;
  std::int64_t timing_window_steps_ = 10000;
  std::vector<CellRecord> cells_;
  mutable std::mutex mu_;
};

/// Hash of a config with its seed cleared.
std::string variant_hash(TrainerConfig config);

/// Worker-pool size from NPG_WORKERS (default 1).
int worker_count();

struct RunSummary {
  std::filesystem::path store;
  int trained = 0;
  int skipped = 0;  // manifest hits
  int invalid = 0;
  std::vector<CellRecord> cells;
};

/// Trains every (config, seed) job not already complete in the store, on a
/// pool of `workers` threads.
RunSummary run_jobs(ResultStore& store, const std::vector<TrainerConfig>& jobs, int workers);

/// One trace per (env, seed) under output_dir/label.
RunSummary run_experiment(const ExperimentConfig& config, int workers = worker_count());
RunSummary run(const std::string& config_path);

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct GridCellResult {
  TrainerConfig config;  // seed cleared
  std::string variant;
  double performance = 0.0;
};

/// Argmax performance; ties go to lower damping, then line_search over clip,
/// then smaller batch, then grid order.
std::size_t select_best(const std::vector<GridCellResult>& cells);

struct GridSummary {
  RunSummary runs;
  std::vector<GridCellResult> cells;
  std::vector<GridCellResult> best;  // one per backend, in grid order
};

GridSummary run_grid(const GridSpec& spec, int workers = worker_count());
GridSummary grid(const std::string& spec_path);

// ---------------------------------------------------------------------------
// Metrics and reports over stores
// ---------------------------------------------------------------------------

struct CellMetrics {
  MetricRecord record;
  std::string variant;
  int seeds = 0;
  std::int64_t total_env_steps = 0;
  std::int64_t timing_window_steps = 10000;
  std::vector<double> seed_performance;  // per-seed max return, for aggregates
};

/// Every store under `dir` (the directory itself or its descendants).
std::vector<std::filesystem::path> find_stores(const std::filesystem::path& dir);

/// Metrics of every (backend, env, variant) group of valid traces under `dir`.
/// Thresholds come from `thresholds` when given, otherwise from these cells.
std::vector<CellMetrics> collect_metrics(const std::filesystem::path& dir,
                                         const std::optional<ThresholdTable>& thresholds = {});

/// Thresholds stored in dir/thresholds.csv, or computed from the metrics in
/// `dir` and written there.
ThresholdTable load_or_compute_thresholds(const std::filesystem::path& dir);

std::string metrics_csv(const std::vector<CellMetrics>& cells, const ThresholdTable& thresholds);

/// Normalized per-seed scores (0 to 1) for aggregate(). Environments whose best
/// score is not positive are skipped and named in `skipped`.
ScoreTable normalized_scores(const std::vector<CellMetrics>& cells,
                             std::vector<std::string>* skipped = nullptr);

std::string aggregate_json(const AggregateReport& report, const std::vector<std::string>& skipped,
                           const std::vector<CellMetrics>& cells);

/// Writes metrics.csv, thresholds.csv and aggregate.json into `dir`.
void write_metrics(const std::filesystem::path& dir);

/// Baseline-vs-tuned table: "value (+x%)" cells, a trailing " *" on the
/// largest improvement per backend and metric, NaN for unreached thresholds.
std::string report_csv(const std::vector<CellMetrics>& baseline,
                       const std::vector<CellMetrics>& tuned);
std::string report(const std::filesystem::path& baseline_dir, const std::filesystem::path& tuned_dir);

}  // namespace npg
