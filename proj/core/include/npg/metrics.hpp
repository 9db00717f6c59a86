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
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "npg/trainer.hpp"

namespace npg {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The four metrics of one backend/env cell. All but performance are
/// sign-flipped so that larger is better everywhere.
struct MetricRecord {
  std::string backend;
  std::string environment;
  double performance = 0.0;
  double stability = 0.0;
  std::optional<double> sample_efficiency;  // −env steps; absent when never reached
  double computation_time = 0.0;            // −seconds
};

/// Checkpoint returns as a (checkpoints x seeds) table. Traces are cut to the
/// shortest one; env_steps must agree across seeds at every kept checkpoint.
struct AlignedReturns {
  std::vector<std::int64_t> env_steps;
  std::vector<std::vector<double>> returns;  // [checkpoint][seed]
};
AlignedReturns align_returns(const std::vector<RunTrace>& traces);

double performance(const std::vector<RunTrace>& traces);

/// Population standard deviation across seeds at each checkpoint.
double stability(const std::vector<RunTrace>& traces);

std::optional<double> sample_efficiency(const std::vector<RunTrace>& traces, double threshold);

/// Wall-clock seconds one trace needs to reach `window_steps`, scaled linearly
/// to `target_steps`. Uses the whole trace when it ends before the window.
double scaled_wallclock_seconds(const RunTrace& trace, std::int64_t window_steps,
                                std::int64_t target_steps);

/// −median over seeds of scaled_wallclock_seconds.
double computation_time(const std::vector<RunTrace>& traces, std::int64_t window_steps = 10000,
                        std::int64_t target_steps = 100000);

/// −median of already-scaled per-seed timings.
double computation_time_from_seconds(std::vector<double> seconds);

MetricRecord compute_metrics(const std::vector<RunTrace>& traces, double threshold,
                             std::int64_t window_steps = 10000);

/// Per-environment threshold: the lowest performance across backends.
using ThresholdTable = std::map<std::string, double>;
ThresholdTable thresholds_from(const std::vector<MetricRecord>& baseline);

/// Divides each score by the best score; ×100 unless `percent` is false.
std::map<std::string, double> normalize_performance(const std::map<std::string, double>& scores,
                                                    bool percent = true);

// ---------------------------------------------------------------------------
// Aggregates
// ---------------------------------------------------------------------------

double median(std::vector<double> values);

/// Mean of the middle half after dropping floor(n/4) values from each end.
double interquartile_mean(std::vector<double> values);

double mean(const std::vector<double>& values);

/// mean(1 − min(x, 1)).
double optimality_gap(const std::vector<double>& values);

/// Linear interpolation between order statistics, q ∈ [0, 1].
double percentile(std::vector<double> values, double q);

struct Estimate {
  double point = 0.0;
  double low = 0.0;
  double high = 0.0;
};

struct BackendAggregate {
  Estimate median;
  Estimate iqm;
  Estimate mean;
  Estimate optimality_gap;
};

/// scores[backend][env] = normalized per-seed scores (0 to 1 scale).
using ScoreTable = std::map<std::string, std::map<std::string, std::vector<double>>>;

struct AggregateReport {
  std::map<std::string, BackendAggregate> backends;
  int resamples = 2000;
  double confidence = 0.95;
  std::uint64_t seed = 0;
};

inline constexpr int kBootstrapResamples = 2000;

/// Point estimates over the pooled runs; percentile intervals from a
/// bootstrap that resamples seeds within each environment independently.
AggregateReport aggregate(const ScoreTable& scores, int resamples = kBootstrapResamples,
                          std::uint64_t seed = 0, double confidence = 0.95);

// ---------------------------------------------------------------------------
// Formatting
// ---------------------------------------------------------------------------

/// 100·(tuned − baseline)/|baseline|.
double percent_change(double baseline, double tuned);

/// "181 (+81%)"; "NaN" when the tuned value is absent, "181 (NaN%)" when only
/// the baseline is absent or zero.
std::string format_change(std::optional<double> baseline, std::optional<double> tuned,
                          int decimals = 0);

std::string format_value(std::optional<double> value, int decimals = 0);

/// Threshold for display (divided by 1000).
std::string format_threshold(double threshold);

}  // namespace npg
