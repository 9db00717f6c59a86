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

#include "npg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

namespace npg {

AlignedReturns align_returns(const std::vector<RunTrace>& traces) {
  if (traces.empty()) throw MetricsError("no traces");
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& t : traces) n = std::min(n, t.checkpoints.size());
  if (n == 0) throw MetricsError("trace with no checkpoints");

  AlignedReturns out;
  out.env_steps.resize(n);
  out.returns.assign(n, std::vector<double>(traces.size()));
  for (std::size_t c = 0; c < n; ++c) {
    out.env_steps[c] = traces.front().checkpoints[c].env_steps;
    for (std::size_t s = 0; s < traces.size(); ++s) {
      const auto& cp = traces[s].checkpoints[c];
      if (cp.env_steps != out.env_steps[c]) {
        throw MetricsError("checkpoint " + std::to_string(c) + " env_steps differ across seeds");
      }
      out.returns[c][s] = cp.mean_return;
    }
  }
  return out;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw MetricsError("mean of empty set");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double performance(const std::vector<RunTrace>& traces) {
  const auto aligned = align_returns(traces);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& row : aligned.returns) best = std::max(best, mean(row));
  return best;
}

double stability(const std::vector<RunTrace>& traces) {
  if (traces.size() < 2) throw MetricsError("stability needs at least 2 seeds");
  const auto aligned = align_returns(traces);
  double total = 0.0;
  for (const auto& row : aligned.returns) {
    const double mu = mean(row);
    double ss = 0.0;
    for (double r : row) ss += (r - mu) * (r - mu);
    total += std::sqrt(ss / static_cast<double>(row.size()));
  }
  return -total / static_cast<double>(aligned.returns.size());
}

std::optional<double> sample_efficiency(const std::vector<RunTrace>& traces, double threshold) {
  const auto aligned = align_returns(traces);
  for (std::size_t c = 0; c < aligned.returns.size(); ++c) {
    if (mean(aligned.returns[c]) >= threshold) return -static_cast<double>(aligned.env_steps[c]);
  }
  return std::nullopt;
}

double scaled_wallclock_seconds(const RunTrace& trace, std::int64_t window_steps,
                                std::int64_t target_steps) {
  if (trace.checkpoints.empty()) throw MetricsError("trace with no checkpoints");
  if (window_steps < 1 || target_steps < 1) throw MetricsError("step windows must be positive");
  double ms = 0.0;
  std::int64_t steps = 0;
  for (const auto& cp : trace.checkpoints) {
    ms += cp.report.wallclock_ms;
    steps = cp.env_steps;
    if (steps >= window_steps) break;
  }
  if (steps <= 0) throw MetricsError("trace reached no environment steps");
  return ms / 1000.0 * static_cast<double>(target_steps) / static_cast<double>(steps);
}

double computation_time_from_seconds(std::vector<double> seconds) {
  if (seconds.empty()) throw MetricsError("no timings");
  return -median(std::move(seconds));
}

double computation_time(const std::vector<RunTrace>& traces, std::int64_t window_steps,
                        std::int64_t target_steps) {
  std::vector<double> seconds;
  for (const auto& t : traces) seconds.push_back(scaled_wallclock_seconds(t, window_steps, target_steps));
  return computation_time_from_seconds(std::move(seconds));
}

MetricRecord compute_metrics(const std::vector<RunTrace>& traces, double threshold,
                             std::int64_t window_steps) {
  if (traces.empty()) throw MetricsError("no traces");
  MetricRecord r;
  r.backend = traces.front().backend;
  r.environment = traces.front().env;
  r.performance = performance(traces);
  r.stability = stability(traces);
  r.sample_efficiency = sample_efficiency(traces, threshold);
  r.computation_time = computation_time(traces, window_steps);
  return r;
}

ThresholdTable thresholds_from(const std::vector<MetricRecord>& baseline) {
  ThresholdTable out;
  for (const auto& r : baseline) {
    auto [it, inserted] = out.emplace(r.environment, r.performance);
    if (!inserted) it->second = std::min(it->second, r.performance);
  }
  return out;
}

std::map<std::string, double> normalize_performance(const std::map<std::string, double>& scores,
                                                    bool percent) {
  if (scores.empty()) throw MetricsError("no scores to normalize");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [_, s] : scores) best = std::max(best, s);
  if (!(best > 0.0)) throw MetricsError("cannot normalize: best score is not positive");
  const double scale = percent ? 100.0 : 1.0;
  std::map<std::string, double> out;
  for (const auto& [name, s] : scores) out[name] = scale * s / best;
  return out;
}

double median(std::vector<double> values) { return percentile(std::move(values), 0.5); }

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw MetricsError("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double interquartile_mean(std::vector<double> values) {
  if (values.empty()) throw MetricsError("IQM of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t cut = values.size() / 4;
  double sum = 0.0;
  for (std::size_t i = cut; i < values.size() - cut; ++i) sum += values[i];
  return sum / static_cast<double>(values.size() - 2 * cut);
}

double optimality_gap(const std::vector<double>& values) {
  if (values.empty()) throw MetricsError("optimality gap of empty set");
  double sum = 0.0;
  for (double v : values) sum += 1.0 - std::min(v, 1.0);
  return sum / static_cast<double>(values.size());
}

namespace {

struct Point4 {
  double median, iqm, mean, gap;
};

Point4 statistics(const std::vector<double>& pooled) {
  return {npg::median(pooled), interquartile_mean(pooled), npg::mean(pooled),
          optimality_gap(pooled)};
}

Estimate interval(double point, std::vector<double> samples, double confidence) {
  const double alpha = (1.0 - confidence) / 2.0;
  Estimate e;
  e.point = point;
  e.low = percentile(samples, alpha);
  e.high = percentile(std::move(samples), 1.0 - alpha);
  return e;
}

}  // namespace

AggregateReport aggregate(const ScoreTable& scores, int resamples, std::uint64_t seed,
                          double confidence) {
  if (resamples < 1) throw MetricsError("resamples must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) throw MetricsError("confidence must be in (0, 1)");
  AggregateReport report;
  report.resamples = resamples;
  report.confidence = confidence;
  report.seed = seed;

  std::uint64_t stream = 0;
  for (const auto& [backend, envs] : scores) {
    if (envs.empty()) throw MetricsError("backend " + backend + " has no environments");
    std::vector<double> pooled;
    for (const auto& [env, runs] : envs) {
      if (runs.size() < 2) throw MetricsError("aggregate needs at least 2 seeds (" + backend + "/" + env + ")");
      pooled.insert(pooled.end(), runs.begin(), runs.end());
    }
    const Point4 point = statistics(pooled);

    std::mt19937_64 rng(mix_seed(seed, stream++));
    std::vector<double> med(resamples), iqm(resamples), mu(resamples), gap(resamples);
    std::vector<double> sample(pooled.size());
    for (int b = 0; b < resamples; ++b) {
      std::size_t k = 0;
      for (const auto& [env, runs] : envs) {
        std::uniform_int_distribution<std::size_t> pick(0, runs.size() - 1);
        for (std::size_t i = 0; i < runs.size(); ++i) sample[k++] = runs[pick(rng)];
      }
      const Point4 s = statistics(sample);
      med[b] = s.median;
      iqm[b] = s.iqm;
      mu[b] = s.mean;
      gap[b] = s.gap;
    }
    BackendAggregate agg;
    agg.median = interval(point.median, std::move(med), confidence);
    agg.iqm = interval(point.iqm, std::move(iqm), confidence);
    agg.mean = interval(point.mean, std::move(mu), confidence);
    agg.optimality_gap = interval(point.gap, std::move(gap), confidence);
    report.backends[backend] = agg;
  }
  return report;
}

double percent_change(double baseline, double tuned) {
  if (baseline == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * (tuned - baseline) / std::fabs(baseline);
}

std::string format_value(std::optional<double> value, int decimals) {
  if (!value || !std::isfinite(*value)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *value);
  std::string s = buf;
  // "-0" reads as a sign error in a larger-is-better table
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string format_change(std::optional<double> baseline, std::optional<double> tuned,
                          int decimals) {
  if (!tuned || !std::isfinite(*tuned)) return "NaN";
  const std::string value = format_value(tuned, decimals);
  if (!baseline || !std::isfinite(*baseline)) return value + " (NaN%)";
  const double pct = percent_change(*baseline, *tuned);
  if (!std::isfinite(pct)) return value + " (NaN%)";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.0f%%", pct);
  std::string p = buf;
  if (p == "-0%") p = "+0%";
  return value + " (" + p + ")";
}

std::string format_threshold(double threshold) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", threshold / 1000.0);
  return buf;
}

}  // namespace npg
