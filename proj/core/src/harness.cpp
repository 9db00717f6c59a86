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

#include "npg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json.hpp"

namespace npg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kThresholds = "thresholds.csv";
constexpr std::int64_t kTimingTargetSteps = 100000;

void write_file_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw HarnessError("cannot write " + tmp.string());
    out << text;
    if (!out) throw HarnessError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HarnessError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt17(double x) {
  if (std::isnan(x)) return "NaN";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json cell_to_json(const CellRecord& c) {
  return {{"hash", c.hash}, {"variant", c.variant}, {"backend", c.backend},
          {"env", c.env},   {"seed", c.seed},       {"valid", c.valid}};
}

CellRecord cell_from_json(const json& j) {
  CellRecord c;
  c.hash = j.at("hash").get<std::string>();
  c.variant = j.at("variant").get<std::string>();
  c.backend = j.at("backend").get<std::string>();
  c.env = j.at("env").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.valid = j.at("valid").get<bool>();
  return c;
}

std::string experiment_hash(const ExperimentConfig& e) {
  TrainerConfig t = e.trainer;
  t.env.clear();
  t.seed = 0;
  std::string text = canonical_text(t);
  text += "envs =";
  for (const auto& env : e.envs) text += " " + env;
  text += "\nseeds =";
  for (auto s : e.seeds) text += " " + std::to_string(s);
  text += "\ntiming_window_steps = " + std::to_string(e.timing_window_steps) + "\n";
  return fnv1a_hex(text);
}

std::string grid_hash(const GridSpec& g) {
  std::string text = "tuning_env = " + g.tuning_env + "\n";
  for (const auto& c : expand_grid(g)) text += config_hash(c) + "\n";
  text += experiment_hash(g.base);
  return fnv1a_hex(text);
}

}  // namespace

// ---------------------------------------------------------------------------
// ResultStore
// ---------------------------------------------------------------------------

ResultStore::ResultStore(fs::path root, std::string label, std::string experiment_hash,
                         std::int64_t timing_window_steps)
    : root_(std::move(root)),
      label_(std::move(label)),
      experiment_hash_(std::move(experiment_hash)),
      timing_window_steps_(timing_window_steps) {
  const fs::path manifest = root_ / kManifest;
  if (fs::exists(manifest)) {
    const json j = json::parse(read_file(manifest));
    if (j.at("experiment_hash").get<std::string>() != experiment_hash_) {
      throw HarnessError("label '" + label_ + "' is already used in " + root_.parent_path().string() +
                         " by a different experiment");
    }
    for (const auto& c : j.at("cells")) cells_.push_back(cell_from_json(c));
  } else {
    fs::create_directories(root_ / "configs");
    fs::create_directories(root_ / "traces");
    write_manifest();
  }
}

ResultStore::ResultStore(fs::path root) : root_(std::move(root)) {
  const fs::path manifest = root_ / kManifest;
  if (!fs::exists(manifest)) throw HarnessError("no manifest in " + root_.string());
  const json j = json::parse(read_file(manifest));
  label_ = j.at("label").get<std::string>();
  experiment_hash_ = j.at("experiment_hash").get<std::string>();
  timing_window_steps_ = j.value("timing_window_steps", std::int64_t{10000});
  for (const auto& c : j.at("cells")) cells_.push_back(cell_from_json(c));
}

fs::path ResultStore::trace_path(const std::string& hash) const {
  return root_ / "traces" / (hash + ".jsonl");
}

fs::path ResultStore::config_path(const std::string& hash) const {
  return root_ / "configs" / (hash + ".cfg");
}

std::optional<CellRecord> ResultStore::completed(const std::string& hash) const {
  std::lock_guard lock(mu_);
  for (const auto& c : cells_) {
    if (c.hash == hash && c.valid && fs::exists(trace_path(hash))) return c;
  }
  return std::nullopt;
}

std::vector<CellRecord> ResultStore::cells() const {
  std::lock_guard lock(mu_);
  return cells_;
}

void ResultStore::store(const TrainerConfig& config, const RunTrace& trace) {
  CellRecord cell;
  cell.hash = config_hash(config);
  cell.variant = variant_hash(config);
  cell.backend = to_string(config.backend);
  cell.env = config.env;
  cell.seed = config.seed;
  cell.valid = trace.valid;

  std::ostringstream os;
  write_trace_jsonl(os, trace);
  write_file_atomic(config_path(cell.hash), canonical_text(config));
  write_file_atomic(trace_path(cell.hash), os.str());

  std::lock_guard lock(mu_);
  auto it = std::find_if(cells_.begin(), cells_.end(),
                         [&](const CellRecord& c) { return c.hash == cell.hash; });
  if (it == cells_.end()) {
    cells_.push_back(cell);
  } else {
    *it = cell;
  }
  std::sort(cells_.begin(), cells_.end(), [](const CellRecord& a, const CellRecord& b) {
    return std::tie(a.env, a.backend, a.variant, a.seed) < std::tie(b.env, b.backend, b.variant, b.seed);
  });
  write_manifest();
}

RunTrace ResultStore::load_trace(const CellRecord& cell) const {
  std::istringstream in(read_file(trace_path(cell.hash)));
  return read_trace_jsonl(in);
}

void ResultStore::write_manifest() const {
  json cells = json::array();
  for (const auto& c : cells_) cells.push_back(cell_to_json(c));
  const json j = {{"label", label_},
                  {"experiment_hash", experiment_hash_},
                  {"timing_window_steps", timing_window_steps_},
                  {"cells", cells}};
  write_file_atomic(root_ / kManifest, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

std::string variant_hash(TrainerConfig config) {
  config.seed = 0;
  return config_hash(config);
}

int worker_count() {
  const char* v = std::getenv("NPG_WORKERS");
  if (v == nullptr || *v == '\0') return 1;
  try {
    const int n = std::stoi(v);
    if (n >= 1) return n;
  } catch (const std::exception&) {
  }
  throw ConfigError("NPG_WORKERS", "must be a positive integer");
}

RunSummary run_jobs(ResultStore& store, const std::vector<TrainerConfig>& jobs, int workers) {
  RunSummary summary;
  summary.store = store.root();
  std::vector<const TrainerConfig*> todo;
  std::set<std::string> queued;
  for (const auto& job : jobs) {
    const std::string hash = config_hash(job);
    if (store.completed(hash)) {
      ++summary.skipped;
    } else if (queued.insert(hash).second) {
      todo.push_back(&job);
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> invalid{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      const RunTrace trace = train(*todo[i]);
      if (!trace.valid) ++invalid;
      store.store(*todo[i], trace);
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(todo.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  summary.trained = static_cast<int>(todo.size());
  summary.invalid = invalid;

  std::set<std::string> wanted;
  for (const auto& job : jobs) wanted.insert(config_hash(job));
  for (const auto& c : store.cells()) {
    if (wanted.count(c.hash)) summary.cells.push_back(c);
  }
  return summary;
}

RunSummary run_experiment(const ExperimentConfig& config, int workers) {
  ResultStore store(fs::path(config.output_dir) / config.label, config.label,
                    experiment_hash(config), config.timing_window_steps);
  std::vector<TrainerConfig> jobs;
  for (const auto& env : config.envs) {
    for (auto seed : config.seeds) {
      TrainerConfig t = config.trainer;
      t.env = env;
      t.seed = seed;
      jobs.push_back(std::move(t));
    }
  }
  return run_jobs(store, jobs, workers);
}

RunSummary run(const std::string& config_path) {
  return run_experiment(load_experiment_config(config_path));
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

std::size_t select_best(const std::vector<GridCellResult>& cells) {
  if (cells.empty()) throw HarnessError("grid is empty");
  auto key = [](const GridCellResult& c) {
    return std::make_tuple(-c.performance, c.config.damping,
                           c.config.step_mode == StepMode::kLineSearch ? 0 : 1,
                           c.config.batch_size);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (key(cells[i]) < key(cells[best])) best = i;
  }
  return best;
}

namespace {

std::string experiment_text(const ExperimentConfig& e) {
  std::string text;
  std::istringstream lines(canonical_text(e.trainer));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("env = ", 0) == 0 || line.rfind("seed = ", 0) == 0) continue;
    text += line + "\n";
  }
  text += "envs = ";
  for (std::size_t i = 0; i < e.envs.size(); ++i) text += (i ? ", " : "") + e.envs[i];
  text += "\nseeds = ";
  for (std::size_t i = 0; i < e.seeds.size(); ++i) text += (i ? ", " : "") + std::to_string(e.seeds[i]);
  text += "\noutput_dir = " + e.output_dir + "\nlabel = " + e.label +
          "\ntiming_window_steps = " + std::to_string(e.timing_window_steps) + "\n";
  return text;
}

}  // namespace

GridSummary run_grid(const GridSpec& spec, int workers) {
  const auto configs = expand_grid(spec);
  const std::string label = spec.base.label;
  ResultStore store(fs::path(spec.base.output_dir) / label, label, grid_hash(spec),
                    spec.base.timing_window_steps);

  std::vector<TrainerConfig> jobs;
  for (const auto& c : configs) {
    for (auto seed : spec.base.seeds) {
      TrainerConfig t = c;
      t.seed = seed;
      jobs.push_back(std::move(t));
    }
  }
  GridSummary out;
  out.runs = run_jobs(store, jobs, workers);

  std::map<std::string, std::vector<RunTrace>> by_variant;
  for (const auto& cell : out.runs.cells) {
    if (cell.valid) by_variant[cell.variant].push_back(store.load_trace(cell));
  }
  for (const auto& c : configs) {
    GridCellResult r;
    r.config = c;
    r.config.seed = 0;
    r.variant = variant_hash(c);
    const auto it = by_variant.find(r.variant);
    r.performance = it == by_variant.end() ? -std::numeric_limits<double>::infinity()
                                           : performance(it->second);
    out.cells.push_back(std::move(r));
  }

  std::ostringstream all;
  all << "variant,backend,damping,critic_lr,step_mode,max_lr,batch_size,critic_mode,critic_damping,performance\n";
  for (const auto& r : out.cells) {
    all << r.variant << ',' << to_string(r.config.backend) << ',' << fmt17(r.config.damping) << ','
        << fmt17(r.config.critic_lr) << ',' << to_string(r.config.step_mode) << ','
        << fmt17(r.config.max_lr) << ',' << r.config.batch_size << ','
        << to_string(r.config.critic_mode) << ',' << fmt17(r.config.critic_damping) << ','
        << fmt17(r.performance) << '\n';
  }
  write_file_atomic(store.root() / "grid_results.csv", all.str());

  std::ostringstream sel;
  sel << all.str().substr(0, all.str().find('\n') + 1);
  std::vector<FisherBackendKind> seen;
  for (const auto& r : out.cells) {
    if (std::find(seen.begin(), seen.end(), r.config.backend) != seen.end()) continue;
    seen.push_back(r.config.backend);
    std::vector<GridCellResult> group;
    for (const auto& c : out.cells) {
      if (c.config.backend == r.config.backend) group.push_back(c);
    }
    const GridCellResult& best = group[select_best(group)];
    out.best.push_back(best);
    sel << best.variant << ',' << to_string(best.config.backend) << ',' << fmt17(best.config.damping)
        << ',' << fmt17(best.config.critic_lr) << ',' << to_string(best.config.step_mode) << ','
        << fmt17(best.config.max_lr) << ',' << best.config.batch_size << ','
        << to_string(best.config.critic_mode) << ',' << fmt17(best.config.critic_damping) << ','
        << fmt17(best.performance) << '\n';

    ExperimentConfig tuned = spec.base;
    tuned.trainer = best.config;
    tuned.output_dir = (fs::path(spec.base.output_dir) / (label + "-tuned")).string();
    tuned.label = to_string(best.config.backend);
    write_file_atomic(store.root() / "best" / (to_string(best.config.backend) + ".cfg"),
                      experiment_text(tuned));
  }
  write_file_atomic(store.root() / "selection.csv", sel.str());
  return out;
}

GridSummary grid(const std::string& spec_path) { return run_grid(load_grid_spec(spec_path)); }

// ---------------------------------------------------------------------------
// Metrics over stores
// ---------------------------------------------------------------------------

std::vector<fs::path> find_stores(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw HarnessError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  if (fs::exists(dir / kManifest)) out.push_back(dir);
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == kManifest &&
        entry.path().parent_path() != dir) {
      out.push_back(entry.path().parent_path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw HarnessError("no result stores under " + dir.string());
  return out;
}

namespace {

struct Group {
  std::vector<RunTrace> traces;
  std::int64_t timing_window_steps = 10000;
};

using GroupKey = std::tuple<std::string, std::string, std::string>;  // backend, env, variant

std::map<GroupKey, Group> load_groups(const fs::path& dir) {
  std::map<GroupKey, Group> groups;
  for (const auto& root : find_stores(dir)) {
    const ResultStore store(root);
    for (const auto& cell : store.cells()) {
      if (!cell.valid) continue;
      auto& g = groups[{cell.backend, cell.env, cell.variant}];
      g.timing_window_steps = store.timing_window_steps();
      g.traces.push_back(store.load_trace(cell));
    }
  }
  return groups;
}

}  // namespace

std::vector<CellMetrics> collect_metrics(const fs::path& dir,
                                         const std::optional<ThresholdTable>& thresholds) {
  const auto groups = load_groups(dir);
  std::vector<CellMetrics> out;
  for (const auto& [key, g] : groups) {
    CellMetrics m;
    m.record.backend = std::get<0>(key);
    m.record.environment = std::get<1>(key);
    m.variant = std::get<2>(key);
    m.seeds = static_cast<int>(g.traces.size());
    m.timing_window_steps = g.timing_window_steps;
    m.total_env_steps = align_returns(g.traces).env_steps.back();
    m.record.performance = performance(g.traces);
    m.record.stability = g.traces.size() >= 2 ? stability(g.traces)
                                              : std::numeric_limits<double>::quiet_NaN();
    m.record.computation_time = computation_time(g.traces, g.timing_window_steps, kTimingTargetSteps);
    for (const auto& t : g.traces) m.seed_performance.push_back(performance({t}));
    out.push_back(std::move(m));
  }
  std::vector<MetricRecord> records;
  for (const auto& m : out) records.push_back(m.record);
  const ThresholdTable table = thresholds ? *thresholds : thresholds_from(records);
  for (auto& m : out) {
    const auto it = table.find(m.record.environment);
    if (it == table.end()) {
      throw HarnessError("no threshold for environment '" + m.record.environment + "'");
    }
    m.record.sample_efficiency = sample_efficiency(groups.at({m.record.backend, m.record.environment, m.variant}).traces,
                                                   it->second);
  }
  return out;
}

ThresholdTable load_or_compute_thresholds(const fs::path& dir) {
  const fs::path path = dir / kThresholds;
  ThresholdTable table;
  if (fs::exists(path)) {
    std::istringstream in(read_file(path));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string env, value;
      std::getline(row, env, ',');
      std::getline(row, value, ',');
      table[env] = std::stod(value);
    }
    return table;
  }
  std::vector<MetricRecord> records;
  for (const auto& m : collect_metrics(dir)) records.push_back(m.record);
  table = thresholds_from(records);
  std::ostringstream os;
  os << "environment,threshold,threshold_display_k\n";
  for (const auto& [env, t] : table) os << env << ',' << fmt17(t) << ',' << format_threshold(t) << '\n';
  write_file_atomic(path, os.str());
  return table;
}

std::string metrics_csv(const std::vector<CellMetrics>& cells, const ThresholdTable& thresholds) {
  std::ostringstream os;
  os << "backend,environment,variant,seeds,performance,stability,sample_efficiency,"
        "computation_time_s,threshold,total_env_steps,timing_window_steps,timing_scale\n";
  for (const auto& m : cells) {
    const auto& r = m.record;
    const double threshold = thresholds.count(r.environment) ? thresholds.at(r.environment)
                                                             : std::numeric_limits<double>::quiet_NaN();
    os << r.backend << ',' << r.environment << ',' << m.variant << ',' << m.seeds << ','
       << fmt17(r.performance) << ',' << fmt17(r.stability) << ','
       << (r.sample_efficiency ? fmt17(*r.sample_efficiency) : "NaN") << ','
       << fmt17(r.computation_time) << ',' << fmt17(threshold) << ',' << m.total_env_steps << ','
       << m.timing_window_steps << ','
       << fmt17(static_cast<double>(kTimingTargetSteps) / static_cast<double>(m.timing_window_steps))
       << '\n';
  }
  return os.str();
}

ScoreTable normalized_scores(const std::vector<CellMetrics>& cells, std::vector<std::string>* skipped) {
  std::map<std::string, std::map<std::string, double>> by_env;  // env -> backend -> performance
  for (const auto& m : cells) {
    auto [it, inserted] = by_env[m.record.environment].emplace(m.record.backend, m.record.performance);
    if (!inserted) it->second = std::max(it->second, m.record.performance);
  }
  ScoreTable out;
  for (const auto& [env, scores] : by_env) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [_, s] : scores) best = std::max(best, s);
    if (!(best > 0.0)) {
      if (skipped) skipped->push_back(env);
      continue;
    }
    for (const auto& m : cells) {
      if (m.record.environment != env) continue;
      auto& runs = out[m.record.backend][env];
      for (double p : m.seed_performance) runs.push_back(p / best);
    }
  }
  return out;
}

std::string aggregate_json(const AggregateReport& report, const std::vector<std::string>& skipped,
                           const std::vector<CellMetrics>& cells) {
  auto est = [](const Estimate& e) { return json{{"point", e.point}, {"low", e.low}, {"high", e.high}}; };
  json backends = json::object();
  for (const auto& [name, a] : report.backends) {
    backends[name] = {{"median", est(a.median)},
                      {"iqm", est(a.iqm)},
                      {"mean", est(a.mean)},
                      {"optimality_gap", est(a.optimality_gap)}};
  }
  std::int64_t steps = 0;
  std::int64_t window = 10000;
  for (const auto& m : cells) {
    steps = std::max(steps, m.total_env_steps);
    window = m.timing_window_steps;
  }
  const json j = {{"backends", backends},
                  {"resamples", report.resamples},
                  {"confidence", report.confidence},
                  {"bootstrap_seed", report.seed},
                  {"skipped_environments", skipped},
                  {"total_env_steps", steps},
                  {"timing_window_steps", window},
                  {"timing_scale", static_cast<double>(kTimingTargetSteps) / static_cast<double>(window)}};
  return j.dump(2) + "\n";
}

void write_metrics(const fs::path& dir) {
  const ThresholdTable thresholds = load_or_compute_thresholds(dir);
  const auto cells = collect_metrics(dir, thresholds);
  write_file_atomic(dir / "metrics.csv", metrics_csv(cells, thresholds));

  std::vector<std::string> skipped;
  ScoreTable scores = normalized_scores(cells, &skipped);
  for (auto it = scores.begin(); it != scores.end();) {
    bool enough = true;
    for (const auto& [_, runs] : it->second) enough = enough && runs.size() >= 2;
    it = enough ? std::next(it) : scores.erase(it);
  }
  write_file_atomic(dir / "aggregate.json", aggregate_json(aggregate(scores), skipped, cells));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

const CellMetrics* unique_cell(const std::vector<CellMetrics>& cells, const std::string& backend,
                               const std::string& env) {
  const CellMetrics* found = nullptr;
  for (const auto& m : cells) {
    if (m.record.backend != backend || m.record.environment != env) continue;
    if (found) throw HarnessError("several configurations for " + backend + "/" + env);
    found = &m;
  }
  return found;
}

std::optional<double> finite(double x) {
  return std::isfinite(x) ? std::optional<double>(x) : std::nullopt;
}

std::optional<double> ksteps(std::optional<double> steps) {
  return steps ? std::optional<double>(*steps / 1000.0) : std::nullopt;
}

}  // namespace

std::string report_csv(const std::vector<CellMetrics>& baseline, const std::vector<CellMetrics>& tuned) {
  struct Row {
    std::string backend, env;
    std::optional<double> base[4], tune[4];
    std::int64_t steps = 0;
    double scale = 0.0;
  };
  std::vector<Row> rows;
  for (const auto& t : tuned) {
    const CellMetrics* b = unique_cell(baseline, t.record.backend, t.record.environment);
    if (!b) throw HarnessError("missing baseline cell " + t.record.backend + "/" + t.record.environment);
    unique_cell(tuned, t.record.backend, t.record.environment);
    Row r;
    r.backend = t.record.backend;
    r.env = t.record.environment;
    r.base[0] = finite(b->record.performance);
    r.base[1] = finite(b->record.stability);
    r.base[2] = ksteps(b->record.sample_efficiency);
    r.base[3] = finite(b->record.computation_time);
    r.tune[0] = finite(t.record.performance);
    r.tune[1] = finite(t.record.stability);
    r.tune[2] = ksteps(t.record.sample_efficiency);
    r.tune[3] = finite(t.record.computation_time);
    r.steps = t.total_env_steps;
    r.scale = static_cast<double>(kTimingTargetSteps) / static_cast<double>(t.timing_window_steps);
    rows.push_back(r);
  }

  // Largest improvement per backend and metric gets the flag.
  std::map<std::pair<std::string, int>, std::pair<double, std::size_t>> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      if (!rows[i].base[k] || !rows[i].tune[k]) continue;
      const double pct = percent_change(*rows[i].base[k], *rows[i].tune[k]);
      if (!std::isfinite(pct)) continue;
      auto key = std::make_pair(rows[i].backend, k);
      auto it = best.find(key);
      if (it == best.end() || pct > it->second.first) best[key] = {pct, i};
    }
  }

  static constexpr int kDecimals[4] = {2, 2, 1, 2};
  std::ostringstream os;
  os << "backend,environment,performance,stability,sample_efficiency_ksteps,computation_time_s,"
        "total_env_steps,timing_scale\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    os << r.backend << ',' << r.env;
    for (int k = 0; k < 4; ++k) {
      std::string cell = format_change(r.base[k], r.tune[k], kDecimals[k]);
      const auto it = best.find({r.backend, k});
      if (it != best.end() && it->second.second == i && it->second.first > 0.0) cell += " *";
      os << ',' << cell;
    }
    os << ',' << r.steps << ',' << fmt17(r.scale) << '\n';
  }
  return os.str();
}

std::string report(const fs::path& baseline_dir, const fs::path& tuned_dir) {
  const ThresholdTable thresholds = load_or_compute_thresholds(baseline_dir);
  const auto baseline = collect_metrics(baseline_dir, thresholds);
  const auto tuned = collect_metrics(tuned_dir, thresholds);
  return report_csv(baseline, tuned);
}

}  // namespace npg
