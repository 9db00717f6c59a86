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
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "npg/trainer.hpp"

namespace npg {

/// Malformed or invalid configuration. `field()` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Ordered `key = value` entries; '#' starts a comment, blank lines ignored.
/// Duplicate keys are errors.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
KeyValues parse_key_values(std::istream& is);

/// Sets one TrainerConfig field from its text form. Returns false when the
/// key is not a trainer field. Step counts accept an optional "steps" unit.
bool apply_trainer_key(TrainerConfig& config, const std::string& key, const std::string& value);

/// Every trainer field, one `key = value` line each, in fixed order.
std::string canonical_text(const TrainerConfig& config);

std::string fnv1a_hex(const std::string& text);

/// Hash of canonical_text; identifies one (config, env, seed) cell.
std::string config_hash(const TrainerConfig& config);

struct ExperimentConfig {
  TrainerConfig trainer;
  std::vector<std::string> envs;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "results";
  std::string label = "experiment";
  std::int64_t timing_window_steps = 10000;  // wall-clock window for computation time
};

ExperimentConfig parse_experiment_config(std::istream& is);
ExperimentConfig load_experiment_config(const std::string& path);

/// Grid axes. `max_lr` only multiplies out clip-mode cells; line-search cells
/// keep the base max_lr.
struct GridSpec {
  ExperimentConfig base;
  std::string tuning_env = "lqr";
  std::vector<FisherBackendKind> backends;
  std::vector<double> damping;
  std::vector<double> critic_lr;
  std::vector<StepMode> step_mode;
  std::vector<double> max_lr;
  std::vector<int> batch_size;
  std::vector<CriticMode> critic_mode;
  std::vector<double> critic_damping;
};

/// Accepts every experiment key plus `tuning_env` and `grid.<axis> = a, b, ...`.
/// Axes left unset take the single base value.
GridSpec parse_grid_spec(std::istream& is);
GridSpec load_grid_spec(const std::string& path);

/// Expands the cartesian product in a fixed order: backend, damping,
/// critic_lr, step_mode (max_lr for clip), batch_size, critic_mode,
/// critic_damping. Every returned config has env = tuning_env.
std::vector<TrainerConfig> expand_grid(const GridSpec& spec);

std::vector<std::string> split_list(const std::string& value);

}  // namespace npg
