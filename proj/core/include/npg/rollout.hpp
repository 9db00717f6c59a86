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
#include <vector>

#include "npg/env.hpp"
#include "npg/net.hpp"
#include "npg/policy.hpp"

namespace npg {

/// A fixed-size batch of transitions. Episodes that end inside the batch are
/// flagged in `terminals`; `end_values` holds the value to bootstrap from at
/// such a step (the critic's estimate for a horizon cut, 0 for a true
/// terminal). The last step, when not an episode end, bootstraps from
/// `bootstrap_value`.
struct RolloutBatch {
  Matrix states;   // n x obs_dim
  Matrix actions;  // n x act_dim, as sampled (before clipping)
  Vector rewards;
  std::vector<bool> terminals;
  Vector end_values;
  Vector log_probs;
  Vector values;
  Vector advantages;
  Vector returns;
  double bootstrap_value = 0.0;

  std::vector<double> episode_returns;  // partition of rewards at episode ends
  std::vector<bool> episode_complete;   // false for the trailing cut-off episode

  Eigen::Index size() const { return rewards.size(); }
};

/// Collects exactly `batch_size` transitions with the policy, starting from a
/// fresh reset and auto-resetting at episode ends. Deterministic per seed.
RolloutBatch collect(const GaussianPolicy& policy, const NetworkParams& critic,
                     const EnvSpec& spec, int batch_size, std::uint64_t seed);

/// Fills advantages and returns with GAE(γ, λ). δ_t = r_t + γ·V_next − V(s_t),
/// where V_next is V(s_{t+1}) inside an episode, end_values[t] at an episode
/// end, and bootstrap_value after the last step.
void compute_gae(RolloutBatch& batch, double gamma, double lambda_gae, double bootstrap_value);

/// Per-step discounted reward-to-go, restarting after each terminal.
Vector discounted_return(const Vector& rewards, double gamma,
                         const std::vector<bool>& terminals = {});

/// Mean return of completed episodes; falls back to all episodes when none
/// completed.
double mean_episode_return(const RolloutBatch& batch);

struct EvalResult {
  double mean_return = 0.0;
  std::vector<double> returns;
  std::vector<EnvState> initial_states;
};

/// Runs `episodes` full episodes. Deterministic evaluation acts with the
/// policy mean; otherwise actions are sampled.
EvalResult evaluate_policy(const GaussianPolicy& policy, const EnvSpec& spec, int episodes,
                           std::uint64_t seed, bool deterministic = true);

}  // namespace npg
