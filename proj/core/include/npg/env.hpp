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

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "npg/linalg.hpp"

namespace npg {

class EnvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EnvKind { kLqr, kPointMass, kPendulum };

struct EnvSpec {
  std::string name;
  EnvKind kind = EnvKind::kLqr;
  int obs_dim = 0;
  int act_dim = 0;
  int max_episode_len = 0;
  double action_low = -1.0;
  double action_high = 1.0;
};

/// Internal dynamics state plus the step counter within the episode.
struct EnvState {
  Vector x;
  int t = 0;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;      // episode over (horizon or bound)
  bool terminal = false;  // bound exceeded: no bootstrapping past this step
};

/// Known names: "lqr", "pointmass", "pendulum".
EnvSpec make_env(const std::string& name);
std::vector<std::string> env_names();

EnvState env_reset(const EnvSpec& spec, std::mt19937_64& rng);
Vector observe(const EnvSpec& spec, const EnvState& state);

/// Deterministic transition. The action is clipped to the action range first.
StepResult env_step(const EnvSpec& spec, const EnvState& state, const Vector& action);

/// x' = A x + B u, reward −(xᵀQx + uᵀRu), x0 ~ U[−init_range, init_range]².
struct LqrSystem {
  Matrix a, b, q, r;
  double init_range = 1.0;
  double state_bound = 0.0;
};
const LqrSystem& lqr_system();

/// Stationary gain K* of the infinite-horizon discrete Riccati equation.
Matrix lqr_riccati_gain(const LqrSystem& sys, int max_iters = 10000, double tol = 1e-12);

/// Expected undiscounted episode return of u = −K x over `horizon` steps with
/// x0 drawn from the LQR start distribution (closed form, no clipping).
double lqr_policy_return(const LqrSystem& sys, const Matrix& gain, int horizon);

/// Expected return of the time-varying finite-horizon optimum; no policy of
/// any form can exceed it.
double lqr_optimal_return(const LqrSystem& sys, int horizon);

/// P_0 of the finite-horizon backward Riccati recursion; the optimal return
/// from x0 is −x0ᵀ P_0 x0.
Matrix lqr_cost_to_go(const LqrSystem& sys, int horizon);
double lqr_optimal_return(const LqrSystem& sys, int horizon, const Vector& x0);

}  // namespace npg
