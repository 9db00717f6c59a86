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
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "npg/env.hpp"
#include "npg/fisher.hpp"
#include "npg/policy.hpp"
#include "npg/rollout.hpp"

namespace npg {

enum class StepMode { kLineSearch, kClip };

std::string to_string(StepMode mode);
StepMode parse_step_mode(const std::string& name);

/// Critic optimizer: plain SGD, or SGD on a gradient preconditioned by one of
/// the Fisher backends applied to the critic's Gauss-Newton matrix.
struct CriticMode {
  bool natural = false;
  FisherBackendKind backend = FisherBackendKind::kKFAC;

  bool operator==(const CriticMode&) const = default;
};

/// "sgd" or "natural:<backend>".
std::string to_string(const CriticMode& mode);
CriticMode parse_critic_mode(const std::string& name);

struct TrainerConfig {
  std::string env = "lqr";
  FisherBackendKind backend = FisherBackendKind::kKFAC;
  double damping = 0.1;     // λ_d, Tikhonov damping of the policy Fisher
  double kl_limit = 0.01;   // δ, trust region on KL(π_old ‖ π_new)
  StepMode step_mode = StepMode::kLineSearch;
  double max_lr = 1.0;      // η_max
  int batch_size = 512;     // m, environment steps per update
  double gamma = 0.99;
  double lambda_gae = 0.95;
  bool normalize_advantages = true;
  CriticMode critic_mode;
  double critic_lr = 1e-2;
  double critic_damping = 0.1;
  int critic_minibatch = 16;
  std::int64_t total_env_steps = 200000;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64};
  double init_log_std = 0.0;
  BackendOptions backend_options;
  bool record_wallclock = true;
  int eval_episodes = 32;  // deterministic evaluation of the final policy; 0 disables

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct UpdateReport {
  double surrogate_before = 0.0;  // −mean(Ψ·log π) at the old parameters
  double surrogate_after = 0.0;
  double realized_kl = 0.0;       // KL(π_old ‖ π_new) on the batch states
  double step_scale = 0.0;        // multiplier applied to the preconditioned gradient
  double direction_curvature = 0.0;  // ΔᵀFΔ of the preconditioned gradient Δ
  bool accepted = false;
  int line_search_trials = 0;
  double cg_residual = std::numeric_limits<double>::quiet_NaN();
  int cg_iterations = 0;
  double precondition_ms = 0.0;
  double wallclock_ms = 0.0;
};

struct Checkpoint {
  std::int64_t env_steps = 0;
  double mean_return = 0.0;
  UpdateReport report;
};

struct RunTrace {
  std::vector<Checkpoint> checkpoints;
  std::uint64_t seed = 0;
  std::string backend;
  std::string env;
  std::string config_hash;
  bool valid = true;
  std::string error;
  double final_eval_return = std::numeric_limits<double>::quiet_NaN();
};

struct LossAndGrad {
  double loss = 0.0;
  FlatGradient grad;
};

/// loss = −mean(Ψ·log π(a|s)) with Ψ = batch.advantages.
LossAndGrad policy_loss_and_grad(const GaussianPolicy& policy, const RolloutBatch& batch);

struct LineSearchResult {
  double scale = 0.0;
  bool accepted = false;
  int trials = 0;
  double kl = 0.0;
  double improvement = 0.0;
};

inline constexpr int kLineSearchTrials = 10;

/// Tries θ + η_max·0.5^j·direction for j = 0..9 and accepts the first with
/// strictly positive surrogate improvement mean(Ψ·(log π_new − log π_old))
/// and KL ≤ δ.
LineSearchResult backtracking_line_search(const GaussianPolicy& policy, const RolloutBatch& batch,
                                          const Vector& direction, const TrainerConfig& config);

/// min(η_max, √(2δ / (dᵀFd + 1e-12))).
double step_size_clip(const Vector& direction, const Vector& fvp_of_direction,
                      const TrainerConfig& config);

struct NaturalStepResult {
  GaussianPolicy policy;
  UpdateReport report;
};

/// One natural-gradient update. Δ = backend.precondition(∇L); the policy moves
/// along −Δ with the scale chosen by the configured step mode. Rejected or
/// non-finite updates leave the parameters untouched.
NaturalStepResult natural_step(const GaussianPolicy& policy, const RolloutBatch& batch,
                         const FisherBackend& backend, const CurvatureBatch& curvature,
                         const TrainerConfig& config);

/// Curvature inputs of the policy at `states` (Fisher rows, FVP, log_std diagonal).
/// The returned object references `cache`, which must outlive it.
CurvatureBatch policy_curvature(const GaussianPolicy& policy, const Matrix& states,
                                const LayerCache& cache);

/// One epoch of minibatch updates on ½·mean((V(s) − R)²). With a natural
/// critic mode the minibatch gradient is preconditioned by `backend` using the
/// critic's Gauss-Newton matrix (unit-variance Gaussian likelihood).
NetworkParams critic_update(const NetworkParams& critic, const RolloutBatch& batch,
                            const TrainerConfig& config, FisherBackend* backend = nullptr,
                            std::uint64_t shuffle_seed = 0);

struct TrainResult {
  RunTrace trace;
  GaussianPolicy policy;
  NetworkParams critic;
};

TrainResult train_full(const TrainerConfig& config);
RunTrace train(const TrainerConfig& config);

/// Seed of the final-policy evaluation episodes.
std::uint64_t eval_seed(const TrainerConfig& config);

/// JSON-lines trace: a metadata line followed by one record per update.
void write_trace_jsonl(std::ostream& os, const RunTrace& trace);
RunTrace read_trace_jsonl(std::istream& is);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace npg
