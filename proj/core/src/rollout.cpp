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

#include "npg/rollout.hpp"

#include <cmath>
#include <numeric>

namespace npg {

RolloutBatch collect(const GaussianPolicy& policy, const NetworkParams& critic,
                     const EnvSpec& spec, int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw EnvError("collect: batch_size must be >= 1");
  if (policy.mean_net.in_dim() != spec.obs_dim || policy.action_dim() != spec.act_dim) {
    throw EnvError("collect: policy dimensions do not match environment '" + spec.name + "'");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector stddev = policy.log_std.array().exp();

  RolloutBatch batch;
  const Eigen::Index n = batch_size;
  batch.states.resize(n, spec.obs_dim);
  batch.actions.resize(n, spec.act_dim);
  batch.rewards.resize(n);
  batch.terminals.assign(n, false);
  batch.end_values = Vector::Zero(n);

  // Horizon-cut steps whose final observation needs a critic estimate.
  std::vector<std::pair<Eigen::Index, Vector>> cut_obs;

  EnvState state = env_reset(spec, rng);
  double episode_total = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const Vector obs = observe(spec, state);
    batch.states.row(t) = obs.transpose();
    Vector action = evaluate(policy.mean_net, obs);
    for (Eigen::Index k = 0; k < action.size(); ++k) action(k) += stddev(k) * normal(rng);
    batch.actions.row(t) = action.transpose();

    StepResult step = env_step(spec, state, action);
    batch.rewards(t) = step.reward;
    episode_total += step.reward;
    if (step.done) {
      batch.terminals[t] = true;
      if (!step.terminal) cut_obs.emplace_back(t, observe(spec, step.next));
      batch.episode_returns.push_back(episode_total);
      batch.episode_complete.push_back(true);
      episode_total = 0.0;
      state = env_reset(spec, rng);
    } else {
      state = std::move(step.next);
    }
  }
  if (!batch.terminals[n - 1]) {
    batch.episode_returns.push_back(episode_total);
    batch.episode_complete.push_back(false);
    batch.bootstrap_value = evaluate(critic, observe(spec, state))(0);
  }
  for (const auto& [t, obs] : cut_obs) batch.end_values(t) = evaluate(critic, obs)(0);

  batch.log_probs = log_prob(distribution(policy, batch.states), batch.actions);
  batch.values = evaluate(critic, batch.states).col(0);
  return batch;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda_gae, double bootstrap_value) {
  const Eigen::Index n = batch.size();
  if (gamma < 0.0 || gamma > 1.0 || lambda_gae < 0.0 || lambda_gae > 1.0) {
    throw EnvError("compute_gae: gamma and lambda must lie in [0, 1]");
  }
  if (batch.values.size() != n) throw EnvError("compute_gae: values are not populated");
  if (static_cast<Eigen::Index>(batch.terminals.size()) != n) {
    throw EnvError("compute_gae: terminal flags are not populated");
  }
  const Vector end_values = batch.end_values.size() == n ? batch.end_values : Vector::Zero(n);
  batch.advantages.resize(n);
  double running = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    double next_value;
    if (batch.terminals[t]) {
      next_value = end_values(t);
      running = 0.0;
    } else {
      next_value = (t + 1 < n) ? batch.values(t + 1) : bootstrap_value;
    }
    const double delta = batch.rewards(t) + gamma * next_value - batch.values(t);
    running = delta + gamma * lambda_gae * running;
    batch.advantages(t) = running;
  }
  batch.returns = batch.advantages + batch.values;
  batch.bootstrap_value = bootstrap_value;
}

Vector discounted_return(const Vector& rewards, double gamma, const std::vector<bool>& terminals) {
  if (gamma < 0.0 || gamma > 1.0) throw EnvError("discounted_return: gamma must lie in [0, 1]");
  Vector out(rewards.size());
  double running = 0.0;
  for (Eigen::Index t = rewards.size() - 1; t >= 0; --t) {
    const bool ends = static_cast<Eigen::Index>(terminals.size()) > t && terminals[t];
    running = rewards(t) + (ends ? 0.0 : gamma * running);
    out(t) = running;
  }
  return out;
}

double mean_episode_return(const RolloutBatch& batch) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < batch.episode_returns.size(); ++i) {
    if (batch.episode_complete[i]) {
      sum += batch.episode_returns[i];
      ++count;
    }
  }
  if (count > 0) return sum / count;
  if (batch.episode_returns.empty()) return 0.0;
  return std::accumulate(batch.episode_returns.begin(), batch.episode_returns.end(), 0.0) /
         static_cast<double>(batch.episode_returns.size());
}

EvalResult evaluate_policy(const GaussianPolicy& policy, const EnvSpec& spec, int episodes,
                           std::uint64_t seed, bool deterministic) {
  if (episodes < 1) throw EnvError("evaluate_policy: episodes must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Vector stddev = policy.log_std.array().exp();
  EvalResult out;
  for (int e = 0; e < episodes; ++e) {
    EnvState state = env_reset(spec, rng);
    out.initial_states.push_back(state);
    double total = 0.0;
    for (int t = 0; t < spec.max_episode_len; ++t) {
      Vector action = evaluate(policy.mean_net, observe(spec, state));
      if (!deterministic) {
        for (Eigen::Index k = 0; k < action.size(); ++k) action(k) += stddev(k) * normal(rng);
      }
      StepResult step = env_step(spec, state, action);
      total += step.reward;
      if (step.done) break;
      state = std::move(step.next);
    }
    out.returns.push_back(total);
  }
  out.mean_return = std::accumulate(out.returns.begin(), out.returns.end(), 0.0) / episodes;
  return out;
}

}  // namespace npg
