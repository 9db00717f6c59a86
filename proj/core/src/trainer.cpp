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

#include "npg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "npg/config.hpp"

namespace npg {

std::string to_string(StepMode mode) {
  return mode == StepMode::kLineSearch ? "line_search" : "clip";
}

StepMode parse_step_mode(const std::string& name) {
  if (name == "line_search") return StepMode::kLineSearch;
  if (name == "clip") return StepMode::kClip;
  throw std::invalid_argument("unknown step_mode '" + name + "'");
}

std::string to_string(const CriticMode& mode) {
  return mode.natural ? "natural:" + to_string(mode.backend) : "sgd";
}

CriticMode parse_critic_mode(const std::string& name) {
  if (name == "sgd") return {};
  const std::string prefix = "natural:";
  if (name.rfind(prefix, 0) == 0) return {true, parse_backend(name.substr(prefix.size()))};
  throw std::invalid_argument("unknown critic_mode '" + name + "'");
}

void TrainerConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (!(damping > 0.0)) fail("damping", "must be > 0");
  if (!(kl_limit > 0.0)) fail("kl_limit", "must be > 0");
  if (!(max_lr > 0.0)) fail("max_lr", "must be > 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]");
  if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) fail("lambda_gae", "must lie in [0, 1]");
  if (!(critic_lr > 0.0)) fail("critic_lr", "must be > 0");
  if (!(critic_damping > 0.0)) fail("critic_damping", "must be > 0");
  if (critic_minibatch < 1) fail("critic_minibatch", "must be >= 1");
  if (total_env_steps < 1) fail("total_env_steps", "must be >= 1");
  for (int h : hidden) {
    if (h < 1) fail("hidden", "layer widths must be >= 1");
  }
  if (backend_options.cg_iters < 1) fail("cg_iters", "must be >= 1");
  if (!(backend_options.cg_tol > 0.0)) fail("cg_tol", "must be > 0");
  if (eval_episodes < 0) fail("eval_episodes", "must be >= 0");
  if (backend_options.refresh_interval < 1) fail("refresh_interval", "must be >= 1");
  auto in_unit = [](double d) { return d >= 0.0 && d < 1.0; };
  if (!in_unit(backend_options.diagonal_decay)) fail("diagonal_decay", "must lie in [0, 1)");
  if (!in_unit(backend_options.kronecker_decay)) fail("kronecker_decay", "must lie in [0, 1)");
  make_env(env);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

LossAndGrad policy_loss_and_grad(const GaussianPolicy& policy, const RolloutBatch& batch) {
  const Eigen::Index m = batch.size();
  if (batch.advantages.size() != m) {
    throw std::invalid_argument("policy_loss_and_grad: batch has no advantages");
  }
  ForwardResult fr = forward(policy.mean_net, batch.states);
  const DistParams dist{fr.outputs, policy.log_std};
  const Vector logp = log_prob(dist, batch.actions);
  LossAndGrad out;
  out.loss = -(batch.advantages.array() * logp.array()).mean();

  const Eigen::RowVectorXd inv_var = (-2.0 * policy.log_std.array()).exp().matrix().transpose();
  const Matrix diff = batch.actions - fr.outputs;
  // d loss_i / d μ_i = −Ψ_i (a_i − μ_i) / σ².
  Matrix out_grads = (diff.array().rowwise() * inv_var.array()).matrix();
  out_grads = -(out_grads.array().colwise() * batch.advantages.array()).matrix();
  const FlatGradient net_grad = backward(policy.mean_net, fr.cache, out_grads);

  out.grad.layout = policy_layout(policy);
  out.grad.values.resize(out.grad.layout.size());
  out.grad.values.head(net_grad.values.size()) = net_grad.values;
  // d loss_i / d log σ_k = −Ψ_i ((a−μ)²/σ² − 1).
  const Matrix z2 = (diff.array().square().rowwise() * inv_var.array()).matrix();
  for (Eigen::Index k = 0; k < policy.log_std.size(); ++k) {
    out.grad.tail()(k) = -(batch.advantages.array() * (z2.col(k).array() - 1.0)).mean();
  }
  return out;
}

namespace {

double surrogate_improvement(const GaussianPolicy& candidate, const RolloutBatch& batch,
                             const Vector& logp_old) {
  const Vector logp_new = log_prob(distribution(candidate, batch.states), batch.actions);
  return (batch.advantages.array() * (logp_new - logp_old).array()).mean();
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

LineSearchResult backtracking_line_search(const GaussianPolicy& policy, const RolloutBatch& batch,
                                          const Vector& direction, const TrainerConfig& config) {
  LineSearchResult res;
  if (!direction.allFinite()) return res;
  const Vector theta = policy_flatten(policy);
  const DistParams old_dist = distribution(policy, batch.states);
  const Vector logp_old = log_prob(old_dist, batch.actions);
  double scale = config.max_lr;
  for (int j = 0; j < kLineSearchTrials; ++j, scale *= 0.5) {
    res.trials = j + 1;
    const GaussianPolicy candidate = policy_unflatten(policy, theta + scale * direction);
    const double improvement = surrogate_improvement(candidate, batch, logp_old);
    const double kl = kl_diag_gauss(old_dist, distribution(candidate, batch.states));
    res.kl = kl;
    res.improvement = improvement;
    if (std::isfinite(kl) && std::isfinite(improvement) && improvement > 0.0 &&
        kl <= config.kl_limit) {
      res.scale = scale;
      res.accepted = true;
      return res;
    }
  }
  res.scale = 0.0;
  return res;
}

double step_size_clip(const Vector& direction, const Vector& fvp_of_direction,
                      const TrainerConfig& config) {
  const double curvature = std::max(0.0, direction.dot(fvp_of_direction));
  return std::min(config.max_lr, std::sqrt(2.0 * config.kl_limit / (curvature + 1e-12)));
}

CurvatureBatch policy_curvature(const GaussianPolicy& policy, const Matrix& states,
                                const LayerCache& cache) {
  CurvatureBatch c;
  c.cache = &cache;
  c.tail_fisher = log_std_fisher_diag(policy);
  c.fvp = [policy, states](const Vector& v) -> Vector {
    return fisher_vector_product(policy, states, v, 0.0);
  };
  return c;
}

NaturalStepResult natural_step(const GaussianPolicy& policy, const RolloutBatch& batch,
                               const FisherBackend& backend, const CurvatureBatch& curvature,
                               const TrainerConfig& config) {
  NaturalStepResult out{policy, {}};
  UpdateReport& rep = out.report;
  const LossAndGrad lg = policy_loss_and_grad(policy, batch);
  rep.surrogate_before = lg.loss;
  rep.surrogate_after = lg.loss;

  const auto t0 = std::chrono::steady_clock::now();
  Preconditioned pre = backend.precondition(lg.grad, config.damping, curvature);
  rep.precondition_ms = elapsed_ms(t0);
  rep.cg_residual = pre.cg_residual;
  rep.cg_iterations = pre.cg_iterations;
  const Vector& delta = pre.direction.values;
  if (!delta.allFinite()) return out;

  const Vector f_delta = fisher_vector_product(policy, batch.states, delta, 0.0);
  rep.direction_curvature = delta.dot(f_delta);
  if (!std::isfinite(rep.direction_curvature)) return out;

  double scale = 0.0;
  if (config.step_mode == StepMode::kClip) {
    scale = step_size_clip(delta, f_delta, config);
    rep.line_search_trials = 0;
  } else {
    const double full = std::sqrt(2.0 * config.kl_limit /
                                  (std::max(0.0, rep.direction_curvature) + 1e-12));
    const LineSearchResult ls = backtracking_line_search(policy, batch, -full * delta, config);
    rep.line_search_trials = ls.trials;
    if (!ls.accepted) return out;
    scale = full * ls.scale;
  }

  const Vector theta = policy_flatten(policy) - scale * delta;
  if (!theta.allFinite()) return out;
  GaussianPolicy next = policy_unflatten(policy, theta);
  const DistParams old_dist = distribution(policy, batch.states);
  const DistParams new_dist = distribution(next, batch.states);
  const double kl = kl_diag_gauss(old_dist, new_dist);
  if (!std::isfinite(kl)) return out;

  rep.step_scale = scale;
  rep.realized_kl = std::max(0.0, kl);
  rep.accepted = true;
  const Vector logp_new = log_prob(new_dist, batch.actions);
  rep.surrogate_after = -(batch.advantages.array() * logp_new.array()).mean();
  out.policy = std::move(next);
  return out;
}

NetworkParams critic_update(const NetworkParams& critic, const RolloutBatch& batch,
                            const TrainerConfig& config, FisherBackend* backend,
                            std::uint64_t shuffle_seed) {
  const Eigen::Index n = batch.size();
  if (batch.returns.size() != n) throw std::invalid_argument("critic_update: returns missing");
  if (config.critic_mode.natural && backend == nullptr) {
    throw std::invalid_argument("critic_update: natural mode needs a Fisher backend");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  if (shuffle_seed != 0) {
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  NetworkParams params = critic;
  const Eigen::Index mb = std::min<Eigen::Index>(config.critic_minibatch, n);
  for (Eigen::Index start = 0; start < n; start += mb) {
    const Eigen::Index len = std::min(mb, n - start);
    Matrix states(len, batch.states.cols());
    Vector targets(len);
    for (Eigen::Index i = 0; i < len; ++i) {
      states.row(i) = batch.states.row(order[start + i]);
      targets(i) = batch.returns(order[start + i]);
    }
    ForwardResult fr = forward(params, states);
    const Matrix residual = fr.outputs.col(0) - targets;
    const double loss = 0.5 * residual.squaredNorm() / static_cast<double>(len);
    if (!std::isfinite(loss)) throw std::runtime_error("critic_update: non-finite loss");
    LayerCache cache = fr.cache;
    FlatGradient grad = backward(params, fr.cache, residual);

    Vector step = grad.values;
    if (config.critic_mode.natural) {
      // Unit-variance Gaussian likelihood: the Fisher rows come from seeding
      // the backward pass with 1 in place of the residual.
      backward(params, cache, Matrix::Ones(len, 1));
      CurvatureBatch curv;
      curv.cache = &cache;
      curv.fvp = [&params, &states](const Vector& v) -> Vector {
        return gauss_newton_product(params, states, v, Vector::Ones(1));
      };
      backend->update(curv);
      step = backend->precondition(grad, config.critic_damping, curv).direction.values;
    }
    const Vector theta = flatten(params) - config.critic_lr * step;
    if (!theta.allFinite()) throw std::runtime_error("critic_update: non-finite parameters");
    params = unflatten(params, theta);
  }
  return params;
}

std::uint64_t eval_seed(const TrainerConfig& config) { return mix_seed(config.seed, 3); }

RunTrace train(const TrainerConfig& config) { return train_full(config).trace; }

TrainResult train_full(const TrainerConfig& config) {
  config.validate();
  RunTrace trace;
  trace.seed = config.seed;
  trace.backend = to_string(config.backend);
  trace.env = config.env;
  trace.config_hash = config_hash(config);

  const EnvSpec spec = make_env(config.env);
  std::vector<int> dims{spec.obs_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  std::vector<int> critic_dims = dims;
  dims.push_back(spec.act_dim);
  critic_dims.push_back(1);

  GaussianPolicy policy = make_policy(dims, config.init_log_std, mix_seed(config.seed, 1));
  NetworkParams critic = init_network(critic_dims, mix_seed(config.seed, 2));
  auto backend = make_backend(config.backend, config.backend_options);
  std::unique_ptr<FisherBackend> critic_backend;
  if (config.critic_mode.natural) {
    critic_backend = make_backend(config.critic_mode.backend, config.backend_options);
  }

  std::int64_t steps = 0;
  std::uint64_t update = 0;
  try {
    while (steps < config.total_env_steps) {
      const auto t0 = std::chrono::steady_clock::now();
      const int n = static_cast<int>(
          std::min<std::int64_t>(config.batch_size, config.total_env_steps - steps));
      RolloutBatch batch = collect(policy, critic, spec, n, mix_seed(config.seed, 1000 + 2 * update));
      compute_gae(batch, config.gamma, config.lambda_gae, batch.bootstrap_value);
      const double mean_return = mean_episode_return(batch);

      RolloutBatch policy_batch = batch;
      if (config.normalize_advantages && n > 1) {
        const double mu = policy_batch.advantages.mean();
        const double sd =
            std::sqrt((policy_batch.advantages.array() - mu).square().sum() / (n - 1));
        policy_batch.advantages = (policy_batch.advantages.array() - mu) / (sd + 1e-8);
      }

      const LayerCache fisher = fisher_cache(policy, batch.states);
      const CurvatureBatch curvature = policy_curvature(policy, batch.states, fisher);
      const auto tp = std::chrono::steady_clock::now();
      backend->update(curvature);
      const double stats_ms = elapsed_ms(tp);
      NaturalStepResult step = natural_step(policy, policy_batch, *backend, curvature, config);
      step.report.precondition_ms += stats_ms;
      policy = std::move(step.policy);
      critic = critic_update(critic, batch, config, critic_backend.get(),
                             mix_seed(config.seed, 1001 + 2 * update));

      steps += n;
      ++update;
      step.report.wallclock_ms = elapsed_ms(t0);
      if (!config.record_wallclock) {
        step.report.wallclock_ms = 0.0;
        step.report.precondition_ms = 0.0;
      }
      trace.checkpoints.push_back({steps, mean_return, step.report});
    }
    if (config.eval_episodes > 0) {
      trace.final_eval_return =
          evaluate_policy(policy, spec, config.eval_episodes, eval_seed(config)).mean_return;
    }
  } catch (const std::exception& e) {
    trace.valid = false;
    trace.error = e.what();
  }
  return {std::move(trace), std::move(policy), std::move(critic)};
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double number_or_nan(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void write_trace_jsonl(std::ostream& os, const RunTrace& trace) {
  json meta = {{"type", "meta"},       {"seed", trace.seed},
               {"backend", trace.backend}, {"env", trace.env},
               {"config_hash", trace.config_hash}, {"valid", trace.valid},
               {"error", trace.error},
               {"final_eval_return", number_or_null(trace.final_eval_return)}};
  os << meta.dump() << '\n';
  for (const auto& c : trace.checkpoints) {
    const auto& r = c.report;
    json rec = {{"type", "update"},
                {"env_steps", c.env_steps},
                {"mean_return", number_or_null(c.mean_return)},
                {"realized_kl", number_or_null(r.realized_kl)},
                {"step_scale", number_or_null(r.step_scale)},
                {"wallclock_ms", number_or_null(r.wallclock_ms)},
                {"accepted", r.accepted},
                {"surrogate_before", number_or_null(r.surrogate_before)},
                {"surrogate_after", number_or_null(r.surrogate_after)},
                {"direction_curvature", number_or_null(r.direction_curvature)},
                {"line_search_trials", r.line_search_trials},
                {"cg_residual", number_or_null(r.cg_residual)},
                {"cg_iterations", r.cg_iterations},
                {"precondition_ms", number_or_null(r.precondition_ms)}};
    os << rec.dump() << '\n';
  }
}

RunTrace read_trace_jsonl(std::istream& is) {
  RunTrace trace;
  std::string line;
  bool have_meta = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.value("type", "update");
    if (type == "meta") {
      trace.seed = j.at("seed").get<std::uint64_t>();
      trace.backend = j.at("backend").get<std::string>();
      trace.env = j.at("env").get<std::string>();
      trace.config_hash = j.at("config_hash").get<std::string>();
      trace.valid = j.at("valid").get<bool>();
      trace.error = j.value("error", "");
      trace.final_eval_return = number_or_nan(j.value("final_eval_return", json(nullptr)));
      have_meta = true;
      continue;
    }
    Checkpoint c;
    c.env_steps = j.at("env_steps").get<std::int64_t>();
    c.mean_return = number_or_nan(j.at("mean_return"));
    auto& r = c.report;
    r.realized_kl = number_or_nan(j.at("realized_kl"));
    r.step_scale = number_or_nan(j.at("step_scale"));
    r.wallclock_ms = number_or_nan(j.at("wallclock_ms"));
    r.accepted = j.at("accepted").get<bool>();
    r.surrogate_before = number_or_nan(j.value("surrogate_before", json(nullptr)));
    r.surrogate_after = number_or_nan(j.value("surrogate_after", json(nullptr)));
    r.direction_curvature = number_or_nan(j.value("direction_curvature", json(nullptr)));
    r.line_search_trials = j.value("line_search_trials", 0);
    r.cg_residual = number_or_nan(j.value("cg_residual", json(nullptr)));
    r.cg_iterations = j.value("cg_iterations", 0);
    r.precondition_ms = number_or_nan(j.value("precondition_ms", json(nullptr)));
    trace.checkpoints.push_back(c);
  }
  if (!have_meta) throw std::runtime_error("trace has no metadata line");
  return trace;
}

}  // namespace npg
