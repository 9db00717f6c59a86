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

#include "npg/policy.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace npg {

GaussianPolicy make_policy(const std::vector<int>& dims, double init_log_std, std::uint64_t seed) {
  GaussianPolicy p;
  p.mean_net = init_network(dims, seed);
  p.log_std = Vector::Constant(dims.back(), init_log_std);
  return p;
}

ParamLayout policy_layout(const GaussianPolicy& policy) {
  return layout_of(policy.mean_net, policy.log_std.size());
}

Vector policy_flatten(const GaussianPolicy& policy) {
  Vector out(policy.param_count());
  const Eigen::Index n = policy.mean_net.param_count();
  out.head(n) = flatten(policy.mean_net);
  out.tail(policy.log_std.size()) = policy.log_std;
  return out;
}

GaussianPolicy policy_unflatten(const GaussianPolicy& shape_like, const Vector& flat) {
  if (flat.size() != shape_like.param_count()) {
    throw NetError("policy_unflatten: size mismatch");
  }
  GaussianPolicy out;
  out.mean_net = unflatten(shape_like.mean_net, flat);
  out.log_std = flat.tail(shape_like.log_std.size());
  return out;
}

DistParams distribution(const GaussianPolicy& policy, const Matrix& states) {
  return {evaluate(policy.mean_net, states), policy.log_std};
}

namespace {

void check_dist(const DistParams& d, const Matrix& actions) {
  if (d.mean.rows() != actions.rows() || d.mean.cols() != actions.cols() ||
      d.log_std.size() != d.mean.cols()) {
    throw NetError("shape mismatch between distribution and actions");
  }
}

}  // namespace

Vector log_prob(const DistParams& dist, const Matrix& actions) {
  check_dist(dist, actions);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Eigen::RowVectorXd inv_std = (-dist.log_std.array()).exp().matrix().transpose();
  Matrix z = (actions - dist.mean).array().rowwise() * inv_std.array();
  Vector out = -0.5 * z.array().square().rowwise().sum();
  out.array() -= dist.log_std.sum() + half_log_2pi * static_cast<double>(dist.log_std.size());
  return out;
}

double kl_diag_gauss(const DistParams& p, const DistParams& q) {
  if (p.mean.rows() != q.mean.rows() || p.mean.cols() != q.mean.cols() ||
      p.log_std.size() != q.log_std.size() || p.log_std.size() != p.mean.cols()) {
    throw NetError("kl_diag_gauss: shape mismatch");
  }
  const Eigen::ArrayXd var_p = (2.0 * p.log_std.array()).exp();
  const Eigen::ArrayXd inv_var_q = (-2.0 * q.log_std.array()).exp();
  // Per-dimension constant part: log(σq/σp) + σp²/(2σq²) − ½.
  const double constant =
      (q.log_std.array() - p.log_std.array() + 0.5 * var_p * inv_var_q - 0.5).sum();
  const Matrix diff = p.mean - q.mean;
  const double quad = (diff.array().square().rowwise() * (0.5 * inv_var_q).transpose()).sum();
  const double m = static_cast<double>(p.mean.rows());
  return constant + quad / m;
}

Matrix sample_actions(const DistParams& dist, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(dist.mean.rows(), dist.mean.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index k = 0; k < out.cols(); ++k) {
      out(i, k) = dist.mean(i, k) + std::exp(dist.log_std(k)) * normal(rng);
    }
  }
  return out;
}

Vector fisher_vector_product(const GaussianPolicy& policy, const Matrix& states,
                             const Vector& v, double damping) {
  if (damping < 0.0) throw NetError("fisher_vector_product: damping must be >= 0");
  if (v.size() != policy.param_count()) {
    throw NetError("fisher_vector_product: vector length does not match policy");
  }
  const Eigen::Index n = policy.mean_net.param_count();
  const Vector precision = (-2.0 * policy.log_std.array()).exp();
  Vector out(v.size());
  out.head(n) = gauss_newton_product(policy.mean_net, states, v.head(n), precision);
  out.tail(policy.log_std.size()) = 2.0 * v.tail(policy.log_std.size());
  if (damping > 0.0) out += damping * v;
  return out;
}

FlatGradient fisher_vector_product(const GaussianPolicy& policy, const Matrix& states,
                                   const FlatGradient& v, double damping) {
  return {fisher_vector_product(policy, states, v.values, damping), v.layout};
}

LayerCache fisher_cache(const GaussianPolicy& policy, const Matrix& states) {
  const int k_dims = policy.action_dim();
  const Eigen::Index m = states.rows();
  ForwardResult fr = forward(policy.mean_net, states);
  if (k_dims == 1) {
    Matrix seed = Matrix::Constant(m, 1, std::exp(-policy.log_std(0)));
    backward(policy.mean_net, fr.cache, seed);
    return std::move(fr.cache);
  }
  const double scale = std::sqrt(static_cast<double>(k_dims));
  LayerCache stacked;
  stacked.layers.resize(fr.cache.layers.size());
  for (std::size_t l = 0; l < stacked.layers.size(); ++l) {
    stacked.layers[l].inputs.resize(m * k_dims, fr.cache.layers[l].inputs.cols());
    stacked.layers[l].preact_grads.resize(m * k_dims, policy.mean_net.layers[l].out_dim());
  }
  for (int k = 0; k < k_dims; ++k) {
    LayerCache c = fr.cache;
    Matrix seed = Matrix::Zero(m, k_dims);
    seed.col(k).setConstant(scale * std::exp(-policy.log_std(k)));
    backward(policy.mean_net, c, seed);
    for (std::size_t l = 0; l < stacked.layers.size(); ++l) {
      stacked.layers[l].inputs.middleRows(k * m, m) = c.layers[l].inputs;
      stacked.layers[l].preact_grads.middleRows(k * m, m) = c.layers[l].preact_grads;
    }
  }
  stacked.completed = true;
  return stacked;
}

Vector log_std_fisher_diag(const GaussianPolicy& policy) {
  return Vector::Constant(policy.log_std.size(), 2.0);
}

}  // namespace npg
