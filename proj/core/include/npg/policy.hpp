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

#include "npg/net.hpp"

namespace npg {

/// Diagonal Gaussian with an MLP mean and a state-independent log_std.
struct GaussianPolicy {
  NetworkParams mean_net;
  Vector log_std;

  int action_dim() const { return static_cast<int>(log_std.size()); }
  Eigen::Index param_count() const { return mean_net.param_count() + log_std.size(); }
};

struct DistParams {
  Matrix mean;  // batch x action_dim
  Vector log_std;
};

GaussianPolicy make_policy(const std::vector<int>& dims, double init_log_std, std::uint64_t seed);

/// Layout of the policy's flat parameter vector: mean-net blocks, then log_std.
ParamLayout policy_layout(const GaussianPolicy& policy);
Vector policy_flatten(const GaussianPolicy& policy);
GaussianPolicy policy_unflatten(const GaussianPolicy& shape_like, const Vector& flat);

DistParams distribution(const GaussianPolicy& policy, const Matrix& states);

/// Per-sample Σ_k [−½((a−μ)/σ)² − log σ − ½ log 2π].
Vector log_prob(const DistParams& dist, const Matrix& actions);

/// Batch mean of KL(p ‖ q).
double kl_diag_gauss(const DistParams& p, const DistParams& q);

/// μ + σ·z with z drawn from a seeded standard normal.
Matrix sample_actions(const DistParams& dist, std::uint64_t seed);

/// (F + damping·I)·v with F the Fisher of the policy at `states`. The mean-net
/// part is the Gauss-Newton product Jᵀ Σ⁻¹ J; the log_std part is 2·I.
FlatGradient fisher_vector_product(const GaussianPolicy& policy, const Matrix& states,
                                   const FlatGradient& v, double damping);
Vector fisher_vector_product(const GaussianPolicy& policy, const Matrix& states,
                             const Vector& v, double damping);

/// Completed cache whose per-sample rows are Fisher factors of the mean net:
/// for every state and action dimension k the backward pass is seeded with
/// √K·e_k/σ_k, so (1/rows)·Σ rowᵀrow equals the mean-net Fisher block.
/// Row order is k-major: all states for k = 0, then k = 1, ...
LayerCache fisher_cache(const GaussianPolicy& policy, const Matrix& states);

/// Fisher diagonal of the log_std block (2 per action dimension).
Vector log_std_fisher_diag(const GaussianPolicy& policy);

}  // namespace npg
