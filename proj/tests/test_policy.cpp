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

#include <numbers>

#include "doctest.h"
#include "npg/policy.hpp"
#include "oracles.hpp"

using namespace npg;

namespace {

GaussianPolicy random_policy(std::mt19937_64& rng, const std::vector<int>& dims) {
  GaussianPolicy p = make_policy(dims, 0.0, rng());
  for (auto& l : p.mean_net.layers) l.bias = oracle::random_vector(rng, l.out_dim(), 0.3);
  p.log_std = oracle::random_vector(rng, dims.back(), 0.3);
  return p;
}

DistParams one_d(double mu, double log_std) {
  DistParams d;
  d.mean = Matrix::Constant(1, 1, mu);
  d.log_std = Vector::Constant(1, log_std);
  return d;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("log_prob closed forms") {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(log_prob(one_d(0, 0), Matrix::Zero(1, 1))(0) == doctest::Approx(-c).epsilon(1e-15));
  CHECK(log_prob(one_d(0, 0), Matrix::Ones(1, 1))(0) == doctest::Approx(-0.5 - c).epsilon(1e-15));
  CHECK_THROWS(log_prob(one_d(0, 0), Matrix::Ones(1, 2)));
}

TEST_CASE("log_prob matches the log of a quadrature-normalized density") {
  // Each coordinate of a diagonal Gaussian is normalized independently, so the
  // 3-D log density is the sum of 1-D terms log(p_k(a_k)) where p_k is the
  // unnormalized bell divided by its Simpson-rule integral.
  std::mt19937_64 rng(3);
  DistParams d;
  d.mean = oracle::random_matrix(rng, 1, 3);
  d.log_std = oracle::random_vector(rng, 3, 0.4);
  const Matrix a = oracle::random_matrix(rng, 1, 3);
  double expect = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double mu = d.mean(0, k), s = std::exp(d.log_std(k));
    auto bell = [&](double x) { return std::exp(-0.5 * (x - mu) * (x - mu) / (s * s)); };
    const int n = 20000;
    const double lo = mu - 12 * s, hi = mu + 12 * s, h = (hi - lo) / n;
    double integral = bell(lo) + bell(hi);
    for (int i = 1; i < n; ++i) integral += (i % 2 ? 4.0 : 2.0) * bell(lo + i * h);
    integral *= h / 3.0;
    expect += std::log(bell(a(0, k)) / integral);
  }
  CHECK(std::fabs(log_prob(d, a)(0) - expect) < 1e-6);
}

TEST_CASE("kl_diag_gauss closed forms and sign") {
  CHECK(kl_diag_gauss(one_d(0, 0), one_d(0, 0)) == 0.0);
  CHECK(kl_diag_gauss(one_d(0, 0), one_d(1, 0)) == doctest::Approx(0.5).epsilon(1e-15));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    DistParams p{oracle::random_matrix(rng, 5, 2), oracle::random_vector(rng, 2)};
    DistParams q{oracle::random_matrix(rng, 5, 2), oracle::random_vector(rng, 2)};
    CHECK(kl_diag_gauss(p, q) > 0.0);
  }
}

TEST_CASE("kl_diag_gauss agrees with a Monte-Carlo estimate") {
  std::mt19937_64 rng(5);
  DistParams p{oracle::random_matrix(rng, 1, 2, 0.5), oracle::random_vector(rng, 2, 0.3)};
  DistParams q{oracle::random_matrix(rng, 1, 2, 0.5), oracle::random_vector(rng, 2, 0.3)};
  const int n = 1000000;
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix a(1, 2);
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 2; ++k) a(0, k) = p.mean(0, k) + std::exp(p.log_std(k)) * z(rng);
    const double r = log_prob(p, a)(0) - log_prob(q, a)(0);
    sum += r;
    sum_sq += r * r;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::fabs(kl_diag_gauss(p, q) - mean) < 3.0 * se);
}

TEST_CASE("sample_actions") {
  DistParams d{Matrix::Constant(3, 2, 0.7), Vector::Constant(2, -20.0)};
  CHECK((sample_actions(d, 1) - d.mean).cwiseAbs().maxCoeff() < 1e-8);
  d.log_std.setZero();
  CHECK(sample_actions(d, 42) == sample_actions(d, 42));

  DistParams big{Matrix::Constant(100000, 1, 1.5), Vector::Constant(1, std::log(2.0))};
  const double mean = sample_actions(big, 7).mean();
  CHECK(std::fabs(mean - 1.5) < 3.0 * 2.0 / std::sqrt(100000.0));
}

TEST_CASE("fisher_vector_product matches the dense Fisher") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianPolicy pol = random_policy(rng, {2, 3, 1});
    const Matrix states = oracle::random_matrix(rng, 4, 2);
    const Matrix f = oracle::policy_fisher(pol, states);
    const Vector v = oracle::random_vector(rng, static_cast<int>(pol.param_count()));
    CHECK((fisher_vector_product(pol, states, v, 0.0) - oracle::matvec(f, v)).cwiseAbs().maxCoeff() < 1e-6);
  }
  const GaussianPolicy pol = random_policy(rng, {2, 3, 1});
  CHECK(fisher_vector_product(pol, Matrix::Ones(2, 2), Vector::Zero(pol.param_count()), 0.0).isZero());
}

TEST_CASE("fisher_vector_product symmetry and damping") {
  std::mt19937_64 rng(7);
  const GaussianPolicy pol = random_policy(rng, {3, 4, 2});
  const Matrix states = oracle::random_matrix(rng, 6, 3);
  const int n = static_cast<int>(pol.param_count());
  const Vector u = oracle::random_vector(rng, n), v = oracle::random_vector(rng, n);
  const Vector fu = fisher_vector_product(pol, states, u, 0.0);
  const Vector fv = fisher_vector_product(pol, states, v, 0.0);
  CHECK(std::fabs(u.dot(fv) - v.dot(fu)) < 1e-8);
  const Vector damped = fisher_vector_product(pol, states, v, 0.3);
  CHECK((damped - (fv + 0.3 * v)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS(fisher_vector_product(pol, states, v, -1.0));

  const FlatGradient fg = fisher_vector_product(pol, states, FlatGradient{v, policy_layout(pol)}, 0.0);
  CHECK(fg.values == fv);
}

TEST_CASE("fisher_cache rows reproduce the Fisher") {
  std::mt19937_64 rng(8);
  const GaussianPolicy pol = random_policy(rng, {3, 4, 2});
  const Matrix states = oracle::random_matrix(rng, 5, 3);
  const LayerCache cache = fisher_cache(pol, states);
  CHECK(cache.batch_size() == 10);
  const Matrix f = oracle::policy_fisher(pol, states);
  const auto ranges = oracle::layer_ranges(pol.mean_net);
  for (std::size_t l = 0; l < ranges.size(); ++l) {
    const Matrix rows = per_sample_gradient_rows(cache, l);
    const Matrix block = rows.transpose() * rows / static_cast<double>(rows.rows());
    const auto [off, size] = ranges[l];
    CHECK((block - f.block(off, off, size, size)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(log_std_fisher_diag(pol) == Vector::Constant(2, 2.0));
}

TEST_CASE("flatten and unflatten the policy") {
  std::mt19937_64 rng(9);
  const GaussianPolicy pol = random_policy(rng, {3, 4, 2});
  const Vector flat = policy_flatten(pol);
  CHECK(flat.size() == pol.param_count());
  CHECK(flat.tail(2) == pol.log_std);
  CHECK(policy_flatten(policy_unflatten(pol, flat)) == flat);
  CHECK(policy_layout(pol).tail_size == 2);
}

}  // TEST_SUITE
