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

// Reference computations for the test suites. Everything here is written
// with plain loops and does not call into the library's numerical code, so a
// bug in the library cannot hide behind the same bug in its oracle.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "npg/net.hpp"
#include "npg/policy.hpp"

namespace oracle {

using npg::Matrix;
using npg::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

inline Matrix random_spd(std::mt19937_64& rng, int n, double ridge = 0.5) {
  const Matrix b = random_matrix(rng, n, n);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += b(i, k) * b(j, k);
      a(i, j) = s + (i == j ? ridge : 0.0);
    }
  return a;
}

/// Gauss-Jordan elimination with partial pivoting.
inline Matrix gauss_jordan_inverse(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  Matrix w = a;
  Matrix inv = Matrix::Identity(n, n);
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::fabs(w(r, c)) > std::fabs(w(piv, c))) piv = r;
    if (w(piv, c) == 0.0) throw std::runtime_error("singular matrix");
    w.row(c).swap(w.row(piv));
    inv.row(c).swap(inv.row(piv));
    const double d = w(c, c);
    for (int j = 0; j < n; ++j) {
      w(c, j) /= d;
      inv(c, j) /= d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = w(r, c);
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        w(r, j) -= f * w(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  return inv;
}

inline Vector matvec(const Matrix& a, const Vector& x) {
  Vector y = Vector::Zero(a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) y(i) += a(i, j) * x(j);
  return y;
}

inline Vector dense_solve(const Matrix& a, const Vector& b) { return matvec(gauss_jordan_inverse(a), b); }

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      for (int p = 0; p < b.rows(); ++p)
        for (int q = 0; q < b.cols(); ++q) k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

inline double frobenius(const Matrix& a) {
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

inline double max_abs(const Vector& v) {
  double m = 0.0;
  for (int i = 0; i < v.size(); ++i) m = std::max(m, std::fabs(v(i)));
  return m;
}

// ---------------------------------------------------------------------------
// MLP evaluated with dual numbers: exact parameter Jacobians without backprop.
// ---------------------------------------------------------------------------

struct Dual {
  double v = 0.0;
  double d = 0.0;
};
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual dtanh(Dual a) {
  const double t = std::tanh(a.v);
  return {t, (1.0 - t * t) * a.d};
}

/// Parameters in block order: per layer the out x (in+1) matrix [W | b], row-major.
inline std::vector<Dual> mlp_dual(const npg::NetworkParams& net, const Vector& x, int seed_param) {
  std::vector<Dual> h(x.size());
  for (int i = 0; i < x.size(); ++i) h[i] = {x(i), 0.0};
  int idx = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    const int out = layer.out_dim(), in = layer.in_dim();
    std::vector<Dual> z(out);
    for (int o = 0; o < out; ++o) {
      Dual s{0.0, 0.0};
      for (int j = 0; j <= in; ++j) {
        const double w = j < in ? layer.weight(o, j) : layer.bias(o);
        const Dual wd{w, idx == seed_param ? 1.0 : 0.0};
        ++idx;
        const Dual input = j < in ? h[j] : Dual{1.0, 0.0};
        s = s + wd * input;
      }
      z[o] = l + 1 < net.layers.size() ? dtanh(s) : s;
    }
    h = std::move(z);
  }
  return h;
}

inline Vector mlp_eval(const npg::NetworkParams& net, const Vector& x) {
  const auto h = mlp_dual(net, x, -1);
  Vector y(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) y(i) = h[i].v;
  return y;
}

/// d output / d params, out x n_params.
inline Matrix mlp_jacobian(const npg::NetworkParams& net, const Vector& x) {
  int n = 0;
  for (const auto& l : net.layers) n += l.out_dim() * (l.in_dim() + 1);
  Matrix j(net.out_dim(), n);
  for (int p = 0; p < n; ++p) {
    const auto h = mlp_dual(net, x, p);
    for (std::size_t o = 0; o < h.size(); ++o) j(o, p) = h[o].d;
  }
  return j;
}

/// Fisher of the Gaussian policy: (1/m) Σ_i J_iᵀ Σ⁻¹ J_i on the mean net,
/// 2·I on log_std, no cross terms.
inline Matrix policy_fisher(const npg::GaussianPolicy& policy, const Matrix& states) {
  const int k = policy.action_dim();
  Vector precision(k);
  for (int i = 0; i < k; ++i) precision(i) = std::exp(-2.0 * policy.log_std(i));
  const int n_mean = static_cast<int>(policy.mean_net.param_count());
  const int n = n_mean + k;
  Matrix f = Matrix::Zero(n, n);
  for (int s = 0; s < states.rows(); ++s) {
    const Matrix j = mlp_jacobian(policy.mean_net, states.row(s).transpose());
    for (int a = 0; a < n_mean; ++a)
      for (int b = 0; b < n_mean; ++b) {
        double sum = 0.0;
        for (int o = 0; o < k; ++o) sum += j(o, a) * precision(o) * j(o, b);
        f(a, b) += sum / static_cast<double>(states.rows());
      }
  }
  for (int i = 0; i < k; ++i) f(n_mean + i, n_mean + i) = 2.0;
  return f;
}

/// Offsets of each layer block in the flat layout.
inline std::vector<std::pair<int, int>> layer_ranges(const npg::NetworkParams& net) {
  std::vector<std::pair<int, int>> r;
  int off = 0;
  for (const auto& l : net.layers) {
    const int size = l.out_dim() * (l.in_dim() + 1);
    r.emplace_back(off, size);
    off += size;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central difference with one Richardson extrapolation step (O(h⁴)).
inline double derivative(const std::function<double(double)>& f, double h = 1e-3) {
  const double d1 = (f(h) - f(-h)) / (2.0 * h);
  const double d2 = (f(h / 2) - f(-h / 2)) / h;
  return (4.0 * d2 - d1) / 3.0;
}

inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                               double h = 1e-3) {
  Vector g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    g(i) = derivative(
        [&](double e) {
          Vector y = x;
          y(i) += e;
          return f(y);
        },
        h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Advantages by the defining double sum
// ---------------------------------------------------------------------------

struct GaeInput {
  Vector rewards, values, end_values;
  std::vector<bool> terminals;
  double bootstrap = 0.0;
};

inline Vector brute_force_gae(const GaeInput& in, double gamma, double lambda) {
  const int n = static_cast<int>(in.rewards.size());
  std::vector<double> delta(n);
  for (int t = 0; t < n; ++t) {
    double next;
    if (in.terminals[t]) {
      next = in.end_values(t);
    } else if (t == n - 1) {
      next = in.bootstrap;
    } else {
      next = in.values(t + 1);
    }
    delta[t] = in.rewards(t) + gamma * next - in.values(t);
  }
  Vector adv = Vector::Zero(n);
  for (int t = 0; t < n; ++t) {
    double weight = 1.0;
    for (int u = t; u < n; ++u) {
      adv(t) += weight * delta[u];
      if (in.terminals[u]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

inline double two_pass_std(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

}  // namespace oracle
