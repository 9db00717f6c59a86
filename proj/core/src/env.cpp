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

#include "npg/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace npg {

namespace {

constexpr double kPendulumMaxSpeed = 8.0;
constexpr double kPendulumDt = 0.05;
constexpr double kPendulumGravity = 10.0;
constexpr double kPointMassDt = 0.1;
constexpr double kPointMassBound = 10.0;

LqrSystem build_lqr() {
  LqrSystem s;
  s.a.resize(2, 2);
  s.a << 1.0, 0.1,
         0.0, 1.0;
  s.b.resize(2, 1);
  s.b << 0.005,
         0.1;
  s.q = Matrix::Identity(2, 2);
  s.r = 0.1 * Matrix::Identity(1, 1);
  s.init_range = 1.0;
  s.state_bound = 100.0;
  return s;
}

double angle_normalize(double th) {
  return std::remainder(th, 2.0 * std::numbers::pi);
}

}  // namespace

const LqrSystem& lqr_system() {
  static const LqrSystem sys = build_lqr();
  return sys;
}

std::vector<std::string> env_names() { return {"lqr", "pointmass", "pendulum"}; }

EnvSpec make_env(const std::string& name) {
  if (name == "lqr") return {"lqr", EnvKind::kLqr, 2, 1, 50, -10.0, 10.0};
  if (name == "pointmass") return {"pointmass", EnvKind::kPointMass, 4, 2, 100, -1.0, 1.0};
  if (name == "pendulum") return {"pendulum", EnvKind::kPendulum, 3, 1, 200, -2.0, 2.0};
  throw EnvError("unknown environment '" + name + "'");
}

EnvState env_reset(const EnvSpec& spec, std::mt19937_64& rng) {
  EnvState s;
  switch (spec.kind) {
    case EnvKind::kLqr: {
      const double r = lqr_system().init_range;
      std::uniform_real_distribution<double> u(-r, r);
      s.x = Vector(2);
      s.x << u(rng), u(rng);
      break;
    }
    case EnvKind::kPointMass: {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      s.x = Vector::Zero(4);
      s.x(0) = u(rng);
      s.x(1) = u(rng);
      break;
    }
    case EnvKind::kPendulum: {
      std::uniform_real_distribution<double> th(-std::numbers::pi, std::numbers::pi);
      std::uniform_real_distribution<double> thdot(-1.0, 1.0);
      s.x = Vector(2);
      s.x << th(rng), thdot(rng);
      break;
    }
  }
  return s;
}

Vector observe(const EnvSpec& spec, const EnvState& state) {
  if (spec.kind == EnvKind::kPendulum) {
    Vector o(3);
    o << std::cos(state.x(0)), std::sin(state.x(0)), state.x(1);
    return o;
  }
  return state.x;
}

StepResult env_step(const EnvSpec& spec, const EnvState& state, const Vector& action) {
  if (action.size() != spec.act_dim) throw EnvError("env_step: action dimension mismatch");
  if (!state.x.allFinite() || !action.allFinite()) {
    throw EnvError("env_step: non-finite state or action");
  }
  const Vector u = action.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
  StepResult res;
  res.next.t = state.t + 1;
  switch (spec.kind) {
    case EnvKind::kLqr: {
      const LqrSystem& sys = lqr_system();
      res.reward = -(state.x.dot(sys.q * state.x) + u.dot(sys.r * u));
      res.next.x = sys.a * state.x + sys.b * u;
      res.terminal = res.next.x.cwiseAbs().maxCoeff() > sys.state_bound;
      break;
    }
    case EnvKind::kPointMass: {
      const auto p = state.x.head(2);
      res.reward = 1.0 - p.norm() - 0.01 * u.squaredNorm();
      res.next.x = Vector(4);
      res.next.x.tail(2) = state.x.tail(2) + kPointMassDt * u;
      res.next.x.head(2) = p + kPointMassDt * res.next.x.tail(2);
      res.terminal = res.next.x.head(2).cwiseAbs().maxCoeff() > kPointMassBound;
      break;
    }
    case EnvKind::kPendulum: {
      const double th = state.x(0);
      const double thdot = state.x(1);
      const double torque = u(0);
      res.reward = -(std::pow(angle_normalize(th), 2) + 0.1 * thdot * thdot +
                     0.001 * torque * torque);
      double new_thdot = thdot + (3.0 * kPendulumGravity / 2.0 * std::sin(th) + 3.0 * torque) *
                                     kPendulumDt;
      new_thdot = std::clamp(new_thdot, -kPendulumMaxSpeed, kPendulumMaxSpeed);
      res.next.x = Vector(2);
      res.next.x << th + new_thdot * kPendulumDt, new_thdot;
      break;
    }
  }
  res.done = res.terminal || res.next.t >= spec.max_episode_len;
  return res;
}

Matrix lqr_riccati_gain(const LqrSystem& sys, int max_iters, double tol) {
  Matrix p = sys.q;
  Matrix k;
  for (int i = 0; i < max_iters; ++i) {
    const Matrix btp = sys.b.transpose() * p;
    k = (sys.r + btp * sys.b).ldlt().solve(btp * sys.a);
    const Matrix next = sys.q + sys.a.transpose() * p * (sys.a - sys.b * k);
    const Matrix sym = 0.5 * (next + next.transpose());
    const double change = (sym - p).cwiseAbs().maxCoeff();
    p = sym;
    if (change < tol * std::max(1.0, p.cwiseAbs().maxCoeff())) break;
  }
  const Matrix btp = sys.b.transpose() * p;
  return (sys.r + btp * sys.b).ldlt().solve(btp * sys.a);
}

namespace {

Matrix initial_second_moment(const LqrSystem& sys) {
  const auto n = sys.a.rows();
  return (sys.init_range * sys.init_range / 3.0) * Matrix::Identity(n, n);
}

}  // namespace

double lqr_policy_return(const LqrSystem& sys, const Matrix& gain, int horizon) {
  Matrix sigma = initial_second_moment(sys);
  const Matrix closed = sys.a - sys.b * gain;
  const Matrix stage = sys.q + gain.transpose() * sys.r * gain;
  double cost = 0.0;
  for (int t = 0; t < horizon; ++t) {
    cost += (stage * sigma).trace();
    sigma = closed * sigma * closed.transpose();
  }
  return -cost;
}

Matrix lqr_cost_to_go(const LqrSystem& sys, int horizon) {
  const auto n = sys.a.rows();
  Matrix p = Matrix::Zero(n, n);
  for (int t = 0; t < horizon; ++t) {
    const Matrix btp = sys.b.transpose() * p;
    const Matrix k = (sys.r + btp * sys.b).ldlt().solve(btp * sys.a);
    p = sys.q + sys.a.transpose() * p * (sys.a - sys.b * k);
    p = 0.5 * (p + p.transpose()).eval();
  }
  return p;
}

double lqr_optimal_return(const LqrSystem& sys, int horizon) {
  return -(lqr_cost_to_go(sys, horizon) * initial_second_moment(sys)).trace();
}

double lqr_optimal_return(const LqrSystem& sys, int horizon, const Vector& x0) {
  if (x0.size() != sys.a.rows()) throw EnvError("lqr_optimal_return: state dimension mismatch");
  return -x0.dot(lqr_cost_to_go(sys, horizon) * x0);
}

}  // namespace npg
