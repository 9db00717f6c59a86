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

#include <sstream>

#include "doctest.h"
#include "npg/net.hpp"
#include "oracles.hpp"

using namespace npg;

namespace {

NetworkParams random_net(std::mt19937_64& rng, const std::vector<int>& dims) {
  NetworkParams p = init_network(dims, rng());
  for (auto& l : p.layers) l.bias = oracle::random_vector(rng, l.out_dim(), 0.3);
  return p;
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("init_network shapes and determinism") {
  const NetworkParams p = init_network({5, 64, 64, 2}, 1);
  REQUIRE(p.layers.size() == 3);
  CHECK(p.layers[0].weight.rows() == 64);
  CHECK(p.layers[0].weight.cols() == 5);
  CHECK(p.layers[2].weight.rows() == 2);
  CHECK(p.param_count() == 64 * 6 + 64 * 65 + 2 * 65);
  for (const auto& l : p.layers) CHECK(l.bias.isZero());

  const NetworkParams q = init_network({2, 2}, 4);
  CHECK((q.layers[0].weight.transpose() * q.layers[0].weight - Matrix::Identity(2, 2)).norm() < 1e-12);
  CHECK(flatten(init_network({3, 4, 2}, 9)) == flatten(init_network({3, 4, 2}, 9)));

  CHECK_THROWS_AS(init_network({}, 0), NetError);
  CHECK_THROWS_AS(init_network({3}, 0), NetError);
  CHECK_THROWS_AS(init_network({3, 0}, 0), NetError);
}

TEST_CASE("forward simple cases") {
  NetworkParams zero = init_network({3, 2}, 0);
  zero.layers[0].weight.setZero();
  CHECK(forward(zero, Matrix::Ones(4, 3)).outputs.isZero());

  NetworkParams id = init_network({3, 3}, 0);
  id.layers[0].weight = Matrix::Identity(3, 3);
  Matrix x(2, 3);
  x << 1, 2, 3, -4, 5, -6;
  CHECK(forward(id, x).outputs == x);

  CHECK_THROWS_AS(forward(id, Matrix::Ones(2, 4)), NetError);
}

TEST_CASE("forward matches a hand-computed 2-3-1 network") {
  NetworkParams p = init_network({2, 3, 1}, 0);
  p.layers[0].weight << 0.5, -1.0, 0.25, 0.75, -0.3, 0.2;
  p.layers[0].bias << 0.1, -0.2, 0.3;
  p.layers[1].weight << 1.5, -0.5, 2.0;
  p.layers[1].bias << -0.4;
  Matrix x(1, 2);
  x << 0.7, -1.3;
  const double h0 = std::tanh(0.5 * 0.7 - 1.0 * -1.3 + 0.1);
  const double h1 = std::tanh(0.25 * 0.7 + 0.75 * -1.3 - 0.2);
  const double h2 = std::tanh(-0.3 * 0.7 + 0.2 * -1.3 + 0.3);
  const double y = 1.5 * h0 - 0.5 * h1 + 2.0 * h2 - 0.4;
  CHECK(std::fabs(forward(p, x).outputs(0, 0) - y) < 1e-12);
  CHECK(std::fabs(evaluate(p, Vector(x.row(0).transpose()))(0) - y) < 1e-12);
}

TEST_CASE("backward of zero output gradients is zero") {
  std::mt19937_64 rng(1);
  const NetworkParams p = random_net(rng, {3, 4, 2});
  auto fr = forward(p, oracle::random_matrix(rng, 5, 3));
  const FlatGradient g = backward(p, fr.cache, Matrix::Zero(5, 2));
  CHECK(g.values.isZero());
  CHECK(fr.cache.completed);
}

TEST_CASE("backward matches finite differences") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const NetworkParams p = random_net(rng, {2, 3, 1});
    const Matrix x = oracle::random_matrix(rng, 3, 2);
    const Matrix w = oracle::random_matrix(rng, 3, 1);
    auto fr = forward(p, x);
    const FlatGradient g = backward(p, fr.cache, w);
    auto loss = [&](const Vector& theta) {
      const Matrix out = forward(unflatten(p, theta), x).outputs;
      return (out.array() * w.array()).sum() / 3.0;
    };
    const Vector fd = oracle::numeric_gradient(loss, flatten(p));
    for (int i = 0; i < fd.size(); ++i) {
      CHECK(std::fabs(fd(i) - g.values(i)) <= 1e-6 * std::max(1e-3, std::fabs(fd(i))));
    }
  }
}

TEST_CASE("identical rows give identical per-sample gradients") {
  std::mt19937_64 rng(3);
  const NetworkParams p = random_net(rng, {3, 4, 2});
  const Vector row = oracle::random_vector(rng, 3);
  Matrix x(4, 3);
  for (int i = 0; i < 4; ++i) x.row(i) = row.transpose();
  auto fr = forward(p, x);
  backward(p, fr.cache, Matrix::Ones(4, 2));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Matrix rows = per_sample_gradient_rows(fr.cache, l);
    for (int i = 1; i < 4; ++i) CHECK(rows.row(i) == rows.row(0));
  }
}

TEST_CASE("per-sample rows average to the batch gradient") {
  std::mt19937_64 rng(4);
  for (int m : {1, 4, 7}) {
    const NetworkParams p = random_net(rng, {2, 3, 1});
    auto fr = forward(p, oracle::random_matrix(rng, m, 2));
    const FlatGradient g = backward(p, fr.cache, oracle::random_matrix(rng, m, 1));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const Matrix rows = per_sample_gradient_rows(fr.cache, l);
      CHECK(rows.rows() == m);
      const auto& b = g.layout.blocks[l];
      const Vector mean = rows.colwise().mean().transpose();
      CHECK((mean - g.values.segment(b.offset, b.size())).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  const NetworkParams p = random_net(rng, {2, 3, 1});
  auto fr = forward(p, oracle::random_matrix(rng, 3, 2));
  backward(p, fr.cache, Matrix::Zero(3, 1));
  CHECK(per_sample_gradient_rows(fr.cache, 0).isZero());
  CHECK_THROWS_AS(per_sample_gradient_rows(fr.cache, 5), NetError);
}

TEST_CASE("per-sample rows are the outer product of preactivation grads and inputs") {
  std::mt19937_64 rng(5);
  const NetworkParams p = random_net(rng, {3, 4, 2});
  auto fr = forward(p, oracle::random_matrix(rng, 2, 3));
  backward(p, fr.cache, oracle::random_matrix(rng, 2, 2));
  const Matrix rows = per_sample_gradient_rows(fr.cache, 1);
  const auto& c = fr.cache.layers[1];
  for (int i = 0; i < 2; ++i)
    for (int o = 0; o < c.preact_grads.cols(); ++o)
      for (int j = 0; j < c.inputs.cols(); ++j)
        CHECK(rows(i, o * c.inputs.cols() + j) == doctest::Approx(c.preact_grads(i, o) * c.inputs(i, j)));
  CHECK(c.inputs.col(c.inputs.cols() - 1).isOnes());
}

TEST_CASE("jacobian_vector_product matches the dual-number Jacobian") {
  std::mt19937_64 rng(6);
  const NetworkParams p = random_net(rng, {3, 4, 2});
  const Matrix x = oracle::random_matrix(rng, 3, 3);
  const Vector v = oracle::random_vector(rng, static_cast<int>(p.param_count()));
  const Matrix jv = jacobian_vector_product(p, x, v);
  for (int i = 0; i < 3; ++i) {
    const Vector expect = oracle::mlp_jacobian(p, x.row(i).transpose()) * v;
    CHECK((jv.row(i).transpose() - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gauss_newton_product matches an explicit JᵀΛJ") {
  std::mt19937_64 rng(7);
  const NetworkParams p = random_net(rng, {2, 3, 2});
  const Matrix x = oracle::random_matrix(rng, 4, 2);
  const Vector v = oracle::random_vector(rng, static_cast<int>(p.param_count()));
  Vector prec(2);
  prec << 2.0, 0.5;
  Vector expect = Vector::Zero(v.size());
  for (int i = 0; i < 4; ++i) {
    const Matrix j = oracle::mlp_jacobian(p, x.row(i).transpose());
    expect += j.transpose() * prec.asDiagonal() * j * v / 4.0;
  }
  CHECK((gauss_newton_product(p, x, v, prec) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flatten round trip and layout") {
  std::mt19937_64 rng(8);
  const NetworkParams p = random_net(rng, {3, 4, 2});
  const Vector flat = flatten(p);
  CHECK(flatten(unflatten(p, flat)) == flat);
  const ParamLayout layout = layout_of(p, 2);
  CHECK(layout.size() == flat.size() + 2);
  CHECK(layout.blocks[1].offset == 4 * 4);
  CHECK(layout.blocks[1].rows == 2);
  CHECK(layout.blocks[1].cols == 5);
  // bias is the last column of each row
  CHECK(flat(3) == p.layers[0].bias(0));
  CHECK(flat(0) == p.layers[0].weight(0, 0));
  CHECK_THROWS_AS(unflatten(p, Vector::Zero(3)), NetError);
}

TEST_CASE("snapshot round trip is bit exact") {
  std::mt19937_64 rng(9);
  const NetworkParams p = random_net(rng, {3, 4, 2});
  const Vector tail = oracle::random_vector(rng, 2);
  std::stringstream ss;
  write_snapshot(ss, p, &tail);
  const Snapshot s = read_snapshot(ss);
  CHECK(flatten(s.params) == flatten(p));
  CHECK(s.tail == tail);

  std::stringstream bad("format = something-else\n");
  CHECK_THROWS_AS(read_snapshot(bad), NetError);
}

}  // TEST_SUITE
