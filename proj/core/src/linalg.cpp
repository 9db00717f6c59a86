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

#include "npg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace npg {

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

namespace {

Eigen::LLT<Matrix> factor_spd(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw LinalgError("cholesky_solve: matrix is not square");
  }
  if (!a.allFinite()) {
    throw LinalgError("cholesky_solve: matrix has non-finite entries");
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw LinalgError("cholesky_solve: matrix is not positive definite");
  }
  // LLT only checks pivots for <= 0; tiny pivots from rounding are accepted.
  const Matrix& l = llt.matrixLLT();
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) {
      throw LinalgError("cholesky_solve: matrix is not positive definite");
    }
  }
  return llt;
}

}  // namespace

Vector cholesky_solve(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) {
    throw LinalgError("cholesky_solve: dimension mismatch");
  }
  return factor_spd(a).solve(b);
}

Matrix cholesky_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw LinalgError("cholesky_solve: dimension mismatch");
  }
  return factor_spd(a).solve(b);
}

SymEig sym_eig(const Matrix& a, double sym_tol) {
  if (a.rows() != a.cols()) {
    throw LinalgError("sym_eig: matrix is not square");
  }
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) {
    throw LinalgError("sym_eig: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
  if (solver.info() != Eigen::Success) {
    throw LinalgError("sym_eig: eigensolver did not converge");
  }
  // Eigen returns ascending order.
  const Eigen::Index n = a.rows();
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = solver.eigenvalues()(n - 1 - i);
    out.vectors.col(i) = solver.eigenvectors().col(n - 1 - i);
  }
  return out;
}

CgResult conjugate_gradient(const LinearOperator& apply, const Vector& b,
                            int max_iters, double tol) {
  if (!(tol > 0.0)) {
    throw LinalgError("conjugate_gradient: tol must be positive");
  }
  CgResult result;
  result.x = Vector::Zero(b.size());
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    result.converged = true;
    return result;
  }
  const double target = tol * b_norm;

  Vector r = b;  // x0 = 0
  Vector p = r;
  double rr = r.squaredNorm();
  for (int k = 1; k <= max_iters; ++k) {
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap) || !ap.allFinite()) {
      throw LinalgError("conjugate_gradient: non-finite value at iteration " +
                        std::to_string(k));
    }
    if (pap <= 0.0) {
      // Operator is not positive definite along p; stop with the current iterate.
      break;
    }
    const double alpha = rr / pap;
    result.x += alpha * p;
    if (k % kResidualRefresh == 0) {
      r = b - apply(result.x);
    } else {
      r -= alpha * ap;
    }
    if (!result.x.allFinite() || !r.allFinite()) {
      throw LinalgError("conjugate_gradient: non-finite value at iteration " +
                        std::to_string(k));
    }
    result.iterations = k;
    const double rr_next = r.squaredNorm();
    if (std::sqrt(rr_next) <= target) {
      break;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  result.residual_norm = (b - apply(result.x)).norm();
  result.converged = result.residual_norm <= target;
  return result;
}

Matrix orthogonal_matrix(int rows, int cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1) {
    throw LinalgError("orthogonal_matrix: dimensions must be >= 1");
  }
  const int tall = std::max(rows, cols);
  const int flat = std::min(rows, cols);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(tall, flat);
  for (int i = 0; i < tall; ++i) {
    for (int j = 0; j < flat; ++j) {
      g(i, j) = normal(rng);
    }
  }
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(tall, flat);
  // Sign fix so that diag(R) > 0 makes the factor unique.
  const Matrix& r = qr.matrixQR();
  for (int j = 0; j < flat; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  if (rows >= cols) return q;
  return q.transpose();
}

}  // namespace npg
