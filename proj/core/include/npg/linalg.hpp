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
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace npg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised by linalg kernels on numerical failure (non-SPD input, asymmetry,
/// non-finite values during iteration).
class LinalgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

/// Solves a·x = b for symmetric positive definite `a` via Cholesky.
/// Throws LinalgError("... not positive definite") when the factorization fails.
Vector cholesky_solve(const Matrix& a, const Vector& b);

/// Multi right-hand-side variant; columns of `b` are solved independently.
Matrix cholesky_solve(const Matrix& a, const Matrix& b);

struct SymEig {
  Vector values;   // descending
  Matrix vectors;  // columns are eigenvectors, orthonormal
};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
/// Rejects inputs whose asymmetry exceeds `sym_tol` times the largest entry.
SymEig sym_eig(const Matrix& a, double sym_tol = 1e-10);

using LinearOperator = std::function<Vector(const Vector&)>;

struct CgResult {
  Vector x;
  double residual_norm = 0.0;  // ‖apply(x) − b‖, true (recomputed) residual
  int iterations = 0;
  bool converged = false;
};

/// Conjugate gradient for an SPD operator. Stops when ‖apply(x) − b‖ ≤ tol·‖b‖
/// or after max_iters. The recursive residual is replaced by the true residual
/// every `kResidualRefresh` iterations.
CgResult conjugate_gradient(const LinearOperator& apply, const Vector& b,
                            int max_iters, double tol);

inline constexpr int kResidualRefresh = 10;

/// Deterministic orthogonal matrix from a seeded standard-normal draw.
/// For rows >= cols the columns are orthonormal, otherwise the rows are.
Matrix orthogonal_matrix(int rows, int cols, std::uint64_t seed);

}  // namespace npg
