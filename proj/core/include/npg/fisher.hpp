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

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "npg/linalg.hpp"
#include "npg/net.hpp"
#include "npg/policy.hpp"

namespace npg {

class FisherError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FisherBackendKind { kDiagonal, kHF, kKFAC, kEKFAC, kTENGraD };

inline constexpr FisherBackendKind kAllBackends[] = {
    FisherBackendKind::kDiagonal, FisherBackendKind::kHF, FisherBackendKind::kKFAC,
    FisherBackendKind::kEKFAC, FisherBackendKind::kTENGraD};

/// "diagonal", "hf", "kfac", "ekfac", "tengrad".
std::string to_string(FisherBackendKind kind);
FisherBackendKind parse_backend(const std::string& name);

// ---------------------------------------------------------------------------
// Exact Fisher (test oracle, tiny networks only)
// ---------------------------------------------------------------------------

inline constexpr Eigen::Index kExactFisherMaxParams = 200;

struct ExactFisher {
  std::vector<Matrix> blocks;  // per-layer F_l in block (row-major [W|b]) order
  Matrix full;                 // n_θ x n_θ including the trailing diagonal block
};

/// F = (1/m)·Σ_i r_i r_iᵀ from the cache's per-sample Fisher rows, with
/// `tail_fisher` on the diagonal of the trailing block.
ExactFisher exact_fisher_from_cache(const LayerCache& cache, const Vector& tail_fisher);
ExactFisher exact_fisher_blocks(const GaussianPolicy& policy, const Matrix& states);

// ---------------------------------------------------------------------------
// Diagonal
// ---------------------------------------------------------------------------

struct DiagonalState {
  Vector second_moment;  // running mean of squared per-sample scores
  double decay = 0.9;
  bool initialized = false;
};

void diagonal_update_stats(DiagonalState& state, const LayerCache& cache,
                           const Vector& tail_fisher);

/// out_i = grad_i / (diag_i + λ_d).
FlatGradient diagonal_precondition(const DiagonalState& state, const FlatGradient& grad,
                                   double damping);

// ---------------------------------------------------------------------------
// Hessian-free
// ---------------------------------------------------------------------------

struct HfResult {
  FlatGradient direction;
  double residual = 0.0;
  int iterations = 0;
};

/// Solves (F + λ_d I) x = grad by conjugate gradient over the undamped `fvp`.
HfResult hf_precondition(const LinearOperator& fvp, const FlatGradient& grad, double damping,
                         int cg_iters, double cg_tol);
HfResult hf_precondition(const GaussianPolicy& policy, const Matrix& states,
                         const FlatGradient& grad, double damping, int cg_iters, double cg_tol);

// ---------------------------------------------------------------------------
// KFAC / EKFAC
// ---------------------------------------------------------------------------

enum class KfacDampingRule {
  kFactored,  // (G + (√λ/π)I)⁻¹ ∇W (A + √λ·π I)⁻¹, π the trace-ratio split
  kEigen,     // (G ⊗ A + λ I)⁻¹ applied in the joint eigenbasis
};

struct KroneckerState {
  struct Layer {
    Matrix a;  // E[a aᵀ], homogeneous coordinate included
    Matrix g;  // E[g gᵀ] of preactivation gradients
    SymEig eig_a;
    SymEig eig_g;
    Matrix scalings;  // EKFAC per-eigenpair second moments, out x (in+1)
  };
  std::vector<Layer> layers;
  Vector tail_fisher;
  double decay = 0.95;
  int refresh_interval = 1;
  int updates_since_refresh = 0;
  bool initialized = false;
  bool has_basis = false;
  bool scalings_stale = false;  // basis changed since the scalings were estimated
};

/// A ← decay·A + (1−decay)·aᵀa/m, likewise G. Eigenbases are recomputed every
/// `refresh_interval` calls. A refresh sets the EKFAC scalings to the
/// Kronecker-implied values λ_G λ_Aᵀ and marks them for re-estimation.
void kfac_update_stats(KroneckerState& state, const LayerCache& cache,
                       const Vector& tail_fisher = {});

FlatGradient kfac_precondition(const KroneckerState& state, const FlatGradient& grad,
                               double damping,
                               KfacDampingRule rule = KfacDampingRule::kFactored);

/// s ← decay·s + (1−decay)·mean_i[(Q_Gᵀ g_i a_iᵀ Q_A)²]; right after a basis
/// refresh the batch estimate replaces s outright.
void ekfac_update_scalings(KroneckerState& state, const LayerCache& cache);

/// Q_G [(Q_Gᵀ ∇W Q_A) ⊘ (s + λ_d)] Q_Aᵀ per layer.
FlatGradient ekfac_precondition(const KroneckerState& state, const FlatGradient& grad,
                                double damping);

/// Updates the scalings from `cache` and then preconditions.
FlatGradient ekfac_precondition(KroneckerState& state, const FlatGradient& grad, double damping,
                                const LayerCache& cache);

// ---------------------------------------------------------------------------
// TENGraD
// ---------------------------------------------------------------------------

/// Exact per-layer block solve (JᵀJ + λ_d I)⁻¹ g_l via the Woodbury identity,
/// J = per-sample rows / √m, using an m x m Gram solve. The trailing block is
/// treated diagonally with `tail_fisher` (zero when empty).
FlatGradient tengrad_precondition(const LayerCache& cache, const FlatGradient& grad,
                                  double damping, const Vector& tail_fisher = {});

// ---------------------------------------------------------------------------
// Backend interface
// ---------------------------------------------------------------------------

/// Curvature inputs for one update. `cache` holds per-sample Fisher rows for
/// the layer blocks; `fvp` is the undamped full Fisher-vector product (used by
/// HF only); `tail_fisher` is the Fisher diagonal of the trailing block.
struct CurvatureBatch {
  const LayerCache* cache = nullptr;
  LinearOperator fvp;
  Vector tail_fisher;
};

struct Preconditioned {
  FlatGradient direction;
  double cg_residual = std::numeric_limits<double>::quiet_NaN();
  int cg_iterations = 0;
};

struct BackendOptions {
  double diagonal_decay = 0.9;
  double kronecker_decay = 0.95;
  int refresh_interval = 1;
  int cg_iters = 10;
  double cg_tol = 1e-10;
};

class FisherBackend {
 public:
  virtual ~FisherBackend() = default;
  virtual FisherBackendKind kind() const = 0;
  /// Folds the batch statistics into the backend state.
  virtual void update(const CurvatureBatch& batch) = 0;
  virtual Preconditioned precondition(const FlatGradient& grad, double damping,
                                      const CurvatureBatch& batch) const = 0;
};

std::unique_ptr<FisherBackend> make_backend(FisherBackendKind kind,
                                            const BackendOptions& options = {});

}  // namespace npg
