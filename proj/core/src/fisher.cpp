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

#include "npg/fisher.hpp"

#include <cmath>

namespace npg {

std::string to_string(FisherBackendKind kind) {
  switch (kind) {
    case FisherBackendKind::kDiagonal: return "diagonal";
    case FisherBackendKind::kHF: return "hf";
    case FisherBackendKind::kKFAC: return "kfac";
    case FisherBackendKind::kEKFAC: return "ekfac";
    case FisherBackendKind::kTENGraD: return "tengrad";
  }
  return "unknown";
}

FisherBackendKind parse_backend(const std::string& name) {
  for (auto k : kAllBackends) {
    if (to_string(k) == name) return k;
  }
  throw FisherError("unknown Fisher backend '" + name + "'");
}

namespace {

void require_cache(const LayerCache& cache, const FlatGradient& grad) {
  if (!cache.completed) throw FisherError("layer cache has no backward statistics");
  if (cache.layers.size() != grad.layout.blocks.size()) {
    throw FisherError("layer cache does not match gradient layout");
  }
  for (std::size_t l = 0; l < cache.layers.size(); ++l) {
    const auto& b = grad.layout.blocks[l];
    if (cache.layers[l].inputs.cols() != b.cols || cache.layers[l].preact_grads.cols() != b.rows) {
      throw FisherError("layer cache shape mismatch at layer " + std::to_string(l));
    }
  }
}

Vector tail_or_zero(const Vector& tail_fisher, Eigen::Index size) {
  if (tail_fisher.size() == size) return tail_fisher;
  if (tail_fisher.size() == 0) return Vector::Zero(size);
  throw FisherError("trailing Fisher diagonal has wrong length");
}

void precondition_tail(const FlatGradient& grad, const Vector& tail_fisher, double damping,
                       FlatGradient& out) {
  if (grad.layout.tail_size == 0) return;
  const Vector f = tail_or_zero(tail_fisher, grad.layout.tail_size);
  out.tail() = grad.tail().array() / (f.array() + damping);
}

void require_damping(double damping) {
  if (!(damping > 0.0) || !std::isfinite(damping)) {
    throw FisherError("damping must be positive and finite");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ExactFisher exact_fisher_from_cache(const LayerCache& cache, const Vector& tail_fisher) {
  if (!cache.completed) throw FisherError("exact_fisher: cache has no backward statistics");
  Eigen::Index n_mean = 0;
  std::vector<Matrix> rows;
  for (std::size_t l = 0; l < cache.layers.size(); ++l) {
    rows.push_back(per_sample_gradient_rows(cache, l));
    n_mean += rows.back().cols();
  }
  const Eigen::Index n = n_mean + tail_fisher.size();
  if (n > kExactFisherMaxParams) {
    throw FisherError("exact_fisher: " + std::to_string(n) + " parameters exceeds oracle guard of " +
                      std::to_string(kExactFisherMaxParams));
  }
  const Eigen::Index m = cache.batch_size();
  Matrix all(m, n_mean);
  Eigen::Index off = 0;
  for (const auto& r : rows) {
    all.middleCols(off, r.cols()) = r;
    off += r.cols();
  }
  ExactFisher out;
  out.full = Matrix::Zero(n, n);
  out.full.topLeftCorner(n_mean, n_mean) = all.transpose() * all / static_cast<double>(m);
  for (Eigen::Index i = 0; i < tail_fisher.size(); ++i) {
    out.full(n_mean + i, n_mean + i) = tail_fisher(i);
  }
  off = 0;
  for (const auto& r : rows) {
    out.blocks.push_back(out.full.block(off, off, r.cols(), r.cols()));
    off += r.cols();
  }
  return out;
}

ExactFisher exact_fisher_blocks(const GaussianPolicy& policy, const Matrix& states) {
  if (policy.param_count() > kExactFisherMaxParams) {
    throw FisherError("exact_fisher: policy exceeds oracle guard of " +
                      std::to_string(kExactFisherMaxParams) + " parameters");
  }
  return exact_fisher_from_cache(fisher_cache(policy, states), log_std_fisher_diag(policy));
}

// ---------------------------------------------------------------------------

void diagonal_update_stats(DiagonalState& state, const LayerCache& cache,
                           const Vector& tail_fisher) {
  if (!cache.completed) throw FisherError("diagonal: cache has no backward statistics");
  Eigen::Index n = tail_fisher.size();
  for (const auto& l : cache.layers) n += l.inputs.cols() * l.preact_grads.cols();
  Vector batch(n);
  const double m = static_cast<double>(cache.batch_size());
  Eigen::Index off = 0;
  for (const auto& l : cache.layers) {
    const RowMajorMatrix sq =
        l.preact_grads.array().square().matrix().transpose() * l.inputs.array().square().matrix() / m;
    batch.segment(off, sq.size()) = Eigen::Map<const Vector>(sq.data(), sq.size());
    off += sq.size();
  }
  batch.tail(tail_fisher.size()) = tail_fisher;
  if (!state.initialized || state.second_moment.size() != n) {
    state.second_moment = batch;
    state.initialized = true;
  } else {
    state.second_moment = state.decay * state.second_moment + (1.0 - state.decay) * batch;
  }
}

FlatGradient diagonal_precondition(const DiagonalState& state, const FlatGradient& grad,
                                   double damping) {
  require_damping(damping);
  if (!state.initialized || state.second_moment.size() != grad.values.size()) {
    throw FisherError("diagonal: statistics missing or sized for another layout");
  }
  return {grad.values.array() / (state.second_moment.array() + damping), grad.layout};
}

// ---------------------------------------------------------------------------

HfResult hf_precondition(const LinearOperator& fvp, const FlatGradient& grad, double damping,
                         int cg_iters, double cg_tol) {
  require_damping(damping);
  if (cg_iters < 1) throw FisherError("hf: cg_iters must be >= 1");
  auto damped = [&](const Vector& v) -> Vector { return fvp(v) + damping * v; };
  CgResult cg = conjugate_gradient(damped, grad.values, cg_iters, cg_tol);
  return {{std::move(cg.x), grad.layout}, cg.residual_norm, cg.iterations};
}

HfResult hf_precondition(const GaussianPolicy& policy, const Matrix& states,
                         const FlatGradient& grad, double damping, int cg_iters, double cg_tol) {
  auto fvp = [&](const Vector& v) -> Vector {
    return fisher_vector_product(policy, states, v, 0.0);
  };
  return hf_precondition(fvp, grad, damping, cg_iters, cg_tol);
}

// ---------------------------------------------------------------------------

namespace {

void refresh_basis(KroneckerState& state) {
  for (auto& l : state.layers) {
    l.eig_a = sym_eig(l.a, 1e-8);
    l.eig_g = sym_eig(l.g, 1e-8);
    // Round-off can leave tiny negative eigenvalues of a PSD factor.
    l.eig_a.values = l.eig_a.values.cwiseMax(0.0);
    l.eig_g.values = l.eig_g.values.cwiseMax(0.0);
    l.scalings = l.eig_g.values * l.eig_a.values.transpose();
  }
  state.has_basis = true;
  state.scalings_stale = true;
  state.updates_since_refresh = 0;
}

void require_stats(const KroneckerState& state, const FlatGradient& grad) {
  if (!state.initialized || state.layers.size() != grad.layout.blocks.size()) {
    throw FisherError("kronecker: statistics missing for one or more layers");
  }
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    const auto& b = grad.layout.blocks[l];
    if (state.layers[l].a.rows() != b.cols || state.layers[l].g.rows() != b.rows) {
      throw FisherError("kronecker: factor shape mismatch at layer " + std::to_string(l));
    }
  }
}

void require_basis(const KroneckerState& state) {
  if (!state.has_basis || state.updates_since_refresh >= state.refresh_interval) {
    throw FisherError("ekfac: eigenbases are stale; refresh is overdue");
  }
}

}  // namespace

void kfac_update_stats(KroneckerState& state, const LayerCache& cache, const Vector& tail_fisher) {
  if (!cache.completed) throw FisherError("kfac: cache has no backward statistics");
  if (state.refresh_interval < 1) throw FisherError("kfac: refresh_interval must be >= 1");
  const double m = static_cast<double>(cache.batch_size());
  const bool fresh = !state.initialized || state.layers.size() != cache.layers.size();
  if (fresh) state.layers.assign(cache.layers.size(), {});
  for (std::size_t i = 0; i < cache.layers.size(); ++i) {
    const auto& c = cache.layers[i];
    Matrix a = c.inputs.transpose() * c.inputs / m;
    Matrix g = c.preact_grads.transpose() * c.preact_grads / m;
    auto& l = state.layers[i];
    if (fresh || l.a.rows() != a.rows() || l.g.rows() != g.rows()) {
      l.a = std::move(a);
      l.g = std::move(g);
    } else {
      l.a = state.decay * l.a + (1.0 - state.decay) * a;
      l.g = state.decay * l.g + (1.0 - state.decay) * g;
    }
  }
  state.tail_fisher = tail_fisher;
  state.initialized = true;
  ++state.updates_since_refresh;
  if (fresh || !state.has_basis || state.updates_since_refresh >= state.refresh_interval) {
    refresh_basis(state);
  }
}

FlatGradient kfac_precondition(const KroneckerState& state, const FlatGradient& grad,
                               double damping, KfacDampingRule rule) {
  require_damping(damping);
  require_stats(state, grad);
  FlatGradient out{Vector::Zero(grad.values.size()), grad.layout};
  const double sqrt_damping = std::sqrt(damping);
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    const auto& l = state.layers[i];
    const Matrix gw = grad.block(i);
    if (rule == KfacDampingRule::kFactored) {
      const double mean_a = l.a.trace() / static_cast<double>(l.a.rows());
      const double mean_g = l.g.trace() / static_cast<double>(l.g.rows());
      double pi = 1.0;
      if (mean_a > 0.0 && mean_g > 0.0) pi = std::sqrt(mean_a / mean_g);
      const Matrix g_damped = l.g + (sqrt_damping / pi) * Matrix::Identity(l.g.rows(), l.g.cols());
      const Matrix a_damped = l.a + (sqrt_damping * pi) * Matrix::Identity(l.a.rows(), l.a.cols());
      const Matrix left = cholesky_solve(g_damped, gw);
      out.block(i) = cholesky_solve(a_damped, Matrix(left.transpose())).transpose();
    } else {
      if (!state.has_basis) throw FisherError("kfac: eigen damping requires eigenbases");
      const Matrix& qg = l.eig_g.vectors;
      const Matrix& qa = l.eig_a.vectors;
      const Matrix kron = l.eig_g.values * l.eig_a.values.transpose();
      const Matrix proj = qg.transpose() * gw * qa;
      out.block(i) = qg * (proj.array() / (kron.array() + damping)).matrix() * qa.transpose();
    }
  }
  precondition_tail(grad, state.tail_fisher, damping, out);
  return out;
}

void ekfac_update_scalings(KroneckerState& state, const LayerCache& cache) {
  if (!cache.completed) throw FisherError("ekfac: cache has no backward statistics");
  require_basis(state);
  if (cache.layers.size() != state.layers.size()) {
    throw FisherError("ekfac: cache does not match factor layout");
  }
  const double m = static_cast<double>(cache.batch_size());
  for (std::size_t i = 0; i < cache.layers.size(); ++i) {
    auto& l = state.layers[i];
    const auto& c = cache.layers[i];
    const Matrix g_hat = c.preact_grads * l.eig_g.vectors;
    const Matrix a_hat = c.inputs * l.eig_a.vectors;
    const Matrix batch =
        g_hat.array().square().matrix().transpose() * a_hat.array().square().matrix() / m;
    if (state.scalings_stale) {
      l.scalings = batch;
    } else {
      l.scalings = state.decay * l.scalings + (1.0 - state.decay) * batch;
    }
  }
  state.scalings_stale = false;
}

FlatGradient ekfac_precondition(const KroneckerState& state, const FlatGradient& grad,
                                double damping) {
  require_damping(damping);
  require_stats(state, grad);
  require_basis(state);
  FlatGradient out{Vector::Zero(grad.values.size()), grad.layout};
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    const auto& l = state.layers[i];
    const Matrix& qg = l.eig_g.vectors;
    const Matrix& qa = l.eig_a.vectors;
    const Matrix proj = qg.transpose() * Matrix(grad.block(i)) * qa;
    out.block(i) = qg * (proj.array() / (l.scalings.array() + damping)).matrix() * qa.transpose();
  }
  precondition_tail(grad, state.tail_fisher, damping, out);
  return out;
}

FlatGradient ekfac_precondition(KroneckerState& state, const FlatGradient& grad, double damping,
                                const LayerCache& cache) {
  ekfac_update_scalings(state, cache);
  return ekfac_precondition(std::as_const(state), grad, damping);
}

// ---------------------------------------------------------------------------

FlatGradient tengrad_precondition(const LayerCache& cache, const FlatGradient& grad,
                                  double damping, const Vector& tail_fisher) {
  require_damping(damping);
  require_cache(cache, grad);
  FlatGradient out{Vector::Zero(grad.values.size()), grad.layout};
  const Eigen::Index m = cache.batch_size();
  const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m));
  for (std::size_t i = 0; i < cache.layers.size(); ++i) {
    const auto& b = grad.layout.blocks[i];
    const Matrix jac = per_sample_gradient_rows(cache, i) * inv_sqrt_m;  // m x P
    const auto g = grad.values.segment(b.offset, b.size());
    Matrix gram = jac * jac.transpose();
    gram.diagonal().array() += damping;
    Vector coeff;
    try {
      coeff = cholesky_solve(gram, Vector(jac * g));
    } catch (const LinalgError& e) {
      throw FisherError(std::string("tengrad: Gram solve failed: ") + e.what());
    }
    out.values.segment(b.offset, b.size()) = (g - jac.transpose() * coeff) / damping;
  }
  precondition_tail(grad, tail_fisher, damping, out);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const LayerCache& cache_of(const CurvatureBatch& batch) {
  if (batch.cache == nullptr) throw FisherError("curvature batch has no layer cache");
  return *batch.cache;
}

class DiagonalBackend final : public FisherBackend {
 public:
  explicit DiagonalBackend(const BackendOptions& o) { state_.decay = o.diagonal_decay; }
  FisherBackendKind kind() const override { return FisherBackendKind::kDiagonal; }
  void update(const CurvatureBatch& batch) override {
    diagonal_update_stats(state_, cache_of(batch), batch.tail_fisher);
  }
  Preconditioned precondition(const FlatGradient& grad, double damping,
                              const CurvatureBatch&) const override {
    return {diagonal_precondition(state_, grad, damping)};
  }

 private:
  DiagonalState state_;
};

class HfBackend final : public FisherBackend {
 public:
  explicit HfBackend(const BackendOptions& o) : iters_(o.cg_iters), tol_(o.cg_tol) {}
  FisherBackendKind kind() const override { return FisherBackendKind::kHF; }
  void update(const CurvatureBatch&) override {}
  Preconditioned precondition(const FlatGradient& grad, double damping,
                              const CurvatureBatch& batch) const override {
    if (!batch.fvp) throw FisherError("hf: curvature batch has no Fisher-vector product");
    HfResult r = hf_precondition(batch.fvp, grad, damping, iters_, tol_);
    return {std::move(r.direction), r.residual, r.iterations};
  }

 private:
  int iters_;
  double tol_;
};

class KfacBackend final : public FisherBackend {
 public:
  explicit KfacBackend(const BackendOptions& o) {
    state_.decay = o.kronecker_decay;
    state_.refresh_interval = o.refresh_interval;
  }
  FisherBackendKind kind() const override { return FisherBackendKind::kKFAC; }
  void update(const CurvatureBatch& batch) override {
    kfac_update_stats(state_, cache_of(batch), batch.tail_fisher);
  }
  Preconditioned precondition(const FlatGradient& grad, double damping,
                              const CurvatureBatch&) const override {
    return {kfac_precondition(state_, grad, damping)};
  }

 private:
  KroneckerState state_;
};

class EkfacBackend final : public FisherBackend {
 public:
  explicit EkfacBackend(const BackendOptions& o) {
    state_.decay = o.kronecker_decay;
    state_.refresh_interval = o.refresh_interval;
  }
  FisherBackendKind kind() const override { return FisherBackendKind::kEKFAC; }
  void update(const CurvatureBatch& batch) override {
    kfac_update_stats(state_, cache_of(batch), batch.tail_fisher);
    ekfac_update_scalings(state_, cache_of(batch));
  }
  Preconditioned precondition(const FlatGradient& grad, double damping,
                              const CurvatureBatch&) const override {
    return {ekfac_precondition(state_, grad, damping)};
  }

 private:
  KroneckerState state_;
};

class TengradBackend final : public FisherBackend {
 public:
  FisherBackendKind kind() const override { return FisherBackendKind::kTENGraD; }
  void update(const CurvatureBatch&) override {}
  Preconditioned precondition(const FlatGradient& grad, double damping,
                              const CurvatureBatch& batch) const override {
    return {tengrad_precondition(cache_of(batch), grad, damping, batch.tail_fisher)};
  }
};

}  // namespace

std::unique_ptr<FisherBackend> make_backend(FisherBackendKind kind, const BackendOptions& options) {
  switch (kind) {
    case FisherBackendKind::kDiagonal: return std::make_unique<DiagonalBackend>(options);
    case FisherBackendKind::kHF: return std::make_unique<HfBackend>(options);
    case FisherBackendKind::kKFAC: return std::make_unique<KfacBackend>(options);
    case FisherBackendKind::kEKFAC: return std::make_unique<EkfacBackend>(options);
    case FisherBackendKind::kTENGraD: return std::make_unique<TengradBackend>();
  }
  throw FisherError("unknown backend kind");
}

}  // namespace npg
