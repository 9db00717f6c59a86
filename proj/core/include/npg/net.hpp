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
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "npg/linalg.hpp"

namespace npg {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LayerParams {
  Matrix weight;  // out_dim x in_dim
  Vector bias;    // out_dim

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

/// MLP with tanh on every layer except the last, which is linear.
struct NetworkParams {
  std::vector<LayerParams> layers;

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }
  Eigen::Index param_count() const;
};

/// Maps slices of a flat parameter vector to network layers. Each layer block
/// is the out x (in+1) matrix [W | b] stored row-major, so the bias is the
/// trailing column of its row. An optional trailing block holds parameters
/// that are not part of any layer (the policy's log_std).
struct ParamLayout {
  struct Block {
    int layer = 0;
    int rows = 0;  // out_dim
    int cols = 0;  // in_dim + 1
    Eigen::Index offset = 0;
    Eigen::Index size() const { return Eigen::Index{rows} * cols; }
    bool operator==(const Block&) const = default;
  };
  std::vector<Block> blocks;
  Eigen::Index tail_offset = 0;
  Eigen::Index tail_size = 0;

  Eigen::Index size() const { return tail_offset + tail_size; }
  bool operator==(const ParamLayout&) const = default;
};

ParamLayout layout_of(const NetworkParams& params, Eigen::Index tail_size = 0);

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FlatGradient {
  Vector values;
  ParamLayout layout;

  /// Row-major view of one layer block as an out x (in+1) matrix.
  Eigen::Map<const RowMajorMatrix> block(std::size_t layer) const;
  Eigen::Map<RowMajorMatrix> block(std::size_t layer);
  auto tail() const { return values.segment(layout.tail_offset, layout.tail_size); }
  auto tail() { return values.segment(layout.tail_offset, layout.tail_size); }
};

/// Per-layer statistics captured by a forward/backward pair.
struct LayerCache {
  struct Layer {
    Matrix inputs;        // batch x (in_dim + 1); last column is the homogeneous 1
    Matrix preact_grads;  // batch x out_dim, per-sample (not batch-averaged)
  };
  std::vector<Layer> layers;
  bool completed = false;

  Eigen::Index batch_size() const { return layers.empty() ? 0 : layers.front().inputs.rows(); }
};

/// Orthogonally initialized weights, zero biases. dims = (in, hidden..., out).
NetworkParams init_network(const std::vector<int>& dims, std::uint64_t seed);

struct ForwardResult {
  Matrix outputs;  // batch x out_dim
  LayerCache cache;
};

ForwardResult forward(const NetworkParams& params, const Matrix& inputs);

/// Single-sample evaluation without caching.
Vector evaluate(const NetworkParams& params, const Vector& input);

/// Batch evaluation without caching.
Matrix evaluate(const NetworkParams& params, const Matrix& inputs);

/// Backpropagates `output_grads` (batch x out, per-sample dLoss_i/dOutput_i).
/// Returns the batch mean of per-sample parameter gradients and fills the
/// cache's per-sample preactivation gradients.
FlatGradient backward(const NetworkParams& params, LayerCache& cache,
                      const Matrix& output_grads);

/// Row i is vec_rowmajor(g_i a_i^T) for the given layer.
Matrix per_sample_gradient_rows(const LayerCache& cache, std::size_t layer);

/// Forward-mode directional derivative of the outputs: J·v, batch x out.
Matrix jacobian_vector_product(const NetworkParams& params, const Matrix& inputs,
                               const Vector& v);

/// (1/m) Σ_i J_iᵀ diag(output_precision) J_i v over the network parameters.
Vector gauss_newton_product(const NetworkParams& params, const Matrix& inputs,
                            const Vector& v, const Vector& output_precision);

Vector flatten(const NetworkParams& params);
NetworkParams unflatten(const NetworkParams& shape_like, const Vector& flat);

/// Key-value text snapshot. Values are written with 17 significant digits so
/// that reading back reproduces the doubles exactly.
void write_snapshot(std::ostream& os, const NetworkParams& params, const Vector* tail = nullptr);

struct Snapshot {
  NetworkParams params;
  Vector tail;
};
Snapshot read_snapshot(std::istream& is);

}  // namespace npg
