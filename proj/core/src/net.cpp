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

#include "npg/net.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace npg {

Eigen::Index NetworkParams::param_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

ParamLayout layout_of(const NetworkParams& params, Eigen::Index tail_size) {
  ParamLayout layout;
  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    ParamLayout::Block b{static_cast<int>(i), l.out_dim(), l.in_dim() + 1, offset};
    offset += b.size();
    layout.blocks.push_back(b);
  }
  layout.tail_offset = offset;
  layout.tail_size = tail_size;
  return layout;
}

Eigen::Map<const RowMajorMatrix> FlatGradient::block(std::size_t layer) const {
  const auto& b = layout.blocks.at(layer);
  return {values.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<RowMajorMatrix> FlatGradient::block(std::size_t layer) {
  const auto& b = layout.blocks.at(layer);
  return {values.data() + b.offset, b.rows, b.cols};
}

NetworkParams init_network(const std::vector<int>& dims, std::uint64_t seed) {
  if (dims.size() < 2) {
    throw NetError("init_network: need at least input and output dimensions");
  }
  for (int d : dims) {
    if (d < 1) throw NetError("init_network: dimensions must be >= 1");
  }
  NetworkParams params;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    LayerParams l;
    // Distinct stream per layer; splitmix-style offset keeps seeds apart.
    l.weight = orthogonal_matrix(dims[i + 1], dims[i], seed + 0x9E3779B97F4A7C15ULL * (i + 1));
    l.bias = Vector::Zero(dims[i + 1]);
    params.layers.push_back(std::move(l));
  }
  return params;
}

namespace {

Matrix with_ones(const Matrix& a) {
  Matrix out(a.rows(), a.cols() + 1);
  out.leftCols(a.cols()) = a;
  out.col(a.cols()).setOnes();
  return out;
}

void check_input(const NetworkParams& params, Eigen::Index width) {
  if (params.layers.empty()) throw NetError("network has no layers");
  if (width != params.in_dim()) {
    throw NetError("input width " + std::to_string(width) + " does not match network input " +
                   std::to_string(params.in_dim()));
  }
}

}  // namespace

ForwardResult forward(const NetworkParams& params, const Matrix& inputs) {
  check_input(params, inputs.cols());
  ForwardResult res;
  res.cache.layers.resize(params.layers.size());
  Matrix a = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    res.cache.layers[l].inputs = with_ones(a);
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < params.layers.size()) {
      a = z.array().tanh().matrix();
    } else {
      a = std::move(z);
    }
  }
  res.outputs = std::move(a);
  return res;
}

Vector evaluate(const NetworkParams& params, const Vector& input) {
  check_input(params, input.size());
  Vector a = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Vector z = layer.weight * a + layer.bias;
    a = (l + 1 < params.layers.size()) ? Vector(z.array().tanh()) : z;
  }
  return a;
}

Matrix evaluate(const NetworkParams& params, const Matrix& inputs) {
  check_input(params, inputs.cols());
  Matrix a = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    a = (l + 1 < params.layers.size()) ? Matrix(z.array().tanh()) : z;
  }
  return a;
}

FlatGradient backward(const NetworkParams& params, LayerCache& cache,
                      const Matrix& output_grads) {
  if (cache.layers.size() != params.layers.size()) {
    throw NetError("backward: cache does not match network depth");
  }
  const Eigen::Index m = cache.batch_size();
  if (output_grads.rows() != m || output_grads.cols() != params.out_dim()) {
    throw NetError("backward: output gradient shape mismatch");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (cache.layers[l].inputs.cols() != params.layers[l].in_dim() + 1 ||
        cache.layers[l].inputs.rows() != m) {
      throw NetError("backward: cache does not match layer " + std::to_string(l));
    }
  }

  FlatGradient grad{Vector::Zero(params.param_count()), layout_of(params)};
  Matrix delta = output_grads;
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    auto& entry = cache.layers[i];
    entry.preact_grads = delta;
    grad.block(i) = delta.transpose() * entry.inputs / static_cast<double>(m);
    if (i > 0) {
      const auto act = entry.inputs.leftCols(entry.inputs.cols() - 1).array();
      delta = ((delta * params.layers[i].weight).array() * (1.0 - act.square())).matrix();
    }
  }
  cache.completed = true;
  return grad;
}

Matrix per_sample_gradient_rows(const LayerCache& cache, std::size_t layer) {
  if (layer >= cache.layers.size()) {
    throw NetError("per_sample_gradient_rows: layer index " + std::to_string(layer) +
                   " out of range");
  }
  if (!cache.completed) {
    throw NetError("per_sample_gradient_rows: cache has no backward statistics");
  }
  const auto& entry = cache.layers[layer];
  const Eigen::Index m = entry.inputs.rows();
  const Eigen::Index in = entry.inputs.cols();
  const Eigen::Index out = entry.preact_grads.cols();
  Matrix rows(m, out * in);
  for (Eigen::Index o = 0; o < out; ++o) {
    rows.middleCols(o * in, in) = entry.inputs.array().colwise() * entry.preact_grads.col(o).array();
  }
  return rows;
}

Matrix jacobian_vector_product(const NetworkParams& params, const Matrix& inputs,
                               const Vector& v) {
  check_input(params, inputs.cols());
  if (v.size() < params.param_count()) {
    throw NetError("jacobian_vector_product: direction shorter than parameter count");
  }
  const ParamLayout layout = layout_of(params);
  Matrix a = inputs;
  Matrix da = Matrix::Zero(inputs.rows(), inputs.cols());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const auto& b = layout.blocks[l];
    Eigen::Map<const RowMajorMatrix> dwb(v.data() + b.offset, b.rows, b.cols);
    const auto dw = dwb.leftCols(b.cols - 1);
    const auto db = dwb.col(b.cols - 1);
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    Matrix dz = a * dw.transpose() + da * layer.weight.transpose();
    dz.rowwise() += db.transpose();
    if (l + 1 < params.layers.size()) {
      a = z.array().tanh().matrix();
      da = (dz.array() * (1.0 - a.array().square())).matrix();
    } else {
      a = std::move(z);
      da = std::move(dz);
    }
  }
  return da;
}

Vector gauss_newton_product(const NetworkParams& params, const Matrix& inputs,
                            const Vector& v, const Vector& output_precision) {
  if (output_precision.size() != params.out_dim()) {
    throw NetError("gauss_newton_product: precision size mismatch");
  }
  Matrix jv = jacobian_vector_product(params, inputs, v);
  jv.array().rowwise() *= output_precision.transpose().array();
  ForwardResult fr = forward(params, inputs);
  return backward(params, fr.cache, jv).values;
}

Vector flatten(const NetworkParams& params) {
  FlatGradient flat{Vector(params.param_count()), layout_of(params)};
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    auto blk = flat.block(l);
    blk.leftCols(layer.in_dim()) = layer.weight;
    blk.col(layer.in_dim()) = layer.bias;
  }
  return flat.values;
}

NetworkParams unflatten(const NetworkParams& shape_like, const Vector& flat) {
  if (flat.size() < shape_like.param_count()) {
    throw NetError("unflatten: vector shorter than parameter count");
  }
  const ParamLayout layout = layout_of(shape_like);
  NetworkParams out = shape_like;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    const auto& b = layout.blocks[l];
    Eigen::Map<const RowMajorMatrix> blk(flat.data() + b.offset, b.rows, b.cols);
    out.layers[l].weight = blk.leftCols(b.cols - 1);
    out.layers[l].bias = blk.col(b.cols - 1);
  }
  return out;
}

namespace {

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename Seq>
void write_values(std::ostream& os, const Seq& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (i) os << ' ';
    os << format_double(values(i));
  }
  os << '\n';
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    out.push_back(std::stod(tok, &used));
    if (used != tok.size()) throw NetError("snapshot: bad number '" + tok + "'");
  }
  return out;
}

}  // namespace

void write_snapshot(std::ostream& os, const NetworkParams& params, const Vector* tail) {
  os << "format = npg-snapshot-v1\n";
  os << "layers = " << params.layers.size() << '\n';
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    os << "layer." << l << ".shape = " << layer.out_dim() << ' ' << layer.in_dim() << '\n';
    os << "layer." << l << ".weight = ";
    const RowMajorMatrix w = layer.weight;
    write_values(os, Eigen::Map<const Vector>(w.data(), w.size()));
    os << "layer." << l << ".bias = ";
    write_values(os, layer.bias);
  }
  if (tail != nullptr) {
    os << "tail = ";
    write_values(os, *tail);
  }
}

Snapshot read_snapshot(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw NetError("snapshot: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw NetError("snapshot: missing key '" + key + "'");
    return it->second;
  };
  if (need("format") != "npg-snapshot-v1") throw NetError("snapshot: unknown format");
  const int n_layers = std::stoi(need("layers"));
  Snapshot snap;
  for (int l = 0; l < n_layers; ++l) {
    const std::string prefix = "layer." + std::to_string(l) + ".";
    const auto shape = parse_values(need(prefix + "shape"));
    if (shape.size() != 2) throw NetError("snapshot: bad shape for layer " + std::to_string(l));
    const auto rows = static_cast<Eigen::Index>(shape[0]);
    const auto cols = static_cast<Eigen::Index>(shape[1]);
    const auto w = parse_values(need(prefix + "weight"));
    const auto b = parse_values(need(prefix + "bias"));
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows) {
      throw NetError("snapshot: value count mismatch for layer " + std::to_string(l));
    }
    LayerParams lp;
    lp.weight = Eigen::Map<const RowMajorMatrix>(w.data(), rows, cols);
    lp.bias = Eigen::Map<const Vector>(b.data(), rows);
    snap.params.layers.push_back(std::move(lp));
  }
  if (auto it = kv.find("tail"); it != kv.end()) {
    const auto t = parse_values(it->second);
    snap.tail = Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
  }
  return snap;
}

}  // namespace npg
