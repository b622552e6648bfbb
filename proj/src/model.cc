// Copyright 2026 The fedpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedpriv/model.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <iterator>
#include <ostream>

#include "byte_io.h"
#include "fedpriv/errors.h"

namespace fedpriv {
namespace {

constexpr char kCheckpointMagic[] = "FPCK";
constexpr std::uint32_t kCheckpointVersion = 1;

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_same_shapes(const Params& a, const Params& b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": tensor count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols()) {
      throw ShapeError(std::string(what) + ": " + shape_str(a[i]) + " vs " + shape_str(b[i]));
    }
  }
}

Matrix batch_inputs(std::span<const Record* const> batch, std::size_t dim) {
  Matrix x(batch.size(), dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& f = batch[i]->features;
    if (f.size() != dim) {
      throw ShapeError("record has " + std::to_string(f.size()) + " features, model expects " +
                       std::to_string(dim));
    }
    std::copy(f.begin(), f.end(), x.row(i).begin());
  }
  return x;
}

std::vector<const Record*> pointers(std::span<const Record> records) {
  std::vector<const Record*> out;
  out.reserve(records.size());
  for (const Record& r : records) out.push_back(&r);
  return out;
}

// Mean cross-entropy of row-wise logits; optionally writes
// (softmax - onehot) / n into `delta`.
double cross_entropy(const Matrix& logits, std::span<const Record* const> batch, Matrix* delta) {
  const double n = static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto row = logits.row(i);
    const auto label = static_cast<std::size_t>(batch[i]->answer_id);
    if (label >= row.size()) throw ShapeError("answer_id outside the model's classes");
    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - peak);
    const double log_z = peak + std::log(z);
    total += log_z - row[label];
    if (delta != nullptr) {
      auto d = delta->row(i);
      for (std::size_t c = 0; c < row.size(); ++c) d[c] = std::exp(row[c] - log_z) / n;
      d[label] -= 1.0 / n;
    }
  }
  return total / n;
}

}  // namespace

double params_norm(const Params& p) {
  double s = 0.0;
  for (const Matrix& m : p) s += m.squared_norm();
  return std::sqrt(s);
}

std::size_t params_count(const Params& p) {
  std::size_t n = 0;
  for (const Matrix& m : p) n += m.size();
  return n;
}

Params zeros_like(const Params& p) {
  Params out;
  out.reserve(p.size());
  for (const Matrix& m : p) out.emplace_back(m.rows(), m.cols());
  return out;
}

void params_add_scaled(Params& dst, const Params& src, double s) {
  check_same_shapes(dst, src, "params_add_scaled");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].add_scaled(src[i], s);
}

Params params_sub(const Params& a, const Params& b) {
  Params out = a;
  params_add_scaled(out, b, -1.0);
  return out;
}

std::vector<double> flatten(const Params& p) {
  std::vector<double> out;
  out.reserve(params_count(p));
  for (const Matrix& m : p) out.insert(out.end(), m.data().begin(), m.data().end());
  return out;
}

void unflatten(std::span<const double> values, Params& shape) {
  if (values.size() != params_count(shape)) {
    throw ShapeError("unflatten: " + std::to_string(values.size()) + " values for " +
                     std::to_string(params_count(shape)) + " entries");
  }
  std::size_t pos = 0;
  for (Matrix& m : shape) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), m.size(), m.data().begin());
    pos += m.size();
  }
}

LayeredModel::LayeredModel(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("model needs at least one layer");
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].weight.cols() != layers_[i - 1].weight.rows()) {
      throw ShapeError("layer " + layers_[i].name + " (" + shape_str(layers_[i].weight) +
                       ") does not chain after " + layers_[i - 1].name + " (" +
                       shape_str(layers_[i - 1].weight) + ")");
    }
  }
}

LayeredModel LayeredModel::mlp(std::span<const int> widths, RngStream rng, double gain) {
  if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] < 1 || widths[i + 1] < 1) throw ConfigError("mlp widths must be >= 1");
    Layer layer;
    layer.name = "fc" + std::to_string(i);
    layer.weight = Matrix(widths[i + 1], widths[i]);
    const double std = gain / std::sqrt(static_cast<double>(widths[i]));
    for (double& w : layer.weight.data()) w = std * rng.normal();
    layers.push_back(std::move(layer));
  }
  return LayeredModel(std::move(layers));
}

const Layer& LayeredModel::layer(std::string_view name) const {
  for (const Layer& l : layers_) {
    if (l.name == name) return l;
  }
  throw ConfigError("unknown layer '" + std::string(name) + "'");
}

Layer& LayeredModel::layer(std::string_view name) {
  return const_cast<Layer&>(std::as_const(*this).layer(name));
}

std::size_t LayeredModel::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().weight.cols();
}

std::size_t LayeredModel::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().weight.rows();
}

Matrix LayeredModel::effective_weight(std::size_t index) const {
  const Layer& l = layers_.at(index);
  if (!l.lora) return l.weight;
  Matrix w = l.weight;
  w.add_scaled(matmul(l.lora->a, l.lora->b), l.lora->scaling);
  return w;
}

Matrix LayeredModel::forward(const Matrix& inputs) const {
  Matrix h = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = matmul_nt(h, effective_weight(i));
    if (i + 1 < layers_.size()) {
      for (double& v : h.data()) v = std::tanh(v);
    }
  }
  return h;
}

std::vector<double> LayeredModel::logits(std::span<const double> features) const {
  const Matrix out = forward(Matrix(1, features.size(), {features.begin(), features.end()}));
  return {out.data().begin(), out.data().end()};
}

int LayeredModel::predict(std::span<const double> features) const {
  const auto z = logits(features);
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

double LayeredModel::loss(std::span<const Record* const> records) const {
  if (records.empty()) return 0.0;
  return cross_entropy(forward(batch_inputs(records, input_dim())), records, nullptr);
}

double LayeredModel::loss(std::span<const Record> records) const {
  const auto ptrs = pointers(records);
  return loss(std::span<const Record* const>(ptrs));
}

Gradient LayeredModel::gradient(std::span<const Record> batch) const {
  const auto ptrs = pointers(batch);
  return gradient(std::span<const Record* const>(ptrs));
}

Gradient LayeredModel::gradient(std::span<const Record* const> batch) const {
  if (batch.empty()) throw ShapeError("gradient of an empty batch");
  const std::size_t n_layers = layers_.size();
  std::vector<Matrix> weights(n_layers);
  std::vector<Matrix> inputs(n_layers);  // input to layer i (post-tanh)
  Matrix h = batch_inputs(batch, input_dim());
  for (std::size_t i = 0; i < n_layers; ++i) {
    weights[i] = effective_weight(i);
    inputs[i] = h;
    h = matmul_nt(h, weights[i]);
    if (i + 1 < n_layers) {
      for (double& v : h.data()) v = std::tanh(v);
    }
  }
  Matrix delta(h.rows(), h.cols());
  Gradient out;
  out.loss = cross_entropy(h, batch, &delta);

  std::vector<Params> per_layer(n_layers);
  for (std::size_t i = n_layers; i-- > 0;) {
    const Layer& l = layers_[i];
    if (l.lora || !l.frozen) {
      const Matrix g = matmul_tn(delta, inputs[i]);  // d_out x d_in
      if (l.lora) {
        per_layer[i].push_back(l.lora->scaling * matmul_nt(g, l.lora->b));
        per_layer[i].push_back(l.lora->scaling * matmul_tn(l.lora->a, g));
      } else {
        per_layer[i].push_back(g);
      }
    }
    if (i > 0) {
      Matrix back = matmul(delta, weights[i]);
      const auto act = inputs[i].data();
      auto b = back.data();
      for (std::size_t k = 0; k < b.size(); ++k) b[k] *= 1.0 - act[k] * act[k];
      delta = std::move(back);
    }
  }
  for (auto& tensors : per_layer) {
    for (auto& t : tensors) out.grads.push_back(std::move(t));
  }
  return out;
}

Params LayeredModel::trainable_params() const {
  Params out;
  for (const Layer& l : layers_) {
    if (l.lora) {
      out.push_back(l.lora->a);
      out.push_back(l.lora->b);
    } else if (!l.frozen) {
      out.push_back(l.weight);
    }
  }
  return out;
}

void LayeredModel::set_trainable_params(const Params& p) {
  check_same_shapes(trainable_params(), p, "set_trainable_params");
  std::size_t k = 0;
  for (Layer& l : layers_) {
    if (l.lora) {
      l.lora->a = p[k++];
      l.lora->b = p[k++];
    } else if (!l.frozen) {
      l.weight = p[k++];
    }
  }
}

std::vector<std::string> LayeredModel::trainable_names() const {
  std::vector<std::string> out;
  for (const Layer& l : layers_) {
    if (l.lora) {
      out.push_back(l.name + ".lora_a");
      out.push_back(l.name + ".lora_b");
    } else if (!l.frozen) {
      out.push_back(l.name + ".weight");
    }
  }
  return out;
}

std::size_t LayeredModel::trainable_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) {
    if (l.lora) {
      n += l.lora->a.size() + l.lora->b.size();
    } else if (!l.frozen) {
      n += l.weight.size();
    }
  }
  return n;
}

std::size_t LayeredModel::base_parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size();
  return n;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double peak = *std::max_element(out.begin(), out.end());
  double z = 0.0;
  for (double& v : out) z += (v = std::exp(v - peak));
  for (double& v : out) v /= z;
  return out;
}

Gradient per_group_gradient(const LayeredModel& model, const ProviderGroup& group) {
  return model.gradient(std::span<const Record>(group.records));
}

std::size_t lora_attach(LayeredModel& model, const std::function<bool(const std::string&)>& targets,
                        int rank, RngStream rng, std::optional<double> scaling) {
  if (rank < 1) throw ConfigError("lora rank must be >= 1");
  bool matched = false;
  for (Layer& l : model.layers()) {
    if (!targets(l.name)) continue;
    if (l.lora) throw ConfigError("layer '" + l.name + "' already has an adapter");
    matched = true;
    LoraAdapter adapter;
    adapter.rank = rank;
    adapter.a = Matrix(l.weight.rows(), rank);
    adapter.b = Matrix(rank, l.weight.cols());
    const double std = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    RngStream layer_rng = rng.derive(StreamTag::kLora, fnv1a64(l.name));
    for (double& v : adapter.b.data()) v = std * layer_rng.normal();
    adapter.scaling = scaling.value_or(1.0 / rank);
    adapter.base_was_frozen = l.frozen;
    l.frozen = true;
    l.lora = std::move(adapter);
  }
  if (!matched) throw ConfigError("lora: no layer matches the target set");
  return model.trainable_count();
}

std::size_t lora_attach(LayeredModel& model, std::span<const std::string> names, int rank,
                        RngStream rng, std::optional<double> scaling) {
  for (const std::string& n : names) model.layer(n);  // throws on unknown names
  return lora_attach(
      model,
      [&](const std::string& name) { return std::find(names.begin(), names.end(), name) != names.end(); },
      rank, rng, scaling);
}

LayeredModel lora_merge(const LayeredModel& model) {
  LayeredModel out = model;
  for (std::size_t i = 0; i < out.layers().size(); ++i) {
    Layer& l = out.layers()[i];
    if (!l.lora) continue;
    l.weight = model.effective_weight(i);
    l.frozen = l.lora->base_was_frozen;
    l.lora.reset();
  }
  return out;
}

std::size_t lora_trainable_count(std::span<const LayerShape> shapes,
                                 const std::function<bool(const std::string&)>& targets, int rank) {
  if (rank < 1) throw ConfigError("lora rank must be >= 1");
  std::size_t n = 0;
  for (const LayerShape& s : shapes) {
    if (targets(s.name)) {
      n += static_cast<std::size_t>(rank) * (s.rows + s.cols);
    } else if (!s.frozen) {
      n += s.rows * s.cols;
    }
  }
  return n;
}

void save_checkpoint(const LayeredModel& model, std::ostream& out) {
  internal::ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 4));
  w.put_uint<std::uint32_t>(kCheckpointVersion);
  w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(model.layers().size()));
  for (const Layer& l : model.layers()) {
    w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(l.name.size()));
    w.put_bytes(l.name);
    w.put_u8(l.frozen ? 1 : 0);
    w.put_u8(l.lora ? 1 : 0);
    w.put_uint<std::uint64_t>(l.weight.rows());
    w.put_uint<std::uint64_t>(l.weight.cols());
    for (double v : l.weight.data()) w.put_f64(v);
    if (l.lora) {
      w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(l.lora->rank));
      w.put_f64(l.lora->scaling);
      w.put_u8(l.lora->base_was_frozen ? 1 : 0);
      for (double v : l.lora->a.data()) w.put_f64(v);
      for (double v : l.lora->b.data()) w.put_f64(v);
    }
  }
  out.write(reinterpret_cast<const char*>(w.bytes().data()),
            static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error("checkpoint write failed");
}

LayeredModel load_checkpoint(std::istream& in) {
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  internal::ByteReader<DecodeError> r(bytes.data(), bytes.size());
  if (r.get_bytes(4) != std::string_view(kCheckpointMagic, 4)) {
    throw DecodeError("not a fedpriv checkpoint");
  }
  if (const auto v = r.get_uint<std::uint32_t>(); v != kCheckpointVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(v));
  }
  const auto n_layers = r.get_uint<std::uint32_t>();
  auto read_matrix = [&](std::uint64_t rows, std::uint64_t cols) {
    if (cols != 0 && rows > r.remaining() / 8 / cols) throw DecodeError("checkpoint tensor too large");
    Matrix m(rows, cols);
    for (double& v : m.data()) v = r.get_f64();
    return m;
  };
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    Layer l;
    l.name = r.get_bytes(r.get_uint<std::uint32_t>());
    l.frozen = r.get_u8() != 0;
    const bool has_lora = r.get_u8() != 0;
    const auto rows = r.get_uint<std::uint64_t>();
    const auto cols = r.get_uint<std::uint64_t>();
    l.weight = read_matrix(rows, cols);
    if (has_lora) {
      LoraAdapter a;
      a.rank = static_cast<int>(r.get_uint<std::uint32_t>());
      a.scaling = r.get_f64();
      a.base_was_frozen = r.get_u8() != 0;
      a.a = read_matrix(rows, a.rank);
      a.b = read_matrix(a.rank, cols);
      l.lora = std::move(a);
    }
    layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) throw DecodeError("trailing bytes after checkpoint");
  return LayeredModel(std::move(layers));
}

}  // namespace fedpriv
