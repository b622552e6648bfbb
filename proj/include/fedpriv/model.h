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

// Layered models: a chain of named weight matrices with tanh between layers
// and a softmax cross-entropy head, optional LoRA adapters, and the flat
// parameter views used by optimizers, clipping and the wire codec.

#ifndef FEDPRIV_MODEL_H_
#define FEDPRIV_MODEL_H_

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedpriv/fedsim.h"
#include "fedpriv/matrix.h"
#include "fedpriv/rng.h"

namespace fedpriv {

// An ordered list of tensors, aligned with LayeredModel::trainable_names().
using Params = std::vector<Matrix>;

double params_norm(const Params& p);
std::size_t params_count(const Params& p);
Params zeros_like(const Params& p);
// dst += s * src
void params_add_scaled(Params& dst, const Params& src, double s);
Params params_sub(const Params& a, const Params& b);
std::vector<double> flatten(const Params& p);
// Fills `shape` (whose tensor sizes must add up to values.size()).
void unflatten(std::span<const double> values, Params& shape);

// Effective weight is W + scaling * a * b.
struct LoraAdapter {
  int rank = 0;
  Matrix a;  // d_out x r, zero at attach time
  Matrix b;  // r x d_in
  double scaling = 1.0;
  bool base_was_frozen = false;

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

struct Layer {
  std::string name;
  Matrix weight;  // d_out x d_in
  bool frozen = false;
  std::optional<LoraAdapter> lora;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct Gradient {
  Params grads;  // aligned with trainable_params()
  double loss = 0.0;
};

class LayeredModel {
 public:
  LayeredModel() = default;
  // Throws ShapeError unless consecutive layers chain (cols == previous rows).
  explicit LayeredModel(std::vector<Layer> layers);

  // Layers "fc0", "fc1", ... mapping widths[i] -> widths[i+1], entries drawn
  // from N(0, gain^2 / fan_in).
  static LayeredModel mlp(std::span<const int> widths, RngStream rng, double gain = 1.0);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  const Layer& layer(std::string_view name) const;
  Layer& layer(std::string_view name);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  Matrix effective_weight(std::size_t index) const;

  // Logits for a batch of inputs (one per row).
  Matrix forward(const Matrix& inputs) const;
  std::vector<double> logits(std::span<const double> features) const;
  int predict(std::span<const double> features) const;
  // Mean cross-entropy.
  double loss(std::span<const Record> records) const;
  double loss(std::span<const Record* const> records) const;

  // Mean loss gradient over the batch with respect to the trainable tensors.
  Gradient gradient(std::span<const Record* const> batch) const;
  Gradient gradient(std::span<const Record> batch) const;

  // Trainable tensors: a LoRA layer contributes (a, b); any other non-frozen
  // layer contributes its weight.
  Params trainable_params() const;
  void set_trainable_params(const Params& p);
  std::vector<std::string> trainable_names() const;
  std::size_t trainable_count() const;
  // Entries of all base weights (adapters excluded).
  std::size_t base_parameter_count() const;

  friend bool operator==(const LayeredModel&, const LayeredModel&) = default;

 private:
  std::vector<Layer> layers_;
};

std::vector<double> softmax(std::span<const double> logits);

// Mean-loss gradient over the group's records.
Gradient per_group_gradient(const LayeredModel& model, const ProviderGroup& group);

// Attaches rank-r adapters to every layer whose name satisfies `targets` and
// freezes their base weights. `scaling` defaults to 1/r. Returns the new
// trainable count. Throws ConfigError when nothing matches or r < 1.
std::size_t lora_attach(LayeredModel& model, const std::function<bool(const std::string&)>& targets,
                        int rank, RngStream rng, std::optional<double> scaling = std::nullopt);
// Same, for an explicit list of names; an unknown name is a ConfigError.
std::size_t lora_attach(LayeredModel& model, std::span<const std::string> names, int rank,
                        RngStream rng, std::optional<double> scaling = std::nullopt);

// Folds every adapter into its base weight and restores the base's frozen flag.
LayeredModel lora_merge(const LayeredModel& model);

// Shape-only description of a layer, for counting without allocating.
struct LayerShape {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool frozen = false;
};

// Trainable entries after LoRA: r * (rows + cols) per target plus the full
// size of every non-target, non-frozen layer.
std::size_t lora_trainable_count(std::span<const LayerShape> shapes,
                                 const std::function<bool(const std::string&)>& targets, int rank);

// Binary checkpoint, little-endian:
//   "FPCK" u32 version(=1) u32 layer_count, then per layer
//   u32 name_len, name bytes, u8 frozen, u8 has_lora, u64 rows, u64 cols,
//   rows*cols f64 (row-major), and when has_lora:
//   u32 rank, f64 scaling, u8 base_was_frozen, rows*rank f64 (a), rank*cols f64 (b).
void save_checkpoint(const LayeredModel& model, std::ostream& out);
LayeredModel load_checkpoint(std::istream& in);

}  // namespace fedpriv

#endif  // FEDPRIV_MODEL_H_
