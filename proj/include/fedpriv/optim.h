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

#ifndef FEDPRIV_OPTIM_H_
#define FEDPRIV_OPTIM_H_

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fedpriv/matrix.h"
#include "fedpriv/model.h"

namespace fedpriv {

struct GradClip {
  enum class Mode { kL2, kElementwise };
  Mode mode = Mode::kL2;
  double value = std::numeric_limits<double>::infinity();

  static GradClip l2(double s) { return {Mode::kL2, s}; }
  static GradClip elementwise(double c) { return {Mode::kElementwise, c}; }
};

// L2 mode treats all tensors as one vector: x / max(1, |x| / S).
// Element-wise mode clamps every entry to [-C, C].
Params clip(const Params& update, const GradClip& how);
Matrix clip(const Matrix& update, const GradClip& how);

enum class OptimizerKind { kSgd, kMomentum, kAdamW, kShampoo };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 0.1;
  // Momentum: v = beta * v + g; w -= lr * v.
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // Shampoo.
  double clip = std::numeric_limits<double>::infinity();
  int stat_interval = 10;
  int precond_interval = 100;
  double ridge = 1e-4;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Updates `w` in place from gradient `g` (same tensor layout).
  virtual void step(Params& w, const Params& g) = 0;
  // Clears accumulated state (moments, statistics, iteration count).
  virtual void reset() = 0;
  virtual std::unique_ptr<Optimizer> clone() const = 0;
};

class SgdOptimizer final : public Optimizer {
 public:
  explicit SgdOptimizer(double lr) : lr_(lr) {}
  void step(Params& w, const Params& g) override;
  void reset() override {}
  std::unique_ptr<Optimizer> clone() const override;

 private:
  double lr_;
};

class MomentumOptimizer final : public Optimizer {
 public:
  MomentumOptimizer(double lr, double beta) : lr_(lr), beta_(beta) {}
  void step(Params& w, const Params& g) override;
  void reset() override { velocity_.clear(); }
  std::unique_ptr<Optimizer> clone() const override;

 private:
  double lr_;
  double beta_;
  Params velocity_;
};

// Bias-corrected Adam with decoupled weight decay:
//   w -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * w).
class AdamWOptimizer final : public Optimizer {
 public:
  explicit AdamWOptimizer(const OptimizerConfig& c) : config_(c) {}
  void step(Params& w, const Params& g) override;
  void reset() override;
  std::unique_ptr<Optimizer> clone() const override;

 private:
  OptimizerConfig config_;
  Params m_;
  Params v_;
  long t_ = 0;
};

struct ShampooTensorState {
  Matrix l;            // d_out x d_out statistics, starts at I
  Matrix r;            // d_in x d_in statistics, starts at I
  Matrix l_inv_root;   // cached (l + ridge I)^(-1/4)
  Matrix r_inv_root;
};

// Per-tensor Shampoo with element-wise clipping of the preconditioned
// gradient. At step t (1-based): statistics absorb G G^T and G^T G when
// t % stat_interval == 0, the cached inverse roots are recomputed when
// t % precond_interval == 0, then W -= lr * clip(L~ G R~, C). The cache
// starts at the identity.
class ShampooOptimizer final : public Optimizer {
 public:
  explicit ShampooOptimizer(const OptimizerConfig& c);
  void step(Params& w, const Params& g) override;
  void reset() override;
  std::unique_ptr<Optimizer> clone() const override;

  long iteration() const { return t_; }
  std::vector<ShampooTensorState>& state() { return state_; }
  const std::vector<ShampooTensorState>& state() const { return state_; }
  // Recomputes every cached inverse root from the current statistics.
  void refresh_preconditioners();

 private:
  void ensure_state(const Params& w);

  OptimizerConfig config_;
  std::vector<ShampooTensorState> state_;
  long t_ = 0;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config);

}  // namespace fedpriv

#endif  // FEDPRIV_OPTIM_H_
