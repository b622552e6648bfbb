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

#include "fedpriv/optim.h"

#include <algorithm>
#include <cmath>

#include "fedpriv/errors.h"
#include "fedpriv/linalg.h"

namespace fedpriv {
namespace {

void check_lr(double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
}

}  // namespace

Matrix clip(const Matrix& update, const GradClip& how) {
  if (!(how.value > 0.0)) throw ConfigError("clip threshold must be positive");
  Matrix out = update;
  if (how.mode == GradClip::Mode::kElementwise) {
    for (double& v : out.data()) v = std::clamp(v, -how.value, how.value);
  } else {
    const double norm = out.frobenius_norm();
    if (norm > how.value) out *= how.value / norm;
  }
  return out;
}

Params clip(const Params& update, const GradClip& how) {
  if (!(how.value > 0.0)) throw ConfigError("clip threshold must be positive");
  if (how.mode == GradClip::Mode::kElementwise) {
    Params out;
    out.reserve(update.size());
    for (const Matrix& m : update) out.push_back(clip(m, how));
    return out;
  }
  Params out = update;
  const double norm = params_norm(update);
  if (norm > how.value) {
    const double s = how.value / norm;
    for (Matrix& m : out) m *= s;
  }
  return out;
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adamw") return OptimizerKind::kAdamW;
  if (name == "shampoo") return OptimizerKind::kShampoo;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd, momentum, adamw, shampoo)");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdamW: return "adamw";
    case OptimizerKind::kShampoo: return "shampoo";
  }
  return "unknown";
}

void SgdOptimizer::step(Params& w, const Params& g) { params_add_scaled(w, g, -lr_); }

std::unique_ptr<Optimizer> SgdOptimizer::clone() const {
  return std::make_unique<SgdOptimizer>(*this);
}

void MomentumOptimizer::step(Params& w, const Params& g) {
  if (velocity_.empty()) velocity_ = zeros_like(w);
  for (std::size_t i = 0; i < w.size(); ++i) {
    velocity_[i] *= beta_;
    velocity_[i] += g[i];
  }
  params_add_scaled(w, velocity_, -lr_);
}

std::unique_ptr<Optimizer> MomentumOptimizer::clone() const {
  return std::make_unique<MomentumOptimizer>(*this);
}

void AdamWOptimizer::step(Params& w, const Params& g) {
  if (m_.empty()) {
    m_ = zeros_like(w);
    v_ = zeros_like(w);
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto wd = w[i].data();
    auto gd = g[i].data();
    auto md = m_[i].data();
    auto vd = v_[i].data();
    for (std::size_t k = 0; k < wd.size(); ++k) {
      md[k] = b1 * md[k] + (1.0 - b1) * gd[k];
      vd[k] = b2 * vd[k] + (1.0 - b2) * gd[k] * gd[k];
      const double m_hat = md[k] / c1;
      const double v_hat = vd[k] / c2;
      wd[k] -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                             config_.weight_decay * wd[k]);
    }
  }
}

void AdamWOptimizer::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

std::unique_ptr<Optimizer> AdamWOptimizer::clone() const {
  return std::make_unique<AdamWOptimizer>(*this);
}

ShampooOptimizer::ShampooOptimizer(const OptimizerConfig& c) : config_(c) {
  if (c.stat_interval < 1 || c.precond_interval < 1) {
    throw ConfigError("shampoo intervals must be >= 1");
  }
  if (!(c.ridge >= 0.0)) throw ConfigError("shampoo ridge must be >= 0");
  if (!(c.clip > 0.0)) throw ConfigError("shampoo clip must be positive");
}

void ShampooOptimizer::ensure_state(const Params& w) {
  if (!state_.empty()) return;
  for (const Matrix& m : w) {
    ShampooTensorState s;
    s.l = Matrix::identity(m.rows());
    s.r = Matrix::identity(m.cols());
    s.l_inv_root = s.l;
    s.r_inv_root = s.r;
    state_.push_back(std::move(s));
  }
}

void ShampooOptimizer::refresh_preconditioners() {
  for (auto& s : state_) {
    s.l_inv_root = inv_fourth_root(s.l, config_.ridge);
    s.r_inv_root = inv_fourth_root(s.r, config_.ridge);
  }
}

void ShampooOptimizer::step(Params& w, const Params& g) {
  ensure_state(w);
  ++t_;
  if (t_ % config_.stat_interval == 0) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      state_[i].l += matmul_nt(g[i], g[i]);
      state_[i].r += matmul_tn(g[i], g[i]);
    }
  }
  if (t_ % config_.precond_interval == 0) refresh_preconditioners();
  const GradClip c = GradClip::elementwise(config_.clip);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const Matrix pre = matmul(matmul(state_[i].l_inv_root, g[i]), state_[i].r_inv_root);
    w[i].add_scaled(std::isinf(config_.clip) ? pre : clip(pre, c), -config_.lr);
  }
}

void ShampooOptimizer::reset() {
  state_.clear();
  t_ = 0;
}

std::unique_ptr<Optimizer> ShampooOptimizer::clone() const {
  return std::make_unique<ShampooOptimizer>(*this);
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config) {
  check_lr(config.lr);
  switch (config.kind) {
    case OptimizerKind::kSgd:
      return std::make_unique<SgdOptimizer>(config.lr);
    case OptimizerKind::kMomentum:
      if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
        throw ConfigError("momentum must lie in [0, 1)");
      }
      return std::make_unique<MomentumOptimizer>(config.lr, config.momentum);
    case OptimizerKind::kAdamW:
      return std::make_unique<AdamWOptimizer>(config);
    case OptimizerKind::kShampoo:
      return std::make_unique<ShampooOptimizer>(config);
  }
  throw ConfigError("unknown optimizer kind");
}

}  // namespace fedpriv
