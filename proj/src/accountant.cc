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

#include "fedpriv/accountant.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "fedpriv/errors.h"
#include "fedpriv/special.h"

namespace fedpriv {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// n * log(p) with the convention 0 * log(0) = 0.
double xlogy(double n, double log_p) { return n == 0.0 ? 0.0 : n * log_p; }

void check_rates(double q, double sigma) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw ConfigError("sampling rate q must lie in [0, 1], got " + std::to_string(q));
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("noise multiplier must be positive, got " + std::to_string(sigma));
  }
}

double gaussian_rdp(double alpha, double sigma) {
  return alpha / (2.0 * sigma * sigma);
}

}  // namespace

void SgmParams::validate() const {
  check_rates(q, sigma);
  if (steps < 1) {
    throw ConfigError("steps must be >= 1, got " + std::to_string(steps));
  }
}

AlphaGrid::AlphaGrid(std::vector<double> orders) : orders_(std::move(orders)) {
  if (orders_.empty()) throw ConfigError("alpha grid is empty");
  for (std::size_t i = 0; i < orders_.size(); ++i) {
    if (!(orders_[i] > 1.0) || !std::isfinite(orders_[i])) {
      throw ConfigError("alpha grid orders must be finite and > 1");
    }
    if (i > 0 && !(orders_[i] > orders_[i - 1])) {
      throw ConfigError("alpha grid must be strictly ascending");
    }
  }
}

AlphaGrid AlphaGrid::standard() {
  std::vector<double> orders = {1.25, 1.5, 1.75};
  for (int a = 2; a <= 256; ++a) orders.push_back(a);
  for (int a = 2; a <= 63; ++a) orders.push_back(a + 0.5);
  std::sort(orders.begin(), orders.end());
  return AlphaGrid(std::move(orders));
}

double mixture_crossover(double q, double sigma) {
  return sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
}

double xi_integer(int alpha, double q, double sigma) {
  check_rates(q, sigma);
  if (alpha < 2) throw DomainError("xi_integer: alpha must be >= 2");
  if (q == 0.0) return 0.0;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::vector<SignedLog> terms;
  terms.reserve(alpha + 1);
  for (int k = 0; k <= alpha; ++k) {
    const double log_term = log_binom(alpha, k) + xlogy(k, log_q) +
                            xlogy(alpha - k, log_1mq) +
                            static_cast<double>(k) * (k - 1) * inv_two_var;
    terms.push_back(SignedLog::from_log(log_term));
  }
  const SignedLog log_a = log_sum_exp(terms);
  return std::max(0.0, log_a.log_magnitude / (alpha - 1));
}

double xi_fractional(double alpha, double q, double sigma) {
  check_rates(q, sigma);
  if (!(alpha > 1.0)) throw DomainError("xi_fractional: alpha must be > 1");
  if (q == 0.0) return 0.0;
  if (q == 1.0) return gaussian_rdp(alpha, sigma);

  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  const double erfc_scale = 1.0 / (std::numbers::sqrt2 * sigma);
  const double z1 = mixture_crossover(q, sigma);
  const double log_half = -std::numbers::ln2;

  // A_alpha splits the integral at z1. Term k of the lower part pairs
  // (1-q)^(alpha-k) q^k with the Gaussian tail above z1; term k of the upper
  // part uses the mirrored index j = alpha - k.
  std::vector<SignedLog> terms;
  terms.reserve(4096);
  double log_total_magnitude = kNegInf;
  int quiet_run = 0;
  const double log_tol = std::log(kXiSeriesRelativeTolerance);
  const bool integral = std::floor(alpha) == alpha;
  for (std::int64_t k = 0;; ++k) {
    // Integral orders have a finite expansion: C(alpha, k) = 0 for k > alpha.
    if (integral && static_cast<double>(k) > alpha) break;
    if (k >= kXiSeriesMaxTerms) {
      throw ConvergenceError("xi_fractional: series did not converge for alpha=" +
                             std::to_string(alpha));
    }
    const int ki = static_cast<int>(k);
    const double kd = static_cast<double>(k);
    const double j = alpha - kd;
    const double log_coef = log_binom(alpha, ki);
    const int sign = binom_sign(alpha, ki);

    const double log_lower = log_coef + kd * log_q + j * log_1mq +
                             (kd * kd - kd) * inv_two_var + log_half +
                             log_erfc((kd - z1) * erfc_scale);
    const double log_upper = log_coef + j * log_q + kd * log_1mq +
                             (j * j - j) * inv_two_var + log_half +
                             log_erfc((z1 - j) * erfc_scale);
    terms.push_back(SignedLog::from_log(log_lower, sign));
    terms.push_back(SignedLog::from_log(log_upper, sign));

    const double log_term = log_add(log_lower, log_upper);
    log_total_magnitude = log_add(log_total_magnitude, log_term);
    if (kd > alpha + 1.0 && log_term - log_total_magnitude < log_tol) {
      if (++quiet_run >= 3) break;
    } else {
      quiet_run = 0;
    }
  }
  const SignedLog log_a = log_sum_exp(terms);
  if (log_a.sign <= 0) {
    throw NumericalError("xi_fractional: series summed to a non-positive value");
  }
  return std::max(0.0, log_a.log_magnitude / (alpha - 1.0));
}

double xi(double alpha, double q, double sigma) {
  if (alpha >= 2.0 && std::floor(alpha) == alpha && alpha < 1e6) {
    return xi_integer(static_cast<int>(alpha), q, sigma);
  }
  return xi_fractional(alpha, q, sigma);
}

std::vector<double> rdp_curve(const SgmParams& params, const AlphaGrid& grid) {
  params.validate();
  std::vector<double> curve;
  curve.reserve(grid.size());
  for (double alpha : grid.orders()) {
    curve.push_back(static_cast<double>(params.steps) * xi(alpha, params.q, params.sigma));
  }
  return curve;
}

PrivacySpend rdp_to_dp(std::span<const double> rdp, const AlphaGrid& grid,
                       double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("delta must lie in (0, 1), got " + std::to_string(delta));
  }
  if (rdp.size() != grid.size()) {
    throw ConfigError("rdp curve does not match the alpha grid");
  }
  const double log_delta = std::log(delta);
  PrivacySpend best{std::numeric_limits<double>::infinity(), delta, grid.orders()[0]};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double alpha = grid.orders()[i];
    const double eps = rdp[i] + std::log((alpha - 1.0) / alpha) -
                       (log_delta + std::log(alpha)) / (alpha - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.best_alpha = alpha;
    }
  }
  best.epsilon = std::max(0.0, best.epsilon);
  return best;
}

PrivacySpend compose_and_convert(const SgmParams& params, double delta,
                                 const AlphaGrid& grid) {
  params.validate();
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ConfigError("delta must lie in (0, 1), got " + std::to_string(delta));
  }
  if (params.q == 0.0) return PrivacySpend{0.0, delta, grid.orders()[0]};
  return rdp_to_dp(rdp_curve(params, grid), grid, delta);
}

double calibrate_sigma(double target_epsilon, double delta, double q,
                       std::int64_t steps, const AlphaGrid& grid,
                       const CalibrationOptions& options) {
  if (!(target_epsilon > 0.0) || !std::isfinite(target_epsilon)) {
    throw ConfigError("target epsilon must be positive");
  }
  auto epsilon_at = [&](double sigma) {
    return compose_and_convert(SgmParams{q, sigma, steps}, delta, grid).epsilon;
  };
  double lo = options.sigma_low;
  double hi = options.sigma_high;
  if (epsilon_at(lo) <= target_epsilon) return lo;
  if (epsilon_at(hi) > target_epsilon) {
    throw CalibrationError("target epsilon " + std::to_string(target_epsilon) +
                           " is not reachable with sigma <= " + std::to_string(hi));
  }
  // Invariant: epsilon(lo) > target >= epsilon(hi).
  for (int it = 0; it < options.max_iterations; ++it) {
    if (hi - lo <= options.relative_tolerance * hi) break;
    const double mid = 0.5 * (lo + hi);
    if (epsilon_at(mid) > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

double group_sampling_rate(double client_prob, std::int64_t providers_per_round,
                           std::int64_t min_group_count) {
  if (min_group_count <= 0) {
    throw ConfigError("min_group_count must be >= 1");
  }
  if (!(client_prob >= 0.0 && client_prob <= 1.0)) {
    throw ConfigError("client sampling probability must lie in [0, 1]");
  }
  if (providers_per_round < 0) {
    throw ConfigError("providers_per_round must be >= 0");
  }
  const double q = client_prob * static_cast<double>(providers_per_round) /
                   static_cast<double>(min_group_count);
  return std::clamp(q, 0.0, 1.0);
}

}  // namespace fedpriv
