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

// Renyi-DP accountant for the iterated sampled Gaussian mechanism (SGM).
//
// One SGM step with sampling rate q and noise multiplier sigma (noise stddev
// divided by the l2 sensitivity) is (alpha, xi(alpha | q))-RDP with
//
//   xi(alpha | q) = log(A_alpha) / (alpha - 1),
//   A_alpha = E_{z ~ N(0, sigma^2)} [((1 - q) + q * mu1(z) / mu0(z))^alpha].
//
// A_alpha has a finite binomial expansion for integer alpha and a convergent
// erfc-weighted series for fractional alpha. T steps compose to T * xi, and an
// (alpha, rho)-RDP guarantee converts to (epsilon, delta)-DP with
//
//   epsilon = rho + log((alpha - 1) / alpha) - (log delta + log alpha) / (alpha - 1),
//
// minimised over a grid of orders. The unit of privacy is whatever one
// sampling event covers; for FL-GROUP-DP that is one provider group.

#ifndef FEDPRIV_ACCOUNTANT_H_
#define FEDPRIV_ACCOUNTANT_H_

#include <cstdint>
#include <span>
#include <vector>

namespace fedpriv {

struct SgmParams {
  double q = 0.0;       // sampling probability of the protected unit per step
  double sigma = 1.0;   // noise multiplier
  std::int64_t steps = 1;

  // Throws ConfigError unless 0 <= q <= 1, sigma > 0 and steps >= 1.
  void validate() const;
};

// Sorted, strictly ascending Renyi orders, all > 1.
class AlphaGrid {
 public:
  explicit AlphaGrid(std::vector<double> orders);

  // Integers 2..256 plus 1.25, 1.5, 1.75 and the half-integers 2.5..63.5.
  static AlphaGrid standard();

  std::span<const double> orders() const { return orders_; }
  std::size_t size() const { return orders_.size(); }

 private:
  std::vector<double> orders_;
};

struct PrivacySpend {
  double epsilon = 0.0;
  double delta = 0.0;
  double best_alpha = 0.0;
};

// Terms of the fractional series whose magnitude falls below this fraction of
// the running total for three consecutive indices end the summation.
inline constexpr double kXiSeriesRelativeTolerance = 1e-12;
inline constexpr std::int64_t kXiSeriesMaxTerms = 1'000'000;

// Per-step RDP of the SGM at integer order alpha >= 2.
double xi_integer(int alpha, double q, double sigma);

// Per-step RDP at real order alpha > 1. Exact integers are accepted and give
// the same value as xi_integer up to rounding. Throws ConvergenceError when
// the series has not settled after kXiSeriesMaxTerms terms.
double xi_fractional(double alpha, double q, double sigma);

// Dispatches on whether alpha is integral.
double xi(double alpha, double q, double sigma);

// Crossover of the two mixture densities, sigma^2 log(1/q - 1) + 1/2.
double mixture_crossover(double q, double sigma);

// steps * xi(alpha) for every order in the grid.
std::vector<double> rdp_curve(const SgmParams& params, const AlphaGrid& grid);

// Minimises the RDP-to-DP conversion over the grid; `rdp` is aligned with
// grid.orders(). epsilon is clamped at 0.
PrivacySpend rdp_to_dp(std::span<const double> rdp, const AlphaGrid& grid,
                       double delta);

// Epsilon spent by params.steps compositions of SGM(q, sigma). When q == 0 the
// mechanism ignores the protected unit and epsilon is reported as exactly 0.
PrivacySpend compose_and_convert(const SgmParams& params, double delta,
                                 const AlphaGrid& grid);

struct CalibrationOptions {
  double sigma_low = 0.1;
  double sigma_high = 1000.0;
  double relative_tolerance = 1e-4;
  int max_iterations = 200;
};

// Smallest noise multiplier (up to relative_tolerance) whose epsilon does not
// exceed target_epsilon. The result sigma satisfies
//   epsilon(sigma) <= target  and  epsilon(sigma * (1 - tol)) > target,
// unless epsilon(sigma_low) <= target already, in which case sigma_low is
// returned (this covers q == 0). Throws CalibrationError when even sigma_high
// overshoots the target.
double calibrate_sigma(double target_epsilon, double delta, double q,
                       std::int64_t steps, const AlphaGrid& grid,
                       const CalibrationOptions& options = {});

// Probability that a given provider group takes part in a round:
// client_prob * providers_per_round / min_group_count, clamped to [0, 1].
double group_sampling_rate(double client_prob, std::int64_t providers_per_round,
                           std::int64_t min_group_count);

}  // namespace fedpriv

#endif  // FEDPRIV_ACCOUNTANT_H_
