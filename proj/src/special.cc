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

#include "fedpriv/special.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "fedpriv/errors.h"

namespace fedpriv {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Beyond this point erfc(x) is below ~1e-270 and the asymptotic series is
// accurate to full double precision.
constexpr double kErfcAsymptoticThreshold = 25.0;

double log_abs_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

bool is_integer(double x) { return std::floor(x) == x; }

void check_binom_domain(double n, int k) {
  if (!(n >= 0.0) || k < 0) {
    throw DomainError("log_binom: requires n >= 0 and k >= 0, got n=" +
                      std::to_string(n) + " k=" + std::to_string(k));
  }
  if (is_integer(n) && static_cast<double>(k) > n) {
    throw DomainError("log_binom: Gamma pole at n - k + 1 = " +
                      std::to_string(n - k + 1.0));
  }
}

}  // namespace

double SignedLog::value() const {
  if (sign == 0) return 0.0;
  return sign * std::exp(log_magnitude);
}

double log_binom(double n, int k) {
  check_binom_domain(n, k);
  if (k == 0) return 0.0;
  return log_abs_gamma(n + 1.0) - log_abs_gamma(k + 1.0) -
         log_abs_gamma(n - k + 1.0);
}

int binom_sign(double n, int k) {
  check_binom_domain(n, k);
  // C(n, k) = prod_{j<k} (n - j) / k!; factors with j > n are negative.
  const long negatives = std::max<long>(0, k - static_cast<long>(std::floor(n)) - 1);
  return negatives % 2 == 0 ? 1 : -1;
}

double erfc(double x) { return std::erfc(x); }

double log_erfc(double x) {
  if (x < kErfcAsymptoticThreshold) return std::log(std::erfc(x));
  // erfc(x) = exp(-x^2) / (x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - ...)
  const double inv2 = 1.0 / (x * x);
  const double series =
      1.0 + inv2 * (-0.5 + inv2 * (0.75 + inv2 * (-1.875 + inv2 * 6.5625)));
  return -x * x - std::log(x) - 0.5 * std::log(std::numbers::pi) +
         std::log(series);
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

SignedLog log_sum_exp(std::span<const SignedLog> terms) {
  if (terms.empty()) throw DomainError("log_sum_exp: empty sequence");
  std::vector<SignedLog> sorted;
  sorted.reserve(terms.size());
  for (const SignedLog& t : terms) {
    if (t.sign != 0 && t.log_magnitude != kNegInf) sorted.push_back(t);
  }
  if (sorted.empty()) return SignedLog::zero();
  std::sort(sorted.begin(), sorted.end(), [](const SignedLog& a, const SignedLog& b) {
    if (a.log_magnitude != b.log_magnitude) return a.log_magnitude < b.log_magnitude;
    return a.sign < b.sign;
  });
  const double pivot = sorted.back().log_magnitude;
  if (pivot == std::numeric_limits<double>::infinity()) {
    throw DomainError("log_sum_exp: infinite term");
  }
  // Neumaier-compensated sum, smallest magnitudes first.
  double sum = 0.0;
  double compensation = 0.0;
  for (const SignedLog& t : sorted) {
    const double v = t.sign * std::exp(t.log_magnitude - pivot);
    const double next = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      compensation += (sum - next) + v;
    } else {
      compensation += (v - next) + sum;
    }
    sum = next;
  }
  sum += compensation;
  if (sum == 0.0) return SignedLog::zero();
  return {sum > 0.0 ? 1 : -1, pivot + std::log(std::abs(sum))};
}

}  // namespace fedpriv
