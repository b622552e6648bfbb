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

// Special functions used by the Renyi accountant. Everything here is pure
// and reentrant (lgamma_r is used instead of lgamma, which writes signgam).

#ifndef FEDPRIV_SPECIAL_H_
#define FEDPRIV_SPECIAL_H_

#include <limits>
#include <span>

namespace fedpriv {

// A real number stored as sign * exp(log_magnitude). Zero is {0, -inf}.
struct SignedLog {
  int sign = 0;
  double log_magnitude = -std::numeric_limits<double>::infinity();

  static SignedLog zero() { return {}; }
  static SignedLog from_log(double log_magnitude, int sign = 1) {
    return {sign, log_magnitude};
  }
  double value() const;
};

// log |C(n, k)| for real n >= 0 and integer k >= 0, where
// C(n, k) = Gamma(n + 1) / (Gamma(k + 1) Gamma(n - k + 1)). Throws DomainError
// when n - k + 1 hits a pole of Gamma (integer n with k > n, where the
// coefficient is exactly zero) or when n < 0 or k < 0.
double log_binom(double n, int k);

// Sign of the generalised binomial coefficient C(n, k) (+1 or -1); requires
// the same domain as log_binom.
int binom_sign(double n, int k);

// Complementary error function. Delegates to the C library, which is accurate
// to a few ulp over the full range, including the far tail.
double erfc(double x);

// log(erfc(x)) without underflow for large positive x.
double log_erfc(double x);

// log |sum_i s_i exp(m_i)| with the sign of the sum. Terms are summed in a
// canonical order so the result is invariant to permutations of `terms`.
// Exact cancellation gives SignedLog::zero(). Throws DomainError when `terms`
// is empty.
SignedLog log_sum_exp(std::span<const SignedLog> terms);

// Numerically stable log(exp(a) + exp(b)).
double log_add(double a, double b);

}  // namespace fedpriv

#endif  // FEDPRIV_SPECIAL_H_
