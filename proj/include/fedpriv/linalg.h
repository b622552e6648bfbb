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

#ifndef FEDPRIV_LINALG_H_
#define FEDPRIV_LINALG_H_

#include <vector>

#include "fedpriv/matrix.h"

namespace fedpriv {

// Eigen-decomposition of a symmetric matrix. Eigenvalues are ascending and
// column j of `eigenvectors` belongs to eigenvalues[j].
struct SymEigen {
  std::vector<double> eigenvalues;
  Matrix eigenvectors;

  // Q * diag(f(lambda)) * Q^T.
  template <typename F>
  Matrix reconstruct(F&& f) const;
  Matrix reconstruct() const;
};

// Cyclic Jacobi rotations. Input must be square and symmetric within 1e-9
// (relative to its largest entry); otherwise throws ShapeError.
SymEigen sym_eigen(const Matrix& m);

// (m + ridge * I)^(-1/4) for symmetric positive semi-definite m. Throws
// NotPSDError when an eigenvalue of m + ridge * I is not positive.
Matrix inv_fourth_root(const Matrix& m, double ridge);

template <typename F>
Matrix SymEigen::reconstruct(F&& f) const {
  const std::size_t n = eigenvalues.size();
  std::vector<double> mapped(n);
  for (std::size_t k = 0; k < n; ++k) mapped[k] = f(eigenvalues[k]);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        acc += eigenvectors(i, k) * mapped[k] * eigenvectors(j, k);
      }
      out(i, j) = acc;
      out(j, i) = acc;
    }
  }
  return out;
}

}  // namespace fedpriv

#endif  // FEDPRIV_LINALG_H_
