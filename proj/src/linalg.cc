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

#include "fedpriv/linalg.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedpriv/errors.h"

namespace fedpriv {
namespace {

constexpr int kMaxSweeps = 100;
constexpr double kSymmetryTolerance = 1e-9;

double off_diagonal_squared(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) acc += a(i, j) * a(i, j);
  }
  return 2.0 * acc;
}

// Applies the rotation that annihilates a(p, q); keeps `a` exactly symmetric.
void rotate(Matrix& a, Matrix& v, std::size_t p, std::size_t q) {
  const double apq = a(p, q);
  const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
  const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;
  const std::size_t n = a.rows();

  for (std::size_t k = 0; k < n; ++k) {
    if (k == p || k == q) continue;
    const double akp = a(k, p);
    const double akq = a(k, q);
    const double new_kp = c * akp - s * akq;
    const double new_kq = s * akp + c * akq;
    a(k, p) = new_kp;
    a(p, k) = new_kp;
    a(k, q) = new_kq;
    a(q, k) = new_kq;
  }
  a(p, p) -= t * apq;
  a(q, q) += t * apq;
  a(p, q) = 0.0;
  a(q, p) = 0.0;

  for (std::size_t k = 0; k < n; ++k) {
    const double vkp = v(k, p);
    const double vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

}  // namespace

Matrix SymEigen::reconstruct() const {
  return reconstruct([](double x) { return x; });
}

SymEigen sym_eigen(const Matrix& m) {
  if (!m.is_square()) {
    throw ShapeError("sym_eigen: matrix is " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected square");
  }
  const double scale = std::max(1.0, m.max_abs());
  if (m.asymmetry() > kSymmetryTolerance * scale) {
    throw ShapeError("sym_eigen: matrix is not symmetric");
  }
  const std::size_t n = m.rows();
  Matrix a = m;
  // Symmetrise exactly so the rotations below see a symmetric operand.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = avg;
      a(j, i) = avg;
    }
  }
  Matrix v = Matrix::identity(n);

  const double total = std::max(a.squared_norm(), 1e-300);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_squared(a) <= 1e-32 * total) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Skip entries already negligible relative to both diagonal terms.
        const double g = 1e-18 * (std::abs(a(p, p)) + std::abs(a(q, q)));
        if (std::abs(apq) < g) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        rotate(a, v, p, q);
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  SymEigen out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

Matrix inv_fourth_root(const Matrix& m, double ridge) {
  if (!(ridge >= 0.0)) throw DomainError("inv_fourth_root: ridge must be >= 0");
  Matrix shifted = m;
  if (shifted.is_square()) {
    for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, i) += ridge;
  }
  SymEigen eig = sym_eigen(shifted);
  for (double lambda : eig.eigenvalues) {
    if (lambda < -1e-9) {
      throw NotPSDError("inv_fourth_root: eigenvalue " + std::to_string(lambda) +
                        " is negative");
    }
    if (lambda <= 0.0) {
      throw NotPSDError("inv_fourth_root: matrix is singular; use a positive ridge");
    }
  }
  return eig.reconstruct([](double lambda) { return std::pow(lambda, -0.25); });
}

}  // namespace fedpriv
