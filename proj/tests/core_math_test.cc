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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "fedpriv/errors.h"
#include "fedpriv/linalg.h"
#include "fedpriv/matrix.h"
#include "fedpriv/special.h"
#include "gtest/gtest.h"
#include "oracles.h"

namespace fedpriv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(gen);
  return m;
}

double relative_frobenius(const Matrix& a, const Matrix& b) {
  return (a - b).frobenius_norm() / std::max(1e-300, b.frobenius_norm());
}

Matrix fourth_power(const Matrix& m) {
  const Matrix sq = matmul(m, m);
  return matmul(sq, sq);
}

TEST(MatrixTest, MatmulVariantsAgree) {
  std::mt19937_64 gen(7);
  const Matrix a = random_matrix(4, 3, gen);
  const Matrix b = random_matrix(4, 5, gen);
  const Matrix c = random_matrix(5, 3, gen);
  EXPECT_LT(relative_frobenius(matmul_tn(a, b), matmul(a.transpose(), b)), 1e-15);
  EXPECT_LT(relative_frobenius(matmul_nt(b, c.transpose()), matmul(b, c)), 1e-15);
  EXPECT_THROW(matmul(a, a), ShapeError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>(3)), ShapeError);
}

TEST(SymEigenTest, IdentityHasUnitEigenvalues) {
  const SymEigen eig = sym_eigen(Matrix::identity(3));
  EXPECT_EQ(eig.eigenvalues, (std::vector<double>{1.0, 1.0, 1.0}));
  // Columns are a permutation of the identity columns.
  for (std::size_t j = 0; j < 3; ++j) {
    int ones = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double v = std::abs(eig.eigenvectors(i, j));
      EXPECT_TRUE(v == 0.0 || v == 1.0);
      ones += v == 1.0;
    }
    EXPECT_EQ(ones, 1);
  }
}

TEST(SymEigenTest, DiagonalEigenvaluesAscending) {
  const std::vector<double> diag = {9.0, 4.0};
  const SymEigen eig = sym_eigen(Matrix::diagonal(diag));
  ASSERT_EQ(eig.eigenvalues.size(), 2u);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[0], 4.0);
  EXPECT_DOUBLE_EQ(eig.eigenvalues[1], 9.0);
}

TEST(SymEigenTest, RejectsNonSquareAndAsymmetric) {
  EXPECT_THROW(sym_eigen(Matrix(2, 3)), ShapeError);
  Matrix m = Matrix::identity(2);
  m(0, 1) = 1e-3;
  EXPECT_THROW(sym_eigen(m), ShapeError);
}

TEST(SymEigenTest, ReconstructsKnownSpectrum) {
  // M = Q diag(lambda) Q^T with Q from a QR factorisation of a random matrix.
  std::mt19937_64 gen(11);
  const Matrix q = testing::orthonormal_basis(random_matrix(8, 8, gen));
  std::vector<double> lambda = {-3.0, -0.5, 0.0, 0.25, 1.0, 2.0, 7.5, 40.0};
  const Matrix m = matmul(matmul(q, Matrix::diagonal(lambda)), q.transpose());
  Matrix sym = m;
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < i; ++j) sym(i, j) = sym(j, i);
  }
  const SymEigen eig = sym_eigen(sym);
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    EXPECT_NEAR(eig.eigenvalues[k], lambda[k], 1e-12 * 40.0);
  }
  EXPECT_LT(relative_frobenius(eig.reconstruct(), sym), 1e-10);
  const Matrix qtq = matmul_tn(eig.eigenvectors, eig.eigenvectors);
  EXPECT_LT((qtq - Matrix::identity(8)).frobenius_norm(), 1e-10);
}

TEST(SymEigenTest, PropertyTraceAndReconstructionOnRandomMatrices) {
  std::mt19937_64 gen(12345);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + trial % 24;
    const Matrix g = random_matrix(n, n, gen);
    const Matrix m = g + g.transpose();
    const SymEigen eig = sym_eigen(m);
    double sum = 0.0;
    for (double l : eig.eigenvalues) sum += l;
    EXPECT_NEAR(sum, m.trace(), 1e-10 * std::max(1.0, std::abs(m.trace())) +
                                    1e-12 * m.frobenius_norm());
    EXPECT_LT(relative_frobenius(eig.reconstruct(), m), 1e-10);
    EXPECT_TRUE(std::is_sorted(eig.eigenvalues.begin(), eig.eigenvalues.end()));
  }
}

TEST(InvFourthRootTest, ClosedForms) {
  const Matrix id = inv_fourth_root(Matrix::identity(4), 0.0);
  EXPECT_LT((id - Matrix::identity(4)).max_abs(), 1e-15);
  const Matrix sixteen(1, 1, 16.0);
  EXPECT_NEAR(inv_fourth_root(sixteen, 0.0)(0, 0), 0.5, 1e-15);
}

TEST(InvFourthRootTest, FourthPowerInvertsShiftedGram) {
  std::mt19937_64 gen(3);
  const Matrix g = random_matrix(3, 5, gen);  // rank 3 Gram matrix, singular
  const Matrix gram = matmul_tn(g, g);
  const double ridge = 1e-4;
  const Matrix root = inv_fourth_root(gram, ridge);
  EXPECT_LT(root.asymmetry(), 1e-12);
  Matrix shifted = gram;
  for (std::size_t i = 0; i < 5; ++i) shifted(i, i) += ridge;
  const Matrix product = matmul(fourth_power(root), shifted);
  EXPECT_LT((product - Matrix::identity(5)).frobenius_norm() / std::sqrt(5.0), 1e-6);
}

TEST(InvFourthRootTest, PropertyRandomPsdUpTo32) {
  std::mt19937_64 gen(99);
  for (std::size_t n : {1u, 2u, 5u, 8u, 16u, 32u}) {
    const Matrix g = random_matrix(n + 2, n, gen);
    const Matrix psd = matmul_tn(g, g);
    const double ridge = 1e-4;
    const Matrix root = inv_fourth_root(psd, ridge);
    Matrix shifted = psd;
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) += ridge;
    const Matrix product = matmul(fourth_power(root), shifted);
    EXPECT_LT((product - Matrix::identity(n)).max_abs(), 1e-6) << "n=" << n;
  }
}

TEST(InvFourthRootTest, NegativeEigenvalueIsRejected) {
  const std::vector<double> diag = {1.0, -0.5};
  EXPECT_THROW(inv_fourth_root(Matrix::diagonal(diag), 1e-4), NotPSDError);
  EXPECT_THROW(inv_fourth_root(Matrix(2, 2), 0.0), NotPSDError);
}

TEST(LogBinomTest, SmallValues) {
  EXPECT_NEAR(log_binom(5, 2), std::log(10.0), 1e-14);
  EXPECT_EQ(log_binom(2.5, 0), 0.0);
  // Product form: 2.5 * 1.5 * 0.5 / 3!
  EXPECT_NEAR(std::exp(log_binom(2.5, 3)), 2.5 * 1.5 * 0.5 / 6.0, 1e-14);
  EXPECT_EQ(binom_sign(2.5, 3), 1);
  EXPECT_EQ(binom_sign(2.5, 4), -1);
  EXPECT_EQ(binom_sign(2.5, 5), 1);
}

TEST(LogBinomTest, MatchesPascalTriangle) {
  std::vector<double> row = {1.0};
  for (int n = 1; n <= 30; ++n) {
    std::vector<double> next(n + 1, 1.0);
    for (int k = 1; k < n; ++k) next[k] = row[k - 1] + row[k];
    row = next;
    for (int k = 0; k <= n; ++k) {
      const double tol = n <= 20 ? 1e-12 : 1e-11;
      EXPECT_NEAR(std::exp(log_binom(n, k)) / row[k], 1.0, tol) << n << " " << k;
    }
  }
}

TEST(LogBinomTest, GeneralisedCoefficientMatchesProductForm) {
  for (double n : {0.25, 1.5, 2.5, 7.75, 63.5}) {
    double product = 1.0;
    for (int k = 0; k < 60; ++k) {
      if (k > 0) product *= (n - (k - 1)) / k;
      EXPECT_NEAR(binom_sign(n, k) * std::exp(log_binom(n, k)) / product, 1.0, 1e-11)
          << n << " " << k;
    }
  }
}

TEST(LogBinomTest, PoleIsDomainError) {
  EXPECT_THROW(log_binom(3, 4), DomainError);
  EXPECT_THROW(log_binom(-1.0, 0), DomainError);
  EXPECT_THROW(log_binom(2.0, -1), DomainError);
}

TEST(ErfcTest, FixedPointsAndSymmetry) {
  EXPECT_EQ(erfc(0.0), 1.0);
  EXPECT_EQ(erfc(40.0), 0.0);
  for (double x = -5.0; x <= 5.0; x += 0.125) {
    EXPECT_NEAR(erfc(-x), 2.0 - erfc(x), 1e-12);
    EXPECT_LE(erfc(x + 0.125), erfc(x));
  }
}

TEST(ErfcTest, MatchesGaussianTailQuadrature) {
  for (double x : {0.5, 1.0, 2.0, 3.5}) {
    const double oracle = testing::erfc_by_quadrature(x);
    EXPECT_NEAR(erfc(x), oracle, 1e-10) << x;
  }
}

TEST(ErfcTest, LogErfcIsContinuousIntoTheAsymptoticTail) {
  // Just below the switch the C library value is still a normal double.
  const double below = log_erfc(24.999999);
  const double above = log_erfc(25.0);
  EXPECT_NEAR(below, above, 1e-4);
  EXPECT_NEAR(log_erfc(24.0), std::log(std::erfc(24.0)), 1e-12 * 577.0);
  EXPECT_TRUE(std::isfinite(log_erfc(1e4)));
  EXPECT_NEAR(log_erfc(-3.0), std::log(2.0 - std::erfc(3.0)), 1e-15);
}

TEST(LogSumExpTest, SmallCases) {
  const std::vector<SignedLog> twice = {{1, 0.0}, {1, 0.0}};
  const SignedLog r = log_sum_exp(twice);
  EXPECT_EQ(r.sign, 1);
  EXPECT_NEAR(r.log_magnitude, std::numbers::ln2, 1e-15);

  const std::vector<SignedLog> cancel = {{1, 0.0}, {-1, 0.0}};
  const SignedLog z = log_sum_exp(cancel);
  EXPECT_EQ(z.sign, 0);
  EXPECT_EQ(z.log_magnitude, -kInf);

  const std::vector<SignedLog> negative = {{1, 0.0}, {-1, 1.0}};
  EXPECT_EQ(log_sum_exp(negative).sign, -1);
  EXPECT_THROW(log_sum_exp(std::vector<SignedLog>{}), DomainError);
}

TEST(LogSumExpTest, MatchesNaiveSumAndIsPermutationInvariant) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> mag(-5.0, 5.0);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<SignedLog> terms;
    double naive = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const SignedLog t{coin(gen) ? -1 : 1, mag(gen)};
      terms.push_back(t);
      naive += t.value();
    }
    const SignedLog r = log_sum_exp(terms);
    EXPECT_NEAR(r.value() / naive, 1.0, 1e-12);
    std::shuffle(terms.begin(), terms.end(), gen);
    const SignedLog shuffled = log_sum_exp(terms);
    EXPECT_EQ(shuffled.sign, r.sign);
    EXPECT_EQ(shuffled.log_magnitude, r.log_magnitude);
  }
}

}  // namespace
}  // namespace fedpriv
