#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "hdtest/csv.hpp"
#include "hdtest/spectral.hpp"
#include "test_util.hpp"

using namespace hdtest;
using hdtest::testing::random_matrix;
using hdtest::testing::random_pair;
using hdtest::testing::random_pd;
using hdtest::testing::random_symmetric;

TEST(PooledScm, ConstantColumnsGiveZeroMatrix) {
  Matrix c(3, 2);
  c.col(0) << 1.5, -2.0, 7.0;
  c.col(1) = c.col(0);
  const SymMatrix s = pooled_scm(SamplePair(DataMatrix(c), DataMatrix(c)));
  EXPECT_EQ(s.entries().cwiseAbs().maxCoeff(), 0.0);
}

TEST(PooledScm, HandArithmeticScalarCase) {
  Matrix x1(1, 2), x2(1, 2);
  x1 << 0.0, 2.0;
  x2 << 0.0, 0.0;
  const SamplePair pair{DataMatrix(x1), DataMatrix(x2)};
  EXPECT_EQ(pair.n(), 2);
  EXPECT_DOUBLE_EQ(pair.xbar1()(0), 1.0);
  EXPECT_DOUBLE_EQ(pooled_scm(pair).entries()(0, 0), 1.0);
}

TEST(PooledScm, DimensionMismatchIsStructural) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(SamplePair(DataMatrix(random_matrix(3, 4, rng)), DataMatrix(random_matrix(4, 4, rng))),
               StructuralError);
}

TEST(PooledScm, RejectsSingleObservationAndNonFinite) {
  EXPECT_THROW(DataMatrix(Matrix::Zero(3, 1)), StructuralError);
  Matrix bad = Matrix::Zero(2, 3);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(DataMatrix{bad}, StructuralError);
}

TEST(PooledScm, PsdAndRankDeficientWhenWide) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const SamplePair pair = random_pair(5, 5, 5, rng);
    const auto dec = spectral_decompose(pooled_scm(pair));
    EXPECT_GE(dec.eigenvalues.minCoeff(), -1e-10);
  }
  // p = 30 > n = 10: at least 20 eigenvalues vanish.
  for (int rep = 0; rep < 10; ++rep) {
    const SamplePair pair = random_pair(30, 6, 6, rng);
    const auto dec = spectral_decompose(pooled_scm(pair));
    const double tol = 1e-8 * dec.eigenvalues(0);
    int zeros = 0;
    for (Index i = 0; i < dec.dimension(); ++i) zeros += std::abs(dec.eigenvalues(i)) <= tol;
    EXPECT_GE(zeros, 20);
  }
}

TEST(SymMatrixTest, RejectsAsymmetricAndNonSquare) {
  Matrix m = Matrix::Identity(3, 3);
  m(0, 2) = 1e-9;
  EXPECT_THROW(SymMatrix{m}, StructuralError);
  m(0, 2) = 1e-11;
  EXPECT_NO_THROW(SymMatrix{m});
  EXPECT_THROW(SymMatrix(Matrix::Zero(2, 3)), StructuralError);
}

TEST(SpectralDecompose, IdentityAndDiagonal) {
  const auto id = spectral_decompose(SymMatrix::identity(3));
  EXPECT_TRUE(id.eigenvalues.isApprox(Vector::Ones(3)));
  EXPECT_TRUE((id.eigenvectors.transpose() * id.eigenvectors).isApprox(Matrix::Identity(3, 3)));

  Vector d(2);
  d << 1.0, 4.0;
  const auto dec = spectral_decompose(SymMatrix::diagonal(d));
  EXPECT_DOUBLE_EQ(dec.eigenvalues(0), 4.0);
  EXPECT_DOUBLE_EQ(dec.eigenvalues(1), 1.0);
  Matrix perm(2, 2);
  perm << 0, 1, 1, 0;
  EXPECT_TRUE(dec.eigenvectors.isApprox(perm));
}

TEST(SpectralDecompose, ContractOnRandomSymmetric) {
  std::mt19937_64 rng(11);
  const Matrix m = random_symmetric(50, rng);
  const auto dec = spectral_decompose(SymMatrix(m));
  const Matrix gram = dec.eigenvectors.transpose() * dec.eigenvectors;
  EXPECT_LT((gram - Matrix::Identity(50, 50)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((dec.reconstruct() - m).norm() / m.norm(), 1e-8);
  for (Index i = 1; i < 50; ++i) EXPECT_GE(dec.eigenvalues(i - 1), dec.eigenvalues(i));
  for (Index j = 0; j < 50; ++j) {
    const auto col = dec.eigenvectors.col(j);
    Index k = 0;
    while (std::abs(col(k)) <= 1e-12) ++k;
    EXPECT_GT(col(k), 0.0);
  }
}

TEST(SpectralDecompose, DeterministicAndIdempotent) {
  std::mt19937_64 rng(12);
  for (Index p : {5, 17, 40}) {
    const Matrix m = random_symmetric(p, rng);
    const auto a = spectral_decompose(SymMatrix(m));
    const auto b = spectral_decompose(SymMatrix(m));
    EXPECT_EQ(a.eigenvalues, b.eigenvalues);
    EXPECT_EQ(a.eigenvectors, b.eigenvectors);
    Matrix rebuilt = a.reconstruct();
    rebuilt = 0.5 * (rebuilt + rebuilt.transpose());
    const auto again = spectral_decompose(SymMatrix(rebuilt));
    EXPECT_LT((again.eigenvalues - a.eigenvalues).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(SpectralDecompose, ClampsTinyNegativesToExactZero) {
  Vector d(3);
  d << 2.0, -1e-12, -0.5;
  const auto dec = spectral_decompose(SymMatrix::diagonal(d));
  EXPECT_EQ(dec.eigenvalues(1), 0.0);
  EXPECT_EQ(dec.eigenvalues(2), -0.5);
}

TEST(QuadFormInverse, TrivialCases) {
  SpectralDecomposition dec{Vector::Constant(2, 1.0), Matrix::Identity(2, 2)};
  Vector d(2), v(2);
  d << 2.0, 2.0;
  v << 2.0, 0.0;
  EXPECT_DOUBLE_EQ(quad_form_inverse(dec, d, v), 2.0);
  EXPECT_EQ(quad_form_inverse(dec, d, Vector::Zero(2)), 0.0);
}

TEST(QuadFormInverse, NonPositiveWeightIsDomainError) {
  SpectralDecomposition dec{Vector::Ones(2), Matrix::Identity(2, 2)};
  Vector d(2);
  d << 1.0, 0.0;
  EXPECT_THROW(quad_form_inverse(dec, d, Vector::Ones(2)), DomainError);
  EXPECT_THROW(quad_form_inverse(dec, Vector::Ones(3), Vector::Ones(2)), StructuralError);
}

TEST(QuadFormInverse, MatchesDirectSolve) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 30; ++rep) {
    const Index p = 5 + static_cast<Index>(rng() % 46);
    const Matrix m = random_pd(p, rng);
    const Vector v = random_matrix(p, 1, rng);
    const auto dec = spectral_decompose(SymMatrix(m));
    const double direct = v.dot(m.partialPivLu().solve(v));
    EXPECT_LT(hdtest::testing::rel_err(quad_form_inverse(dec, dec.eigenvalues, v), direct), 1e-8)
        << "p = " << p;
  }
}

TEST(MatrixCsv, ParsesAndRejectsRagged) {
  std::istringstream ok("1,2\n3, 4.5\n");
  const Matrix m = csv::read_matrix(ok);
  EXPECT_EQ(m.rows(), 2);
  EXPECT_DOUBLE_EQ(m(1, 1), 4.5);
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(csv::read_matrix(ragged), StructuralError);
  std::istringstream junk("1,abc\n");
  EXPECT_THROW(csv::read_matrix(junk), StructuralError);
}

TEST(MatrixCsv, ShortestRoundTripFormatting) {
  std::mt19937_64 rng(3);
  const Matrix m = random_matrix(4, 3, rng) * 1e3;
  std::stringstream buf;
  csv::write_matrix(buf, m);
  EXPECT_EQ(csv::read_matrix(buf), m);
  EXPECT_EQ(csv::format_double(0.1), "0.1");
}
