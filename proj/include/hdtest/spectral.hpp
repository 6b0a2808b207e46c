#pragma once

// Dense symmetric-matrix primitives shared by every statistic: observation
// matrices, the pooled sample covariance, a deterministic eigendecomposition
// and inverse quadratic forms evaluated in a spectral basis.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "hdtest/error.hpp"

namespace hdtest {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kClampRelative = 1e-10;

/// Observations stored column-wise: p rows (features) by n columns (samples).
class DataMatrix {
 public:
  explicit DataMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.cols() < 2) {
      throw StructuralError("DataMatrix: need at least 2 observations, got " +
                            std::to_string(entries_.cols()));
    }
    if (entries_.rows() < 1) {
      throw StructuralError("DataMatrix: need at least 1 feature");
    }
    if (!entries_.allFinite()) {
      throw StructuralError("DataMatrix: non-finite entry");
    }
  }

  const Matrix& entries() const noexcept { return entries_; }
  Index p() const noexcept { return entries_.rows(); }
  Index n() const noexcept { return entries_.cols(); }
  Vector column_mean() const { return entries_.rowwise().mean(); }

 private:
  Matrix entries_;
};

/// Two groups sharing a dimension, with their sample means precomputed.
class SamplePair {
 public:
  SamplePair(DataMatrix x1, DataMatrix x2) : x1_(std::move(x1)), x2_(std::move(x2)) {
    if (x1_.p() != x2_.p()) {
      throw StructuralError("SamplePair: dimension mismatch (" + std::to_string(x1_.p()) +
                            " vs " + std::to_string(x2_.p()) + ")");
    }
    xbar1_ = x1_.column_mean();
    xbar2_ = x2_.column_mean();
  }

  const DataMatrix& x1() const noexcept { return x1_; }
  const DataMatrix& x2() const noexcept { return x2_; }
  const Vector& xbar1() const noexcept { return xbar1_; }
  const Vector& xbar2() const noexcept { return xbar2_; }
  Vector mean_difference() const { return xbar1_ - xbar2_; }

  Index p() const noexcept { return x1_.p(); }
  Index n1() const noexcept { return x1_.n(); }
  Index n2() const noexcept { return x2_.n(); }
  /// Effective sample size n1 + n2 - 2.
  Index n() const noexcept { return n1() + n2() - 2; }
  /// n1 n2 / (n1 + n2).
  double diff_scale() const noexcept {
    const double a = static_cast<double>(n1());
    const double b = static_cast<double>(n2());
    return a * b / (a + b);
  }

 private:
  DataMatrix x1_;
  DataMatrix x2_;
  Vector xbar1_;
  Vector xbar2_;
};

class SymMatrix {
 public:
  explicit SymMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols()) {
      throw StructuralError("SymMatrix: matrix is " + std::to_string(entries_.rows()) + "x" +
                            std::to_string(entries_.cols()) + ", not square");
    }
    if (!entries_.allFinite()) {
      throw StructuralError("SymMatrix: non-finite entry");
    }
    const double asym = (entries_ - entries_.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTolerance) {
      throw StructuralError("SymMatrix: asymmetry " + std::to_string(asym) +
                            " exceeds tolerance");
    }
  }

  static SymMatrix identity(Index p) { return SymMatrix(Matrix::Identity(p, p)); }
  static SymMatrix diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

  const Matrix& entries() const noexcept { return entries_; }
  Index dimension() const noexcept { return entries_.rows(); }
  double trace() const { return entries_.trace(); }

 private:
  Matrix entries_;
};

/// Eigenvalues in non-increasing order with matching orthonormal columns.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Index dimension() const noexcept { return eigenvalues.size(); }
  Matrix reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }
};

/// (1/n) sum over both groups of centered outer products.
inline SymMatrix pooled_scm(const SamplePair& pair) {
  const Matrix c1 = pair.x1().entries().colwise() - pair.xbar1();
  const Matrix c2 = pair.x2().entries().colwise() - pair.xbar2();
  Matrix scatter = Matrix::Zero(pair.p(), pair.p());
  scatter.selfadjointView<Eigen::Lower>().rankUpdate(c1);
  scatter.selfadjointView<Eigen::Lower>().rankUpdate(c2);
  Matrix s = scatter.selfadjointView<Eigen::Lower>();
  s /= static_cast<double>(pair.n());
  return SymMatrix(std::move(s));
}

/// Deterministic symmetric eigendecomposition.
///
/// Eigenvalues are returned non-increasing. Each eigenvector is flipped so its
/// first coordinate with magnitude above 1e-12 is positive. Eigenvalues in
/// [-1e-10 * lambda_1, 0] are clamped to exactly 0 so that downstream code can
/// branch on an exact zero.
inline SpectralDecomposition spectral_decompose(const SymMatrix& m) {
  if (!m.entries().allFinite()) {
    throw StructuralError("spectral_decompose: non-finite entry");
  }
  const Index p = m.dimension();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m.entries(), Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw DomainError("spectral_decompose: eigensolver did not converge");
  }
  SpectralDecomposition out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();

  const double top = p > 0 ? out.eigenvalues(0) : 0.0;
  const double floor = -kClampRelative * std::max(top, 0.0);
  for (Index i = 0; i < p; ++i) {
    double& v = out.eigenvalues(i);
    if (v < 0.0 && v >= floor) v = 0.0;
  }
  for (Index j = 0; j < p; ++j) {
    auto col = out.eigenvectors.col(j);
    for (Index k = 0; k < p; ++k) {
      if (std::abs(col(k)) > 1e-12) {
        if (col(k) < 0.0) col = -col;
        break;
      }
    }
  }
  return out;
}

/// Evaluates v' U diag(1/d) U' v.
inline double quad_form_inverse(const SpectralDecomposition& decomp, const Vector& d,
                                const Vector& v) {
  const Index p = decomp.dimension();
  if (d.size() != p || v.size() != p) {
    throw StructuralError("quad_form_inverse: length mismatch (p = " + std::to_string(p) +
                          ", d = " + std::to_string(d.size()) +
                          ", v = " + std::to_string(v.size()) + ")");
  }
  if (!(d.array() > 0.0).all()) {
    throw DomainError("quad_form_inverse: estimator has a non-positive eigenvalue");
  }
  const Vector w = decomp.eigenvectors.transpose() * v;
  return (w.array().square() / d.array()).sum();
}

}  // namespace hdtest
