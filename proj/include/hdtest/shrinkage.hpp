#pragma once

// Analytical nonlinear shrinkage of sample eigenvalues, oracle diagnostics
// against a known population covariance, and the SNR functionals used to tune
// a diagonal-loading estimator.
//
// The sample spectral density is an Epanechnikov kernel estimate with
// locally adaptive bandwidths h_j = n^(-1/3) lambda_j; `a` is (up to the
// 1/min(n, p) normalization) its Hilbert transform and `b` the density
// itself, so s = pi (a + i b) / min(n, p) is the Stieltjes transform on the
// real axis.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "hdtest/covariance_model.hpp"
#include "hdtest/error.hpp"
#include "hdtest/spectral.hpp"

namespace hdtest {

/// The positive sample eigenvalues that enter the kernel sums, with bandwidths.
class KernelContext {
 public:
  /// `eigenvalues` must be non-increasing. Only the leading min(n, p) entries
  /// that are strictly positive are retained.
  KernelContext(const Vector& eigenvalues, Index n, Index p) : n_(n), p_(p) {
    if (n < 1 || p < 1) {
      throw StructuralError("KernelContext: need n >= 1 and p >= 1");
    }
    const Index keep = std::min<Index>({n, p, eigenvalues.size()});
    Index count = 0;
    for (Index j = 0; j < keep; ++j) count += eigenvalues(j) > 0.0 ? 1 : 0;
    evals_.resize(count);
    Index k = 0;
    for (Index j = 0; j < keep; ++j) {
      if (eigenvalues(j) > 0.0) evals_(k++) = eigenvalues(j);
    }
    bandwidths_ = std::pow(static_cast<double>(n), -1.0 / 3.0) * evals_;
  }

  const Vector& evals() const noexcept { return evals_; }
  const Vector& bandwidths() const noexcept { return bandwidths_; }
  Index n() const noexcept { return n_; }
  Index p() const noexcept { return p_; }
  Index retained() const noexcept { return evals_.size(); }
  /// min(n, p), the normalizer of the density estimate.
  double normalizer() const noexcept { return static_cast<double>(std::min(n_, p_)); }

 private:
  Vector evals_;
  Vector bandwidths_;
  Index n_;
  Index p_;
};

struct KernelValues {
  double a = 0.0;
  double b = 0.0;
};

inline KernelValues kernel_ab(double lambda, const KernelContext& ctx) {
  if (ctx.retained() == 0) {
    throw DomainError("kernel_ab: no positive eigenvalues to build the kernel estimate");
  }
  constexpr double pi = std::numbers::pi;
  const double sqrt5 = std::sqrt(5.0);
  const double lin_coef = 3.0 / (10.0 * pi);
  const double log_coef = 3.0 / (4.0 * sqrt5 * pi);
  const double den_coef = 3.0 / (4.0 * sqrt5);

  KernelValues out;
  const auto& ev = ctx.evals();
  const auto& hw = ctx.bandwidths();
  for (Index j = 0; j < ev.size(); ++j) {
    const double h = hw(j);
    const double d = lambda - ev(j);
    const double u = d / h;
    const double bracket = 1.0 - 0.2 * u * u;
    out.a -= lin_coef * d / (h * h);
    const double num = sqrt5 * h - d;
    const double den = sqrt5 * h + d;
    // At |d| = sqrt(5) h the log diverges while the bracket vanishes; the
    // product tends to 0.
    if (std::abs(num) >= 1e-300 && std::abs(den) >= 1e-300) {
      out.a += log_coef / h * bracket * std::log(std::abs(num / den));
    }
    if (bracket > 0.0) out.b += den_coef / h * bracket;
  }
  return out;
}

inline std::complex<double> stieltjes_s(double lambda, const KernelContext& ctx) {
  const KernelValues k = kernel_ab(lambda, ctx);
  return std::numbers::pi * std::complex<double>(k.a, k.b) / ctx.normalizer();
}

/// Shrunken eigenvalues, in the same order as `decomp.eigenvalues`.
///
/// When p > n the pooled covariance has rank at most n, so the trailing p - n
/// entries are taken as exact zeros and receive the null-space value.
inline Vector shrink_eigenvalues(const SpectralDecomposition& decomp, Index n, Index p) {
  if (decomp.dimension() != p) {
    throw StructuralError("shrink_eigenvalues: decomposition has dimension " +
                          std::to_string(decomp.dimension()) + ", expected p = " +
                          std::to_string(p));
  }
  if (p == n) {
    throw UnsupportedAspectRatio("shrink_eigenvalues: p == n (" + std::to_string(p) +
                                 ") is not supported by the shrinkage formula");
  }
  const Vector& lam = decomp.eigenvalues;
  if ((lam.array() < 0.0).any()) {
    throw DomainError("shrink_eigenvalues: negative eigenvalue; input is not PSD");
  }
  const KernelContext ctx(lam, n, p);
  if (ctx.retained() == 0) {
    throw DegenerateSpectrum("shrink_eigenvalues: all eigenvalues are zero");
  }
  const double c = static_cast<double>(p) / static_cast<double>(n);
  const Index rank_bound = std::min(n, p);

  double null_value = std::numeric_limits<double>::quiet_NaN();
  auto null_branch = [&]() {
    if (std::isnan(null_value)) {
      const double denom = (c - 1.0) * kernel_ab(0.0, ctx).a / static_cast<double>(n);
      if (!(denom > 0.0)) {
        throw DegenerateSpectrum(
            "shrink_eigenvalues: null-space denominator (p/n - 1) a(0) / n is non-positive");
      }
      null_value = 1.0 / denom;
    }
    return null_value;
  };

  Vector dhat(p);
  for (Index i = 0; i < p; ++i) {
    const double li = i < rank_bound ? lam(i) : 0.0;
    if (li > 0.0) {
      const std::complex<double> s = stieltjes_s(li, ctx);
      dhat(i) = li / std::norm(1.0 - c - c * li * s);
    } else if (p > n) {
      dhat(i) = null_branch();
    } else {
      throw DegenerateSpectrum("shrink_eigenvalues: zero eigenvalue with p < n");
    }
    if (!std::isfinite(dhat(i)) || !(dhat(i) > 0.0)) {
      throw DegenerateSpectrum("shrink_eigenvalues: non-finite or non-positive value at index " +
                               std::to_string(i));
    }
  }
  return dhat;
}

/// A covariance estimate U diag(dhat) U' that shares its eigenvectors with the
/// sample covariance.
struct ShrinkageEstimate {
  Matrix basis;
  Vector dhat;
  Index n = 0;
  Index p = 0;

  double quad_form_inverse(const Vector& v) const {
    if (v.size() != basis.rows()) {
      throw StructuralError("ShrinkageEstimate: vector length mismatch");
    }
    const Vector w = basis.transpose() * v;
    return (w.array().square() / dhat.array()).sum();
  }
  Matrix dense() const { return basis * dhat.asDiagonal() * basis.transpose(); }
  double condition_number() const { return dhat.maxCoeff() / dhat.minCoeff(); }
};

inline ShrinkageEstimate lw_covariance(const SpectralDecomposition& decomp, Index n, Index p) {
  return ShrinkageEstimate{decomp.eigenvectors, shrink_eigenvalues(decomp, n, p), n, p};
}

/// S + loading * I expressed in the eigenbasis of S.
inline ShrinkageEstimate loaded_estimate(const SpectralDecomposition& decomp, double loading,
                                         Index n) {
  if (!(loading > 0.0)) throw DomainError("loaded_estimate: loading must be positive");
  Vector d = decomp.eigenvalues.array() + loading;
  return ShrinkageEstimate{decomp.eigenvectors, std::move(d), n, decomp.dimension()};
}

/// diag(U' R U) for diagonal R = diag(r).
inline Vector basis_variances(const Matrix& basis, const Vector& r) {
  if (r.size() != basis.rows()) {
    throw StructuralError("basis_variances: dimension mismatch");
  }
  return basis.array().square().matrix().transpose() * r;
}

/// diag(U' R U) for general symmetric R.
inline Vector basis_variances(const Matrix& basis, const SymMatrix& r) {
  if (r.dimension() != basis.rows()) {
    throw StructuralError("basis_variances: dimension mismatch");
  }
  return (basis.array() * (r.entries() * basis).array()).colwise().sum().transpose();
}

struct OracleDiagnostics {
  Vector sigma2;      // u_i' R u_i
  double bias = 0.0;  // (1/p) sum over lambda_j in [lo, hi] of (dhat_j - sigma2_j)
};

inline OracleDiagnostics oracle_diagnostics(const SpectralDecomposition& decomp,
                                            const Vector& dhat, const CovarianceModel& model,
                                            double lo = 0.0,
                                            double hi = std::numeric_limits<double>::infinity()) {
  const Index p = decomp.dimension();
  if (dhat.size() != p || model.dimension() != p) {
    throw StructuralError("oracle_diagnostics: dimension mismatch");
  }
  if (lo > hi) throw StructuralError("oracle_diagnostics: empty interval (lo > hi)");
  OracleDiagnostics out;
  out.sigma2 = basis_variances(decomp.eigenvectors, model.diag);
  double sum = 0.0;
  for (Index j = 0; j < p; ++j) {
    const double l = decomp.eigenvalues(j);
    if (l >= lo && l <= hi) sum += dhat(j) - out.sigma2(j);
  }
  out.bias = sum / static_cast<double>(p);
  return out;
}

namespace detail {

inline Matrix pd_inverse(const SymMatrix& m, const char* who) {
  Eigen::LLT<Matrix> llt(m.entries());
  if (llt.info() != Eigen::Success) {
    throw DomainError(std::string(who) + ": estimator is not positive definite");
  }
  return llt.solve(Matrix::Identity(m.dimension(), m.dimension()));
}

inline void check_mu(const Vector& mu, Index p, const char* who) {
  if (mu.size() != p) throw StructuralError(std::string(who) + ": dimension mismatch");
  if (mu.squaredNorm() == 0.0) throw DomainError(std::string(who) + ": mu = 0 gives 0/0");
}

}  // namespace detail

/// (mu' Rhat^-1 mu)^2 / (mu' Rhat^-1 R Rhat^-1 mu).
inline double snr_exact(const Vector& mu, const ShrinkageEstimate& rhat, const SymMatrix& r) {
  detail::check_mu(mu, r.dimension(), "snr_exact");
  if (rhat.basis.rows() != r.dimension()) throw StructuralError("snr_exact: dimension mismatch");
  if (!(rhat.dhat.array() > 0.0).all()) {
    throw DomainError("snr_exact: estimator is not positive definite");
  }
  const Vector y = rhat.basis * ((rhat.basis.transpose() * mu).array() / rhat.dhat.array()).matrix();
  const double num = mu.dot(y);
  return num * num / y.dot(r.entries() * y);
}

inline double snr_exact(const Vector& mu, const SymMatrix& rhat, const SymMatrix& r) {
  detail::check_mu(mu, r.dimension(), "snr_exact");
  if (rhat.dimension() != r.dimension()) throw StructuralError("snr_exact: dimension mismatch");
  const Matrix inv = detail::pd_inverse(rhat, "snr_exact");
  const Vector y = inv * mu;
  const double num = mu.dot(y);
  return num * num / y.dot(r.entries() * y);
}

/// (tr Rhat^-1)^2 / (p tr(Rhat^-1 R Rhat^-1)).
inline double snr_proxy(const ShrinkageEstimate& rhat, const SymMatrix& r, Index p) {
  if (rhat.basis.rows() != r.dimension()) throw StructuralError("snr_proxy: dimension mismatch");
  if (!(rhat.dhat.array() > 0.0).all()) {
    throw DomainError("snr_proxy: estimator is not positive definite");
  }
  const Vector w = basis_variances(rhat.basis, r);
  const double tr_inv = rhat.dhat.cwiseInverse().sum();
  const double tr_sandwich = (w.array() / rhat.dhat.array().square()).sum();
  return tr_inv * tr_inv / (static_cast<double>(p) * tr_sandwich);
}

inline double snr_proxy(const SymMatrix& rhat, const SymMatrix& r, Index p) {
  if (rhat.dimension() != r.dimension()) throw StructuralError("snr_proxy: dimension mismatch");
  const Matrix inv = detail::pd_inverse(rhat, "snr_proxy");
  const double tr_inv = inv.trace();
  const double tr_sandwich = (inv * r.entries() * inv).trace();
  return tr_inv * tr_inv / (static_cast<double>(p) * tr_sandwich);
}

/// The SNR proxy of S + t I as a function of t, evaluated in O(p) per call
/// from the eigenvalues of S and the diagonal of U' R U.
class LoadingObjective {
 public:
  LoadingObjective(Vector sample_eigenvalues, Vector basis_variances)
      : lam_(std::move(sample_eigenvalues)), w_(std::move(basis_variances)) {
    if (lam_.size() != w_.size()) throw StructuralError("LoadingObjective: length mismatch");
  }

  double operator()(double loading) const {
    ++evaluations_;
    const auto inv = (lam_.array() + loading).inverse();
    const double tr_inv = inv.sum();
    const double tr_sandwich = (w_.array() * inv.square()).sum();
    return tr_inv * tr_inv / (static_cast<double>(lam_.size()) * tr_sandwich);
  }

  long evaluations() const noexcept { return evaluations_; }

 private:
  Vector lam_;
  Vector w_;
  mutable long evaluations_ = 0;
};

struct LoadingResult {
  double lambda_star = 0.0;
  double snr_at_optimum = 0.0;
  long evaluations = 0;
};

struct LoadingSearch {
  double lower_factor = 1e-6;  // search range is [lower_factor, upper_factor] * tr(S)/p
  double upper_factor = 1e6;
  int scan_points = 64;
  double log_tolerance = 1e-6;
};

/// Maximizes the SNR proxy of S + t I over t > 0: a coarse scan in log t
/// followed by golden-section refinement around the best scan point.
inline LoadingResult optimize_loading(const SpectralDecomposition& decomp,
                                      const Vector& basis_vars, const LoadingSearch& search = {}) {
  const Index p = decomp.dimension();
  const double mean_eig = decomp.eigenvalues.sum() / static_cast<double>(p);
  if (!(mean_eig > 0.0)) {
    throw DegenerateSpectrum("optimize_loading: sample covariance has zero trace");
  }
  LoadingObjective objective(decomp.eigenvalues, basis_vars);
  auto g = [&](double log_t) { return objective(std::exp(log_t)); };

  const double lo = std::log(search.lower_factor * mean_eig);
  const double hi = std::log(search.upper_factor * mean_eig);
  const int k_max = search.scan_points - 1;
  const double step = (hi - lo) / k_max;

  int best_k = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= k_max; ++k) {
    const double v = g(k == k_max ? hi : lo + k * step);
    if (v > best_val) {
      best_val = v;
      best_k = k;
    }
  }
  double best_x = best_k == k_max ? hi : lo + best_k * step;

  double a = best_k == 0 ? lo : lo + (best_k - 1) * step;
  double b = best_k == k_max ? hi : lo + (best_k + 1) * step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = g(x1);
  double f2 = g(x2);
  while (b - a > search.log_tolerance) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = g(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = g(x2);
    }
  }
  const double cand_x = f1 >= f2 ? x1 : x2;
  const double cand_val = std::max(f1, f2);
  if (cand_val > best_val) {
    best_val = cand_val;
    best_x = cand_x;
  }
  return LoadingResult{std::exp(best_x), best_val, objective.evaluations()};
}

inline LoadingResult optimize_loading(const SpectralDecomposition& decomp,
                                      const CovarianceModel& model,
                                      const LoadingSearch& search = {}) {
  return optimize_loading(decomp, basis_variances(decomp.eigenvectors, model.diag), search);
}

inline LoadingResult optimize_loading(const SpectralDecomposition& decomp, const SymMatrix& r,
                                      const LoadingSearch& search = {}) {
  return optimize_loading(decomp, basis_variances(decomp.eigenvectors, r), search);
}

}  // namespace hdtest
