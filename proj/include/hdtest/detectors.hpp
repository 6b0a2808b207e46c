#pragma once

// Two-sample mean test statistics. Each maps a SamplePair (plus the oracle
// population covariance where the statistic needs it) to a scalar score;
// larger scores favour H1.

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "hdtest/covariance_model.hpp"
#include "hdtest/error.hpp"
#include "hdtest/shrinkage.hpp"
#include "hdtest/spectral.hpp"

namespace hdtest {

enum class DetectorKind { Hotelling, ProposedLW, BS96, CQ10, LAPPW, MahalanobisOracle };

inline constexpr std::array<DetectorKind, 6> kAllDetectors = {
    DetectorKind::Hotelling, DetectorKind::ProposedLW, DetectorKind::BS96,
    DetectorKind::CQ10,      DetectorKind::LAPPW,      DetectorKind::MahalanobisOracle};

inline std::string_view to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::Hotelling: return "hotelling";
    case DetectorKind::ProposedLW: return "lw";
    case DetectorKind::BS96: return "bs96";
    case DetectorKind::CQ10: return "cq10";
    case DetectorKind::LAPPW: return "lappw";
    case DetectorKind::MahalanobisOracle: return "oracle";
  }
  return "unknown";
}

inline std::optional<DetectorKind> parse_detector(std::string_view name) {
  for (DetectorKind k : kAllDetectors) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

struct ScoreResult {
  DetectorKind kind;
  double score = 0.0;
  std::map<std::string, double> aux;
};

namespace detail {

inline ScoreResult make_result(DetectorKind kind, double score,
                               std::map<std::string, double> aux = {}) {
  if (!std::isfinite(score)) {
    throw DomainError(std::string(to_string(kind)) + ": non-finite score");
  }
  return ScoreResult{kind, score, std::move(aux)};
}

}  // namespace detail

/// A pair together with its pooled covariance and eigendecomposition, so that
/// several detectors can share one O(p^3) factorization.
struct PreparedPair {
  explicit PreparedPair(const SamplePair& sample)
      : pair(&sample),
        diff(sample.mean_difference()),
        scm(pooled_scm(sample)),
        decomp(spectral_decompose(scm)) {}

  const SamplePair* pair;
  Vector diff;
  SymMatrix scm;
  SpectralDecomposition decomp;
};

/// (xbar1 - xbar2)' R^-1 (xbar1 - xbar2) with the population covariance known.
inline ScoreResult mahalanobis_score(const SamplePair& pair, const SymMatrix& pop) {
  if (pop.dimension() != pair.p()) {
    throw StructuralError("mahalanobis_score: covariance dimension mismatch");
  }
  Eigen::LLT<Matrix> llt(pop.entries());
  if (llt.info() != Eigen::Success) {
    throw DomainError("mahalanobis_score: population covariance is not positive definite");
  }
  const Vector diff = pair.mean_difference();
  return detail::make_result(DetectorKind::MahalanobisOracle, diff.dot(llt.solve(diff)));
}

inline ScoreResult mahalanobis_score(const SamplePair& pair, const CovarianceModel& model) {
  if (model.dimension() != pair.p()) {
    throw StructuralError("mahalanobis_score: covariance dimension mismatch");
  }
  if (!(model.diag.array() > 0.0).all()) {
    throw DomainError("mahalanobis_score: population covariance is not positive definite");
  }
  const Vector diff = pair.mean_difference();
  return detail::make_result(DetectorKind::MahalanobisOracle,
                             (diff.array().square() / model.diag.array()).sum());
}

inline ScoreResult hotelling_score(const PreparedPair& prep) {
  const Index p = prep.pair->p();
  const Index n = prep.pair->n();
  if (p > n) {
    throw SingularCovariance("hotelling: p = " + std::to_string(p) + " exceeds n = " +
                             std::to_string(n) + "; pooled covariance is singular");
  }
  const Vector& lam = prep.decomp.eigenvalues;
  if (!(lam(p - 1) >= 1e-12 * lam(0)) || !(lam(p - 1) > 0.0)) {
    throw SingularCovariance("hotelling: pooled covariance is numerically singular");
  }
  return detail::make_result(DetectorKind::Hotelling,
                             quad_form_inverse(prep.decomp, lam, prep.diff));
}

inline ScoreResult hotelling_score(const SamplePair& pair) {
  if (pair.p() > pair.n()) {
    throw SingularCovariance("hotelling: p = " + std::to_string(pair.p()) + " exceeds n = " +
                             std::to_string(pair.n()) + "; pooled covariance is singular");
  }
  return hotelling_score(PreparedPair(pair));
}

/// Hotelling-type statistic with an arbitrary shrinkage estimate in place of
/// the Ledoit-Wolf one; score is Z = (T^2 - p) / sqrt(2p).
inline ScoreResult lw_score(const SamplePair& pair, const ShrinkageEstimate& estimate) {
  const double t2 = pair.diff_scale() * estimate.quad_form_inverse(pair.mean_difference());
  const double p = static_cast<double>(pair.p());
  return detail::make_result(DetectorKind::ProposedLW, (t2 - p) / std::sqrt(2.0 * p),
                             {{"t2_lw", t2}});
}

inline ScoreResult lw_score(const PreparedPair& prep) {
  const SamplePair& pair = *prep.pair;
  return lw_score(pair, lw_covariance(prep.decomp, pair.n(), pair.p()));
}

inline ScoreResult lw_score(const SamplePair& pair) { return lw_score(PreparedPair(pair)); }

inline ScoreResult bs96_score(const SamplePair& pair, const SymMatrix& scm) {
  const Index n_count = pair.n();
  if (n_count < 2) throw DomainError("bs96: need n = n1 + n2 - 2 >= 2");
  const double n = static_cast<double>(n_count);
  const Vector diff = pair.mean_difference();
  const double tr_s = scm.trace();
  const double tr_s2 = scm.entries().squaredNorm();
  const double b_n = n * n / ((n + 2.0) * (n - 1.0)) * (tr_s2 - tr_s * tr_s / n);
  if (!(b_n > 0.0)) {
    throw DegenerateVariance("bs96: variance estimate B_n = " + std::to_string(b_n) +
                             " is not positive");
  }
  const double numerator = pair.diff_scale() * diff.squaredNorm() - tr_s;
  const double denominator = std::sqrt(2.0 * (n + 1.0) / n * b_n);
  return detail::make_result(DetectorKind::BS96, numerator / denominator,
                             {{"b_n", b_n}, {"numerator", numerator}});
}

inline ScoreResult bs96_score(const PreparedPair& prep) { return bs96_score(*prep.pair, prep.scm); }
inline ScoreResult bs96_score(const SamplePair& pair) { return bs96_score(pair, pooled_scm(pair)); }

namespace detail {

// sum over i != j of x_i' x_j = ||sum x_i||^2 - sum ||x_i||^2.
inline double off_diagonal_gram_sum(const Matrix& x) {
  return x.rowwise().sum().squaredNorm() - x.squaredNorm();
}

}  // namespace detail

/// Unstudentized statistic built from raw (uncentered) cross products.
inline ScoreResult cq10_score(const SamplePair& pair) {
  const Matrix& x1 = pair.x1().entries();
  const Matrix& x2 = pair.x2().entries();
  const double n1 = static_cast<double>(pair.n1());
  const double n2 = static_cast<double>(pair.n2());
  const double within1 = detail::off_diagonal_gram_sum(x1) / (n1 * (n1 - 1.0));
  const double within2 = detail::off_diagonal_gram_sum(x2) / (n2 * (n2 - 1.0));
  const double cross = x1.rowwise().sum().dot(x2.rowwise().sum());
  return detail::make_result(DetectorKind::CQ10, within1 + within2 - 2.0 * cross / (n1 * n2));
}

/// Diagonal loading with the loading tuned against the oracle covariance.
inline ScoreResult lappw_score(const PreparedPair& prep, const CovarianceModel& model) {
  const SamplePair& pair = *prep.pair;
  if (model.dimension() != pair.p()) {
    throw StructuralError("lappw: covariance dimension mismatch");
  }
  const LoadingResult opt = optimize_loading(prep.decomp, model);
  const Vector d = prep.decomp.eigenvalues.array() + opt.lambda_star;
  const double score = pair.diff_scale() * quad_form_inverse(prep.decomp, d, prep.diff);
  return detail::make_result(DetectorKind::LAPPW, score,
                             {{"lambda_star", opt.lambda_star}, {"snr", opt.snr_at_optimum}});
}

inline ScoreResult lappw_score(const SamplePair& pair, const CovarianceModel& model) {
  return lappw_score(PreparedPair(pair), model);
}

inline ScoreResult score_detector(DetectorKind kind, const PreparedPair& prep,
                                  const CovarianceModel& model) {
  switch (kind) {
    case DetectorKind::Hotelling: return hotelling_score(prep);
    case DetectorKind::ProposedLW: return lw_score(prep);
    case DetectorKind::BS96: return bs96_score(prep);
    case DetectorKind::CQ10: return cq10_score(*prep.pair);
    case DetectorKind::LAPPW: return lappw_score(prep, model);
    case DetectorKind::MahalanobisOracle: return mahalanobis_score(*prep.pair, model);
  }
  throw StructuralError("score_detector: unknown detector");
}

}  // namespace hdtest
