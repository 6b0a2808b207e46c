#pragma once

// Independent reference computations used by the unit and acceptance suites.
// None of these call into the code paths they check.

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "hdtest/spectral.hpp"

namespace hdtest::oracle {

// High-precision values for evals = (2, 1), n = 8, p = 2 at lambda = 1.5,
// produced by tests/oracles/shrinkage_oracle.py (mpmath, 50 digits).
inline constexpr double kFixtureA = -0.26150488682532783155107421056;
inline constexpr double kFixtureB = 0.85529600139366955887650892829;
inline constexpr double kFixtureSRe = -0.41077091566414011199589674096;
inline constexpr double kFixtureSIm = 1.34349581731153892269115665051;
inline constexpr double kFixtureDhat1 = 1.37811083194034006253387589119;
inline constexpr double kFixtureDhat2 = 1.67024705898330210593391020638;

/// Composite trapezoid on [lo, hi] with `steps` intervals.
inline double trapezoid(const std::function<double(double)>& f, double lo, double hi, long steps) {
  const double h = (hi - lo) / static_cast<double>(steps);
  double sum = 0.5 * (f(lo) + f(hi));
  for (long k = 1; k < steps; ++k) sum += f(lo + h * static_cast<double>(k));
  return sum * h;
}

/// Epanechnikov density estimate (1/m) sum_j K((t - l_j) / h_j) / h_j with
/// K(u) = 3/(4 sqrt 5) (1 - u^2/5)^+, written out independently.
struct KernelDensity {
  std::vector<double> centers;
  std::vector<double> widths;
  double normalizer = 1.0;

  double operator()(double t) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const double u = (t - centers[j]) / widths[j];
      if (u * u < 5.0) sum += 0.75 / std::sqrt(5.0) * (1.0 - u * u / 5.0) / widths[j];
    }
    return sum / normalizer;
  }

  double support_radius() const {
    double r = 0.0;
    for (double w : widths) r = std::max(r, std::sqrt(5.0) * w);
    return r;
  }
};

inline KernelDensity make_density(const Vector& evals, Index n, Index p) {
  KernelDensity f;
  const Index m = std::min(n, p);
  f.normalizer = static_cast<double>(m);
  for (Index j = 0; j < std::min<Index>(m, evals.size()); ++j) {
    if (evals(j) <= 0.0) continue;
    f.centers.push_back(evals(j));
    f.widths.push_back(std::pow(static_cast<double>(n), -1.0 / 3.0) * evals(j));
  }
  return f;
}

/// (1/pi) PV integral of f(t) / (x - t) dt using a grid symmetric about x:
/// PV int f(t)/(x - t) dt = int_0^inf (f(x - u) - f(x + u)) / u du, evaluated
/// by the midpoint rule.
inline double pv_hilbert(const KernelDensity& f, double x, long steps) {
  double lo = f.centers.front();
  double hi = lo;
  for (double c : f.centers) {
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  const double reach = std::max(std::abs(x - lo), std::abs(hi - x)) + f.support_radius();
  const double du = reach / static_cast<double>(steps);
  double sum = 0.0;
  for (long k = 0; k < steps; ++k) {
    const double u = (static_cast<double>(k) + 0.5) * du;
    sum += (f(x - u) - f(x + u)) / u;
  }
  return sum * du / std::numbers::pi;
}

/// Brute-force sum over i != j of x_i' x_j.
inline double off_diagonal_gram_loop(const Matrix& x) {
  double s = 0.0;
  for (Index i = 0; i < x.cols(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      if (i != j) s += x.col(i).dot(x.col(j));
  return s;
}

inline double cq10_double_loop(const Matrix& x1, const Matrix& x2) {
  const double n1 = static_cast<double>(x1.cols());
  const double n2 = static_cast<double>(x2.cols());
  double cross = 0.0;
  for (Index i = 0; i < x1.cols(); ++i)
    for (Index j = 0; j < x2.cols(); ++j) cross += x1.col(i).dot(x2.col(j));
  return off_diagonal_gram_loop(x1) / (n1 * (n1 - 1.0)) +
         off_diagonal_gram_loop(x2) / (n2 * (n2 - 1.0)) - 2.0 * cross / (n1 * n2);
}

/// AUC as P(h1 > h0) + P(h1 == h0) / 2 over all pairs.
inline double auc_pairs(const std::vector<double>& h0, const std::vector<double>& h1) {
  double wins = 0.0;
  for (double a : h0)
    for (double b : h1) wins += b > a ? 1.0 : (b == a ? 0.5 : 0.0);
  return wins / (static_cast<double>(h0.size()) * static_cast<double>(h1.size()));
}

}  // namespace hdtest::oracle
