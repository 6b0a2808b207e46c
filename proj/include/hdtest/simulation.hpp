#pragma once

// Seeded Monte Carlo protocol: the R_P covariance family, bounded
// sub-Gaussian data, sphere-sampled mean shifts, per-trial scoring of every
// configured detector, ROC/AUC and a normality check of null scores.
//
// Every trial draws from its own generator seeded from (run seed, trial,
// hypothesis), and results land in slots indexed by trial, so a ScoreTable is
// a pure function of its SimulationConfig whatever the thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "hdtest/covariance_model.hpp"
#include "hdtest/csv.hpp"
#include "hdtest/detectors.hpp"
#include "hdtest/spectral.hpp"

namespace hdtest {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed for stream (trial, tag) of a run.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t trial, std::uint64_t tag) {
  return splitmix64(splitmix64(splitmix64(base) ^ trial) ^ (tag * 0xd1b54a32d192ed03ULL));
}

enum class HypothesisTag : std::uint64_t { Null = 0, Alternative = 1, Covariance = 2 };

/// Diagonal R_P: 10^((41 - j) P / 40) + eps_j for j <= 40, eps_j ~ U[0, 1];
/// unity beyond. With p <= 40 the spike block is truncated to p entries.
inline CovarianceModel make_covariance(int order, Index p, Rng& rng) {
  if (p < 1) throw StructuralError("make_covariance: p must be positive");
  if (order < 0) throw DomainError("make_covariance: order P must be non-negative");
  CovarianceModel model;
  model.order = order;
  model.truncated = p <= 40;
  model.diag = Vector::Ones(p);
  std::uniform_real_distribution<double> eps(0.0, 1.0);
  const Index spikes = std::min<Index>(40, p);
  for (Index j = 1; j <= spikes; ++j) {
    const double expo = static_cast<double>(41 - j) * order / 40.0;
    model.diag(j - 1) = std::pow(10.0, expo) + eps(rng);
  }
  return model;
}

inline CovarianceModel make_covariance(int order, Index p, std::uint64_t seed) {
  Rng rng(seed);
  CovarianceModel model = make_covariance(order, p, rng);
  model.seed = seed;
  return model;
}

inline Vector standard_normal_vector(Index p, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(p);
  for (Index i = 0; i < p; ++i) v(i) = normal(rng);
  return v;
}

/// Uniform direction scaled to `radius`.
inline Vector sample_sphere(Index p, double radius, Rng& rng) {
  if (p < 1) throw StructuralError("sample_sphere: p must be positive");
  if (!(radius >= 0.0)) throw DomainError("sample_sphere: radius must be non-negative");
  Vector v = standard_normal_vector(p, rng);
  double norm = v.norm();
  while (norm == 0.0) {
    v = standard_normal_vector(p, rng);
    norm = v.norm();
  }
  return v * (radius / norm);
}

enum class BaseDistribution { Uniform, Gaussian };

/// i.i.d. mean-zero, unit-variance noise matrix.
inline Matrix white_noise(Index p, Index n, BaseDistribution dist, Rng& rng) {
  Matrix z(p, n);
  if (dist == BaseDistribution::Uniform) {
    const double half_width = std::sqrt(3.0);
    std::uniform_real_distribution<double> unif(-half_width, half_width);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < p; ++i) z(i, j) = unif(rng);
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < p; ++i) z(i, j) = normal(rng);
  }
  return z;
}

/// mean + diag(sqrt(model.diag)) * Z.
inline DataMatrix generate_sample(const CovarianceModel& model, const Vector& mean, Index n,
                                  Rng& rng, BaseDistribution dist = BaseDistribution::Uniform) {
  if (mean.size() != model.dimension()) {
    throw StructuralError("generate_sample: mean has the wrong dimension");
  }
  Matrix z = white_noise(model.dimension(), n, dist, rng);
  z = model.diag.cwiseSqrt().asDiagonal() * z;
  z.colwise() += mean;
  return DataMatrix(std::move(z));
}

/// Symmetric square-root coloring for a non-diagonal population covariance.
inline DataMatrix generate_sample(const SymMatrix& pop, const Vector& mean, Index n, Rng& rng,
                                  BaseDistribution dist = BaseDistribution::Uniform) {
  if (mean.size() != pop.dimension()) {
    throw StructuralError("generate_sample: mean has the wrong dimension");
  }
  const SpectralDecomposition dec = spectral_decompose(pop);
  if ((dec.eigenvalues.array() < 0.0).any()) {
    throw DomainError("generate_sample: population covariance is not PSD");
  }
  const Matrix root =
      dec.eigenvectors * dec.eigenvalues.cwiseSqrt().asDiagonal() * dec.eigenvectors.transpose();
  Matrix z = root * white_noise(pop.dimension(), n, dist, rng);
  z.colwise() += mean;
  return DataMatrix(std::move(z));
}

struct SimulationConfig {
  Index p = 200;
  Index n1 = 150;
  Index n2 = 150;
  int cov_order = 0;
  Index trials = 2000;  // per hypothesis
  double radius = 1.0;
  std::uint64_t seed = 1;
  std::vector<DetectorKind> detectors = {kAllDetectors.begin(), kAllDetectors.end()};
  BaseDistribution base = BaseDistribution::Uniform;
  unsigned threads = 0;  // 0: hardware concurrency

  double gamma1() const { return static_cast<double>(p) / static_cast<double>(n1); }
  double gamma2() const { return static_cast<double>(p) / static_cast<double>(n2); }
  double gamma() const { return static_cast<double>(p) / static_cast<double>(n1 + n2 - 2); }

  void validate() const {
    if (p < 1) throw StructuralError("config: p must be >= 1");
    if (n1 < 2 || n2 < 2) throw StructuralError("config: n1 and n2 must be >= 2");
    if (trials < 1) throw StructuralError("config: trials must be >= 1");
    if (!(radius >= 0.0)) throw StructuralError("config: radius must be >= 0");
    if (cov_order < 0) throw StructuralError("config: cov-order must be >= 0");
    if (detectors.empty()) throw StructuralError("config: no detectors selected");
  }
};

struct DetectorScores {
  DetectorKind kind;
  std::vector<double> h0;
  std::vector<double> h1;
};

struct AbsentDetector {
  DetectorKind kind;
  std::string reason;
};

struct ScoreTable {
  SimulationConfig config;
  CovarianceModel model;
  std::vector<DetectorScores> columns;  // detectors that scored every trial
  std::vector<AbsentDetector> absent;   // detectors whose preconditions failed
  std::vector<std::uint64_t> h0_seeds;
  std::vector<std::uint64_t> h1_seeds;

  const DetectorScores* find(DetectorKind kind) const {
    for (const auto& c : columns)
      if (c.kind == kind) return &c;
    return nullptr;
  }
};

inline CovarianceModel run_covariance(const SimulationConfig& config) {
  return make_covariance(config.cov_order, config.p,
                         derive_seed(config.seed, 0,
                                     static_cast<std::uint64_t>(HypothesisTag::Covariance)));
}

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

/// Runs body(t) for t in [0, count) on up to `threads` workers. The first
/// exception (by index) is rethrown after all workers finish.
inline void parallel_for(Index count, unsigned threads, const std::function<void(Index)>& body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<Index>(std::max<unsigned>(threads, 1), count));
  std::atomic<Index> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  Index first_index = std::numeric_limits<Index>::max();
  auto run = [&]() {
    for (Index t = next++; t < count; t = next++) {
      try {
        body(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (t < first_index) {
          first_index = t;
          first_error = std::current_exception();
        }
      }
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

namespace detail {

inline bool needs_decomposition(const std::vector<DetectorKind>& kinds) {
  for (DetectorKind k : kinds) {
    if (k != DetectorKind::CQ10 && k != DetectorKind::MahalanobisOracle) return true;
  }
  return false;
}

struct FailureLog {
  std::mutex mutex;
  std::vector<Index> first_trial;
  std::vector<std::string> reason;

  explicit FailureLog(std::size_t detectors)
      : first_trial(detectors, std::numeric_limits<Index>::max()), reason(detectors) {}

  void record(std::size_t d, Index trial, const std::string& why) {
    std::lock_guard<std::mutex> lock(mutex);
    if (trial < first_trial[d]) {
      first_trial[d] = trial;
      reason[d] = why;
    }
  }
  bool failed(std::size_t d) const { return first_trial[d] != std::numeric_limits<Index>::max(); }
};

inline void score_all(const SamplePair& pair, const CovarianceModel& model,
                      const std::vector<DetectorKind>& kinds, Index trial,
                      std::vector<std::vector<double>>& slots, FailureLog& failures) {
  std::optional<PreparedPair> prep;
  if (needs_decomposition(kinds)) prep.emplace(pair);
  for (std::size_t d = 0; d < kinds.size(); ++d) {
    try {
      double score = 0.0;
      switch (kinds[d]) {
        case DetectorKind::CQ10: score = cq10_score(pair).score; break;
        case DetectorKind::MahalanobisOracle: score = mahalanobis_score(pair, model).score; break;
        default: score = score_detector(kinds[d], *prep, model).score; break;
      }
      slots[d][trial] = score;
    } catch (const DomainError& e) {
      failures.record(d, trial, e.what());
      slots[d][trial] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

}  // namespace detail

/// Independent H0 and H1 pairs per trial. Under H1 group 1 is shifted by a
/// sphere draw of the configured radius; group 2 always has mean 0. The
/// population covariance is drawn once per run.
inline ScoreTable run_trials(const SimulationConfig& config) {
  config.validate();
  ScoreTable table;
  table.config = config;
  table.model = run_covariance(config);
  const auto& kinds = config.detectors;
  const Index trials = config.trials;

  std::vector<std::vector<double>> h0(kinds.size(), std::vector<double>(trials));
  std::vector<std::vector<double>> h1(kinds.size(), std::vector<double>(trials));
  table.h0_seeds.resize(trials);
  table.h1_seeds.resize(trials);
  for (Index t = 0; t < trials; ++t) {
    table.h0_seeds[t] = derive_seed(config.seed, static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(HypothesisTag::Null));
    table.h1_seeds[t] = derive_seed(config.seed, static_cast<std::uint64_t>(t),
                                    static_cast<std::uint64_t>(HypothesisTag::Alternative));
  }
  detail::FailureLog failures(kinds.size());
  const Vector zero = Vector::Zero(config.p);
  const CovarianceModel& model = table.model;

  parallel_for(trials, resolve_threads(config.threads), [&](Index t) {
    {
      Rng rng(table.h0_seeds[t]);
      DataMatrix x1 = generate_sample(model, zero, config.n1, rng, config.base);
      DataMatrix x2 = generate_sample(model, zero, config.n2, rng, config.base);
      detail::score_all(SamplePair(std::move(x1), std::move(x2)), model, kinds, t, h0, failures);
    }
    {
      Rng rng(table.h1_seeds[t]);
      const Vector shift = sample_sphere(config.p, config.radius, rng);
      DataMatrix x1 = generate_sample(model, shift, config.n1, rng, config.base);
      DataMatrix x2 = generate_sample(model, zero, config.n2, rng, config.base);
      detail::score_all(SamplePair(std::move(x1), std::move(x2)), model, kinds, t, h1, failures);
    }
  });

  for (std::size_t d = 0; d < kinds.size(); ++d) {
    if (failures.failed(d)) {
      table.absent.push_back({kinds[d], failures.reason[d]});
    } else {
      table.columns.push_back({kinds[d], std::move(h0[d]), std::move(h1[d])});
    }
  }
  return table;
}

/// Z statistics of the proposed test on the H0 streams of `config`.
inline std::vector<double> null_z_scores(const SimulationConfig& config) {
  config.validate();
  const CovarianceModel model = run_covariance(config);
  const Vector zero = Vector::Zero(config.p);
  std::vector<double> z(config.trials);
  parallel_for(config.trials, resolve_threads(config.threads), [&](Index t) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t),
                        static_cast<std::uint64_t>(HypothesisTag::Null)));
    DataMatrix x1 = generate_sample(model, zero, config.n1, rng, config.base);
    DataMatrix x2 = generate_sample(model, zero, config.n2, rng, config.base);
    z[t] = lw_score(SamplePair(std::move(x1), std::move(x2))).score;
  });
  return z;
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
  double auc = 0.0;
};

/// Sweeps the threshold over every distinct score; a point is the fraction of
/// each population strictly above the threshold. Tied scores form one step.
inline RocCurve roc_curve(std::vector<double> h0, std::vector<double> h1) {
  if (h0.empty() || h1.empty()) throw StructuralError("roc_curve: empty score set");
  std::sort(h0.begin(), h0.end(), std::greater<>());
  std::sort(h1.begin(), h1.end(), std::greater<>());
  const double n0 = static_cast<double>(h0.size());
  const double n1 = static_cast<double>(h1.size());

  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  while (i0 < h0.size() || i1 < h1.size()) {
    double v = -std::numeric_limits<double>::infinity();
    if (i0 < h0.size()) v = std::max(v, h0[i0]);
    if (i1 < h1.size()) v = std::max(v, h1[i1]);
    while (i0 < h0.size() && h0[i0] == v) ++i0;
    while (i1 < h1.size() && h1[i1] == v) ++i1;
    roc.points.push_back({static_cast<double>(i0) / n0, static_cast<double>(i1) / n1});
  }
  double area = 0.0;
  for (std::size_t k = 1; k < roc.points.size(); ++k) {
    const auto& a = roc.points[k - 1];
    const auto& b = roc.points[k];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  roc.auc = area;
  return roc;
}

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double standard_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

struct NormalityStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double ks = 0.0;        // sup |F_n - Phi|
};

inline NormalityStats normality_check(std::vector<double> z) {
  if (z.size() < 2) throw StructuralError("normality_check: need at least 2 values");
  const double n = static_cast<double>(z.size());
  NormalityStats out;
  double sum = 0.0;
  for (double v : z) sum += v;
  out.mean = sum / n;
  double ss = 0.0;
  for (double v : z) ss += (v - out.mean) * (v - out.mean);
  out.variance = ss / (n - 1.0);
  std::sort(z.begin(), z.end());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double cdf = standard_normal_cdf(z[i]);
    const double above = static_cast<double>(i + 1) / n - cdf;
    const double below = cdf - static_cast<double>(i) / n;
    out.ks = std::max({out.ks, above, below});
  }
  return out;
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double density = 0.0;         // count / (N * width)
  double normal_density = 0.0;  // standard normal pdf at the bin centre
};

/// Equal-width bins over [lo, hi); values outside are not counted.
inline std::vector<HistogramBin> histogram(const std::vector<double>& z, int bins, double lo,
                                           double hi) {
  const double width = (hi - lo) / bins;
  std::vector<HistogramBin> out(bins);
  for (int b = 0; b < bins; ++b) {
    out[b].lo = lo + b * width;
    out[b].hi = b + 1 == bins ? hi : lo + (b + 1) * width;
    out[b].normal_density = standard_normal_pdf(0.5 * (out[b].lo + out[b].hi));
  }
  for (double v : z) {
    if (!(v >= lo && v < hi)) continue;
    const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
    ++out[b].count;
  }
  const double total = static_cast<double>(z.size());
  for (auto& bin : out) bin.density = static_cast<double>(bin.count) / (total * width);
  return out;
}

/// Columns: trial, hypothesis, detector, score.
inline void write_scores_csv(std::ostream& out, const ScoreTable& table) {
  out << "trial,hypothesis,detector,score\n";
  const Index trials = table.config.trials;
  for (Index t = 0; t < trials; ++t) {
    for (const char* hyp : {"H0", "H1"}) {
      const bool null = hyp[1] == '0';
      for (const auto& col : table.columns) {
        out << t << ',' << hyp << ',' << to_string(col.kind) << ','
            << csv::format_double(null ? col.h0[t] : col.h1[t]) << '\n';
      }
    }
  }
}

inline void write_roc_csv(std::ostream& out, const RocCurve& roc) {
  out << "fpr,tpr\n";
  for (const auto& pt : roc.points) {
    out << csv::format_double(pt.fpr) << ',' << csv::format_double(pt.tpr) << '\n';
  }
}

}  // namespace hdtest
