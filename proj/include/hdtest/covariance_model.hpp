#pragma once

#include <cstdint>

#include "hdtest/spectral.hpp"

namespace hdtest {

/// Diagonal population covariance used by the simulation protocol.
struct CovarianceModel {
  Vector diag;
  int order = 0;           // P: the spike block spans 10^P down to 10^(P/40)
  std::uint64_t seed = 0;  // seed of the uniform perturbation draws
  bool truncated = false;  // spike block cut short because p <= 40

  Index dimension() const noexcept { return diag.size(); }
  SymMatrix matrix() const { return SymMatrix::diagonal(diag); }
};

}  // namespace hdtest
