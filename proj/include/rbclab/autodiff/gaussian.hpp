#pragma once

#include <cmath>

namespace rbclab::autodiff {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112353;

/// Canonical diagonal-Gaussian log density. The elementwise tensor op and
/// the scalar acting path both evaluate exactly this expression, so the
/// behavior log-probability recorded during rollout is bit-identical to the
/// recomputation at update time.
inline double gaussian_logpdf_scalar(double x, double mean, double log_std) {
  const double inv_std = std::exp(-log_std);
  const double z = (x - mean) * inv_std;
  return -0.5 * z * z - log_std - 0.5 * kLog2Pi;
}

}  // namespace rbclab::autodiff
