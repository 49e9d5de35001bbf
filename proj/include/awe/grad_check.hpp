#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace awe {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Central differences of `loss` with respect to every entry of `values`,
/// perturbing in place and restoring each entry afterwards.
template <typename Loss>
std::vector<double> central_differences(std::span<double> values, Loss&& loss, double step = 1e-5) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = loss();
    values[i] = saved - step;
    const double down = loss();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps entries whose
/// true derivative is zero from dividing round-off by round-off.
inline GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                         double floor = 1e-6) {
  GradCheckResult r;
  const std::size_t n = std::min(analytic.size(), numeric.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    const double err = std::abs(analytic[i] - numeric[i]) / denom;
    if (i == 0 || err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_index = i;
      r.worst_analytic = analytic[i];
      r.worst_numeric = numeric[i];
    }
  }
  r.checked = n;
  return r;
}

}  // namespace awe
