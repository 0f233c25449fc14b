#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tcstab/types.hpp"

namespace tcstab {

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (log x, log y)
  int dropped = 0;                                // nonpositive pairs skipped
};

// least squares on (log x, log y); needs at least 4 usable points.
// Nonpositive values cannot be log'd and are filtered out (counted in dropped).
ScalingFit fit_scaling(const std::vector<double>& x, const std::vector<double>& y);

enum class Outcome { stable, growth, inconclusive };

struct ThresholdResult {
  std::vector<double> nu_values;
  std::vector<double> eps_star;
  std::vector<double> bracket_lo, bracket_hi;
  std::vector<bool> point_ok;
  double fitted_alpha = 0.0;
  double fit_r_squared = 0.0;
  bool conclusive = false;
  std::vector<std::string> notes;
};

// Per nu: verify the bracket actually flips (stable at eps_lo, not stable at
// eps_hi), widening by 10x up to 3 times on each side if it does not, then
// bisect in log eps until the bracket is narrower than rel_width.  The final
// exponent comes from a log-log fit of eps_star against nu.
ThresholdResult threshold_bisect(const std::vector<double>& nus, double eps_lo, double eps_hi,
                                 const std::function<Outcome(double nu, double eps)>& verdict,
                                 double rel_width = 0.05);

}  // namespace tcstab
