#include "tcstab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tcstab {

ScalingFit fit_scaling(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw param_error("fit_scaling: size mismatch");
  ScalingFit out;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i])) {
      ++out.dropped;
      continue;
    }
    out.points.emplace_back(std::log(x[i]), std::log(y[i]));
  }
  const size_t m = out.points.size();
  if (m < 4) throw param_error("fit_scaling: need at least 4 positive points");

  double sx = 0, sy = 0;
  for (auto& p : out.points) {
    sx += p.first;
    sy += p.second;
  }
  const double mx = sx / double(m), my = sy / double(m);
  double sxx = 0, sxy = 0;
  for (auto& p : out.points) {
    sxx += (p.first - mx) * (p.first - mx);
    sxy += (p.first - mx) * (p.second - my);
  }
  if (sxx <= 0.0) throw param_error("fit_scaling: degenerate abscissa");
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  double ss_res = 0, ss_tot = 0;
  for (auto& p : out.points) {
    const double pred = out.intercept + out.slope * p.first;
    ss_res += (p.second - pred) * (p.second - pred);
    ss_tot += (p.second - my) * (p.second - my);
  }
  out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return out;
}

namespace {

std::string fmt_note(const char* fmt, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return std::string(buf);
}

}  // namespace

ThresholdResult threshold_bisect(const std::vector<double>& nus, double eps_lo, double eps_hi,
                                 const std::function<Outcome(double nu, double eps)>& verdict,
                                 double rel_width) {
  if (nus.empty()) throw param_error("threshold_bisect: empty nu list");
  if (!(eps_lo > 0.0) || !(eps_hi > eps_lo)) throw param_error("threshold_bisect: bad bracket");
  if (!(rel_width > 0.0)) throw param_error("threshold_bisect: bad rel_width");
  if (!verdict) throw param_error("threshold_bisect: missing verdict callback");

  ThresholdResult res;
  for (double nu : nus) {
    double lo = eps_lo, hi = eps_hi;
    bool ok = true;

    // anchor the low end at a stable verdict
    int widen = 0;
    while (verdict(nu, lo) != Outcome::stable && widen < 3) {
      lo /= 10.0;
      ++widen;
    }
    if (verdict(nu, lo) != Outcome::stable) {
      res.notes.push_back(fmt_note("nu=%g: no stable anchor down to eps=%g", nu, lo));
      ok = false;
    }
    // anchor the high end at a non-stable verdict
    widen = 0;
    while (ok && verdict(nu, hi) == Outcome::stable && widen < 3) {
      hi *= 10.0;
      ++widen;
    }
    if (ok && verdict(nu, hi) == Outcome::stable) {
      res.notes.push_back(fmt_note("nu=%g: still stable at eps=%g", nu, hi));
      ok = false;
    }
    if (hi <= lo) ok = false;

    if (ok) {
      while (hi / lo - 1.0 > rel_width) {
        const double mid = std::sqrt(lo * hi);
        if (verdict(nu, mid) == Outcome::stable)
          lo = mid;
        else
          hi = mid;
      }
    }
    res.nu_values.push_back(nu);
    res.bracket_lo.push_back(lo);
    res.bracket_hi.push_back(hi);
    res.eps_star.push_back(ok ? std::sqrt(lo * hi) : 0.0);
    res.point_ok.push_back(ok);
  }

  std::vector<double> fx, fy;
  for (size_t i = 0; i < res.nu_values.size(); ++i)
    if (res.point_ok[i]) {
      fx.push_back(res.nu_values[i]);
      fy.push_back(res.eps_star[i]);
    }
  if (fx.size() >= 4) {
    const ScalingFit f = fit_scaling(fx, fy);
    res.fitted_alpha = f.slope;
    res.fit_r_squared = f.r_squared;
    res.conclusive = true;
  } else {
    res.notes.push_back("fewer than 4 conclusive thresholds, no exponent fit");
    res.conclusive = false;
  }
  return res;
}

}  // namespace tcstab
