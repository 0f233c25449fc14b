#include "tcstab/stability.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tcstab/rng.hpp"

namespace tcstab {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sigma_min(const CMat& A) {
  Eigen::JacobiSVD<CMat> svd(A);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1);
}

double sigma_max(const CMat& A) {
  Eigen::JacobiSVD<CMat> svd(A);
  return svd.singularValues()(0);
}

Mat sqrtm_psd(const Mat& Q) {
  Eigen::SelfAdjointEigenSolver<Mat> es(Q);
  if (es.info() != Eigen::Success) throw numerical_error("sqrtm_psd: eigensolver failed");
  Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

CMat llt_solve(const Eigen::LLT<Mat>& llt, const CMat& B) {
  CMat X(B.rows(), B.cols());
  X.real() = llt.solve(Mat(B.real()));
  X.imag() = llt.solve(Mat(B.imag()));
  return X;
}

}  // namespace

EllipticConstants verify_elliptic_estimates(int k, const RadialGrid& grid, int trials,
                                            std::uint64_t seed) {
  if (k == 0) throw param_error("verify_elliptic_estimates: k must be nonzero");
  if (trials < 1) throw param_error("verify_elliptic_estimates: trials must be positive");
  FlowParams p;
  p.nu = 1.0;
  p.B = 0.0;
  p.R = grid.R;
  const OperatorBundle bundle = assemble_mode_operator(p, k, grid);

  EllipticConstants out;
  out.R = grid.R;
  out.k = k;
  out.n = grid.n;
  out.trials = trials;

  Rng rng(seed);
  const Vec& r = grid.nodes;
  const Vec& w = grid.quad_weights;
  const double ak = std::abs(double(k));
  const double linf_ref = std::sqrt(grid.R / (grid.R - 1.0)) / std::sqrt(ak);
  for (int t = 0; t < trials; ++t) {
    ModeField om;
    om.k = k;
    om.rep = Rep::weighted;
    om.values = rand_field(rng, grid);
    const ModeField phi = solve_stream(om, bundle);
    const CVec dphi = grid.deriv * phi.values;
    const double lhs_sq = wnorm(grid, dphi) * wnorm(grid, dphi) +
                          double(k) * double(k) * wnorm(grid, CVec(phi.values.array() / r.array())) *
                              wnorm(grid, CVec(phi.values.array() / r.array()));
    const double ip = std::abs(inner_product(om.values, phi.values, grid));
    const double n_rom = wnorm(grid, CVec(om.values.array() * r.array()));
    const double l1 = (w.array() * (r.array().sqrt() * om.values.array().abs())).sum();
    const double linf = (r.array().sqrt() * dphi.array().abs()).maxCoeff() +
                        ak * (phi.values.array().abs() / r.array().sqrt()).maxCoeff();
    out.grad_pair = std::max(out.grad_pair, lhs_sq / ip);
    out.pair_rf = std::max(out.pair_rf, ip / (n_rom * n_rom / (ak * ak)));
    out.grad_l1 = std::max(out.grad_l1, lhs_sq / (l1 * l1 / ak));
    out.pointwise = std::max(out.pointwise, linf / (linf_ref * n_rom));
  }
  return out;
}

double axisymmetric_pointwise_constant(const RadialGrid& grid, int trials, std::uint64_t seed) {
  if (trials < 1) throw param_error("axisymmetric_pointwise_constant: trials must be positive");
  FlowParams p;
  p.nu = 1.0;
  p.B = 0.0;
  p.R = grid.R;
  const OperatorBundle bundle = assemble_zero_mode(p, grid);

  Rng rng(seed);
  const Vec& r = grid.nodes;
  const double ref = std::sqrt(grid.R / (grid.R - 1.0)) * (1.0 + std::log(grid.R));
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    ModeField om;
    om.k = 0;
    om.rep = Rep::hat;
    om.values = rand_field(rng, grid).real().cast<cplx>();
    const ModeField phi = solve_stream(om, bundle);
    const double num = (grid.deriv * phi.values).cwiseAbs().maxCoeff();
    const double den = ref * wnorm(grid, CVec(om.values.array() * r.array().pow(1.5)));
    worst = std::max(worst, num / den);
  }
  return worst;
}

ResolventSolution solve_resolvent(const OperatorBundle& bundle, double lambda, const CVec& F) {
  const int n = bundle.grid.n;
  if (F.size() != n) throw param_error("solve_resolvent: forcing has wrong length");
  const int ni = n - 2;

  CMat Z = bundle.L;
  const cplx shift = -I * double(bundle.k) * bundle.params.B * lambda;
  Z.diagonal() += shift * bundle.mass.cast<cplx>();

  const CVec rhs = bundle.mass.cast<cplx>().asDiagonal() * F.segment(1, ni);
  Eigen::PartialPivLU<CMat> lu(Z);
  CVec x = lu.solve(rhs);
  x += lu.solve(CVec(rhs - Z * x));

  ResolventSolution sol;
  sol.omega.k = bundle.k;
  sol.omega.rep = bundle.k == 0 ? Rep::hat : Rep::weighted;
  sol.omega.values = pad(x);
  sol.phi = solve_stream(sol.omega, bundle);
  const double rhs_norm = rhs.norm();
  sol.residual = rhs_norm > 0 ? (Z * x - rhs).norm() / rhs_norm : 0.0;
  return sol;
}

namespace {

double gap_objective(const CMat& Le, double lam) {
  CMat Z = Le;
  Z.diagonal().array() -= cplx(0.0, lam);
  return sigma_min(Z);
}

}  // namespace

SpectralGapResult spectral_gap(const OperatorBundle& bundle, double lambda_lo, double lambda_hi,
                               int lambda_steps) {
  if (lambda_steps < 64) throw param_error("spectral_gap: need at least 64 scan points");
  if (!(lambda_hi > lambda_lo)) throw param_error("spectral_gap: empty scan window");

  SpectralGapResult res;
  res.lambda_lo = lambda_lo;
  res.lambda_hi = lambda_hi;
  res.lambda_steps = lambda_steps;

  // the scan should cover the rotation range of the skew part
  const double kB = double(bundle.k) * bundle.params.B;
  const double wlo = std::min(kB / (bundle.grid.R * bundle.grid.R), kB);
  const double whi = std::max(kB / (bundle.grid.R * bundle.grid.R), kB);
  res.range_warning = lambda_lo > wlo + 1e-12 || lambda_hi < whi - 1e-12;

  std::vector<double> lams(lambda_steps);
  for (int i = 0; i < lambda_steps; ++i)
    lams[i] = lambda_lo + (lambda_hi - lambda_lo) * double(i) / double(lambda_steps - 1);

  double best = std::numeric_limits<double>::infinity();
  int ibest = 0;
  for (int i = 0; i < lambda_steps; ++i) {
    const double s = gap_objective(bundle.Le, lams[i]);
    if (s < best) {
      best = s;
      ibest = i;
    }
  }
  res.psi = best;
  res.argmin_lambda = lams[ibest];

  double a = lams[std::max(0, ibest - 1)];
  double b = lams[std::min(lambda_steps - 1, ibest + 1)];
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = gap_objective(bundle.Le, x1), f2 = gap_objective(bundle.Le, x2);
  for (int it = 0; it < 40; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = gap_objective(bundle.Le, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = gap_objective(bundle.Le, x2);
    }
  }
  if (std::min(f1, f2) < res.psi) {
    res.psi = std::min(f1, f2);
    res.argmin_lambda = f1 < f2 ? x1 : x2;
  }
  return res;
}

SpectralGapResult spectral_gap(const OperatorBundle& bundle, int lambda_steps) {
  const double kB = double(bundle.k) * bundle.params.B;
  const double R = bundle.grid.R;
  const double lo0 = std::min(kB / (R * R), kB);
  const double hi0 = std::max(kB / (R * R), kB);
  const double padw = 0.2 * (hi0 - lo0);
  if (padw > 0.0) return spectral_gap(bundle, lo0 - padw, hi0 + padw, lambda_steps);
  return spectral_gap(bundle, lo0 - 0.5, hi0 + 0.5, lambda_steps);
}

AccretivityReport check_accretivity(const OperatorBundle& bundle, int trials, std::uint64_t seed,
                                    const std::vector<double>& shifts) {
  if (trials < 50) throw param_error("check_accretivity: need at least 50 trials");
  AccretivityReport rep;
  rep.trials = trials;
  rep.min_real = std::numeric_limits<double>::infinity();

  Rng rng(seed);
  const RadialGrid& grid = bundle.grid;
  const int ni = grid.n - 2;
  const double nu = bundle.params.nu;
  const double k2q = double(bundle.k) * double(bundle.k) - 0.25;
  const double kB = double(bundle.k) * bundle.params.B;

  for (int t = 0; t < trials; ++t) {
    const CVec f = rand_field(rng, grid);
    const CVec fi = f.segment(1, ni);
    const cplx q = fi.dot(bundle.L * fi);  // f^H H f
    const CVec df = grid.deriv * f;
    const double nd2 = wnorm(grid, df) * wnorm(grid, df);
    const CVec fr = fi.array() / bundle.r_int.array();
    const double nr2 = (bundle.w_int.array() * fr.array().abs2()).sum();
    const double h1 = nd2 + nr2;
    const double re_exp = nu * (nd2 + k2q * nr2);
    const double im_exp = kB * nr2;
    rep.min_real = std::min(rep.min_real, q.real() / h1);
    rep.max_real_residual = std::max(rep.max_real_residual, std::abs(q.real() - re_exp) / h1);
    rep.max_imag_residual = std::max(rep.max_imag_residual, std::abs(q.imag() - im_exp) / h1);
  }

  for (double lam : shifts) {
    if (!(lam > 0)) throw param_error("check_accretivity: shifts must be positive");
    CMat Z = bundle.Le;
    Z.diagonal().array() += lam;
    rep.shifts.push_back(lam);
    rep.shift_norm.push_back(lam / sigma_min(Z));
  }
  return rep;
}

SemigroupReport semigroup_bound_check(const OperatorBundle& bundle, double psi,
                                      const std::vector<double>& t_grid) {
  if (!(psi > 0)) throw param_error("semigroup_bound_check: psi must be positive");
  SemigroupReport rep;
  for (double t : t_grid) {
    if (t < 0) throw param_error("semigroup_bound_check: negative time");
    const CMat Mt = -t * bundle.Le;
    const CMat E = Mt.exp();
    const double nrm = sigma_max(E);
    const double log_bound = -t * psi + kPi / 2.0;
    const double bound = std::exp(log_bound);
    rep.t.push_back(t);
    rep.norm.push_back(nrm);
    rep.bound.push_back(bound);
    rep.margin.push_back(bound - nrm);
    rep.log_margin.push_back(log_bound - std::log(nrm));
    if (!(nrm <= bound)) rep.all_hold = false;
  }
  return rep;
}

ResolventBoundSample resolvent_bound_constants(const FlowParams& params, int k,
                                               const RadialGrid& grid,
                                               const std::vector<double>& lambda_grid, int trials,
                                               std::uint64_t seed) {
  if (lambda_grid.empty()) throw param_error("resolvent_bound_constants: empty lambda grid");
  if (trials < 1) throw param_error("resolvent_bound_constants: trials must be positive");
  const OperatorBundle bundle = assemble_mode_operator(params, k, grid);
  const int ni = grid.n - 2;
  const double nu = params.nu;
  const double akB = std::abs(double(k) * params.B);
  if (!(akB > 0)) throw param_error("resolvent_bound_constants: need k*B nonzero");
  const double R = grid.R;
  const double ak = std::abs(double(k));
  const double pref2 = R * R * (std::pow(nu / akB, 1.0 / 6.0) * std::sqrt(std::log(R)) + 1.0);

  const Vec wi = grid.quad_weights.segment(1, ni);
  const Vec ri = grid.nodes.segment(1, ni);

  const Mat stiff = grid.deriv.transpose() * grid.quad_weights.asDiagonal() * grid.deriv;
  const Mat Ggrad = stiff.block(1, 1, ni, ni);
  Mat M2 = Mat::Zero(ni, ni);
  M2.diagonal() = (wi.array() / ri.array().square()).matrix();

  const Mat Q1 = std::pow(nu, 4.0 / 3.0) * std::pow(akB, 2.0 / 3.0) * Ggrad +
                 std::pow(nu, 2.0 / 3.0) * std::pow(akB, 4.0 / 3.0) * M2;
  const Mat Q2 = std::pow(nu, 1.0 / 3.0) * std::pow(akB, 5.0 / 3.0) * ak *
                 (Ggrad + double(k) * double(k) * M2);
  const Mat Q3 = nu * nu * (Ggrad + M2) + std::pow(nu, 4.0 / 3.0) * std::pow(akB, 2.0 / 3.0) * M2;
  const Mat Q4 = nu * akB * (Ggrad + double(k) * double(k) * M2);

  const CMat sq1 = sqrtm_psd(Q1).cast<cplx>();
  const CMat sq2 = sqrtm_psd(Q2).cast<cplx>();
  const CMat sq3 = sqrtm_psd(Q3).cast<cplx>();
  const CMat sq4 = sqrtm_psd(Q4).cast<cplx>();

  // input geometries: F = In z with z Euclidean unit ball
  CMat in_rf = CMat::Zero(ni, ni);
  in_rf.diagonal() = (1.0 / (ri.array() * wi.array().sqrt())).matrix().cast<cplx>();
  const Mat kchol = grid.h1_llt.matrixL();
  const CMat in_dual = (wi.cwiseInverse().asDiagonal() * kchol).cast<cplx>();

  CMat Mc = CMat::Zero(ni, ni);
  Mc.diagonal() = bundle.mass.cast<cplx>();

  ResolventBoundSample out;
  out.nu = nu;

  Rng rng(seed);
  for (double lam : lambda_grid) {
    CMat Z = bundle.L;
    Z.diagonal() -= (I * double(k) * params.B * lam) * bundle.mass.cast<cplx>();
    Eigen::PartialPivLU<CMat> zlu(Z);

    const CMat S = zlu.solve(Mc);
    const CMat P = -llt_solve(bundle.elliptic_llt, CMat(bundle.mass.cast<cplx>().asDiagonal() * S));

    const double s1 = sigma_max(CMat(sq1 * S * in_rf));
    const double s2 = sigma_max(CMat(sq2 * P * in_rf)) / pref2;
    const double s3 = sigma_max(CMat(sq3 * S * in_dual));
    const double s4 = sigma_max(CMat(sq4 * P * in_dual)) / (R * R);
    const double vals[4] = {s1, s2, s3, s4};
    for (int j = 0; j < 4; ++j)
      if (vals[j] > out.worst[j]) {
        out.worst[j] = vals[j];
        out.argmin_lambda[j] = lam;
      }

    // randomized lower estimates through the same solves
    for (int t = 0; t < trials; ++t) {
      const CVec F = rand_field(rng, grid);
      const CVec rhs = bundle.mass.cast<cplx>().asDiagonal() * F.segment(1, ni);
      const CVec om_i = zlu.solve(rhs);
      ModeField om;
      om.k = k;
      om.rep = Rep::weighted;
      om.values = pad(om_i);
      const ModeField ph = solve_stream(om, bundle);

      const double n_dom = wnorm(grid, CVec(grid.deriv * om.values));
      const double n_omr = wnorm(grid, CVec(om.values.array() / grid.nodes.array()));
      const double n_dph = wnorm(grid, CVec(grid.deriv * ph.values));
      const double n_phr = wnorm(grid, CVec(ph.values.array() / grid.nodes.array()));
      const double n_rf = wnorm(grid, CVec(F.array() * grid.nodes.array()));
      const double n_dual = h1r_dual(F, grid);
      const double n_h1 = std::sqrt(n_dom * n_dom + n_omr * n_omr);

      const double e1 = (std::pow(nu, 2.0 / 3.0) * std::pow(akB, 1.0 / 3.0) * n_dom +
                         std::pow(nu, 1.0 / 3.0) * std::pow(akB, 2.0 / 3.0) * n_omr) /
                        n_rf;
      const double e2 = std::pow(nu, 1.0 / 6.0) * std::pow(akB, 5.0 / 6.0) * std::sqrt(ak) *
                        (n_dph + ak * n_phr) / (pref2 * n_rf);
      const double e3 = (nu * n_h1 + std::pow(nu, 2.0 / 3.0) * std::pow(akB, 1.0 / 3.0) * n_omr) /
                        n_dual;
      const double e4 =
          std::sqrt(nu) * std::sqrt(akB) * (n_dph + ak * n_phr) / (R * R * n_dual);
      const double est[4] = {e1, e2, e3, e4};
      for (int j = 0; j < 4; ++j) out.worst_sampled[j] = std::max(out.worst_sampled[j], est[j]);
    }
  }
  return out;
}

ResolventBoundSweep verify_resolvent_bounds(const FlowParams& base, int k, const RadialGrid& grid,
                                            const std::vector<double>& nus,
                                            const std::vector<double>& lambda_grid, int trials,
                                            std::uint64_t seed) {
  if (nus.size() < 4) throw param_error("verify_resolvent_bounds: need at least 4 viscosities");
  ResolventBoundSweep sweep;
  std::array<std::vector<double>, 4> series;
  for (double nu : nus) {
    FlowParams p = base;
    p.nu = nu;
    // same seed at every nu so the sampled forcings pair up across the sweep
    sweep.samples.push_back(resolvent_bound_constants(p, k, grid, lambda_grid, trials, seed));
    for (int j = 0; j < 4; ++j) series[j].push_back(sweep.samples.back().worst[j]);
  }
  std::vector<double> nus_copy(nus.begin(), nus.end());
  for (int j = 0; j < 4; ++j) sweep.fits[j] = fit_scaling(nus_copy, series[j]);
  return sweep;
}

std::vector<double> default_lambda_grid(double R, int count) {
  if (count < 2) throw param_error("default_lambda_grid: need at least 2 points");
  std::vector<double> out(count);
  const double lo = 1.0 / (R * R) - 0.1, hi = 1.1;
  for (int i = 0; i < count; ++i) out[i] = lo + (hi - lo) * double(i) / double(count - 1);
  return out;
}

}  // namespace tcstab
