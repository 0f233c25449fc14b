#include "tcstab/evolution.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "tcstab/stability.hpp"

namespace tcstab {

namespace {

struct LineFit {
  double slope = 0, intercept = 0, r2 = 0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const int m = static_cast<int>(x.size());
  double mx = 0, my = 0;
  for (int i = 0; i < m; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw param_error("fit_line: degenerate abscissa");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = syy - f.slope * sxy;
  f.r2 = syy > 0 ? 1.0 - std::max(0.0, ss_res) / syy : 1.0;
  return f;
}

CVec eval_profile(const std::function<CVec(double)>& f, double t, int n, const char* what) {
  CVec v = f(t);
  if (v.size() != n) throw param_error(std::string(what) + ": profile has wrong length");
  return v;
}

}  // namespace

Vec default_g(const Vec& r) { return r.array().sqrt().inverse(); }

Vec default_dg(const Vec& r) { return -0.5 * r.array().pow(-1.5); }

double WeightParams::rate(const FlowParams& p, int k) const {
  return c_prime * std::cbrt(p.nu * double(k) * double(k)) *
         std::pow(std::abs(p.B), 2.0 / 3.0) / (p.R * p.R);
}

LinearEvolver::LinearEvolver(const OperatorBundle& bundle, double dt) : dt_(dt) {
  if (!(dt > 0)) throw param_error("LinearEvolver: dt must be positive");
  n_ = bundle.grid.n;
  mass_ = bundle.mass;
  const int ni = static_cast<int>(mass_.size());
  CMat lhs = bundle.L * (0.5 * dt);
  lhs.diagonal() += mass_.cast<cplx>();
  rhsm_ = bundle.L * (-0.5 * dt);
  rhsm_.diagonal() += mass_.cast<cplx>();
  lhs_.compute(lhs);
  if (!lhs_.matrixLU().allFinite()) throw numerical_error("LinearEvolver: factorization failed");
  (void)ni;
}

CVec LinearEvolver::step(const CVec& x_int, const CVec& f_half) const {
  CVec rhs = rhsm_ * x_int;
  if (f_half.size() == n_) {
    rhs += dt_ * (mass_.cast<cplx>().array() * interior(f_half).array()).matrix();
  } else if (f_half.size() != 0) {
    throw param_error("LinearEvolver::step: forcing has wrong length");
  }
  return lhs_.solve(rhs);
}

ModeField step_linear(const ModeField& state, const OperatorBundle& bundle,
                      const ForcingSpec& forcing, double t, double dt) {
  if (!(dt > 0)) throw param_error("step_linear: dt must be positive");
  if (state.k != bundle.k) throw param_error("step_linear: mode index mismatch");
  const Rep want = bundle.k == 0 ? Rep::hat : Rep::weighted;
  if (state.rep != want)
    throw param_error("step_linear: state representation does not match the bundle");
  const int n = bundle.grid.n;
  if (state.values.size() != n) throw param_error("step_linear: state has wrong length");

  LinearEvolver ev(bundle, dt);
  const double th = t + 0.5 * dt;
  CVec fh;
  if (!forcing.empty()) {
    fh = CVec::Zero(n);
    if (forcing.h1) fh += eval_profile(forcing.h1, th, n, "step_linear h1");
    if (forcing.h2) {
      Vec gv = forcing.g ? forcing.g(bundle.grid.nodes) : default_g(bundle.grid.nodes);
      CVec dh2 = bundle.grid.deriv * eval_profile(forcing.h2, th, n, "step_linear h2");
      fh -= (gv.cast<cplx>().array() * dh2.array()).matrix();
    }
  }
  CVec xi = ev.step(interior(state.values), fh);
  return ModeField{state.k, want, pad(xi)};
}

DecayMeasurement measure_decay_rate(const OperatorBundle& bundle, const ModeField& init,
                                    double horizon, int nsnap) {
  if (bundle.k == 0) throw param_error("measure_decay_rate: needs a nonzero mode");
  if (!(horizon > 0)) throw param_error("measure_decay_rate: horizon must be positive");
  if (nsnap < 8) throw param_error("measure_decay_rate: too few snapshots");
  if (init.k != bundle.k || init.rep != Rep::weighted)
    throw param_error("measure_decay_rate: init must be the weighted mode of the bundle");
  if (init.values.size() != bundle.grid.n)
    throw param_error("measure_decay_rate: init has wrong length");

  DecayMeasurement out;
  out.psi = spectral_gap(bundle).psi;
  out.horizon = horizon;
  if (horizon * out.psi < 5.0 - 1e-12)
    throw param_error("measure_decay_rate: horizon covers fewer than five gap e-folds");

  CVec y = (bundle.w_int.array().sqrt().cast<cplx>() * interior(init.values).array()).matrix();
  double nrm = y.norm();
  if (!(nrm > 0)) throw param_error("measure_decay_rate: zero initial state");

  const double ds = horizon / nsnap;
  CMat Mt = (-ds) * bundle.Le;
  CMat Et = Mt.exp();
  out.t.push_back(0.0);
  out.log_norm.push_back(std::log(nrm));
  for (int i = 1; i <= nsnap; ++i) {
    y = Et * y;
    nrm = y.norm();
    if (!(nrm > 1e-280)) {
      out.window_shortened = true;
      break;
    }
    out.t.push_back(i * ds);
    out.log_norm.push_back(std::log(nrm));
  }
  const double t_eff = out.t.back();
  std::vector<double> tx, ty;
  for (size_t i = 0; i < out.t.size(); ++i) {
    if (out.t[i] >= 0.5 * t_eff - 1e-12) {
      tx.push_back(out.t[i]);
      ty.push_back(out.log_norm[i]);
    }
  }
  if (tx.size() < 3) throw numerical_error("measure_decay_rate: tail window collapsed");
  LineFit f = fit_line(tx, ty);
  out.rate = -f.slope;
  out.fit_r_squared = f.r2;
  return out;
}

SpaceTimeLedger recompute_ledger(const SpaceTimeLedger& src) {
  SpaceTimeLedger out = src;
  out.sup_l2 = 0;
  out.int_l2 = out.int_grad = out.int_mr = 0;
  out.int_phig = out.int_phim = out.int_phiinf = 0;
  out.int_rf1 = out.int_f2 = 0;
  const size_t m = src.rows.size();
  for (size_t i = 0; i < m; ++i) {
    const auto& row = src.rows[i];
    const double wgt = (i == 0 || i + 1 == m) ? 0.5 * src.dt : src.dt;
    const double E = std::exp(src.rate * row[0]);
    out.sup_l2 = std::max(out.sup_l2, E * row[1]);
    out.int_l2 += wgt * (E * row[1]) * (E * row[1]);
    out.int_grad += wgt * (E * row[2]) * (E * row[2]);
    out.int_mr += wgt * (E * row[3]) * (E * row[3]);
    out.int_phig += wgt * (E * row[4]) * (E * row[4]);
    out.int_phim += wgt * (E * row[5]) * (E * row[5]);
    out.int_phiinf += wgt * (E * row[6]) * (E * row[6]);
    out.int_rf1 += wgt * (E * row[7]) * (E * row[7]);
    out.int_f2 += wgt * (E * row[8]) * (E * row[8]);
  }
  return out;
}

SpaceTimeLedger evolve_mode_ledger(const OperatorBundle& bundle, const CVec& init,
                                   const ForcingSpec& forcing, double rate, double T, double dt,
                                   bool want_phi, const SnapshotSink& sink, int sink_stride,
                                   CVec* final_state) {
  const RadialGrid& grid = bundle.grid;
  const int n = grid.n;
  if (!(T > 0) || !(dt > 0)) throw param_error("evolve_mode_ledger: T and dt must be positive");
  if (init.size() != n) throw param_error("evolve_mode_ledger: init has wrong length");
  if (sink_stride < 1) throw param_error("evolve_mode_ledger: sink stride must be positive");

  int nst = static_cast<int>(std::ceil(T / dt - 1e-9));
  nst = std::max(nst, 1);
  const double h = T / nst;

  LinearEvolver ev(bundle, h);
  const Rep rep = bundle.k == 0 ? Rep::hat : Rep::weighted;
  const Vec& r = grid.nodes;
  Vec gv, wfac;
  if (forcing.h2) {
    gv = forcing.g ? forcing.g(r) : default_g(r);
    Vec dgv = forcing.dg ? forcing.dg(r) : default_dg(r);
    if (gv.size() != n || dgv.size() != n)
      throw param_error("evolve_mode_ledger: weight profile has wrong length");
    wfac = gv.cwiseAbs() + (r.array() * dgv.array().abs()).matrix();
  }

  SpaceTimeLedger lg;
  lg.T = T;
  lg.dt = h;
  lg.rate = rate;
  lg.steps = nst;
  lg.rows.reserve(nst + 1);

  auto sample = [&](double t, const CVec& xi, double wgt) {
    CVec xf = pad(xi);
    const double l2 = wnorm(grid, xf);
    const double nd = wnorm(grid, CVec(grid.deriv * xf));
    const double nm = wnorm(grid, CVec(xf.array() / r.array().cast<cplx>()));
    double pgv = 0, pmv = 0, pinf = 0;
    if (want_phi) {
      ModeField phi = solve_stream(ModeField{bundle.k, rep, xf}, bundle);
      pgv = wnorm(grid, CVec(grid.deriv * phi.values));
      pmv = wnorm(grid, CVec(phi.values.array() / r.array().cast<cplx>()));
      pinf = (phi.values.cwiseAbs().array() / r.array().sqrt()).maxCoeff();
    }
    double f1n = 0, f2n = 0;
    if (forcing.h1) {
      CVec h1v = eval_profile(forcing.h1, t, n, "evolve_mode_ledger h1");
      f1n = wnorm(grid, CVec(h1v.array() * r.array().cast<cplx>()));
    }
    if (forcing.h2) {
      CVec h2v = eval_profile(forcing.h2, t, n, "evolve_mode_ledger h2");
      f2n = wnorm(grid, CVec(h2v.array() * wfac.array().cast<cplx>()));
    }
    const double E = std::exp(rate * t);
    lg.sup_l2 = std::max(lg.sup_l2, E * l2);
    lg.int_l2 += wgt * (E * l2) * (E * l2);
    lg.int_grad += wgt * (E * nd) * (E * nd);
    lg.int_mr += wgt * (E * nm) * (E * nm);
    lg.int_phig += wgt * (E * pgv) * (E * pgv);
    lg.int_phim += wgt * (E * pmv) * (E * pmv);
    lg.int_phiinf += wgt * (E * pinf) * (E * pinf);
    lg.int_rf1 += wgt * (E * f1n) * (E * f1n);
    lg.int_f2 += wgt * (E * f2n) * (E * f2n);
    lg.rows.push_back({t, l2, nd, nm, pgv, pmv, pinf, f1n, f2n});
  };

  CVec x = interior(init);
  sample(0.0, x, 0.5 * h);
  if (sink) sink(0.0, pad(x));
  for (int i = 1; i <= nst; ++i) {
    const double th = (i - 0.5) * h;
    CVec fh;
    if (!forcing.empty()) {
      fh = CVec::Zero(n);
      if (forcing.h1) fh += eval_profile(forcing.h1, th, n, "evolve_mode_ledger h1");
      if (forcing.h2) {
        CVec dh2 = grid.deriv * eval_profile(forcing.h2, th, n, "evolve_mode_ledger h2");
        fh -= (gv.cast<cplx>().array() * dh2.array()).matrix();
      }
    }
    x = ev.step(x, fh);
    if (!x.allFinite()) throw numerical_error("evolve_mode_ledger: state left the finite range");
    sample(i * h, x, i == nst ? 0.5 * h : h);
    if (sink && (i % sink_stride == 0 || i == nst)) sink(i * h, pad(x));
  }
  if (final_state) *final_state = pad(x);
  return lg;
}

namespace {

// regime selection shared by the two space-time verifiers
bool pick_regime(const FlowParams& params, int k, Regime expect, const char* who) {
  const double nk2 = params.nu * double(k) * double(k);
  const double absB = std::abs(params.B);
  if (expect == Regime::enhanced && nk2 > absB)
    throw param_error(std::string(who) + ": regime mismatch, nu k^2 exceeds |B|");
  if (expect == Regime::heat_dominated && nk2 < absB)
    throw param_error(std::string(who) + ": regime mismatch, |B| exceeds nu k^2");
  if (expect == Regime::enhanced) return false;
  if (expect == Regime::heat_dominated) return true;
  return nk2 > absB;
}

struct EvolveSetup {
  OperatorBundle bundle;
  double psi = 0, rate = 0, T = 0, dt = 0;
};

EvolveSetup prepare_evolution(const FlowParams& params, int k, const RadialGrid& grid,
                              const WeightParams& weight, double T_mult) {
  EvolveSetup s;
  s.bundle = assemble_mode_operator(params, k, grid);
  s.psi = spectral_gap(s.bundle).psi;
  if (!(s.psi > 0)) throw numerical_error("space-time verifier: nonpositive spectral gap");
  s.rate = weight.rate(params, k);
  if (s.rate >= s.psi)
    throw param_error("space-time verifier: weight rate must stay below the spectral gap");
  s.T = T_mult / s.psi;
  s.dt = 0.05 / s.psi;
  const double akB = std::abs(double(k) * params.B);
  if (akB > 0) s.dt = std::min(s.dt, 0.1 / akB);
  return s;
}

}  // namespace

SpaceTimeReport verify_spacetime_vorticity(const FlowParams& params, int k,
                                           const RadialGrid& grid, const CVec& init,
                                           const ForcingSpec& forcing, const WeightParams& weight,
                                           double T_mult, Regime expect) {
  params.validate();
  if (k == 0) throw param_error("verify_spacetime_vorticity: k must be nonzero");
  if (init.size() != grid.n) throw param_error("verify_spacetime_vorticity: init has wrong length");

  const double nu = params.nu, R = params.R;
  const double absB = std::abs(params.B);
  const double nk2 = nu * double(k) * double(k);
  const double akB = std::abs(double(k) * params.B);
  const bool hd = pick_regime(params, k, expect, "verify_spacetime_vorticity");
  if (!hd && std::log(R) > std::cbrt(absB / nu) + 1e-12)
    throw param_error("verify_spacetime_vorticity: mixing branch requires log R <= (|B|/nu)^{1/3}");

  EvolveSetup s = prepare_evolution(params, k, grid, weight, T_mult);
  SpaceTimeReport rep;
  rep.heat_dominated = hd;
  rep.psi = s.psi;
  rep.ledger = evolve_mode_ledger(s.bundle, init, forcing, s.rate, s.T, s.dt, true, nullptr, 1,
                                  &rep.final_state);

  const Vec& r = grid.nodes;
  auto rr = r.array().cast<cplx>();
  const double i_l2 = wnorm(grid, init);
  const double i_r2 = wnorm(grid, CVec(init.array() * rr * rr));
  const double i_r3 = wnorm(grid, CVec(init.array() / (rr * rr * rr)));
  const double i_gr = wnorm(grid, CVec(grid.deriv * init));
  const double i_mr = wnorm(grid, CVec(init.array() / rr));
  const double logR = std::log(R);

  const SpaceTimeLedger& lg = rep.ledger;
  const double sup = lg.sup_l2;
  const double l2t = std::sqrt(lg.int_l2), grt = std::sqrt(lg.int_grad),
               mrt = std::sqrt(lg.int_mr);
  const double pgt = std::sqrt(lg.int_phig), pmt = std::sqrt(lg.int_phim);
  const double rf1 = std::sqrt(lg.int_rf1), ff2 = std::sqrt(lg.int_f2);

  if (!hd) {
    rep.lhs = sup + std::pow(nk2, 1.0 / 6.0) * std::cbrt(absB) / R * l2t + std::sqrt(nu) * grt +
              std::sqrt(nk2) * mrt +
              std::sqrt(absB) / (R * R) * (std::abs(double(k)) * pgt + double(k) * double(k) * pmt);
    rep.rhs = i_l2 + std::pow(logR, -1.5) / (R * R) * i_r2 + R * R * R * i_r3 +
              std::cbrt(nu / akB) * R * i_gr + R * std::pow(nk2 / absB, 2.0 / 3.0) * i_mr +
              std::pow(nu, -1.0 / 6.0) * std::pow(akB, -1.0 / 3.0) * rf1 +
              std::pow(nu, -0.5) * ff2;
  } else {
    rep.lhs = sup + std::sqrt(nu) * grt + std::sqrt(nk2) * mrt +
              std::sqrt(nk2) / (R * R) *
                  (std::abs(double(k)) * pgt + double(k) * double(k) * pmt);
    rep.rhs = i_l2 + std::pow(nu, -0.5) / std::abs(double(k)) * rf1 + std::pow(nu, -0.5) * ff2;
  }
  rep.ratio = rep.rhs > 0 ? rep.lhs / rep.rhs : 0.0;
  return rep;
}

SpaceTimeReport verify_spacetime_temperature(const FlowParams& params, int k,
                                             const RadialGrid& grid, const CVec& init,
                                             const ForcingSpec& forcing,
                                             const WeightParams& weight, double T_mult,
                                             Regime expect) {
  params.validate();
  if (k == 0) throw param_error("verify_spacetime_temperature: k must be nonzero");
  if (init.size() != grid.n)
    throw param_error("verify_spacetime_temperature: init has wrong length");

  const double nu = params.nu, R = params.R;
  const double absB = std::abs(params.B);
  const double nk2 = nu * double(k) * double(k);
  const bool hd = pick_regime(params, k, expect, "verify_spacetime_temperature");

  EvolveSetup s = prepare_evolution(params, k, grid, weight, T_mult);

  // squared mixing-branch combination; sum-form diffusive branch
  auto lhs_of = [&](const SpaceTimeLedger& lg) {
    if (!hd)
      return lg.sup_l2 * lg.sup_l2 +
             std::cbrt(nk2) * std::pow(absB, 2.0 / 3.0) / (R * R) * lg.int_l2 +
             nu * lg.int_grad + nk2 * lg.int_mr;
    return lg.sup_l2 + std::sqrt(nu) * std::sqrt(lg.int_grad) +
           std::sqrt(nk2) * std::sqrt(lg.int_mr);
  };
  auto rhs_init_of = [&](double init_l2) {
    if (!hd) return init_l2 * init_l2;
    return init_l2;
  };
  auto rhs_force_of = [&](const SpaceTimeLedger& lg) {
    if (!hd)
      return std::pow(nk2, -1.0 / 3.0) * std::pow(absB, -2.0 / 3.0) * lg.int_rf1 +
             lg.int_f2 / nu;
    return std::pow(nu, -0.5) / std::abs(double(k)) * std::sqrt(lg.int_rf1) +
           std::pow(nu, -0.5) * std::sqrt(lg.int_f2);
  };

  SpaceTimeReport rep;
  rep.heat_dominated = hd;
  rep.psi = s.psi;
  rep.ledger = evolve_mode_ledger(s.bundle, init, forcing, s.rate, s.T, s.dt, false, nullptr, 1,
                                  &rep.final_state);

  const double i_l2 = wnorm(grid, init);
  rep.lhs = lhs_of(rep.ledger);
  rep.rhs = rhs_init_of(i_l2) + rhs_force_of(rep.ledger);
  rep.ratio = rep.rhs > 0 ? rep.lhs / rep.rhs : 0.0;

  const bool has_init = init.norm() > 0;
  const bool has_force = !forcing.empty();
  if (has_init && has_force) {
    SpaceTimeLedger lg_h =
        evolve_mode_ledger(s.bundle, init, ForcingSpec{}, s.rate, s.T, s.dt, false);
    SpaceTimeLedger lg_f =
        evolve_mode_ledger(s.bundle, CVec::Zero(grid.n), forcing, s.rate, s.T, s.dt, false);
    rep.homog_ratio = lhs_of(lg_h) / rhs_init_of(i_l2);
    const double fr = rhs_force_of(lg_f);
    rep.forced_ratio = fr > 0 ? lhs_of(lg_f) / fr : 0.0;
    double slack = 0.0;
    auto upd = [&](double full, double part_h, double part_f) {
      slack = std::max(slack, full - part_h - part_f);
    };
    upd(rep.ledger.sup_l2, lg_h.sup_l2, lg_f.sup_l2);
    upd(std::sqrt(rep.ledger.int_l2), std::sqrt(lg_h.int_l2), std::sqrt(lg_f.int_l2));
    upd(std::sqrt(rep.ledger.int_grad), std::sqrt(lg_h.int_grad), std::sqrt(lg_f.int_grad));
    upd(std::sqrt(rep.ledger.int_mr), std::sqrt(lg_h.int_mr), std::sqrt(lg_f.int_mr));
    rep.triangle_slack = slack;
    rep.split_ran = true;
  } else if (has_init) {
    rep.homog_ratio = rep.ratio;
  } else if (has_force) {
    rep.forced_ratio = rep.ratio;
  }
  return rep;
}

}  // namespace tcstab
