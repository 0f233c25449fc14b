#include "tcstab/nonlinear.hpp"

#include <algorithm>
#include <cmath>

namespace tcstab {

namespace {

double sq(double v) { return v * v; }

// buoyancy mean acting on the axisymmetric vorticity (hat representation);
// the stored +-1 rows rotate back to hats with the same phase pairing as buoyancy_rhs
CVec axi_buoyancy(const ModeArray& rho, double t, const FlowParams& params,
                  const RadialGrid& grid) {
  auto sqc = grid.nodes.array().sqrt().cast<cplx>();
  auto rc = grid.nodes.array().cast<cplx>();
  const cplx ep = std::exp(cplx(0.0, params.A * t));
  CVec r1 = (weighted_mode(rho, 1, grid).array() / sqc).matrix();
  CVec rm1 = (weighted_mode(rho, -1, grid).array() / sqc).matrix();
  CVec s = std::conj(ep) * r1 + ep * rm1;
  CVec out = 0.5 * (grid.deriv * s);
  out += 0.5 * CVec((s.array() / rc).matrix());
  return params.g_scale * out;
}

void check_stack(const ModeArray& a, const RadialGrid& grid, const char* who) {
  if (a.n != grid.n || a.modes.rows() != a.K + 1 || a.modes.cols() != a.n)
    throw param_error(std::string(who) + ": stack shape does not match the grid");
}

}  // namespace

CVec weighted_mode(const ModeArray& a, int k, const RadialGrid& grid) {
  const int ak = std::abs(k);
  if (ak > a.K) return CVec::Zero(a.n);
  CVec v;
  if (ak == 0) {
    v = (grid.nodes.array().sqrt().cast<cplx>() * a.modes.row(0).transpose().array()).matrix();
  } else {
    v = a.modes.row(ak).transpose();
  }
  if (k < 0) return v.conjugate();
  return v;
}

double reality_drift(const SimState& state) {
  double d = 0;
  if (state.omega.modes.size() > 0)
    d = state.omega.modes.row(0).imag().cwiseAbs().maxCoeff();
  if (state.rho.modes.size() > 0)
    d = std::max(d, state.rho.modes.row(0).imag().cwiseAbs().maxCoeff());
  return d;
}

CVec buoyancy_rhs(const ModeArray& rho, int k, double t, const FlowParams& params,
                  const RadialGrid& grid) {
  check_stack(rho, grid, "buoyancy_rhs");
  const Vec& r = grid.nodes;
  auto sqc = r.array().sqrt().cast<cplx>();
  auto rc = r.array().cast<cplx>();
  const cplx ep = std::exp(cplx(0.0, params.A * t));
  const cplx em = std::conj(ep);

  CVec lo = weighted_mode(rho, k - 1, grid);
  CVec hi = weighted_mode(rho, k + 1, grid);
  CVec dlo = grid.deriv * CVec((lo.array() / sqc).matrix());
  CVec dhi = grid.deriv * CVec((hi.array() / sqc).matrix());

  CVec out = (0.5 * ep) * CVec((sqc * dlo.array()).matrix());
  out += (0.5 * em) * CVec((sqc * dhi.array()).matrix());
  out += (em * (0.5 * (k + 1))) * CVec((hi.array() / rc).matrix());
  out -= (ep * (0.5 * (k - 1))) * CVec((lo.array() / rc).matrix());
  return params.g_scale * out;
}

namespace {

// weighted mode k of the Jacobian (1/r)(d_r phi d_theta x - d_theta phi d_r x).
// Derivatives act on single-mode hat profiles only; products stay nodal.
CVec transport_mode(const ModeArray& x, const ModeArray& phi, int k, const RadialGrid& grid) {
  const int n = x.n;
  const Vec& r = grid.nodes;
  auto sqc = r.array().sqrt().cast<cplx>();
  CVec acc = CVec::Zero(n);
  for (int l = -phi.K; l <= phi.K; ++l) {
    const int m = k - l;
    if (std::abs(m) > x.K) continue;
    CVec phl = weighted_mode(phi, l, grid);
    CVec xm = weighted_mode(x, m, grid);
    if (m != 0) {
      CVec dphl = grid.deriv * CVec((phl.array() / sqc).matrix());
      acc += cplx(0.0, static_cast<double>(m)) * CVec((dphl.array() * xm.array()).matrix());
    }
    if (l != 0) {
      CVec dxm = grid.deriv * CVec((xm.array() / sqc).matrix());
      acc -= cplx(0.0, static_cast<double>(l)) * CVec((phl.array() * dxm.array()).matrix());
    }
  }
  return (acc.array() / r.array().cast<cplx>()).matrix();
}

}  // namespace

CVec vorticity_nonlinear(const ModeArray& omega, const ModeArray& phi, int k,
                         const RadialGrid& grid) {
  check_stack(omega, grid, "vorticity_nonlinear");
  check_stack(phi, grid, "vorticity_nonlinear");
  if (k == 0)
    throw param_error("vorticity_nonlinear: the axisymmetric part lives in zero_mode_rhs");
  return transport_mode(omega, phi, k, grid);
}

CVec temperature_nonlinear(const ModeArray& rho, const ModeArray& phi, int k,
                           const RadialGrid& grid) {
  check_stack(rho, grid, "temperature_nonlinear");
  check_stack(phi, grid, "temperature_nonlinear");
  if (k == 0)
    throw param_error("temperature_nonlinear: the axisymmetric part lives in zero_mode_rhs");
  return transport_mode(rho, phi, k, grid);
}

std::pair<CVec, CVec> zero_mode_rhs(const SimState& state, const ModeArray& phi,
                                    const FlowParams& params, const RadialGrid& grid) {
  check_stack(state.omega, grid, "zero_mode_rhs");
  check_stack(state.rho, grid, "zero_mode_rhs");
  check_stack(phi, grid, "zero_mode_rhs");
  const int n = grid.n;
  auto sqc = grid.nodes.array().sqrt().cast<cplx>();
  auto rc = grid.nodes.array().cast<cplx>();

  auto mean_jacobian = [&](const ModeArray& x) {
    CVec acc = CVec::Zero(n);
    for (int l = -phi.K; l <= phi.K; ++l) {
      if (l == 0 || std::abs(l) > x.K) continue;
      CVec phat = (weighted_mode(phi, l, grid).array() / sqc).matrix();
      CVec xhat = (weighted_mode(x, -l, grid).array() / sqc).matrix();
      CVec dphat = grid.deriv * phat;
      CVec dxhat = grid.deriv * xhat;
      acc -= cplx(0.0, static_cast<double>(l)) *
             CVec(((dphat.array() * xhat.array() + phat.array() * dxhat.array()) / rc).matrix());
    }
    return acc;
  };

  CVec fw = -mean_jacobian(state.omega) + axi_buoyancy(state.rho, state.t, params, grid);
  CVec fr = -mean_jacobian(state.rho);
  return {fw, fr};
}

ModeArray solve_stream_stack(const ModeArray& omega, const FlowParams& params,
                             const RadialGrid& grid) {
  check_stack(omega, grid, "solve_stream_stack");
  ModeArray phi(omega.K, omega.n);
  OperatorBundle b0 = assemble_zero_mode(params, grid);
  phi.modes.row(0) =
      solve_stream(ModeField{0, Rep::hat, omega.modes.row(0).transpose()}, b0).values.transpose();
  for (int k = 1; k <= omega.K; ++k) {
    OperatorBundle bk = assemble_mode_operator(params, k, grid);
    phi.modes.row(k) =
        solve_stream(ModeField{k, Rep::weighted, omega.modes.row(k).transpose()}, bk)
            .values.transpose();
  }
  return phi;
}

NonlinearSim::NonlinearSim(const FlowParams& params, const RadialGrid& grid, double dt)
    : params_(params), grid_(grid), dt_(dt) {
  params.validate();
  if (!(dt > 0)) throw param_error("NonlinearSim: dt must be positive");
  const int K = params.K;

  bundles_.reserve(K + 1);
  bundles_.push_back(assemble_zero_mode(params, grid));
  lhs_.resize(K + 1);
  rhsm_.resize(K + 1);
  for (int k = 1; k <= K; ++k) {
    bundles_.push_back(assemble_mode_operator(params, k, grid));
    const OperatorBundle& b = bundles_.back();
    const CMat& H = b.L;
    CMat lhs = (0.5 * dt) * H;
    lhs.diagonal() += b.mass.cast<cplx>();
    rhsm_[k] = (-0.5 * dt) * H;
    rhsm_[k].diagonal() += b.mass.cast<cplx>();
    lhs_[k].compute(lhs);
  }

  const OperatorBundle& z = bundles_.front();
  mass0_ = z.mass;
  Mat lhs0 = (0.5 * dt * params.nu) * z.elliptic_int;
  lhs0.diagonal() += mass0_;
  rhsm0_ = (-0.5 * dt * params.nu) * z.elliptic_int;
  rhsm0_.diagonal() += mass0_;
  lhs0_.compute(lhs0);
  if (lhs0_.info() != Eigen::Success)
    throw numerical_error("NonlinearSim: axisymmetric factorization failed");

  state_.omega = ModeArray(K, grid.n);
  state_.rho = ModeArray(K, grid.n);
}

void NonlinearSim::set_state(const SimState& s) {
  if (s.omega.K != params_.K || s.rho.K != params_.K)
    throw param_error("NonlinearSim::set_state: truncation mismatch");
  check_stack(s.omega, grid_, "NonlinearSim::set_state");
  check_stack(s.rho, grid_, "NonlinearSim::set_state");
  state_ = s;
}

ModeArray NonlinearSim::stream_of(const ModeArray& omega) const {
  ModeArray phi(omega.K, omega.n);
  phi.modes.row(0) =
      solve_stream(ModeField{0, Rep::hat, omega.modes.row(0).transpose()}, bundles_.front())
          .values.transpose();
  for (int k = 1; k <= omega.K; ++k) {
    phi.modes.row(k) =
        solve_stream(ModeField{k, Rep::weighted, omega.modes.row(k).transpose()}, bundles_[k])
            .values.transpose();
  }
  return phi;
}

ModeArray NonlinearSim::stream() const { return stream_of(state_.omega); }

double NonlinearSim::max_velocity() const {
  ModeArray phi = stream_of(state_.omega);
  const Vec& r = grid_.nodes;
  auto sqc = r.array().sqrt().cast<cplx>();
  double v = 0;
  for (int k = 0; k <= phi.K; ++k) {
    CVec phat = (weighted_mode(phi, k, grid_).array() / sqc).matrix();
    CVec dphat = grid_.deriv * phat;
    double vk = (dphat.cwiseAbs().array() +
                 (static_cast<double>(k) * phat.cwiseAbs().array() / r.array()))
                    .maxCoeff();
    v += (k == 0 ? 1.0 : 2.0) * vk;
  }
  return v;
}

NonlinearSim::ExplicitRhs NonlinearSim::explicit_rhs(const SimState& s) const {
  const int K = params_.K, n = grid_.n;
  ExplicitRhs f;
  f.omega = CMat::Zero(K + 1, n);
  f.rho = CMat::Zero(K + 1, n);
  ModeArray phi = stream_of(s.omega);
  for (int k = 1; k <= K; ++k) {
    CVec fw = buoyancy_rhs(s.rho, k, s.t, params_, grid_);
    if (!linear_only) {
      fw -= transport_mode(s.omega, phi, k, grid_);
      f.rho.row(k) = (-transport_mode(s.rho, phi, k, grid_)).transpose();
    }
    f.omega.row(k) = fw.transpose();
  }
  if (linear_only) {
    f.omega0 = axi_buoyancy(s.rho, s.t, params_, grid_);
    f.rho0 = CVec::Zero(n);
  } else {
    auto [fw0, fr0] = zero_mode_rhs(s, phi, params_, grid_);
    f.omega0 = fw0;
    f.rho0 = fr0;
  }
  return f;
}

SimState NonlinearSim::cn_apply(const SimState& s, const ExplicitRhs& f) const {
  const int K = params_.K;
  SimState out = s;
  out.t = s.t + dt_;
  for (int k = 1; k <= K; ++k) {
    const Vec& mass = bundles_[k].mass;
    auto advance = [&](const CMat& smodes, const CMat& frhs) {
      CVec x = interior(CVec(smodes.row(k).transpose()));
      CVec force = interior(CVec(frhs.row(k).transpose()));
      CVec rhs = rhsm_[k] * x + dt_ * CVec((mass.cast<cplx>().array() * force.array()).matrix());
      return pad(lhs_[k].solve(rhs));
    };
    out.omega.modes.row(k) = advance(s.omega.modes, f.omega).transpose();
    out.rho.modes.row(k) = advance(s.rho.modes, f.rho).transpose();
  }

  // axisymmetric step: real operator, real factor, applied to both parts
  auto advance0 = [&](const CVec& full, const CVec& force) {
    CVec xi = interior(full);
    CVec fi = interior(force);
    auto part = [&](const Vec& x, const Vec& fc) -> Vec {
      Vec rhs = rhsm0_ * x + dt_ * (mass0_.array() * fc.array()).matrix();
      return lhs0_.solve(rhs);
    };
    CVec yi(xi.size());
    yi.real() = part(xi.real(), fi.real());
    yi.imag() = part(xi.imag(), fi.imag());
    return pad(yi);
  };
  out.omega.modes.row(0) =
      advance0(CVec(s.omega.modes.row(0).transpose()), f.omega0).transpose();
  out.rho.modes.row(0) = advance0(CVec(s.rho.modes.row(0).transpose()), f.rho0).transpose();
  return out;
}

void NonlinearSim::step() {
  ExplicitRhs d1 = explicit_rhs(state_);
  SimState s1 = cn_apply(state_, d1);
  ExplicitRhs d2 = explicit_rhs(s1);
  ExplicitRhs davg;
  davg.omega = 0.5 * (d1.omega + d2.omega);
  davg.rho = 0.5 * (d1.rho + d2.rho);
  davg.omega0 = 0.5 * (d1.omega0 + d2.omega0);
  davg.rho0 = 0.5 * (d1.rho0 + d2.rho0);
  SimState next = cn_apply(state_, davg);
  if (!next.omega.modes.allFinite() || !next.rho.modes.allFinite())
    throw numerical_error("NonlinearSim: state left the finite range (blow-up)");
  state_ = next;
  ++steps_;
}

SimState step_nonlinear(const SimState& state, double dt, const FlowParams& params,
                        const RadialGrid& grid) {
  NonlinearSim sim(params, grid, dt);
  sim.set_state(state);
  sim.step();
  return sim.state();
}

namespace {

// per-snapshot per-mode norm ingredients, precomputed once
struct SnapNorms {
  double t = 0;
  std::vector<double> om_l2, om_inf, om_mr, rho_l2, rho_mr;
};

}  // namespace

EnergyLedger energy_ledger(const std::vector<SimState>& history, const WeightParams& weight,
                           const FlowParams& params, const RadialGrid& grid) {
  if (history.empty()) throw param_error("energy_ledger: empty history");
  params.validate();
  const int K = history.front().omega.K;
  const int n = grid.n;
  for (const SimState& s : history) {
    if (s.omega.K != K || s.rho.K != K || s.omega.n != n || s.rho.n != n)
      throw param_error("energy_ledger: history snapshots disagree in shape");
  }

  const double nu = params.nu, R = params.R, absB = std::abs(params.B);
  const Vec& r = grid.nodes;
  auto rc = r.array().cast<cplx>();
  const Vec wr = (grid.quad_weights.array() * r.array()).matrix();

  std::vector<OperatorBundle> bundles;
  bundles.reserve(K + 1);
  bundles.push_back(assemble_zero_mode(params, grid));
  for (int k = 1; k <= K; ++k) bundles.push_back(assemble_mode_operator(params, k, grid));

  // precompute the integrand ingredients
  std::vector<SnapNorms> snaps(history.size());
  for (size_t i = 0; i < history.size(); ++i) {
    const SimState& s = history[i];
    SnapNorms& sn = snaps[i];
    sn.t = s.t;
    sn.om_l2.resize(K + 1);
    sn.om_inf.resize(K + 1);
    sn.om_mr.resize(K + 1);
    sn.rho_l2.resize(K + 1);
    sn.rho_mr.resize(K + 1);
    // axisymmetric rows measured in L^2(r dr)
    sn.om_l2[0] = std::sqrt((wr.array() * s.omega.modes.row(0).transpose().array().abs2()).sum());
    sn.rho_l2[0] = std::sqrt((wr.array() * s.rho.modes.row(0).transpose().array().abs2()).sum());
    sn.om_inf[0] = sn.om_mr[0] = sn.rho_mr[0] = 0;
    for (int k = 1; k <= K; ++k) {
      CVec xo = s.omega.modes.row(k).transpose();
      CVec xr = s.rho.modes.row(k).transpose();
      sn.om_l2[k] = wnorm(grid, xo);
      sn.om_mr[k] = wnorm(grid, CVec((xo.array() / rc).matrix()));
      sn.rho_l2[k] = wnorm(grid, xr);
      sn.rho_mr[k] = wnorm(grid, CVec((xr.array() / rc).matrix()));
      ModeField phi = solve_stream(ModeField{k, Rep::weighted, xo}, bundles[k]);
      sn.om_inf[k] =
          (phi.values.cwiseAbs().array() / r.array().sqrt()).maxCoeff();
    }
  }

  // trapezoid accumulation over a snapshot subset
  auto build = [&](const std::vector<size_t>& idx) {
    EnergyLedger lg;
    for (int k = 0; k <= K; ++k) {
      const double rate = weight.rate(params, k);
      EnergyParts e, h;
      for (size_t j = 0; j < idx.size(); ++j) {
        const SnapNorms& sn = snaps[idx[j]];
        double wgt = 0;
        if (idx.size() > 1) {
          const double tp = j > 0 ? snaps[idx[j - 1]].t : sn.t;
          const double tn = j + 1 < idx.size() ? snaps[idx[j + 1]].t : sn.t;
          wgt = 0.5 * (tn - tp);
        }
        const double E = std::exp(rate * sn.t);
        e.sup_l2 = std::max(e.sup_l2, E * sn.om_l2[k]);
        e.int_l2 += wgt * sq(E * sn.om_l2[k]);
        e.int_phi += wgt * sq(E * sn.om_inf[k]);
        e.int_mr += wgt * sq(E * sn.om_mr[k]);
        h.sup_l2 = std::max(h.sup_l2, E * sn.rho_l2[k]);
        h.int_l2 += wgt * sq(E * sn.rho_l2[k]);
        h.int_mr += wgt * sq(E * sn.rho_mr[k]);
      }
      if (k == 0) {
        e.total = e.sup_l2;
        h.total = h.sup_l2;
      } else {
        const double nk2 = nu * k * k;
        const double c_l2 = std::pow(nk2, 1.0 / 6.0) * std::cbrt(absB) / R;
        const double c_phi = std::sqrt(absB) * std::pow(static_cast<double>(k), 1.5) / (R * R);
        const double c_mr = std::sqrt(nk2);
        e.total = e.sup_l2 + c_l2 * std::sqrt(e.int_l2) + c_phi * std::sqrt(e.int_phi) +
                  c_mr * std::sqrt(e.int_mr);
        h.total = h.sup_l2 + c_l2 * std::sqrt(h.int_l2) + c_mr * std::sqrt(h.int_mr);
      }
      lg.E[k] = e;
      lg.H[k] = h;
      const double mult = k == 0 ? 1.0 : 2.0;
      lg.sum_E += mult * e.total;
      lg.sum_H += mult * h.total;
    }
    return lg;
  };

  std::vector<size_t> all(history.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  EnergyLedger lg = build(all);

  // initial-data functional per vorticity mode
  const SimState& s0 = history.front();
  const double logR = std::log(R);
  lg.M0[0] = snaps.front().om_l2[0];
  lg.sum_M0 = lg.M0[0];
  lg.sum_rho0 = snaps.front().rho_l2[0];
  for (int k = 1; k <= K; ++k) {
    CVec x0 = s0.omega.modes.row(k).transpose();
    const double m = wnorm(grid, x0) +
                     std::pow(logR, -1.5) / (R * R) * wnorm(grid, CVec((x0.array() * rc * rc).matrix())) +
                     R * R * R * wnorm(grid, CVec((x0.array() / (rc * rc * rc)).matrix())) +
                     R * wnorm(grid, CVec(grid.deriv * x0));
    lg.M0[k] = m;
    lg.sum_M0 += 2.0 * m;
    lg.sum_rho0 += 2.0 * snaps.front().rho_l2[k];
  }
  lg.unit_threshold_omega = std::sqrt(nu) * std::sqrt(absB) / (R * R);
  lg.unit_threshold_rho = std::pow(nu, 7.0 / 6.0) * std::pow(absB, 5.0 / 6.0) / (R * R * R);

  // quadrature self check: every other snapshot, keeping the endpoints
  if (history.size() >= 3) {
    std::vector<size_t> half;
    for (size_t i = 0; i < history.size(); i += 2) half.push_back(i);
    if (half.back() != history.size() - 1) half.push_back(history.size() - 1);
    EnergyLedger lg2 = build(half);
    const double full = lg.sum_E + lg.sum_H;
    const double coarse = lg2.sum_E + lg2.sum_H;
    lg.quadrature_drift = full > 0 ? std::abs(full - coarse) / full : 0.0;
    lg.quadrature_ok = lg.quadrature_drift < 0.02;
  }
  return lg;
}

SimState bump_init_family(double eps, const FlowParams& params, const RadialGrid& grid) {
  params.validate();
  if (eps < 0) throw param_error("bump_init_family: eps must be nonnegative");
  const int K = params.K, n = grid.n;
  const double R = params.R, nu = params.nu, absB = std::abs(params.B);
  const double pi = std::acos(-1.0);
  const Vec& r = grid.nodes;

  SimState s;
  s.omega = ModeArray(K, n);
  s.rho = ModeArray(K, n);

  Vec bump = (((r.array() - 1.0) * (pi / (R - 1.0))).sin()).matrix();
  bump(0) = 0.0;
  bump(n - 1) = 0.0;
  Vec hatb = (bump.array() / r.array().sqrt()).matrix();
  Vec dhatb = grid.deriv * hatb;

  const double logR = std::log(R);
  const double root2 = std::sqrt(2.0);
  const double h1 = std::sqrt(sq(wnorm(grid, dhatb)) + sq(wnorm(grid, Vec(hatb.array() / r.array()))));
  const double c1 =
      root2 * (R * h1 +
               std::pow(logR, -1.5) / (R * R) *
                   wnorm(grid, Vec(hatb.array() * r.array().square())) +
               R * R * R * wnorm(grid, Vec(hatb.array() / r.array().cube())));
  const double c2 = root2 * std::sqrt(sq(wnorm(grid, hatb)) + sq(wnorm(grid, dhatb)));

  const double aw = 0.99 * eps * std::sqrt(nu) * std::sqrt(absB) / (R * R) / c1;
  const double ar = 0.99 * eps * std::pow(nu, 7.0 / 6.0) * std::pow(absB, 5.0 / 6.0) / (R * R * R) / c2;
  s.omega.modes.row(1) = (aw * bump).cast<cplx>().transpose();
  s.rho.modes.row(1) = (ar * bump).cast<cplx>().transpose();
  return s;
}

ExperimentVerdict run_stability_experiment(const FlowParams& params, InitFamily family,
                                           double eps, double horizon, const RadialGrid& grid,
                                           const WeightParams& weight, double dt,
                                           int snap_stride,
                                           std::vector<SimState>* history_out) {
  params.validate();
  if (!family) throw param_error("run_stability_experiment: missing init family");
  if (!(horizon > 0)) throw param_error("run_stability_experiment: horizon must be positive");
  if (!(dt > 0)) throw param_error("run_stability_experiment: dt must be positive");
  if (snap_stride < 1) throw param_error("run_stability_experiment: snapshot stride must be >= 1");
  if (eps < 0) throw param_error("run_stability_experiment: eps must be nonnegative");

  SimState s0 = family(eps, params, grid);
  ExperimentVerdict v;
  v.horizon = horizon;

  // initial-data functionals: hat-profile norms with mode-pair multiplicity
  const int K = s0.omega.K;
  const double R = params.R, logR = std::log(R);
  auto sqc = grid.nodes.array().sqrt().cast<cplx>();
  auto rc = grid.nodes.array().cast<cplx>();
  double h1_sq = 0, r2_sq = 0, r3_sq = 0, rho_h1_sq = 0;
  for (int k = 0; k <= K; ++k) {
    const double mult = k == 0 ? 1.0 : 2.0;
    CVec what = k == 0 ? CVec(s0.omega.modes.row(0).transpose())
                       : CVec((s0.omega.modes.row(k).transpose().array() / sqc).matrix());
    CVec rhat = k == 0 ? CVec(s0.rho.modes.row(0).transpose())
                       : CVec((s0.rho.modes.row(k).transpose().array() / sqc).matrix());
    h1_sq += mult * (sq(wnorm(grid, CVec(grid.deriv * what))) +
                     sq(wnorm(grid, CVec((what.array() / rc).matrix()))));
    r2_sq += mult * sq(wnorm(grid, CVec((what.array() * rc * rc).matrix())));
    r3_sq += mult * sq(wnorm(grid, CVec((what.array() / (rc * rc * rc)).matrix())));
    rho_h1_sq += mult * (sq(wnorm(grid, rhat)) + sq(wnorm(grid, CVec(grid.deriv * rhat))));
  }
  v.cond_omega = R * std::sqrt(h1_sq) + std::pow(logR, -1.5) / (R * R) * std::sqrt(r2_sq) +
                 R * R * R * std::sqrt(r3_sq);
  v.cond_rho = std::sqrt(rho_h1_sq);
  const double th_w = eps * std::sqrt(params.nu) * std::sqrt(std::abs(params.B)) / (R * R);
  const double th_r = eps * std::pow(params.nu, 7.0 / 6.0) *
                      std::pow(std::abs(params.B), 5.0 / 6.0) / (R * R * R);
  v.hypothesis_held = v.cond_omega <= th_w * (1.0 + 1e-9) && v.cond_rho <= th_r * (1.0 + 1e-9);

  NonlinearSim sim(params, grid, dt);
  sim.set_state(s0);
  const double vmax = sim.max_velocity();
  double dt_used = dt;
  if (vmax > 0) dt_used = std::min(dt_used, 0.5 / (params.K * vmax));
  int nst = static_cast<int>(std::ceil(horizon / dt_used - 1e-9));
  nst = std::max(nst, 1);
  dt_used = horizon / nst;
  NonlinearSim run(params, grid, dt_used);
  run.set_state(s0);

  std::vector<SimState> history;
  history.reserve(nst / snap_stride + 2);
  history.push_back(run.state());
  for (int i = 1; i <= nst; ++i) {
    try {
      run.step();
    } catch (const numerical_error&) {
      v.blowup = true;
      break;
    }
    if (i % snap_stride == 0 || i == nst) history.push_back(run.state());
  }
  v.horizon_reached = !v.blowup;

  v.ledger = energy_ledger(history, weight, params, grid);
  EnergyLedger lg0 = energy_ledger({history.front()}, weight, params, grid);
  v.sup_energy_ratio = lg0.sum_E > 0 ? v.ledger.sum_E / lg0.sum_E : 0.0;

  if (v.blowup) {
    v.outcome = Outcome::growth;
  } else if (!v.ledger.quadrature_ok) {
    v.outcome = Outcome::inconclusive;
  } else if (v.sup_energy_ratio <= 4.0) {
    v.outcome = Outcome::stable;
  } else {
    v.outcome = Outcome::growth;
  }
  if (history_out) *history_out = std::move(history);
  return v;
}

}  // namespace tcstab
