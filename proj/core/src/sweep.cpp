#include "tcstab/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "tcstab/evolution.hpp"
#include "tcstab/io.hpp"
#include "tcstab/nonlinear.hpp"
#include "tcstab/rng.hpp"
#include "tcstab/stability.hpp"

namespace tcstab {

namespace {

std::function<std::vector<int>(int)> g_shuffle_hook;

struct Point {
  FlowParams params;
  int k = 1;
  double eps = 1.0;
  double value = 0;
};

Point point_of(const RunConfig& cfg, double v) {
  Point p;
  p.params = cfg.params;
  p.k = cfg.k;
  p.eps = cfg.eps;
  p.value = v;
  switch (cfg.sweep.variable) {
    case SweepVariable::nu:
      p.params.nu = v;
      break;
    case SweepVariable::B:
      p.params.B = v;
      break;
    case SweepVariable::R:
      p.params.R = v;
      break;
    case SweepVariable::k:
      p.k = static_cast<int>(std::lround(v));
      break;
    case SweepVariable::epsilon:
      p.eps = v;
      break;
  }
  return p;
}

double tol_or(const RunConfig& cfg, const std::string& key, double fallback) {
  auto it = cfg.tolerances.find(key);
  return it == cfg.tolerances.end() ? fallback : it->second;
}

void fill_point_fields(Record& rec, const RunConfig& cfg, const Point& p, int index,
                       std::uint64_t seed) {
  rec.num["index"] = index;
  rec.num["value"] = p.value;
  rec.num["nu"] = p.params.nu;
  rec.num["A"] = p.params.A;
  rec.num["B"] = p.params.B;
  rec.num["R"] = p.params.R;
  rec.num["k"] = p.k;
  rec.num["n"] = cfg.n;
  rec.num["eps"] = p.eps;
  rec.str["variable"] = sweep_variable_name(cfg.sweep.variable);
  rec.str["experiment"] = experiment_name(cfg.experiment);
  rec.str["point_seed"] = std::to_string(seed);
}

void run_gap(Record& rec, const Point& p, const RadialGrid& grid) {
  OperatorBundle b = assemble_mode_operator(p.params, p.k, grid);
  SpectralGapResult g = spectral_gap(b);
  rec.num["psi"] = g.psi;
  rec.num["argmin_lambda"] = g.argmin_lambda;
  rec.num["range_warning"] = g.range_warning ? 1 : 0;
}

void run_accretivity(Record& rec, const Point& p, const RadialGrid& grid, std::uint64_t seed) {
  OperatorBundle b = assemble_mode_operator(p.params, p.k, grid);
  AccretivityReport a = check_accretivity(b, 200, seed);
  rec.num["min_real"] = a.min_real;
  rec.num["max_real_residual"] = a.max_real_residual;
  rec.num["max_imag_residual"] = a.max_imag_residual;
  double worst = 0;
  for (double s : a.shift_norm) worst = std::max(worst, s);
  rec.num["worst_shift_norm"] = worst;
}

void run_elliptic(Record& rec, const Point& p, const RadialGrid& grid, std::uint64_t seed) {
  EllipticConstants e = verify_elliptic_estimates(p.k, grid, 200, seed);
  rec.num["grad_pair"] = e.grad_pair;
  rec.num["pair_rf"] = e.pair_rf;
  rec.num["grad_l1"] = e.grad_l1;
  rec.num["pointwise"] = e.pointwise;
  rec.num["axi_pointwise"] = axisymmetric_pointwise_constant(grid, 200, derive_seed(seed, 1));
}

void run_resolvent(Record& rec, const Point& p, const RadialGrid& grid, std::uint64_t seed) {
  ResolventBoundSample s = resolvent_bound_constants(p.params, p.k, grid,
                                                     default_lambda_grid(p.params.R), 20, seed);
  const char* qn[4] = {"q1", "q2", "q3", "q4"};
  const char* sn[4] = {"sampled1", "sampled2", "sampled3", "sampled4"};
  for (int i = 0; i < 4; ++i) {
    rec.num[qn[i]] = s.worst[i];
    rec.num[sn[i]] = s.worst_sampled[i];
  }
}

void run_semigroup(Record& rec, const Point& p, const RadialGrid& grid) {
  OperatorBundle b = assemble_mode_operator(p.params, p.k, grid);
  const double psi = spectral_gap(b).psi;
  SemigroupReport s = semigroup_bound_check(b, psi, {0.5, 1.0, 5.0, 10.0, 50.0});
  rec.num["psi"] = psi;
  double worst = s.margin.empty() ? 0 : s.margin.front();
  double worst_log = s.log_margin.empty() ? 0 : s.log_margin.front();
  for (double m : s.margin) worst = std::min(worst, m);
  for (double m : s.log_margin) worst_log = std::min(worst_log, m);
  rec.num["worst_margin"] = worst;
  rec.num["worst_log_margin"] = worst_log;
  rec.num["all_hold"] = s.all_hold ? 1 : 0;
}

void run_decay(Record& rec, const RunConfig& cfg, const Point& p, const RadialGrid& grid,
               std::uint64_t seed) {
  OperatorBundle b = assemble_mode_operator(p.params, p.k, grid);
  const double psi = spectral_gap(b).psi;
  const double horizon = cfg.horizon > 0 ? cfg.horizon : 10.0 / psi;
  Rng rng(seed);
  ModeField init{p.k, Rep::weighted, rand_field(rng, grid)};
  DecayMeasurement d = measure_decay_rate(b, init, horizon);
  rec.num["rate"] = d.rate;
  rec.num["psi"] = d.psi;
  rec.num["rate_over_psi"] = d.psi > 0 ? d.rate / d.psi : 0;
  rec.num["fit_r_squared"] = d.fit_r_squared;
  rec.num["window_shortened"] = d.window_shortened ? 1 : 0;
}

void run_spacetime(Record& rec, const RunConfig& cfg, const Point& p, const RadialGrid& grid,
                   std::uint64_t seed) {
  WeightParams w{cfg.c_prime};
  Rng rng(seed);
  CVec vinit = rand_field(rng, grid);
  SpaceTimeReport vort =
      verify_spacetime_vorticity(p.params, p.k, grid, vinit, ForcingSpec{}, w);
  CVec tinit = rand_field(rng, grid);
  CVec prof = rand_field(rng, grid);
  ForcingSpec forcing;
  forcing.h1 = [prof](double t) { return CVec(std::exp(-0.2 * t) * prof); };
  SpaceTimeReport temp = verify_spacetime_temperature(p.params, p.k, grid, tinit, forcing, w);
  rec.num["vort_ratio"] = vort.ratio;
  rec.num["temp_ratio"] = temp.ratio;
  rec.num["temp_homog_ratio"] = temp.homog_ratio;
  rec.num["temp_forced_ratio"] = temp.forced_ratio;
  rec.num["temp_triangle_slack"] = temp.triangle_slack;
  rec.num["heat_dominated"] = vort.heat_dominated ? 1 : 0;
  rec.num["psi"] = vort.psi;
}

void run_simulate(Record& rec, const RunConfig& cfg, const Point& p, const RadialGrid& grid) {
  WeightParams w{cfg.c_prime};
  const double horizon = cfg.horizon > 0 ? cfg.horizon : 50.0;
  const double dt = tol_or(cfg, "dt", 0.05);
  const int stride = static_cast<int>(tol_or(cfg, "snap_stride", 1));
  ExperimentVerdict v = run_stability_experiment(p.params, bump_init_family, p.eps, horizon,
                                                 grid, w, dt, stride);
  rec.str["outcome"] = v.outcome == Outcome::stable
                           ? "stable"
                           : (v.outcome == Outcome::growth ? "growth" : "inconclusive");
  rec.num["sup_energy_ratio"] = v.sup_energy_ratio;
  rec.num["hypothesis_held"] = v.hypothesis_held ? 1 : 0;
  rec.num["blowup"] = v.blowup ? 1 : 0;
  rec.num["sum_E"] = v.ledger.sum_E;
  rec.num["sum_H"] = v.ledger.sum_H;
  rec.num["quadrature_ok"] = v.ledger.quadrature_ok ? 1 : 0;
  rec.num["cond_omega"] = v.cond_omega;
  rec.num["cond_rho"] = v.cond_rho;
}

void run_threshold(Record& rec, const RunConfig& cfg, const Point& p, const RadialGrid& grid) {
  WeightParams w{cfg.c_prime};
  const double horizon = cfg.horizon > 0 ? cfg.horizon : 50.0;
  const double dt = tol_or(cfg, "dt", 0.05);
  auto verdict = [&](double nu, double eps) {
    FlowParams q = p.params;
    q.nu = nu;
    return run_stability_experiment(q, bump_init_family, eps, horizon, grid, w, dt, 4).outcome;
  };
  ThresholdResult t =
      threshold_bisect({p.params.nu}, cfg.eps / 100.0, cfg.eps * 100.0, verdict,
                       tol_or(cfg, "bracket_rel_width", 0.05));
  rec.num["eps_star"] = t.eps_star.front();
  rec.num["bracket_lo"] = t.bracket_lo.front();
  rec.num["bracket_hi"] = t.bracket_hi.front();
  rec.num["point_ok"] = t.point_ok.front() ? 1 : 0;
}

Record run_point(const RunConfig& cfg, int index, const RadialGrid* shared,
                 const std::string& hash) {
  const Point p = point_of(cfg, cfg.sweep.values[index]);
  const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(index));
  Record rec;
  fill_point_fields(rec, cfg, p, index, seed);
  rec.str["config_hash"] = hash;
  try {
    RadialGrid local;
    const RadialGrid* grid = shared;
    if (grid == nullptr) {
      local = build_grid(p.params.R, cfg.n);
      grid = &local;
    }
    switch (cfg.experiment) {
      case Experiment::gap:
        run_gap(rec, p, *grid);
        break;
      case Experiment::accretivity:
        run_accretivity(rec, p, *grid, seed);
        break;
      case Experiment::elliptic:
        run_elliptic(rec, p, *grid, seed);
        break;
      case Experiment::resolvent:
        run_resolvent(rec, p, *grid, seed);
        break;
      case Experiment::semigroup:
        run_semigroup(rec, p, *grid);
        break;
      case Experiment::decay:
        run_decay(rec, cfg, p, *grid, seed);
        break;
      case Experiment::spacetime:
        run_spacetime(rec, cfg, p, *grid, seed);
        break;
      case Experiment::simulate:
        run_simulate(rec, cfg, p, *grid);
        break;
      case Experiment::threshold:
        run_threshold(rec, cfg, p, *grid);
        break;
    }
    rec.str["status"] = "ok";
  } catch (const std::exception& e) {
    rec.str["status"] = "error";
    rec.str["error"] = e.what();
  }
  return rec;
}

}  // namespace

Experiment experiment_from_name(const std::string& name) {
  if (name == "elliptic") return Experiment::elliptic;
  if (name == "resolvent") return Experiment::resolvent;
  if (name == "gap") return Experiment::gap;
  if (name == "accretivity") return Experiment::accretivity;
  if (name == "semigroup") return Experiment::semigroup;
  if (name == "decay") return Experiment::decay;
  if (name == "spacetime") return Experiment::spacetime;
  if (name == "simulate") return Experiment::simulate;
  if (name == "threshold") return Experiment::threshold;
  throw param_error("unknown experiment: " + name);
}

std::string experiment_name(Experiment e) {
  switch (e) {
    case Experiment::elliptic: return "elliptic";
    case Experiment::resolvent: return "resolvent";
    case Experiment::gap: return "gap";
    case Experiment::accretivity: return "accretivity";
    case Experiment::semigroup: return "semigroup";
    case Experiment::decay: return "decay";
    case Experiment::spacetime: return "spacetime";
    case Experiment::simulate: return "simulate";
    case Experiment::threshold: return "threshold";
  }
  throw param_error("unknown experiment enum value");
}

SweepVariable sweep_variable_from_name(const std::string& name) {
  if (name == "nu") return SweepVariable::nu;
  if (name == "B") return SweepVariable::B;
  if (name == "R") return SweepVariable::R;
  if (name == "k") return SweepVariable::k;
  if (name == "epsilon") return SweepVariable::epsilon;
  throw param_error("unknown sweep variable: " + name);
}

std::string sweep_variable_name(SweepVariable v) {
  switch (v) {
    case SweepVariable::nu: return "nu";
    case SweepVariable::B: return "B";
    case SweepVariable::R: return "R";
    case SweepVariable::k: return "k";
    case SweepVariable::epsilon: return "epsilon";
  }
  throw param_error("unknown sweep variable enum value");
}

void set_sweep_shuffle_hook(std::function<std::vector<int>(int)> hook) {
  g_shuffle_hook = std::move(hook);
}

std::vector<Record> run_sweep(const RunConfig& cfg) {
  cfg.params.validate();
  if (cfg.n < 8) throw param_error("run_sweep: grid size too small");
  if (cfg.jobs < 1) throw param_error("run_sweep: jobs must be positive");
  const int np = static_cast<int>(cfg.sweep.values.size());
  if (np == 0) return {};

  const std::string hash = config_hash(cfg);
  RadialGrid shared;
  const RadialGrid* shared_ptr = nullptr;
  if (cfg.sweep.variable != SweepVariable::R) {
    shared = build_grid(cfg.params.R, cfg.n);
    shared_ptr = &shared;
  }

  std::vector<int> order(np);
  std::iota(order.begin(), order.end(), 0);
  if (g_shuffle_hook) {
    order = g_shuffle_hook(np);
    std::vector<int> check = order;
    std::sort(check.begin(), check.end());
    for (int i = 0; i < np; ++i)
      if (check[i] != i) throw param_error("run_sweep: shuffle hook must return a permutation");
  }

  std::vector<Record> out(np);
  const int jobs = std::min(cfg.jobs, np);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int slot = next.fetch_add(1);
      if (slot >= np) break;
      const int idx = order[slot];
      out[idx] = run_point(cfg, idx, shared_ptr, hash);
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  return out;
}

ScalingFit fit_scaling(const std::vector<Record>& records, const std::string& x_field,
                       const std::string& y_field) {
  std::vector<double> xs, ys;
  for (const Record& r : records) {
    auto ix = r.num.find(x_field);
    auto iy = r.num.find(y_field);
    if (ix == r.num.end() || iy == r.num.end()) continue;
    xs.push_back(ix->second);
    ys.push_back(iy->second);
  }
  return fit_scaling(xs, ys);
}

}  // namespace tcstab
