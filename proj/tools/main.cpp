// tcstab command line driver.  Every subcommand loads an optional JSON config,
// applies environment overrides (TCSTAB_OUT, TCSTAB_JOBS) and explicit flags,
// runs one experiment sweep, and writes the records through emit_report.
//
// Exit codes: 0 ok, 2 bad usage or parameters, 3 numerical failure or I/O,
// 4 inconclusive verdict.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tcstab/io.hpp"
#include "tcstab/stability.hpp"

namespace fs = std::filesystem;
using namespace tcstab;

namespace {

struct Shared {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int jobs = 0;
  std::string format = "ndjson";
  CLI::Option *opt_seed = nullptr, *opt_out = nullptr, *opt_jobs = nullptr;
};

std::string ext_for(ReportFormat f) {
  switch (f) {
    case ReportFormat::csv: return ".csv";
    case ReportFormat::ndjson: return ".ndjson";
    case ReportFormat::plotdata: return ".dat";
  }
  return ".out";
}

RunConfig make_config(const Shared& sh, Experiment exp) {
  RunConfig cfg;
  if (!sh.config_path.empty()) cfg = load_config(sh.config_path);
  apply_env_overrides(cfg);
  if (sh.opt_seed->count() > 0) cfg.seed = sh.seed;
  if (sh.opt_out->count() > 0) cfg.output_dir = sh.out_dir;
  if (sh.opt_jobs->count() > 0) cfg.jobs = sh.jobs;
  cfg.experiment = exp;
  if (cfg.sweep.values.empty()) {
    // no sweep configured: run the single configured point
    cfg.sweep.variable = exp == Experiment::simulate || exp == Experiment::threshold
                             ? SweepVariable::epsilon
                             : SweepVariable::nu;
    cfg.sweep.values = {cfg.sweep.variable == SweepVariable::epsilon ? cfg.eps : cfg.params.nu};
    if (exp == Experiment::threshold) {
      cfg.sweep.variable = SweepVariable::nu;
      cfg.sweep.values = {cfg.params.nu};
    }
  }
  return cfg;
}

std::string write_records(const RunConfig& cfg, const std::vector<Record>& records,
                          const std::string& stem, ReportFormat format) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw numerical_error("cannot create output dir " + cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / (stem + ext_for(format))).string();
  emit_report(records, format, path, config_hash(cfg));
  return path;
}

double rec_num(const Record& r, const std::string& key, double fallback = 0) {
  auto it = r.num.find(key);
  return it != r.num.end() ? it->second : fallback;
}

// prints a terse per-point line so small sweeps are readable without the file
void print_records(const std::vector<Record>& records, const std::vector<std::string>& keys) {
  if (records.size() > 12) {
    std::cout << records.size() << " records\n";
    return;
  }
  for (const Record& r : records) {
    std::cout << "  ";
    auto vit = r.str.find("variable");
    if (vit != r.str.end()) std::cout << vit->second << "=" << rec_num(r, "value");
    auto sit = r.str.find("status");
    if (sit != r.str.end() && sit->second != "ok") {
      auto eit = r.str.find("error");
      std::cout << "  status=" << sit->second;
      if (eit != r.str.end()) std::cout << " (" << eit->second << ")";
      std::cout << "\n";
      continue;
    }
    for (const std::string& k : keys) {
      auto it = r.num.find(k);
      if (it != r.num.end()) std::cout << "  " << k << "=" << it->second;
      auto st = r.str.find(k);
      if (st != r.str.end()) std::cout << "  " << k << "=" << st->second;
    }
    std::cout << "\n";
  }
}

int count_ok(const std::vector<Record>& records) {
  int ok = 0;
  for (const Record& r : records) {
    auto it = r.str.find("status");
    if (it != r.str.end() && it->second == "ok") ++ok;
  }
  return ok;
}

void maybe_print_slope(const std::vector<Record>& records, const RunConfig& cfg,
                       const std::string& y, const char* label) {
  if (cfg.sweep.variable != SweepVariable::nu || count_ok(records) < 4) return;
  try {
    ScalingFit f = tcstab::fit_scaling(records, "value", y);
    std::cout << label << " slope vs nu: " << f.slope << " (r^2 " << f.r_squared << ")\n";
  } catch (const std::exception&) {
  }
}

int run_experiment(const Shared& sh, Experiment exp, const std::string& stem,
                   const std::vector<std::string>& keys) {
  RunConfig cfg = make_config(sh, exp);
  const ReportFormat format = report_format_from_name(sh.format);
  std::vector<Record> records = run_sweep(cfg);
  if (records.empty()) {
    std::cout << "empty sweep, nothing to do\n";
    return 0;
  }
  const std::string path = write_records(cfg, records, stem, format);
  print_records(records, keys);
  std::cout << "wrote " << path << " (" << records.size() << " records, config "
            << config_hash(cfg) << ")\n";

  if (exp == Experiment::gap) maybe_print_slope(records, cfg, "psi", "gap");
  if (exp == Experiment::decay) maybe_print_slope(records, cfg, "rate", "decay rate");
  if (count_ok(records) == 0) throw numerical_error("every sweep point failed");
  return 0;
}

int run_grid_check(const Shared& sh) {
  RunConfig cfg = make_config(sh, Experiment::gap);
  const ReportFormat format = report_format_from_name(sh.format);
  RadialGrid grid = build_grid(cfg.params.R, cfg.n);

  Record rec;
  rec.num["n"] = cfg.n;
  rec.num["R"] = cfg.params.R;
  rec.num["sum_w_err"] = std::abs(grid.quad_weights.sum() - (cfg.params.R - 1.0));
  double derr = 0;
  for (int m = 1; m <= 3; ++m) {
    Vec rm = grid.nodes.array().pow(m);
    Vec exact = m * grid.nodes.array().pow(m - 1);
    derr = std::max(derr, (grid.deriv * rm - exact).cwiseAbs().maxCoeff() /
                              exact.cwiseAbs().maxCoeff());
  }
  rec.num["deriv_err"] = derr;
  bool ascending = true;
  for (int i = 1; i < cfg.n; ++i) ascending = ascending && grid.nodes[i] > grid.nodes[i - 1];
  rec.num["ascending"] = ascending ? 1 : 0;
  rec.num["min_weight"] = grid.quad_weights.minCoeff();
  rec.str["status"] = "ok";
  rec.str["config_hash"] = config_hash(cfg);

  const std::string path = write_records(cfg, {rec}, "grid-check", format);
  std::cout << "n=" << cfg.n << " R=" << cfg.params.R << "  sum_w_err=" << rec.num["sum_w_err"]
            << "  deriv_err=" << derr << "  min_weight=" << rec.num["min_weight"] << "\n";
  std::cout << "wrote " << path << "\n";
  if (!ascending || rec.num["min_weight"] <= 0 || rec.num["sum_w_err"] > 1e-10 * cfg.params.R ||
      derr > 1e-8)
    throw numerical_error("grid diagnostics out of tolerance");
  std::cout << "grid ok\n";
  return 0;
}

int run_simulate_cmd(const Shared& sh) {
  RunConfig cfg = make_config(sh, Experiment::simulate);
  const ReportFormat format = report_format_from_name(sh.format);
  std::vector<Record> records = run_sweep(cfg);
  if (records.empty()) {
    std::cout << "empty sweep, nothing to do\n";
    return 0;
  }
  const std::string path = write_records(cfg, records, "simulate", format);
  print_records(records, {"outcome", "sup_energy_ratio", "hypothesis_held", "sum_E"});

  // side artifacts for the first point: energy time series + final checkpoint
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  RadialGrid grid = build_grid(cfg.params.R, cfg.n);
  FlowParams p = cfg.params;
  double eps = cfg.eps;
  if (cfg.sweep.variable == SweepVariable::epsilon)
    eps = cfg.sweep.values.front();
  else if (cfg.sweep.variable == SweepVariable::nu)
    p.nu = cfg.sweep.values.front();
  else if (cfg.sweep.variable == SweepVariable::B)
    p.B = cfg.sweep.values.front();
  WeightParams w;
  w.c_prime = cfg.c_prime;
  const double horizon = cfg.horizon > 0 ? cfg.horizon : 50.0;
  auto tol = cfg.tolerances.find("dt");
  const double dt = tol != cfg.tolerances.end() ? tol->second : 0.05;
  std::vector<SimState> history;
  ExperimentVerdict v =
      run_stability_experiment(p, bump_init_family, eps, horizon, grid, w, dt, 1, &history);
  const std::string energy_path = (fs::path(cfg.output_dir) / "energy.csv").string();
  write_energy_csv(history, p, grid, energy_path);
  const std::string ckpt_path = (fs::path(cfg.output_dir) / "final-state.ndjson").string();
  save_checkpoint(history.back(), ckpt_path);
  std::cout << "wrote " << path << ", " << energy_path << ", " << ckpt_path << "\n";
  if (v.outcome == Outcome::inconclusive) throw inconclusive_error("simulation verdict inconclusive");
  return 0;
}

int run_threshold_cmd(const Shared& sh) {
  RunConfig cfg = make_config(sh, Experiment::threshold);
  const ReportFormat format = report_format_from_name(sh.format);
  std::vector<Record> records = run_sweep(cfg);
  if (records.empty()) {
    std::cout << "empty sweep, nothing to do\n";
    return 0;
  }
  const std::string path = write_records(cfg, records, "threshold-scan", format);
  print_records(records, {"eps_star", "bracket_lo", "bracket_hi", "point_ok"});

  std::vector<Record> ok;
  for (const Record& r : records)
    if (rec_num(r, "point_ok") > 0.5) ok.push_back(r);
  if (cfg.sweep.variable == SweepVariable::nu && ok.size() >= 4) {
    ScalingFit f = tcstab::fit_scaling(ok, "value", "eps_star");
    std::cout << "threshold exponent alpha: " << f.slope << " (r^2 " << f.r_squared << ")\n";
  }
  std::cout << "wrote " << path << " (" << records.size() << " records)\n";
  if (ok.empty()) throw inconclusive_error("no conclusive threshold bracket at any point");
  return 0;
}

int run_report_cmd(const Shared& sh, const std::string& in_path) {
  const ReportFormat format = report_format_from_name(sh.format);
  std::vector<Record> records = read_ndjson_records(in_path);
  if (records.empty()) throw param_error("report: no records in " + in_path);
  std::string hash = "unknown";
  auto it = records.front().str.find("config_hash");
  if (it != records.front().str.end()) hash = it->second;

  std::string out_dir = sh.opt_out->count() > 0 ? sh.out_dir : ".";
  if (const char* env = std::getenv("TCSTAB_OUT"); env != nullptr && env[0] != '\0')
    if (sh.opt_out->count() == 0) out_dir = env;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw numerical_error("cannot create output dir " + out_dir);
  const std::string path = (fs::path(out_dir) / ("report" + ext_for(format))).string();
  emit_report(records, format, path, hash);
  std::cout << "wrote " << path << " (" << records.size() << " records)\n";
  return 0;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"spectral stability toolkit for rotating annulus flow with buoyancy"};
  app.require_subcommand(1);

  Shared sh;
  app.add_option("--config", sh.config_path, "JSON config file");
  sh.opt_seed = app.add_option("--seed", sh.seed, "base RNG seed (overrides config)");
  sh.opt_out = app.add_option("--out", sh.out_dir, "output directory (overrides config)");
  sh.opt_jobs = app.add_option("--jobs", sh.jobs, "worker count (overrides config)");
  app.add_option("--format", sh.format, "output format: csv|ndjson|plotdata")
      ->check(CLI::IsMember({"csv", "ndjson", "plotdata"}));

  struct Sub {
    const char* name;
    const char* help;
    Experiment exp;
    const char* stem;
    std::vector<std::string> keys;
  };
  const std::vector<Sub> subs = {
      {"elliptic-verify", "sampled elliptic inequality constants", Experiment::elliptic,
       "elliptic", {"grad_pair", "pair_rf", "grad_l1", "pointwise", "axi_pointwise"}},
      {"resolvent-sweep", "resolvent bound constants along the spectrum line",
       Experiment::resolvent, "resolvent", {"q1", "q2", "q3", "q4"}},
      {"gap", "spectral gap of the mode operator", Experiment::gap, "gap",
       {"psi", "argmin_lambda", "range_warning"}},
      {"accretivity", "dissipation identity residuals", Experiment::accretivity, "accretivity",
       {"min_real", "max_real_residual", "max_imag_residual"}},
      {"semigroup-bound", "pointwise semigroup envelope check", Experiment::semigroup,
       "semigroup", {"psi", "worst_margin", "all_hold"}},
      {"decay", "fitted semigroup decay rate vs gap", Experiment::decay, "decay",
       {"rate", "psi", "rate_over_psi"}},
      {"spacetime", "weighted space-time inequality ratios", Experiment::spacetime, "spacetime",
       {"vort_ratio", "temp_ratio", "temp_triangle_slack", "heat_dominated"}},
  };

  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->fallthrough();
    Sub copy = s;
    sub->callback([&sh, copy]() {
      int rc = run_experiment(sh, copy.exp, copy.stem, copy.keys);
      if (rc != 0) throw CLI::RuntimeError(rc);
    });
  }
  app.add_subcommand("grid-check", "quadrature and differentiation diagnostics")
      ->fallthrough()
      ->callback([&sh]() { run_grid_check(sh); });
  app.add_subcommand("simulate", "nonlinear run with stability verdict and energy ledger")
      ->fallthrough()
      ->callback([&sh]() { run_simulate_cmd(sh); });
  app.add_subcommand("threshold-scan", "bisect the stable amplitude threshold per sweep point")
      ->fallthrough()
      ->callback([&sh]() { run_threshold_cmd(sh); });

  static std::string in_path;
  CLI::App* rep = app.add_subcommand("report", "re-emit an ndjson record stream");
  rep->fallthrough();
  rep->add_option("--in", in_path, "ndjson records file")->required();
  rep->callback([&sh]() { run_report_cmd(sh, in_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const param_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const inconclusive_error& e) {
    std::cerr << "inconclusive: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
