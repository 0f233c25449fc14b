#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tcstab/fit.hpp"
#include "tcstab/io.hpp"
#include "tcstab/nonlinear.hpp"
#include "tcstab/sweep.hpp"

using namespace tcstab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scratch_dir() {
  static std::string dir = [] {
    auto d = std::filesystem::temp_directory_path() / "tcstab_harness_tests";
    std::filesystem::create_directories(d);
    return d.string();
  }();
  return dir;
}

std::string scratch(const std::string& name) { return scratch_dir() + "/" + name; }

bool same_records(const std::vector<Record>& a, const std::vector<Record>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].num != b[i].num || a[i].str != b[i].str) return false;
  return true;
}

RunConfig small_gap_config() {
  RunConfig cfg;
  cfg.n = 32;
  cfg.k = 1;
  cfg.experiment = Experiment::gap;
  cfg.sweep.variable = SweepVariable::nu;
  cfg.sweep.values = {1e-2, 3e-3, 1e-3};
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_CASE("power law fit is exact on synthetic data") {
  std::vector<double> x = {0.1, 0.2, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = 3.0 * std::cbrt(x[i]);
  ScalingFit f = fit_scaling(x, y);
  CHECK(f.slope == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.dropped == 0);

  std::vector<double> yc(x.size(), 2.5);
  ScalingFit fc = fit_scaling(x, yc);
  CHECK(std::abs(fc.slope) < 1e-12);
  CHECK(fc.r_squared == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("power law fit filters nonpositive values and validates input") {
  std::vector<double> x = {1.0, 2.0, 4.0, 8.0, -1.0, 16.0};
  std::vector<double> y = {1.0, 2.0, 4.0, 8.0, 5.0, 0.0};
  ScalingFit f = fit_scaling(x, y);
  CHECK(f.dropped == 2);
  CHECK(f.points.size() == 4);
  CHECK(f.slope == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(fit_scaling({1, 2, 3}, {1, 2}), param_error);
  CHECK_THROWS_AS(fit_scaling({1, 2, 3, -4}, {1, 2, 3, 4}), param_error);
  CHECK_THROWS_AS(fit_scaling({2, 2, 2, 2}, {1, 2, 3, 4}), param_error);
}

TEST_CASE("threshold bisection recovers a planted exponent") {
  auto verdict = [](double nu, double eps) {
    return eps <= std::sqrt(nu) ? Outcome::stable : Outcome::growth;
  };
  std::vector<double> nus = {1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  ThresholdResult r = threshold_bisect(nus, 1e-3, 1.0, verdict);
  REQUIRE(r.conclusive);
  CHECK(r.fitted_alpha == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(r.fitted_alpha - 0.5) < 0.02);
  for (size_t i = 0; i < nus.size(); ++i) {
    CHECK(r.point_ok[i]);
    CHECK(r.bracket_hi[i] / r.bracket_lo[i] - 1.0 <= 0.05);
    CHECK(verdict(nus[i], r.bracket_lo[i]) == Outcome::stable);
    CHECK(verdict(nus[i], r.bracket_hi[i]) == Outcome::growth);
    CHECK(r.eps_star[i] >= r.bracket_lo[i]);
    CHECK(r.eps_star[i] <= r.bracket_hi[i]);
    CHECK(r.eps_star[i] == doctest::Approx(std::sqrt(nus[i])).epsilon(0.05));
  }
}

TEST_CASE("threshold bisection widens a non flipping bracket") {
  auto verdict = [](double, double eps) {
    return eps <= 0.1 ? Outcome::stable : Outcome::growth;
  };
  // both ends stable at first; the high anchor must walk up to find growth
  ThresholdResult r = threshold_bisect({1e-2, 1e-3, 1e-4, 1e-5}, 0.005, 0.02, verdict);
  REQUIRE(r.conclusive);
  for (size_t i = 0; i < r.nu_values.size(); ++i) {
    CHECK(r.point_ok[i]);
    CHECK(r.eps_star[i] == doctest::Approx(0.1).epsilon(0.05));
  }
  CHECK(std::abs(r.fitted_alpha) < 1e-6);
}

TEST_CASE("threshold bisection reports eps independent verdicts as inconclusive") {
  auto always_stable = [](double, double) { return Outcome::stable; };
  ThresholdResult r = threshold_bisect({1e-2, 1e-3, 1e-4, 1e-5}, 0.01, 0.1, always_stable);
  CHECK_FALSE(r.conclusive);
  for (bool ok : r.point_ok) CHECK_FALSE(ok);
  CHECK_FALSE(r.notes.empty());

  auto always_growth = [](double, double) { return Outcome::growth; };
  ThresholdResult g = threshold_bisect({1e-2, 1e-3, 1e-4, 1e-5}, 0.01, 0.1, always_growth);
  CHECK_FALSE(g.conclusive);
  for (bool ok : g.point_ok) CHECK_FALSE(ok);

  CHECK_THROWS_AS(threshold_bisect({}, 0.01, 0.1, always_stable), param_error);
  CHECK_THROWS_AS(threshold_bisect({1e-2}, 0.1, 0.01, always_stable), param_error);
  CHECK_THROWS_AS(threshold_bisect({1e-2}, 0.01, 0.1, nullptr), param_error);
}

TEST_CASE("gap sweep in the small viscosity range matches the expected exponent") {
  RunConfig cfg;
  cfg.n = 64;
  cfg.k = 1;
  cfg.experiment = Experiment::gap;
  cfg.sweep.variable = SweepVariable::nu;
  cfg.sweep.values = {1e-3, 3e-4, 1e-4, 3e-5, 1e-5};
  std::vector<Record> recs = run_sweep(cfg);
  REQUIRE(recs.size() == 5);
  const std::string hash = config_hash(cfg);
  for (const auto& r : recs) {
    CHECK(r.str.at("status") == "ok");
    CHECK(r.str.at("config_hash") == hash);
    CHECK(r.str.at("experiment") == "gap");
    CHECK(r.str.at("variable") == "nu");
    CHECK(r.num.at("psi") > 0.0);
  }
  CHECK(recs[0].num.at("psi") == doctest::Approx(0.0413193).epsilon(1e-5));
  CHECK(recs[4].num.at("psi") == doctest::Approx(0.00675274).epsilon(1e-5));

  ScalingFit f = fit_scaling(recs, "nu", "psi");
  CHECK(f.slope == doctest::Approx(0.392570).epsilon(1e-3));
  CHECK(f.slope > 0.25);
  CHECK(f.slope < 0.41);
  CHECK(f.r_squared > 0.999);
}

TEST_CASE("empty sweep yields an empty stream") {
  RunConfig cfg = small_gap_config();
  cfg.sweep.values = {};
  CHECK(run_sweep(cfg).empty());
}

TEST_CASE("sweeps are deterministic and order independent") {
  RunConfig cfg = small_gap_config();
  cfg.jobs = 2;
  std::vector<Record> r1 = run_sweep(cfg);
  std::vector<Record> r2 = run_sweep(cfg);
  CHECK(same_records(r1, r2));

  // byte-level determinism of the serialized stream
  const std::string hash = config_hash(cfg);
  emit_report(r1, ReportFormat::ndjson, scratch("det_a.ndjson"), hash);
  emit_report(r2, ReportFormat::ndjson, scratch("det_b.ndjson"), hash);
  CHECK(slurp(scratch("det_a.ndjson")) == slurp(scratch("det_b.ndjson")));

  // workers picking up points in reversed order must not change the merge
  set_sweep_shuffle_hook([](int npoints) {
    std::vector<int> order(npoints);
    for (int i = 0; i < npoints; ++i) order[i] = npoints - 1 - i;
    return order;
  });
  std::vector<Record> r3 = run_sweep(cfg);
  set_sweep_shuffle_hook(nullptr);
  CHECK(same_records(r1, r3));

  cfg.jobs = 3;
  std::vector<Record> r4 = run_sweep(cfg);
  CHECK(same_records(r1, r4));
}

TEST_CASE("per point failures are recorded and the sweep continues") {
  RunConfig cfg = small_gap_config();
  cfg.sweep.values = {1e-3, -1.0, 1e-2};
  std::vector<Record> recs = run_sweep(cfg);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].str.at("status") == "ok");
  CHECK(recs[1].str.at("status") == "error");
  CHECK_FALSE(recs[1].str.at("error").empty());
  CHECK(recs[1].num.count("psi") == 0);
  CHECK(recs[2].str.at("status") == "ok");
  CHECK(recs[2].num.at("psi") > 0.0);
}

TEST_CASE("experiment and format names round trip, unknown names are rejected") {
  for (const char* name : {"elliptic", "resolvent", "gap", "accretivity", "semigroup", "decay",
                           "spacetime", "simulate", "threshold"})
    CHECK(experiment_name(experiment_from_name(name)) == name);
  for (const char* name : {"nu", "B", "R", "k", "epsilon"})
    CHECK(sweep_variable_name(sweep_variable_from_name(name)) == name);
  for (const char* name : {"csv", "ndjson", "plotdata"})
    CHECK(report_format_name(report_format_from_name(name)) == name);
  CHECK_THROWS_AS(experiment_from_name("bogus"), param_error);
  CHECK_THROWS_AS(sweep_variable_from_name("bogus"), param_error);
  CHECK_THROWS_AS(report_format_from_name("bogus"), param_error);
}

TEST_CASE("config parsing round trips and rejects typos") {
  const std::string text = R"({
    "params": {"nu": 1e-3, "A": 1.0, "B": 2.0, "R": 4.0, "g_scale": 1.0, "K": 6},
    "n": 48, "k": 2, "experiment": "decay",
    "sweep": {"variable": "nu", "values": [1e-2, 1e-3]},
    "seed": 42, "output_dir": "out", "eps": 0.5, "horizon": 3.0,
    "c_prime": 0.8, "jobs": 2, "tolerances": {"slope": 0.1}
  })";
  RunConfig c = parse_config(text);
  CHECK(c.params.nu == 1e-3);
  CHECK(c.params.K == 6);
  CHECK(c.n == 48);
  CHECK(c.k == 2);
  CHECK(c.experiment == Experiment::decay);
  CHECK(c.sweep.values == std::vector<double>{1e-2, 1e-3});
  CHECK(c.seed == 42);
  CHECK(c.eps == 0.5);
  CHECK(c.tolerances.at("slope") == 0.1);

  // canonical dump is a fixed point of parse
  const std::string canon = config_to_json(c);
  CHECK(config_to_json(parse_config(canon)) == canon);

  CHECK_THROWS_AS(parse_config(R"({"bogus_key": 1})"), param_error);
  CHECK_THROWS_AS(parse_config(R"({"params": {"mu": 1e-3}})"), param_error);
  CHECK_THROWS_AS(parse_config(R"({"n": "many"})"), param_error);
  CHECK_THROWS_AS(parse_config(R"({"n": 4})"), param_error);
  CHECK_THROWS_AS(parse_config(R"({"jobs": 0})"), param_error);
  CHECK_THROWS_AS(parse_config(R"({"experiment": "nope"})"), param_error);
  CHECK_THROWS_AS(parse_config("not json"), param_error);
  CHECK_THROWS_AS(parse_config(R"([1, 2, 3])"), param_error);
  CHECK_THROWS_AS(load_config(scratch("missing_config.json")), param_error);

  std::ofstream(scratch("cfg.json")) << canon;
  RunConfig loaded = load_config(scratch("cfg.json"));
  CHECK(config_to_json(loaded) == canon);
}

TEST_CASE("config hash pins provenance but not plumbing") {
  RunConfig a = small_gap_config();
  const std::string h = config_hash(a);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);

  RunConfig b = a;
  b.output_dir = "/somewhere/else";
  b.jobs = 7;
  CHECK(config_hash(b) == h);

  RunConfig c = a;
  c.params.nu = 2e-3;
  CHECK(config_hash(c) != h);
  RunConfig d = a;
  d.seed = 8;
  CHECK(config_hash(d) != h);
}

TEST_CASE("environment overrides are limited to output dir and jobs") {
  RunConfig cfg = small_gap_config();
  setenv("TCSTAB_OUT", "/tmp/tcstab_env_out", 1);
  setenv("TCSTAB_JOBS", "3", 1);
  apply_env_overrides(cfg);
  CHECK(cfg.output_dir == "/tmp/tcstab_env_out");
  CHECK(cfg.jobs == 3);

  setenv("TCSTAB_JOBS", "abc", 1);
  CHECK_THROWS_AS(apply_env_overrides(cfg), param_error);
  setenv("TCSTAB_JOBS", "0", 1);
  CHECK_THROWS_AS(apply_env_overrides(cfg), param_error);

  unsetenv("TCSTAB_OUT");
  unsetenv("TCSTAB_JOBS");
  RunConfig untouched = small_gap_config();
  apply_env_overrides(untouched);
  CHECK(untouched.output_dir == small_gap_config().output_dir);
  CHECK(untouched.jobs == small_gap_config().jobs);
}

TEST_CASE("ndjson reports round trip exactly") {
  std::vector<Record> recs(2);
  recs[0].num = {{"index", 0}, {"nu", 1e-3}, {"psi", 0.0413192850}, {"neg", -2.5e-8}};
  recs[0].str = {{"status", "ok"}, {"config_hash", "00ff00ff00ff00ff"}};
  recs[1].num = {{"index", 1}, {"nu", 1.0 / 3.0}, {"psi", 2.0}, {"neg", 0.0}};
  recs[1].str = {{"status", "ok"}, {"config_hash", "00ff00ff00ff00ff"}};

  emit_report(recs, ReportFormat::ndjson, scratch("rt.ndjson"), "00ff00ff00ff00ff");
  std::vector<Record> back = read_ndjson_records(scratch("rt.ndjson"));
  CHECK(same_records(recs, back));

  emit_report(back, ReportFormat::ndjson, scratch("rt2.ndjson"), "00ff00ff00ff00ff");
  CHECK(slurp(scratch("rt.ndjson")) == slurp(scratch("rt2.ndjson")));

  CHECK_THROWS_AS(emit_report({}, ReportFormat::ndjson, scratch("empty.ndjson"), "deadbeef"),
                  param_error);
  CHECK_THROWS_AS(read_ndjson_records(scratch("missing.ndjson")), param_error);
}

TEST_CASE("csv and plotdata report shapes") {
  std::vector<Record> recs(1);
  recs[0].num = {{"nu", 1e-3}, {"psi", 0.04}};
  recs[0].str = {{"status", "ok"}};
  emit_report(recs, ReportFormat::csv, scratch("one.csv"), "feedfacefeedface");
  std::istringstream csv(slurp(scratch("one.csv")));
  std::string header, row, extra;
  REQUIRE(std::getline(csv, header));
  REQUIRE(std::getline(csv, row));
  CHECK_FALSE(std::getline(csv, extra));
  CHECK(header.find("nu") != std::string::npos);
  CHECK(header.find("psi") != std::string::npos);

  RunConfig cfg = small_gap_config();
  std::vector<Record> gap = run_sweep(cfg);
  emit_report(gap, ReportFormat::plotdata, scratch("gap.dat"), config_hash(cfg));
  std::istringstream dat(slurp(scratch("gap.dat")));
  std::string line;
  int comments = 0, rows = 0;
  bool saw_hash = false, saw_axes = false;
  while (std::getline(dat, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      ++comments;
      if (line.find(config_hash(cfg)) != std::string::npos) saw_hash = true;
      if (line.find("nu") != std::string::npos && line.find("psi") != std::string::npos)
        saw_axes = true;
    } else {
      ++rows;
      std::istringstream ls(line);
      double v;
      int cols = 0;
      while (ls >> v) ++cols;
      CHECK(cols >= 2);
    }
  }
  CHECK(comments >= 1);
  CHECK(saw_hash);
  CHECK(saw_axes);
  CHECK(rows == 3);
}

TEST_CASE("checkpoints round trip exactly") {
  auto g = build_grid(2.0, 24);
  FlowParams p;
  p.nu = 1e-2;
  p.A = 1.0;
  p.K = 3;
  NonlinearSim sim(p, g, 0.05);
  sim.set_state(bump_init_family(0.7, p, g));
  for (int i = 0; i < 3; ++i) sim.step();
  const SimState s = sim.state();

  save_checkpoint(s, scratch("state.ckpt"));
  SimState back = load_checkpoint(scratch("state.ckpt"));
  CHECK(back.t == s.t);
  CHECK(back.omega.K == s.omega.K);
  CHECK((back.omega.modes - s.omega.modes).norm() == 0.0);
  CHECK((back.rho.modes - s.rho.modes).norm() == 0.0);

  std::ofstream(scratch("garbage.ckpt")) << "{\"format\": \"other\"}\n";
  CHECK_THROWS_AS(load_checkpoint(scratch("garbage.ckpt")), param_error);
  std::ofstream(scratch("vers.ckpt"))
      << "{\"format\": \"tcstab-checkpoint\", \"version\": 2, \"t\": 0, \"K\": 2, \"n\": 24}\n";
  CHECK_THROWS_AS(load_checkpoint(scratch("vers.ckpt")), param_error);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing.ckpt")), param_error);
}

TEST_CASE("energy csv carries one row per snapshot and mode") {
  auto g = build_grid(2.0, 24);
  FlowParams p;
  p.nu = 1e-2;
  p.A = 1.0;
  p.K = 2;
  NonlinearSim sim(p, g, 0.05);
  sim.set_state(bump_init_family(0.5, p, g));
  std::vector<SimState> history{sim.state()};
  for (int i = 0; i < 2; ++i) {
    sim.step();
    history.push_back(sim.state());
  }
  write_energy_csv(history, p, g, scratch("energy.csv"));
  std::istringstream csv(slurp(scratch("energy.csv")));
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line.rfind("t,k,", 0) == 0);
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3 * (p.K + 1));
}
