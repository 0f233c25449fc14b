#include "tcstab/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tcstab {

namespace {

using njson = nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

void expect_keys(const njson& j, std::initializer_list<const char*> allowed, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw param_error(std::string("config: unknown key '") + it.key() + "' in " + where);
  }
}

njson config_to_tree(const RunConfig& c) {
  njson j;
  j["params"] = {{"nu", c.params.nu},   {"A", c.params.A},
                 {"B", c.params.B},     {"R", c.params.R},
                 {"g_scale", c.params.g_scale}, {"K", c.params.K}};
  j["n"] = c.n;
  j["k"] = c.k;
  j["experiment"] = experiment_name(c.experiment);
  j["sweep"] = {{"variable", sweep_variable_name(c.sweep.variable)},
                {"values", c.sweep.values}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["eps"] = c.eps;
  j["horizon"] = c.horizon;
  j["c_prime"] = c.c_prime;
  j["jobs"] = c.jobs;
  j["tolerances"] = c.tolerances;
  return j;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += "\"\"";
    else q += ch;
  }
  q += '"';
  return q;
}

std::ofstream open_out(const std::string& path, const char* who) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw numerical_error(std::string(who) + ": cannot open " + path);
  return out;
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  njson j;
  try {
    j = njson::parse(json_text);
  } catch (const std::exception& e) {
    throw param_error(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw param_error("config: top level must be a JSON object");
  expect_keys(j,
              {"params", "n", "k", "experiment", "sweep", "seed", "output_dir", "eps",
               "horizon", "c_prime", "jobs", "tolerances"},
              "top level");

  RunConfig c;
  try {
    if (j.contains("params")) {
      const njson& p = j.at("params");
      expect_keys(p, {"nu", "A", "B", "R", "g_scale", "K"}, "params");
      c.params.nu = p.value("nu", c.params.nu);
      c.params.A = p.value("A", c.params.A);
      c.params.B = p.value("B", c.params.B);
      c.params.R = p.value("R", c.params.R);
      c.params.g_scale = p.value("g_scale", c.params.g_scale);
      c.params.K = p.value("K", c.params.K);
    }
    c.n = j.value("n", c.n);
    c.k = j.value("k", c.k);
    if (j.contains("experiment")) c.experiment = experiment_from_name(j.at("experiment"));
    if (j.contains("sweep")) {
      const njson& s = j.at("sweep");
      expect_keys(s, {"variable", "values"}, "sweep");
      if (s.contains("variable")) c.sweep.variable = sweep_variable_from_name(s.at("variable"));
      if (s.contains("values")) c.sweep.values = s.at("values").get<std::vector<double>>();
    }
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.eps = j.value("eps", c.eps);
    c.horizon = j.value("horizon", c.horizon);
    c.c_prime = j.value("c_prime", c.c_prime);
    c.jobs = j.value("jobs", c.jobs);
    if (j.contains("tolerances"))
      c.tolerances = j.at("tolerances").get<std::map<std::string, double>>();
  } catch (const param_error&) {
    throw;
  } catch (const std::exception& e) {
    throw param_error(std::string("config: ") + e.what());
  }
  c.params.validate();
  if (c.n < 8) throw param_error("config: n must be at least 8");
  if (c.jobs < 1) throw param_error("config: jobs must be positive");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw param_error("config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const RunConfig& config) { return config_to_tree(config).dump(); }

std::string config_hash(const RunConfig& config) {
  // hash the experiment definition only: where the output lands and how many
  // workers ran it must not change the bytes of the records
  njson tree = config_to_tree(config);
  tree.erase("output_dir");
  tree.erase("jobs");
  const std::string s = tree.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void apply_env_overrides(RunConfig& config) {
  if (const char* out = std::getenv("TCSTAB_OUT"); out != nullptr && out[0] != '\0')
    config.output_dir = out;
  if (const char* jobs = std::getenv("TCSTAB_JOBS"); jobs != nullptr && jobs[0] != '\0') {
    char* end = nullptr;
    const long v = std::strtol(jobs, &end, 10);
    if (end == jobs || *end != '\0' || v < 1)
      throw param_error("TCSTAB_JOBS must be a positive integer");
    config.jobs = static_cast<int>(v);
  }
}

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "ndjson") return ReportFormat::ndjson;
  if (name == "plotdata") return ReportFormat::plotdata;
  throw param_error("unknown report format: " + name);
}

std::string report_format_name(ReportFormat f) {
  switch (f) {
    case ReportFormat::csv: return "csv";
    case ReportFormat::ndjson: return "ndjson";
    case ReportFormat::plotdata: return "plotdata";
  }
  throw param_error("unknown report format enum value");
}

void emit_report(const std::vector<Record>& records, ReportFormat format,
                 const std::string& out_path, const std::string& config_hash_hex) {
  if (records.empty()) throw param_error("emit_report: no records");
  std::ofstream out = open_out(out_path, "emit_report");

  std::set<std::string> numcols, strcols;
  for (const Record& r : records) {
    for (const auto& kv : r.num) numcols.insert(kv.first);
    for (const auto& kv : r.str) strcols.insert(kv.first);
  }

  switch (format) {
    case ReportFormat::csv: {
      bool first = true;
      for (const std::string& c : numcols) {
        if (!first) out << ',';
        out << c;
        first = false;
      }
      for (const std::string& c : strcols) {
        if (!first) out << ',';
        out << c;
        first = false;
      }
      out << '\n';
      for (const Record& r : records) {
        first = true;
        for (const std::string& c : numcols) {
          if (!first) out << ',';
          auto it = r.num.find(c);
          if (it != r.num.end()) out << fmt17(it->second);
          first = false;
        }
        for (const std::string& c : strcols) {
          if (!first) out << ',';
          auto it = r.str.find(c);
          if (it != r.str.end()) out << csv_quote(it->second);
          first = false;
        }
        out << '\n';
      }
      break;
    }
    case ReportFormat::ndjson: {
      for (const Record& r : records) {
        njson j;
        j["num"] = r.num;
        j["str"] = r.str;
        out << j.dump() << '\n';
      }
      break;
    }
    case ReportFormat::plotdata: {
      out << "# tcstab plotdata\n";
      out << "# config " << config_hash_hex << '\n';
      out << "# columns:";
      for (const std::string& c : numcols) out << ' ' << c;
      out << '\n';
      for (const Record& r : records) {
        bool first = true;
        for (const std::string& c : numcols) {
          if (!first) out << ' ';
          auto it = r.num.find(c);
          out << (it != r.num.end() ? fmt17(it->second) : "nan");
          first = false;
        }
        out << '\n';
      }
      break;
    }
  }
  if (!out) throw numerical_error("emit_report: write failed for " + out_path);
}

std::vector<Record> read_ndjson_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw param_error("read_ndjson_records: cannot read " + path);
  std::vector<Record> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    njson j;
    try {
      j = njson::parse(line);
    } catch (const std::exception& e) {
      throw param_error(std::string("read_ndjson_records: ") + e.what());
    }
    Record r;
    if (j.contains("num")) r.num = j.at("num").get<std::map<std::string, double>>();
    if (j.contains("str")) r.str = j.at("str").get<std::map<std::string, std::string>>();
    out.push_back(std::move(r));
  }
  return out;
}

void save_checkpoint(const SimState& state, const std::string& path) {
  std::ofstream out = open_out(path, "save_checkpoint");
  njson meta = {{"format", "tcstab-checkpoint"},
                {"version", 1},
                {"t", state.t},
                {"K", state.omega.K},
                {"n", state.omega.n}};
  out << meta.dump() << '\n';
  auto rows = [&](const char* field, const ModeArray& a) {
    for (int k = 0; k <= a.K; ++k) {
      std::vector<double> re(a.n), im(a.n);
      for (int i = 0; i < a.n; ++i) {
        re[i] = a.modes(k, i).real();
        im[i] = a.modes(k, i).imag();
      }
      njson j = {{"field", field}, {"k", k}, {"re", re}, {"im", im}};
      out << j.dump() << '\n';
    }
  };
  rows("omega", state.omega);
  rows("rho", state.rho);
  if (!out) throw numerical_error("save_checkpoint: write failed for " + path);
}

SimState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw param_error("load_checkpoint: cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw param_error("load_checkpoint: empty file");
  njson meta;
  try {
    meta = njson::parse(line);
  } catch (const std::exception& e) {
    throw param_error(std::string("load_checkpoint: ") + e.what());
  }
  if (meta.value("format", "") != std::string("tcstab-checkpoint"))
    throw param_error("load_checkpoint: not a checkpoint file");
  if (meta.value("version", 0) != 1) throw param_error("load_checkpoint: unsupported version");
  const int K = meta.at("K").get<int>();
  const int n = meta.at("n").get<int>();
  if (K < 1 || n < 8) throw param_error("load_checkpoint: bad dimensions");

  SimState s;
  s.t = meta.at("t").get<double>();
  s.omega = ModeArray(K, n);
  s.rho = ModeArray(K, n);
  int seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    njson j;
    try {
      j = njson::parse(line);
    } catch (const std::exception& e) {
      throw param_error(std::string("load_checkpoint: ") + e.what());
    }
    const std::string field = j.at("field").get<std::string>();
    const int k = j.at("k").get<int>();
    if (k < 0 || k > K) throw param_error("load_checkpoint: mode index out of range");
    const auto re = j.at("re").get<std::vector<double>>();
    const auto im = j.at("im").get<std::vector<double>>();
    if (static_cast<int>(re.size()) != n || static_cast<int>(im.size()) != n)
      throw param_error("load_checkpoint: row length mismatch");
    ModeArray& a = field == "omega" ? s.omega : (field == "rho" ? s.rho : s.omega);
    if (field != "omega" && field != "rho")
      throw param_error("load_checkpoint: unknown field " + field);
    for (int i = 0; i < n; ++i) a.modes(k, i) = cplx(re[i], im[i]);
    ++seen;
  }
  if (seen != 2 * (K + 1)) throw param_error("load_checkpoint: missing mode rows");
  return s;
}

void write_energy_csv(const std::vector<SimState>& history, const FlowParams& params,
                      const RadialGrid& grid, const std::string& path) {
  if (history.empty()) throw param_error("write_energy_csv: empty history");
  const int K = history.front().omega.K;
  std::ofstream out = open_out(path, "write_energy_csv");
  out << "t,k,E_l2,E_phi_inf,E_mr,H_l2,H_mr\n";

  std::vector<OperatorBundle> bundles;
  bundles.reserve(K + 1);
  bundles.push_back(assemble_zero_mode(params, grid));
  for (int k = 1; k <= K; ++k) bundles.push_back(assemble_mode_operator(params, k, grid));

  const Vec& r = grid.nodes;
  auto rc = r.array().cast<cplx>();
  const Vec wr = (grid.quad_weights.array() * r.array()).matrix();
  for (const SimState& s : history) {
    for (int k = 0; k <= K; ++k) {
      double l2, inf = 0, mr = 0, rl2, rmr = 0;
      if (k == 0) {
        l2 = std::sqrt((wr.array() * s.omega.modes.row(0).transpose().array().abs2()).sum());
        rl2 = std::sqrt((wr.array() * s.rho.modes.row(0).transpose().array().abs2()).sum());
      } else {
        CVec xo = s.omega.modes.row(k).transpose();
        CVec xr = s.rho.modes.row(k).transpose();
        l2 = wnorm(grid, xo);
        mr = wnorm(grid, CVec((xo.array() / rc).matrix()));
        rl2 = wnorm(grid, xr);
        rmr = wnorm(grid, CVec((xr.array() / rc).matrix()));
        ModeField phi = solve_stream(ModeField{k, Rep::weighted, xo}, bundles[k]);
        inf = (phi.values.cwiseAbs().array() / r.array().sqrt()).maxCoeff();
      }
      out << fmt17(s.t) << ',' << k << ',' << fmt17(l2) << ',' << fmt17(inf) << ','
          << fmt17(mr) << ',' << fmt17(rl2) << ',' << fmt17(rmr) << '\n';
    }
  }
  if (!out) throw numerical_error("write_energy_csv: write failed for " + path);
}

}  // namespace tcstab
