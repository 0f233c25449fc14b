#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tcstab/fit.hpp"
#include "tcstab/operators.hpp"

namespace tcstab {

enum class Experiment {
  elliptic,
  resolvent,
  gap,
  accretivity,
  semigroup,
  decay,
  spacetime,
  simulate,
  threshold,
};

Experiment experiment_from_name(const std::string& name);
std::string experiment_name(Experiment e);

enum class SweepVariable { nu, B, R, k, epsilon };

SweepVariable sweep_variable_from_name(const std::string& name);
std::string sweep_variable_name(SweepVariable v);

struct SweepSpec {
  SweepVariable variable = SweepVariable::nu;
  std::vector<double> values;
};

// One sweep run: a base parameter set, a grid, the swept variable, and the
// experiment dispatched at every point.  Everything an output record depends
// on lives here, so the config hash pins the full provenance.
struct RunConfig {
  FlowParams params;
  int n = 64;
  int k = 1;
  Experiment experiment = Experiment::gap;
  SweepSpec sweep;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  double eps = 1.0;      // amplitude scale for simulate/threshold points
  double horizon = 0.0;  // 0 means a per-experiment default
  double c_prime = 0.0;  // exponential weight constant
  int jobs = 1;
  std::map<std::string, double> tolerances;
};

// Flat typed record: numeric and string fields with sorted, stable keys.
struct Record {
  std::map<std::string, double> num;
  std::map<std::string, std::string> str;
};

// Runs the configured experiment at every sweep value.  One record per point,
// by-index order regardless of worker scheduling; per-point failures become
// records with status = "error" and the sweep continues.
std::vector<Record> run_sweep(const RunConfig& config);

// Harness-level regression over records: extracts two numeric fields and fits
// log y against log x.  Records missing either field are skipped.
ScalingFit fit_scaling(const std::vector<Record>& records, const std::string& x_field,
                       const std::string& y_field);

// Test hook: permutes the order in which workers pick up sweep points (the
// merged result must not depend on it).  Pass nullptr to reset.
void set_sweep_shuffle_hook(std::function<std::vector<int>(int)> hook);

}  // namespace tcstab
