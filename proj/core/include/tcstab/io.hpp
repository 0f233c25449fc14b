#pragma once

#include <string>
#include <vector>

#include "tcstab/nonlinear.hpp"
#include "tcstab/sweep.hpp"

namespace tcstab {

// Config document: a single JSON object (schema documented in the README).
// Unknown keys are rejected so typos cannot silently change a run.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string config_to_json(const RunConfig& config);  // canonical form

// FNV-1a hash of the canonical serialization, as fixed-width hex.  Every
// output record carries it, so results stay traceable to their exact config.
std::string config_hash(const RunConfig& config);

// Environment overrides, deliberately limited to these two:
//   TCSTAB_OUT  -> output_dir,  TCSTAB_JOBS -> jobs
void apply_env_overrides(RunConfig& config);

enum class ReportFormat { csv, ndjson, plotdata };

ReportFormat report_format_from_name(const std::string& name);
std::string report_format_name(ReportFormat f);

// Writes records to out_path.  csv: stable sorted column order, one header
// row.  ndjson: one canonical JSON object per line (round-trips exactly).
// plotdata: whitespace-separated numeric columns behind comment headers that
// name the axes and carry the config hash.
void emit_report(const std::vector<Record>& records, ReportFormat format,
                 const std::string& out_path, const std::string& config_hash_hex);

std::vector<Record> read_ndjson_records(const std::string& path);

// Simulation state checkpoints: versioned NDJSON (one meta line, one line per
// stored mode row).
void save_checkpoint(const SimState& state, const std::string& path);
SimState load_checkpoint(const std::string& path);

// Per-snapshot, per-mode energy ingredients of a simulation history:
// t, k, vorticity L2 / stream sup / weighted 1/r norms, temperature L2 / 1/r.
void write_energy_csv(const std::vector<SimState>& history, const FlowParams& params,
                      const RadialGrid& grid, const std::string& path);

}  // namespace tcstab
