#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmpar/diagnostics.hpp"
#include "mmpar/grid.hpp"
#include "mmpar/pint.hpp"
#include "mmpar/solver.hpp"
#include "mmpar/transfer.hpp"

namespace mmpar {

/// Everything one experiment needs. Exactly one of `re` and `nu` is in force; with neither
/// given the Reynolds number defaults to 100.
struct ExperimentConfig {
  MeshConfig mesh;
  std::optional<double> re;
  std::optional<double> nu;
  double inflow_speed = 1.0;
  double pressure_tol = 1e-8;
  int max_pressure_iters = 5000;
  std::optional<double> upwind_blend;  // unset: 0 up to Re 400, 0.1 above
  double perturbation = 1e-3;

  PintConfig pint;
  bool parareal = true;  // false: serial reference and diagnostics only
  bool same_mesh = false;

  double rho = 1.0;
  std::optional<double> a_ref;  // unset: the cylinder diameter
  bool conventional_cl = false;
  std::optional<double> strouhal_t_min;  // unset: t_end / 2
  std::optional<double> audit_time;      // unset: t_end

  std::string label = "run";
  std::string out_dir;
  bool write_slices = true;

  double diameter() const { return 2.0 * mesh.radius; }
  double viscosity() const;
  double reynolds() const;
  double blend() const;
  CoeffParams coeff_params() const;
  SolverParams solver_params(double dt) const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Parses flat `key = value` text with `#` comments. Unknown keys, malformed values and
/// violated invariants raise ConfigError carrying the offending line number.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);
/// Canonical text of every field, parseable by parse_config_text.
std::string serialize_config(const ExperimentConfig& config);
/// FNV-1a of the canonical text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct RunManifest {
  std::string config_hash;
  std::string started;
  std::string finished;
  std::vector<std::filesystem::path> files;  // relative to the run directory
  std::string version;
};

/// Reads `manifest.json` from a run directory.
RunManifest read_manifest(const std::filesystem::path& run_dir);
/// True when every listed file exists and is non-empty.
bool manifest_complete(const std::filesystem::path& run_dir, const RunManifest& manifest);

/// Chooses the output directory: explicit > config out_dir > $MMP_OUT_DIR/label > runs/label.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const std::string& explicit_dir);

/// Human-readable mesh and mask summary for both levels.
std::string cmd_mesh(const ExperimentConfig& config);

/// Runs the serial coarse and fine solutions to the audit time (reusing snapshots in
/// out_dir/snapshots when present), audits NN, IN and CP, writes audit.csv plus one file per
/// scheme, and returns the reports.
std::vector<ConsistencyReport> cmd_audit(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Serial reference, optional Parareal run and diagnostics; writes CSVs, slice snapshots and
/// manifest.json into out_dir. Errors propagate as exceptions.
RunManifest cmd_run(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Merges completed runs into per-variable convergence tables and per-run lift overlays
/// for the last time slice. Throws AggregationError for incompatible runs.
std::vector<std::filesystem::path> cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                                              const std::filesystem::path& out_dir);

/// Process exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

}  // namespace mmpar
