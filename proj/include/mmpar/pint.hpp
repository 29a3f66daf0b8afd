#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmpar/grid.hpp"
#include "mmpar/solver.hpp"
#include "mmpar/transfer.hpp"

namespace mmpar {

enum class Algorithm { Classic, MicroMacro };

std::string to_string(Algorithm a);
/// classic | micromacro (case-insensitive). Throws ConfigError otherwise.
Algorithm parse_algorithm(const std::string& text);

struct PintConfig {
  double t_end = 60.0;
  int n_t = 5;
  int k_max = 0;  // 0 selects n_t / 2
  double dt_fine = 0.05;
  double dt_coarse = 0.1;
  TransferScheme scheme = TransferScheme::NN;
  Algorithm algorithm = Algorithm::MicroMacro;
  FluxMode flux_mode = FluxMode::Average;
  double epsilon = 1e-6;
  /// Compare iterates with the serial reference when one is supplied; otherwise the
  /// successive-iterate difference drives the stopping test.
  bool report_mode = true;
  double abort_growth = 1e3;
  int workers = 1;

  void validate() const;
  int iteration_cap() const;
  double slice_length() const { return t_end / n_t; }
  double slice_start(int n) const { return t_end * n / n_t; }
};

using VariableErrors = std::array<double, 3>;

struct IterationRecord {
  int k = 0;
  VariableErrors error{};      // vs reference at t = T; NaN without a reference
  std::array<bool, 3> absolute{};
  VariableErrors increment{};  // vs previous iterate at t = T; NaN at k = 0
  std::vector<double> coarse_seconds;  // per slice, this iteration's coarse sweep
  std::vector<double> fine_seconds;    // per slice, empty at k = 0
  double m_measured = 0.0;  // cumulative over iterations 0..k; 0 at k = 0
  double speedup = 0.0;     // speedup_estimate(m_measured, k, n_t); 0 at k = 0
};

struct PintReport {
  Algorithm algorithm = Algorithm::MicroMacro;
  int n_t = 0;
  double m_theoretical = 0.0;
  std::vector<IterationRecord> iterations;
  /// slices[k][n]: fine-level state at t_n after iteration k, n = 0..n_t.
  std::vector<std::vector<State>> slices;
  bool converged = false;
  std::string stop_reason;
};

/// Fine and coarse integrators plus the fine initial condition. `transfer` is required for
/// MICRO_MACRO; CLASSIC expects both propagators on the same mesh.
struct PintProblem {
  std::shared_ptr<const Propagator> fine;
  std::shared_ptr<const Propagator> coarse;
  std::shared_ptr<const Transfer> transfer;
  State initial;
};

enum class Phase { Coarse, Fine };
/// Called on the orchestrating thread before slice `slice` of iteration `k` is propagated;
/// the returned observer then runs on whichever worker executes that slice.
using ObserverFactory = std::function<StepObserver(Phase phase, int k, int slice)>;

/// Fine propagator applied serially over [0, T]; returns the states at every slice boundary
/// (a single snapshot when T = 0).
std::vector<State> run_serial_reference(const Propagator& fine, const State& initial, const PintConfig& config,
                                        const StepObserver& observer = {});

/// Classic Parareal with G and F on the same mesh.
PintReport run_parareal(const PintProblem& problem, const PintConfig& config,
                        const std::vector<State>* reference = nullptr, const ObserverFactory& observers = {});

/// Micro-macro Parareal with the FAS-form matching update.
PintReport run_micro_macro(const PintProblem& problem, const PintConfig& config,
                           const std::vector<State>* reference = nullptr, const ObserverFactory& observers = {});

/// Dispatches on config.algorithm.
PintReport run_pint(const PintProblem& problem, const PintConfig& config,
                    const std::vector<State>* reference = nullptr, const ObserverFactory& observers = {});

/// Per-variable relative max error over FLUID cells (absolute where ref vanishes).
VariableErrors error_norm(const State& u, const State& ref, std::array<bool, 3>* absolute = nullptr);

/// min(m / (k + 1), n_t / k). Throws std::domain_error for k < 1, m <= 0 or n_t < 1.
double speedup_estimate(double m, int k, int n_t);

/// Mean fine time over mean coarse time. Throws std::domain_error when either list is
/// empty or the coarse mean is not positive.
double measured_ratio(std::span<const double> fine_seconds, std::span<const double> coarse_seconds);

/// Cell-count ratio times fine steps per coarse step.
double theoretical_ratio(const Mesh& fine, const Mesh& coarse, double dt_fine, double dt_coarse);

/// Runs fn(0..n-1) on up to `workers` threads. Exceptions are collected and the one with the
/// lowest index is rethrown after all tasks finish.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

void write_errors_csv(const std::filesystem::path& path, const PintReport& report);
void write_timings_csv(const std::filesystem::path& path, const PintReport& report);
void write_speedup_csv(const std::filesystem::path& path, const PintReport& report);
/// FDUMP1 files for U_x, U_y, p of every stored slice state under dir/slices/k<k>/t<n>/.
/// Returns the written paths.
std::vector<std::filesystem::path> write_slice_snapshots(const std::filesystem::path& dir, const PintReport& report);

}  // namespace mmpar
