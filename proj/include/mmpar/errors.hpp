#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmpar {

/// Invalid geometry, inconsistent parameters, mesh mismatches, malformed input.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

/// A linear solve inside a time step did not reach its tolerance.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Non-finite values or CFL blow-up during time stepping.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parareal iterate error grew beyond the abort threshold, or a slice solve failed.
class PararealError : public std::runtime_error {
public:
  enum class Cause { ErrorGrowth, SliceSolve };

  PararealError(const std::string& what, int iteration, int slice, Cause cause = Cause::ErrorGrowth)
      : std::runtime_error(what + " [iteration " + std::to_string(iteration) + ", slice " +
                           std::to_string(slice) + "]"),
        iteration_(iteration),
        slice_(slice),
        cause_(cause) {}
  int iteration() const noexcept { return iteration_; }
  int slice() const noexcept { return slice_; }
  Cause cause() const noexcept { return cause_; }

private:
  int iteration_;
  int slice_;
  Cause cause_;
};

/// Run directories that cannot be merged into one report.
class AggregationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmpar
