#pragma once

#include <functional>
#include <memory>

#include "mmpar/grid.hpp"
#include "mmpar/pressure.hpp"

namespace mmpar {

struct SolverParams {
  double nu = 0.02;  // kinematic viscosity
  double dt = 0.05;
  double inflow_speed = 1.0;
  double pressure_tol = 1e-8;  // max |div(phi)| accepted after a step, 1/s
  int max_pressure_iters = 5000;
  double upwind_blend = 0.0;  // 0 = central convection, 1 = first-order upwind

  void validate() const;
};

enum class Role { Coarse, Fine };

/// Observer invoked after every accepted step.
using StepObserver = std::function<void(const State&)>;

/// One mesh level's time integrator. Backward Euler for convection (lagged face flux) and
/// diffusion, explicit old pressure gradient, then a face-flux projection. Immutable after
/// construction and safe to share between threads.
class Propagator {
public:
  Propagator(MeshPtr mesh, SolverParams params, Role role = Role::Fine);

  /// Advances by one dt. Throws DivergenceError on CFL > 1 or non-finite values,
  /// ConvergenceError when a linear solve exceeds its iteration budget.
  State step(const State& state) const;

  /// Applies `step` exactly steps_between(t0, t1) times.
  State propagate(const State& state, double t0, double t1, const StepObserver& observer = {}) const;

  /// round((t1 - t0) / dt); throws ConfigError when that ratio is not an integer to 1e-9.
  int steps_between(double t0, double t1) const;

  const MeshPtr& mesh() const { return mesh_; }
  const SolverParams& params() const { return params_; }
  Role role() const { return role_; }
  const PressureSolver& pressure() const { return *pressure_; }

private:
  MeshPtr mesh_;
  SolverParams params_;
  Role role_;
  std::shared_ptr<const PressureSolver> pressure_;
};

/// Per-cell net outflow of phi divided by the cell volume; zero in SOLID cells.
Field divergence(const State& state);
double max_fluid_divergence(const State& state);

/// Overwrites phi with the linear face average of the cell velocity (inflow speed on inlet
/// faces, cell value on outlet faces, zero on walls and symmetry planes). Generally not
/// divergence-free.
void average_fluxes(State& state, double inflow_speed);

/// Uniform stream u_inf in FLUID cells, p = 0, optional transverse kick of
/// `perturbation * u_inf` in the first fluid column behind the cylinder, and projected
/// face fluxes.
State initial_state(MeshPtr mesh, const SolverParams& params, double perturbation = 1e-3);

/// Uniform stream with no perturbation and exact face fluxes u_inf * dy.
State uniform_stream(MeshPtr mesh, double speed);

}  // namespace mmpar
