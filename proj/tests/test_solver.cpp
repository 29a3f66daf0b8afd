#include <doctest.h>

#include <cmath>

#include "mmpar/errors.hpp"
#include "mmpar/solver.hpp"
#include "support.hpp"

using namespace mmpar;

namespace {

double kinetic_energy(const State& s) {
  double e = 0.0;
  for (std::size_t c = 0; c < s.ux.size(); ++c) e += 0.5 * (s.ux[c] * s.ux[c] + s.uy[c] * s.uy[c]);
  return e;
}

// Taylor-Green vortex with unit wavenumber on a periodic square of side 2 pi.
State taylor_green(int n) {
  MeshConfig mc;
  mc.length = 2.0 * M_PI;
  mc.height = 2.0 * M_PI;
  mc.nx = n;
  mc.ny = n;
  mc.cyl_x = M_PI + 1e-3;
  mc.cyl_y = M_PI + 1e-3;
  mc.radius = 1e-4;
  mc.boundaries = BoundaryMode::Periodic;
  const MeshPtr m = build_mesh(mc);
  State s = State::zeros(m);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = m->xc(i);
      const double y = m->yc(j);
      s.ux(i, j) = std::sin(x) * std::cos(y);
      s.uy(i, j) = -std::cos(x) * std::sin(y);
      s.p(i, j) = 0.25 * (std::cos(2 * x) + std::cos(2 * y));
    }
  }
  average_fluxes(s, 0.0);
  PressureSolver(m).project(s.phix, s.phiy, 1e-12, 10000);
  return s;
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("parameter validation") {
  SolverParams p;
  CHECK_NOTHROW(p.validate());
  p.nu = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.dt = -1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.pressure_tol = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("step counts between slice boundaries") {
  const MeshPtr m = build_mesh(mmtest::small_channel());
  SolverParams p;
  p.dt = 0.1;
  const Propagator prop(m, p);
  CHECK(prop.steps_between(0.0, 20.0) == 200);
  CHECK(prop.steps_between(3.0, 3.0) == 0);
  p.dt = 0.3;
  CHECK_THROWS_AS(Propagator(m, p).steps_between(0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(prop.steps_between(1.0, 0.0), ConfigError);
}

TEST_CASE("zero-length propagation returns the state unchanged") {
  const MeshPtr m = build_mesh(mmtest::small_channel());
  SolverParams p;
  const State s = initial_state(m, p);
  CHECK(Propagator(m, p).propagate(s, 2.0, 2.0) == s);
}

TEST_CASE("uniform stream without an obstacle is a fixed point") {
  const MeshPtr m = build_mesh(mmtest::empty_channel(32, 16));
  REQUIRE(m->solid_count() == 0);
  SolverParams p;
  p.dt = 0.2;
  const State s0 = uniform_stream(m, 1.0);
  CHECK(max_fluid_divergence(s0) == 0.0);
  const State s = Propagator(m, p).propagate(s0, 0.0, 10.0);
  double err = 0.0;
  for (std::size_t c = 0; c < m->cells(); ++c) {
    err = std::max({err, std::abs(s.ux[c] - 1.0), std::abs(s.uy[c]), std::abs(s.p[c])});
  }
  CHECK(err <= 1e-13);
}

TEST_CASE("Taylor-Green energy decays at the analytic rate") {
  const State s0 = taylor_green(64);
  SolverParams p;
  p.nu = 0.01;
  p.dt = 0.01;
  p.inflow_speed = 0.0;
  const Propagator prop(s0.mesh, p);
  const State s1 = prop.propagate(s0, 0.0, 1.0);
  const double rate = -std::log(kinetic_energy(s1) / kinetic_energy(s0));
  const double exact = 4.0 * p.nu;  // exp(-2 nu k^2 t) in velocity, k^2 = 2
  CHECK(std::abs(rate - exact) <= 0.02 * exact);
}

TEST_CASE("divergence after each accepted step stays below the tolerance") {
  const MeshPtr m = build_mesh(mmtest::small_channel(64, 32));
  SolverParams p;
  const Propagator prop(m, p);
  State s = initial_state(m, p);
  for (int k = 0; k < 20; ++k) {
    s = prop.step(s);
    CHECK(max_fluid_divergence(s) <= p.pressure_tol);
    CHECK(all_finite(s));
  }
  CHECK(s.t == doctest::Approx(1.0));
}

TEST_CASE("no-slip and symmetry boundary conditions hold after a step") {
  const MeshPtr m = build_mesh(mmtest::small_channel(64, 32));
  SolverParams p;
  State s = Propagator(m, p).propagate(initial_state(m, p), 0.0, 1.0);
  for (int j = 0; j < m->ny(); ++j) {
    for (int i = 0; i <= m->nx(); ++i) {
      if (m->xface(i, j) == FaceKind::Wall || m->xface(i, j) == FaceKind::Closed) CHECK(s.phix(i, j) == 0.0);
    }
  }
  for (int j = 0; j <= m->ny(); ++j) {
    for (int i = 0; i < m->nx(); ++i) {
      const FaceKind k = m->yface(i, j);
      if (k != FaceKind::Interior) CHECK(s.phiy(i, j) == 0.0);
    }
  }
  for (std::size_t c = 0; c < m->cells(); ++c) {
    if (!m->fluid(c)) {
      CHECK(s.ux[c] == 0.0);
      CHECK(s.uy[c] == 0.0);
    }
  }
}

TEST_CASE("propagation is bitwise deterministic") {
  const MeshPtr m = build_mesh(mmtest::small_channel(64, 32));
  SolverParams p;
  const Propagator prop(m, p);
  const State s0 = initial_state(m, p);
  CHECK(prop.propagate(s0, 0.0, 2.0) == prop.propagate(s0, 0.0, 2.0));
}

TEST_CASE("symmetric data stays mirror-symmetric for the first steps") {
  const MeshPtr m = build_mesh(mmtest::small_channel(128, 64));
  SolverParams p;
  const Propagator prop(m, p);
  State s = initial_state(m, p, 0.0);
  const int ny = m->ny();
  for (int step = 1; step <= 10; ++step) {
    s = prop.step(s);
    double asym = 0.0;
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < m->nx(); ++i) {
        asym = std::max({asym, std::abs(s.ux(i, j) - s.ux(i, ny - 1 - j)),
                         std::abs(s.uy(i, j) + s.uy(i, ny - 1 - j)), std::abs(s.p(i, j) - s.p(i, ny - 1 - j))});
      }
    }
    CHECK(asym <= 1e-10);
  }
}

TEST_CASE("CFL above one is reported as divergence") {
  const MeshPtr m = build_mesh(mmtest::small_channel());
  SolverParams p;
  p.dt = 2.0;  // dx = 1
  CHECK_THROWS_AS(Propagator(m, p).step(initial_state(m, p)), DivergenceError);
}

TEST_CASE("non-finite input is reported as divergence") {
  const MeshPtr m = build_mesh(mmtest::small_channel());
  SolverParams p;
  State s = initial_state(m, p);
  s.p[40] = std::nan("");
  CHECK_THROWS_AS(Propagator(m, p).step(s), DivergenceError);
}

TEST_CASE("pressure iteration budget exhaustion carries the residual") {
  const MeshPtr m = build_mesh(mmtest::small_channel(64, 32));
  SolverParams p;
  p.max_pressure_iters = 1;
  State s = initial_state(m, SolverParams{}, 0.0);
  s.ux[100] += 0.5;
  average_fluxes(s, p.inflow_speed);
  try {
    Propagator(m, p).step(s);
    FAIL("expected a convergence failure");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > p.pressure_tol);
  }
}

TEST_CASE("observer sees every step") {
  const MeshPtr m = build_mesh(mmtest::small_channel());
  SolverParams p;
  p.dt = 0.1;
  int calls = 0;
  Propagator(m, p).propagate(initial_state(m, p), 0.0, 2.0, [&](const State&) { ++calls; });
  CHECK(calls == 20);
}

}
