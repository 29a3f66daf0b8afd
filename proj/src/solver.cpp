#include "mmpar/solver.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mmpar/errors.hpp"

namespace mmpar {

void SolverParams::validate() const {
  if (!(nu > 0.0)) throw ConfigError("viscosity must be positive");
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (!(pressure_tol > 0.0)) throw ConfigError("pressure tolerance must be positive");
  if (max_pressure_iters <= 0) throw ConfigError("max_pressure_iters must be positive");
  if (upwind_blend < 0.0 || upwind_blend > 1.0) throw ConfigError("upwind_blend must lie in [0, 1]");
}

Propagator::Propagator(MeshPtr mesh, SolverParams params, Role role)
    : mesh_(std::move(mesh)), params_(params), role_(role) {
  params_.validate();
  pressure_ = std::make_shared<const PressureSolver>(mesh_);
}

namespace {

constexpr int kMaxMomentumSweeps = 2000;
constexpr double kMomentumTol = 1e-12;

// Linear system for the velocity increment of one component:
//   ap[c] d[c] = rhs[c] + aw[c] d[W] + ae[c] d[E] + as[c] d[S] + an[c] d[N]
struct MomentumSystem {
  std::vector<double> ap, aw, ae, as, an, rhs;
  explicit MomentumSystem(std::size_t n) : ap(n, 0.0), aw(n, 0.0), ae(n, 0.0), as(n, 0.0), an(n, 0.0), rhs(n, 0.0) {}
};

struct Neighbours {
  std::size_t w, e, s, n;
};

Neighbours neighbours(const Mesh& m, int i, int j) {
  const int nx = m.nx();
  const int ny = m.ny();
  return {m.index((i + nx - 1) % nx, j), m.index((i + 1) % nx, j), m.index(i, (j + ny - 1) % ny),
          m.index(i, (j + 1) % ny)};
}

double residual_at(const MomentumSystem& sys, const std::vector<double>& d, std::size_t c, const Neighbours& nb) {
  return sys.rhs[c] + sys.aw[c] * d[nb.w] + sys.ae[c] * d[nb.e] + sys.as[c] * d[nb.s] + sys.an[c] * d[nb.n] -
         sys.ap[c] * d[c];
}

std::vector<double> solve_momentum(const Mesh& m, const MomentumSystem& sys, double scale) {
  const std::size_t n = m.cells();
  std::vector<double> d(n, 0.0);
  const double tol = kMomentumTol * scale;
  const auto max_residual = [&] {
    double r = 0.0;
    for (int j = 0; j < m.ny(); ++j) {
      for (int i = 0; i < m.nx(); ++i) {
        const std::size_t c = m.index(i, j);
        if (!m.fluid(c)) continue;
        r = std::max(r, std::abs(residual_at(sys, d, c, neighbours(m, i, j))) / sys.ap[c]);
      }
    }
    return r;
  };
  double res = max_residual();
  int sweeps = 0;
  while (res > tol) {
    if (sweeps >= kMaxMomentumSweeps) {
      throw ConvergenceError("momentum solve did not converge", res);
    }
    for (int j = 0; j < m.ny(); ++j) {
      for (int i = 0; i < m.nx(); ++i) {
        const std::size_t c = m.index(i, j);
        if (!m.fluid(c)) continue;
        const Neighbours nb = neighbours(m, i, j);
        d[c] = (sys.rhs[c] + sys.aw[c] * d[nb.w] + sys.ae[c] * d[nb.e] + sys.as[c] * d[nb.s] +
                sys.an[c] * d[nb.n]) /
               sys.ap[c];
      }
    }
    ++sweeps;
    res = max_residual();
  }
  return d;
}

}  // namespace

State Propagator::step(const State& state) const {
  if (state.mesh != mesh_) throw ConfigError("state does not live on this propagator's mesh");
  const Mesh& m = *mesh_;
  const int nx = m.nx();
  const int ny = m.ny();
  const std::size_t n = m.cells();
  const double dx = m.dx();
  const double dy = m.dy();
  const double vol = m.cell_volume();
  const double dt = params_.dt;
  const double nu = params_.nu;
  const double beta = params_.upwind_blend;
  const double u_in = params_.inflow_speed;
  const bool wrap = m.periodic();

  const double cfl = cfl_number(state, dt);
  if (!(cfl <= 1.0)) {
    throw DivergenceError("CFL number " + format_double(cfl) + " exceeds 1 at t = " + format_double(state.t));
  }

  Field gpx;
  Field gpy;
  pressure_->cell_gradient(state.p, gpx, gpy);

  MomentumSystem sx(n);
  MomentumSystem sy(n);
  for (std::size_t c = 0; c < n; ++c) {
    if (!m.fluid(c)) continue;
    sx.ap[c] = sy.ap[c] = vol / dt;
    sx.rhs[c] = -vol * gpx[c];
    sy.rhs[c] = -vol * gpy[c];
  }

  // Interior face between cells a (upstream side in the face's +direction) and b.
  // Explicit face flux J of the old field and its linearisation for the increment.
  const auto interior_face = [&](std::size_t a, std::size_t b, double flux, double diff,
                                 std::vector<double>& a_to_b, std::vector<double>& b_to_a) {
    const double wa = 0.5 * (1.0 - beta) + (flux > 0.0 ? beta : 0.0);
    const double wb = 0.5 * (1.0 - beta) + (flux > 0.0 ? 0.0 : beta);
    const double jx = flux * (wa * state.ux[a] + wb * state.ux[b]) - diff * (state.ux[b] - state.ux[a]);
    const double jy = flux * (wa * state.uy[a] + wb * state.uy[b]) - diff * (state.uy[b] - state.uy[a]);
    sx.rhs[a] -= jx;
    sx.rhs[b] += jx;
    sy.rhs[a] -= jy;
    sy.rhs[b] += jy;
    sx.ap[a] += flux * wa + diff;
    sy.ap[a] += flux * wa + diff;
    sx.ap[b] += -flux * wb + diff;
    sy.ap[b] += -flux * wb + diff;
    a_to_b[a] = diff - flux * wb;
    b_to_a[b] = diff + flux * wa;
  };
  // Dirichlet zero half a cell away from the centre of `c`.
  const auto dirichlet_zero = [](MomentumSystem& sys, const Field& u, std::size_t c, double diff2) {
    sys.rhs[c] -= diff2 * u[c];
    sys.ap[c] += diff2;
  };

  const int x_faces = wrap ? nx : nx + 1;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < x_faces; ++i) {
      const double flux = state.phix(i, j);
      const double diff = nu * dy / dx;
      const std::size_t left = m.index((i + nx - 1) % nx, j);
      const std::size_t right = m.index(i % nx, j);
      switch (m.xface(i, j)) {
        case FaceKind::Interior:
          interior_face(left, right, flux, diff, sx.ae, sx.aw);
          sy.ae[left] = sx.ae[left];
          sy.aw[right] = sx.aw[right];
          break;
        case FaceKind::Wall:
          if (m.fluid(left)) {
            dirichlet_zero(sx, state.ux, left, 2.0 * diff);
            dirichlet_zero(sy, state.uy, left, 2.0 * diff);
          } else {
            dirichlet_zero(sx, state.ux, right, 2.0 * diff);
            dirichlet_zero(sy, state.uy, right, 2.0 * diff);
          }
          break;
        case FaceKind::Inlet: {
          const double jx = flux * u_in - 2.0 * diff * (state.ux[right] - u_in);
          const double jy = -2.0 * diff * state.uy[right];
          sx.rhs[right] += jx;
          sy.rhs[right] += jy;
          sx.ap[right] += 2.0 * diff;
          sy.ap[right] += 2.0 * diff;
          break;
        }
        case FaceKind::Outlet: {
          const std::size_t c = m.index(nx - 1, j);
          sx.rhs[c] -= flux * state.ux[c];
          sy.rhs[c] -= flux * state.uy[c];
          sx.ap[c] += flux;
          sy.ap[c] += flux;
          break;
        }
        default:
          break;
      }
    }
  }

  const int y_faces = wrap ? ny : ny + 1;
  for (int j = 0; j < y_faces; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double flux = state.phiy(i, j);
      const double diff = nu * dx / dy;
      const std::size_t below = m.index(i, (j + ny - 1) % ny);
      const std::size_t above = m.index(i, j % ny);
      switch (m.yface(i, j)) {
        case FaceKind::Interior:
          interior_face(below, above, flux, diff, sx.an, sx.as);
          sy.an[below] = sx.an[below];
          sy.as[above] = sx.as[above];
          break;
        case FaceKind::Wall:
          if (m.fluid(below)) {
            dirichlet_zero(sx, state.ux, below, 2.0 * diff);
            dirichlet_zero(sy, state.uy, below, 2.0 * diff);
          } else {
            dirichlet_zero(sx, state.ux, above, 2.0 * diff);
            dirichlet_zero(sy, state.uy, above, 2.0 * diff);
          }
          break;
        case FaceKind::Symmetry:
          // Slip for the tangential component, zero normal velocity.
          dirichlet_zero(sy, state.uy, j == 0 ? above : below, 2.0 * diff);
          break;
        default:
          break;
      }
    }
  }

  double scale = std::max(std::abs(u_in), 1e-300);
  for (std::size_t c = 0; c < n; ++c) scale = std::max({scale, std::abs(state.ux[c]), std::abs(state.uy[c])});
  const std::vector<double> dux = solve_momentum(m, sx, scale);
  const std::vector<double> duy = solve_momentum(m, sy, scale);

  State next = State::zeros(mesh_);
  for (std::size_t c = 0; c < n; ++c) {
    if (!m.fluid(c)) continue;
    next.ux[c] = state.ux[c] + dux[c];
    next.uy[c] = state.uy[c] + duy[c];
  }

  // Predicted face fluxes with the old pressure gradient swapped from cell to face form.
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const std::size_t left = m.index((i + nx - 1) % nx, j);
      const std::size_t right = m.index(i % nx, j);
      double phi = 0.0;
      switch (m.xface(i, j)) {
        case FaceKind::Interior: {
          const double gf = pressure_->xface_gradient(state.p, i, j);
          phi = dy * (0.5 * (next.ux[left] + next.ux[right]) + dt * (0.5 * (gpx[left] + gpx[right]) - gf));
          break;
        }
        case FaceKind::Outlet: {
          const double gf = pressure_->xface_gradient(state.p, i, j);
          phi = dy * (next.ux[left] + dt * (gpx[left] - gf));
          break;
        }
        case FaceKind::Inlet:
          phi = dy * u_in;
          break;
        default:
          break;
      }
      next.phix(i, j) = phi;
    }
  }
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t below = m.index(i, (j + ny - 1) % ny);
      const std::size_t above = m.index(i, j % ny);
      double phi = 0.0;
      if (m.yface(i, j) == FaceKind::Interior) {
        const double gf = pressure_->yface_gradient(state.p, i, j);
        phi = dx * (0.5 * (next.uy[below] + next.uy[above]) + dt * (0.5 * (gpy[below] + gpy[above]) - gf));
      }
      next.phiy(i, j) = phi;
    }
  }

  const PressureSolver::Result proj =
      pressure_->project(next.phix, next.phiy, params_.pressure_tol, params_.max_pressure_iters);
  Field gqx;
  Field gqy;
  pressure_->cell_gradient(proj.q, gqx, gqy);
  for (std::size_t c = 0; c < n; ++c) {
    if (!m.fluid(c)) continue;
    next.p[c] = state.p[c] + proj.q[c] / dt;
    next.ux[c] -= gqx[c];
    next.uy[c] -= gqy[c];
  }
  next.t = state.t + dt;

  if (!all_finite(next)) {
    throw DivergenceError("non-finite values after step at t = " + format_double(next.t));
  }
  return next;
}

int Propagator::steps_between(double t0, double t1) const {
  const double ratio = (t1 - t0) / params_.dt;
  const double rounded = std::round(ratio);
  if (rounded < 0.0 || std::abs(ratio - rounded) > 1e-9) {
    throw ConfigError("interval [" + format_double(t0) + ", " + format_double(t1) +
                      "] is not an integer multiple of dt = " + format_double(params_.dt));
  }
  return static_cast<int>(rounded);
}

State Propagator::propagate(const State& state, double t0, double t1, const StepObserver& observer) const {
  const int steps = steps_between(t0, t1);
  State current = state;
  for (int k = 0; k < steps; ++k) {
    current = step(current);
    if (observer) observer(current);
  }
  if (steps > 0) current.t = t1;
  return current;
}

Field divergence(const State& state) {
  const Mesh& m = *state.mesh;
  Field div(m.nx(), m.ny());
  const double inv_vol = 1.0 / m.cell_volume();
  for (int j = 0; j < m.ny(); ++j) {
    for (int i = 0; i < m.nx(); ++i) {
      if (!m.fluid(i, j)) continue;
      div(i, j) = (state.phix(i + 1, j) - state.phix(i, j) + state.phiy(i, j + 1) - state.phiy(i, j)) * inv_vol;
    }
  }
  return div;
}

double max_fluid_divergence(const State& state) {
  const Field div = divergence(state);
  double mx = 0.0;
  for (std::size_t c = 0; c < div.size(); ++c) mx = std::max(mx, std::abs(div[c]));
  return mx;
}

void average_fluxes(State& state, double inflow_speed) {
  const Mesh& m = *state.mesh;
  const int nx = m.nx();
  const int ny = m.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      double phi = 0.0;
      switch (m.xface(i, j)) {
        case FaceKind::Interior:
          phi = 0.5 * (state.ux(i % nx, j) + state.ux((i + nx - 1) % nx, j));
          break;
        case FaceKind::Inlet:
          phi = inflow_speed;
          break;
        case FaceKind::Outlet:
          phi = state.ux(nx - 1, j);
          break;
        default:
          break;
      }
      state.phix(i, j) = phi * m.dy();
    }
  }
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double phi = 0.0;
      if (m.yface(i, j) == FaceKind::Interior) phi = 0.5 * (state.uy(i, j % ny) + state.uy(i, (j + ny - 1) % ny));
      state.phiy(i, j) = phi * m.dx();
    }
  }
}

State initial_state(MeshPtr mesh, const SolverParams& params, double perturbation) {
  State s = State::zeros(mesh);
  const Mesh& m = *mesh;
  const Geometry& g = m.geometry();
  for (std::size_t c = 0; c < m.cells(); ++c) {
    if (m.fluid(c)) s.ux[c] = params.inflow_speed;
  }
  if (perturbation != 0.0) {
    int column = 0;
    while (column < m.nx() - 1 && m.xc(column) <= g.cyl_x + g.radius) ++column;
    for (int j = 0; j < m.ny(); ++j) {
      if (m.fluid(column, j)) s.uy(column, j) += perturbation * params.inflow_speed;
    }
  }
  average_fluxes(s, params.inflow_speed);
  PressureSolver(mesh).project(s.phix, s.phiy, params.pressure_tol, params.max_pressure_iters);
  return s;
}

State uniform_stream(MeshPtr mesh, double speed) {
  State s = State::zeros(mesh);
  const Mesh& m = *mesh;
  for (std::size_t c = 0; c < m.cells(); ++c) {
    if (m.fluid(c)) s.ux[c] = speed;
  }
  for (int j = 0; j < m.ny(); ++j) {
    for (int i = 0; i <= m.nx(); ++i) {
      const FaceKind k = m.xface(i, j);
      if (k == FaceKind::Interior || k == FaceKind::Inlet || k == FaceKind::Outlet) s.phix(i, j) = speed * m.dy();
    }
  }
  return s;
}

}  // namespace mmpar
