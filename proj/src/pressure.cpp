#include "mmpar/pressure.hpp"

#include <algorithm>
#include <cmath>

#include "mmpar/errors.hpp"

namespace mmpar {

namespace {

constexpr double kMicTuning = 0.97;
constexpr double kMicSafety = 0.25;

double dot(const std::vector<double>& a, const std::vector<double>& b,
           const std::vector<std::size_t>& cells) {
  double s = 0.0;
  for (std::size_t c : cells) s += a[c] * b[c];
  return s;
}

double max_abs(const std::vector<double>& a, const std::vector<std::size_t>& cells) {
  double m = 0.0;
  for (std::size_t c : cells) m = std::max(m, std::abs(a[c]));
  return m;
}

}  // namespace

PressureSolver::PressureSolver(MeshPtr mesh, Preconditioner kind)
    : mesh_(std::move(mesh)), periodic_(mesh_->periodic()), kind_(periodic_ ? Preconditioner::Jacobi : kind) {
  const Mesh& m = *mesh_;
  const int nx = m.nx();
  const int ny = m.ny();
  const std::size_t n = m.cells();
  const double ax = m.dy() / m.dx();
  const double ay = m.dx() / m.dy();

  diag_.assign(n, 0.0);
  east_.assign(n, 0.0);
  north_.assign(n, 0.0);
  east_idx_.assign(n, 0);
  north_idx_.assign(n, 0);
  west_idx_.assign(n, 0);
  south_idx_.assign(n, 0);

  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = m.index(i, j);
      east_idx_[c] = west_idx_[c] = north_idx_[c] = south_idx_[c] = c;
      if (!m.fluid(c)) continue;
      fluid_cells_.push_back(c);
      const FaceKind e = m.xface(i + 1, j);
      const FaceKind w = m.xface(i, j);
      const FaceKind nn = m.yface(i, j + 1);
      const FaceKind s = m.yface(i, j);
      if (e == FaceKind::Interior) {
        east_[c] = ax;
        east_idx_[c] = m.index((i + 1) % nx, j);
        diag_[c] += ax;
      } else if (e == FaceKind::Outlet) {
        diag_[c] += 2.0 * ax;
      }
      if (w == FaceKind::Interior) {
        west_idx_[c] = m.index((i + nx - 1) % nx, j);
        diag_[c] += ax;
      }
      if (nn == FaceKind::Interior) {
        north_[c] = ay;
        north_idx_[c] = m.index(i, (j + 1) % ny);
        diag_[c] += ay;
      }
      if (s == FaceKind::Interior) {
        south_idx_[c] = m.index(i, (j + ny - 1) % ny);
        diag_[c] += ay;
      }
    }
  }

  switch (kind_) {
    case Preconditioner::Jacobi:
      jacobi_.assign(n, 0.0);
      for (std::size_t c : fluid_cells_) jacobi_[c] = diag_[c] > 0.0 ? 1.0 / diag_[c] : 0.0;
      break;
    case Preconditioner::Mic:
      factors_.push_back(build_factor(false));
      break;
    case Preconditioner::SymmetricMic:
      factors_.push_back(build_factor(false));
      factors_.push_back(build_factor(true));
      break;
  }
}

PressureSolver::MicFactor PressureSolver::build_factor(bool top_down) const {
  const Mesh& m = *mesh_;
  const int nx = m.nx();
  const int ny = m.ny();
  const std::size_t n = m.cells();
  MicFactor f;
  f.real.assign(n, 0);
  f.east.assign(n, 0.0);
  f.north.assign(n, 0.0);
  f.east_idx.assign(n, 0);
  f.north_idx.assign(n, 0);
  f.west_idx.assign(n, 0);
  f.south_idx.assign(n, 0);
  f.precon.assign(n, 0.0);
  for (int jo = 0; jo < ny; ++jo) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t co = static_cast<std::size_t>(jo) * nx + i;
      const std::size_t c = m.index(i, top_down ? ny - 1 - jo : jo);
      f.real[co] = c;
      f.east_idx[co] = f.north_idx[co] = f.west_idx[co] = f.south_idx[co] = co;
      if (!m.fluid(c)) continue;
      f.order.push_back(co);
      if (east_idx_[c] != c) {
        f.east[co] = east_[c];
        f.east_idx[co] = co + 1;
      }
      if (west_idx_[c] != c) f.west_idx[co] = co - 1;
      // The ordered "north" neighbour is the real south one when rows run top-down.
      const std::size_t up = top_down ? south_idx_[c] : north_idx_[c];
      const std::size_t down = top_down ? north_idx_[c] : south_idx_[c];
      if (up != c) {
        f.north[co] = top_down ? north_[up] : north_[c];
        f.north_idx[co] = co + nx;
      }
      if (down != c) f.south_idx[co] = co - nx;
    }
  }

  // MIC(0); west/south neighbours precede the current cell in the ordering.
  for (std::size_t co : f.order) {
    const std::size_t w = f.west_idx[co];
    const std::size_t s = f.south_idx[co];
    const double aw = (w != co) ? f.east[w] : 0.0;
    const double as = (s != co) ? f.north[s] : 0.0;
    const double pw = (w != co) ? f.precon[w] : 0.0;
    const double ps = (s != co) ? f.precon[s] : 0.0;
    const double d = diag_[f.real[co]];
    double e = d - (aw * pw) * (aw * pw) - (as * ps) * (as * ps) -
               kMicTuning * (aw * f.north[w] * pw * pw + as * f.east[s] * ps * ps);
    if (e < kMicSafety * d) e = d;
    f.precon[co] = 1.0 / std::sqrt(e);
  }
  return f;
}

void PressureSolver::apply(const std::vector<double>& x, std::vector<double>& y) const {
  for (std::size_t c : fluid_cells_) {
    const std::size_t w = west_idx_[c];
    const std::size_t s = south_idx_[c];
    double v = diag_[c] * x[c] - east_[c] * x[east_idx_[c]] - north_[c] * x[north_idx_[c]];
    if (w != c) v -= east_[w] * x[w];
    if (s != c) v -= north_[s] * x[s];
    y[c] = v;
  }
}

void PressureSolver::remove_mean(std::vector<double>& v) const {
  if (fluid_cells_.empty()) return;
  double mean = 0.0;
  for (std::size_t c : fluid_cells_) mean += v[c];
  mean /= static_cast<double>(fluid_cells_.size());
  for (std::size_t c : fluid_cells_) v[c] -= mean;
}

void PressureSolver::solve_factor(const MicFactor& f, const std::vector<double>& r, std::vector<double>& z,
                                  std::vector<double>& work) const {
  for (std::size_t co : f.order) {
    const std::size_t w = f.west_idx[co];
    const std::size_t s = f.south_idx[co];
    double t = r[f.real[co]];
    if (w != co) t += f.east[w] * f.precon[w] * work[w];
    if (s != co) t += f.north[s] * f.precon[s] * work[s];
    work[co] = t * f.precon[co];
  }
  for (auto it = f.order.rbegin(); it != f.order.rend(); ++it) {
    const std::size_t co = *it;
    double t = work[co];
    if (f.east_idx[co] != co) t += f.east[co] * f.precon[co] * work[f.east_idx[co]];
    if (f.north_idx[co] != co) t += f.north[co] * f.precon[co] * work[f.north_idx[co]];
    work[co] = t * f.precon[co];
  }
  for (std::size_t co : f.order) z[f.real[co]] = work[co];
}

void PressureSolver::precondition(const std::vector<double>& r, std::vector<double>& z,
                                  std::vector<double>& work, std::vector<double>& other) const {
  switch (kind_) {
    case Preconditioner::Jacobi:
      for (std::size_t c : fluid_cells_) z[c] = r[c] * jacobi_[c];
      if (periodic_) remove_mean(z);
      return;
    case Preconditioner::Mic:
      solve_factor(factors_[0], r, z, work);
      return;
    case Preconditioner::SymmetricMic:
      solve_factor(factors_[0], r, z, work);
      solve_factor(factors_[1], r, other, work);
      for (std::size_t c : fluid_cells_) z[c] = 0.5 * (z[c] + other[c]);
      return;
  }
}

double PressureSolver::xface_gradient(const Field& q, int i, int j) const {
  const Mesh& m = *mesh_;
  const int nx = m.nx();
  switch (m.xface(i, j)) {
    case FaceKind::Interior:
      return (q(i % nx, j) - q((i + nx - 1) % nx, j)) / m.dx();
    case FaceKind::Outlet:
      return (0.0 - q(nx - 1, j)) / (0.5 * m.dx());
    default:
      return 0.0;
  }
}

double PressureSolver::yface_gradient(const Field& q, int i, int j) const {
  const Mesh& m = *mesh_;
  const int ny = m.ny();
  if (m.yface(i, j) == FaceKind::Interior) return (q(i, j % ny) - q(i, (j + ny - 1) % ny)) / m.dy();
  return 0.0;
}

void PressureSolver::cell_gradient(const Field& q, Field& gx, Field& gy) const {
  const Mesh& m = *mesh_;
  gx = Field(m.nx(), m.ny());
  gy = Field(m.nx(), m.ny());
  for (int j = 0; j < m.ny(); ++j) {
    for (int i = 0; i < m.nx(); ++i) {
      if (!m.fluid(i, j)) continue;
      gx(i, j) = 0.5 * (xface_gradient(q, i, j) + xface_gradient(q, i + 1, j));
      gy(i, j) = 0.5 * (yface_gradient(q, i, j) + yface_gradient(q, i, j + 1));
    }
  }
}

PressureSolver::Result PressureSolver::project(Field& phix, Field& phiy, double tolerance,
                                               int max_iters) const {
  const Mesh& m = *mesh_;
  const int nx = m.nx();
  const int ny = m.ny();
  const std::size_t n = m.cells();
  const double inv_vol = 1.0 / m.cell_volume();

  std::vector<double> b(n, 0.0);
  for (std::size_t c : fluid_cells_) {
    const int i = static_cast<int>(c % nx);
    const int j = static_cast<int>(c / nx);
    b[c] = -(phix(i + 1, j) - phix(i, j) + phiy(i, j + 1) - phiy(i, j));
  }
  if (periodic_) remove_mean(b);

  Result result;
  result.q = Field(nx, ny);
  result.max_divergence = max_abs(b, fluid_cells_) * inv_vol;
  if (result.max_divergence <= tolerance) return result;

  const double stop = 0.5 * tolerance / inv_vol;
  std::vector<double> x(n, 0.0);
  std::vector<double> r = b;
  std::vector<double> z(n, 0.0);
  std::vector<double> s(n, 0.0);
  std::vector<double> t(n, 0.0);
  std::vector<double> work(n, 0.0);
  std::vector<double> other(n, 0.0);
  precondition(r, z, work, other);
  s = z;
  double sigma = dot(z, r, fluid_cells_);
  double rmax = max_abs(r, fluid_cells_);
  int it = 0;
  while (rmax > stop) {
    if (it >= max_iters) {
      throw ConvergenceError("pressure projection did not converge in " + std::to_string(max_iters) +
                                 " iterations",
                             rmax * inv_vol);
    }
    apply(s, t);
    const double st = dot(s, t, fluid_cells_);
    if (!(st > 0.0)) {
      throw ConvergenceError("pressure projection broke down", rmax * inv_vol);
    }
    const double alpha = sigma / st;
    for (std::size_t c : fluid_cells_) {
      x[c] += alpha * s[c];
      r[c] -= alpha * t[c];
    }
    ++it;
    rmax = max_abs(r, fluid_cells_);
    if (rmax <= stop) break;
    precondition(r, z, work, other);
    const double sigma_new = dot(z, r, fluid_cells_);
    const double beta = sigma_new / sigma;
    sigma = sigma_new;
    for (std::size_t c : fluid_cells_) s[c] = z[c] + beta * s[c];
  }

  for (std::size_t c : fluid_cells_) result.q[c] = x[c];
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) phix(i, j) -= m.dy() * xface_gradient(result.q, i, j);
  }
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i < nx; ++i) phiy(i, j) -= m.dx() * yface_gradient(result.q, i, j);
  }
  result.iterations = it;
  result.max_divergence = rmax * inv_vol;
  return result;
}

}  // namespace mmpar
