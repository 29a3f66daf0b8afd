#include "mmpar/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mmpar/errors.hpp"

namespace mmpar {

void MeshConfig::validate() const {
  if (!(length > 0.0) || !(height > 0.0)) throw ConfigError("channel length and height must be positive");
  if (nx <= 0 || ny <= 0) throw ConfigError("cell counts must be positive");
  if (coarsening < 2) throw ConfigError("coarsening factor must be >= 2");
  if (nx % coarsening != 0 || ny % coarsening != 0) {
    throw ConfigError("cell counts " + std::to_string(nx) + "x" + std::to_string(ny) +
                      " are not divisible by the coarsening factor " + std::to_string(coarsening));
  }
  if (!(radius > 0.0)) throw ConfigError("cylinder radius must be positive");
  const double clearance = std::min({cyl_x, length - cyl_x, cyl_y, height - cyl_y});
  if (!(radius < clearance)) {
    throw ConfigError("cylinder (centre " + format_double(cyl_x) + "," + format_double(cyl_y) +
                      ", radius " + format_double(radius) + ") is not strictly inside the channel");
  }
}

Classification classify_cells(const Geometry& g) {
  Classification out;
  out.types.assign(g.cells(), CellType::Fluid);
  const double r2 = g.radius * g.radius;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const double ddx = g.xc(i) - g.cyl_x;
      const double ddy = g.yc(j) - g.cyl_y;
      if (ddx * ddx + ddy * ddy <= r2) out.types[static_cast<std::size_t>(j) * g.nx + i] = CellType::Solid;
    }
  }

  const auto solid = [&](int i, int j) {
    if (i < 0 || j < 0 || i >= g.nx || j >= g.ny) return false;
    return out.types[static_cast<std::size_t>(j) * g.nx + i] == CellType::Solid;
  };
  const double dx = g.dx();
  const double dy = g.dy();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (solid(i, j)) continue;
      const std::size_t c = static_cast<std::size_t>(j) * g.nx + i;
      // Normal points from the solid neighbour into this fluid cell.
      if (solid(i - 1, j)) out.surface.push_back({c, 1.0, 0.0, dy});
      if (solid(i + 1, j)) out.surface.push_back({c, -1.0, 0.0, dy});
      if (solid(i, j - 1)) out.surface.push_back({c, 0.0, 1.0, dx});
      if (solid(i, j + 1)) out.surface.push_back({c, 0.0, -1.0, dx});
    }
  }
  return out;
}

Mesh::Mesh(const Geometry& geometry)
    : geometry_(geometry), dx_(geometry.dx()), dy_(geometry.dy()) {
  auto cls = classify_cells(geometry_);
  types_ = std::move(cls.types);
  surface_ = std::move(cls.surface);

  const int nx = geometry_.nx;
  const int ny = geometry_.ny;
  const bool wrap = geometry_.boundaries == BoundaryMode::Periodic;
  const auto pair_kind = [](bool a, bool b) {
    if (a && b) return FaceKind::Interior;
    if (a || b) return FaceKind::Wall;
    return FaceKind::Closed;
  };
  xkind_.assign(static_cast<std::size_t>(nx + 1) * ny, FaceKind::Closed);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      FaceKind k;
      if (wrap && (i == 0 || i == nx)) {
        k = pair_kind(fluid(nx - 1, j), fluid(0, j));
      } else if (i == 0) {
        k = fluid(0, j) ? FaceKind::Inlet : FaceKind::Closed;
      } else if (i == nx) {
        k = fluid(nx - 1, j) ? FaceKind::Outlet : FaceKind::Closed;
      } else {
        k = pair_kind(fluid(i - 1, j), fluid(i, j));
      }
      xkind_[static_cast<std::size_t>(j) * (nx + 1) + i] = k;
    }
  }
  ykind_.assign(static_cast<std::size_t>(ny + 1) * nx, FaceKind::Closed);
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      FaceKind k;
      if (wrap && (j == 0 || j == ny)) {
        k = pair_kind(fluid(i, ny - 1), fluid(i, 0));
      } else if (j == 0) {
        k = fluid(i, 0) ? FaceKind::Symmetry : FaceKind::Closed;
      } else if (j == ny) {
        k = fluid(i, ny - 1) ? FaceKind::Symmetry : FaceKind::Closed;
      } else {
        k = pair_kind(fluid(i, j - 1), fluid(i, j));
      }
      ykind_[static_cast<std::size_t>(j) * nx + i] = k;
    }
  }
}

std::size_t Mesh::solid_count() const {
  return static_cast<std::size_t>(std::count(types_.begin(), types_.end(), CellType::Solid));
}

namespace {

Geometry geometry_from(const MeshConfig& c, int nx, int ny) {
  Geometry g;
  g.nx = nx;
  g.ny = ny;
  g.length = c.length;
  g.height = c.height;
  g.cyl_x = c.cyl_x;
  g.cyl_y = c.cyl_y;
  g.radius = c.radius;
  g.boundaries = c.boundaries;
  return g;
}

}  // namespace

MeshPtr build_mesh(const MeshConfig& config) {
  config.validate();
  return std::make_shared<const Mesh>(geometry_from(config, config.nx, config.ny));
}

MeshPair build_mesh_pair(const MeshConfig& config) {
  config.validate();
  MeshPair pair;
  pair.factor = config.coarsening;
  pair.fine = std::make_shared<const Mesh>(geometry_from(config, config.nx, config.ny));
  const int cnx = config.nx / config.coarsening;
  const int cny = config.ny / config.coarsening;
  pair.coarse = std::make_shared<const Mesh>(geometry_from(config, cnx, cny));
  pair.parent.resize(pair.fine->cells());
  for (int j = 0; j < config.ny; ++j) {
    for (int i = 0; i < config.nx; ++i) {
      pair.parent[pair.fine->index(i, j)] =
          pair.coarse->index(i / config.coarsening, j / config.coarsening);
    }
  }
  return pair;
}

State State::zeros(MeshPtr mesh) {
  State s;
  const int nx = mesh->nx();
  const int ny = mesh->ny();
  s.ux = Field(nx, ny);
  s.uy = Field(nx, ny);
  s.p = Field(nx, ny);
  s.phix = Field(nx + 1, ny);
  s.phiy = Field(nx, ny + 1);
  s.mesh = std::move(mesh);
  return s;
}

namespace {

void add_difference_into(Field& out, const Field& base, const Field& plus, const Field& minus) {
  out = base;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = base[k] + (plus[k] - minus[k]);
}

}  // namespace

State add_difference(const State& base, const State& plus, const State& minus) {
  if (plus.mesh != minus.mesh || base.mesh != plus.mesh) {
    throw ConfigError("add_difference: states live on different meshes");
  }
  State out;
  out.mesh = base.mesh;
  out.t = base.t;
  add_difference_into(out.ux, base.ux, plus.ux, minus.ux);
  add_difference_into(out.uy, base.uy, plus.uy, minus.uy);
  add_difference_into(out.p, base.p, plus.p, minus.p);
  add_difference_into(out.phix, base.phix, plus.phix, minus.phix);
  add_difference_into(out.phiy, base.phiy, plus.phiy, minus.phiy);
  return out;
}

double cfl_number(const State& state, double dt) {
  const double dx = state.mesh->dx();
  const double dy = state.mesh->dy();
  double cfl = 0.0;
  for (std::size_t c = 0; c < state.ux.size(); ++c) {
    cfl = std::max(cfl, std::abs(state.ux[c]) * dt / dx + std::abs(state.uy[c]) * dt / dy);
  }
  return cfl;
}

bool all_finite(const State& s) {
  const auto finite = [](const Field& f) {
    return std::all_of(f.values().begin(), f.values().end(), [](double v) { return std::isfinite(v); });
  };
  return finite(s.ux) && finite(s.uy) && finite(s.p) && finite(s.phix) && finite(s.phiy);
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_fdump(const std::filesystem::path& path, const std::string& name, const Field& field,
                 double time) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << "FDUMP1 " << name << ' ' << field.nx() << ' ' << field.ny() << ' ' << format_double(time)
      << '\n';
  std::string line;
  for (int j = 0; j < field.ny(); ++j) {
    line.clear();
    for (int i = 0; i < field.nx(); ++i) {
      if (i > 0) line += ' ';
      line += format_double(field(i, j));
    }
    line += '\n';
    out << line;
  }
}

RelativeError relative_max_error(const Field& value, const Field& ref, const Mesh& mesh) {
  if (!value.same_shape(ref) || ref.nx() != mesh.nx() || ref.ny() != mesh.ny()) {
    throw ConfigError("relative_max_error: field shapes do not match the mesh");
  }
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t c = 0; c < mesh.cells(); ++c) {
    if (!mesh.fluid(c)) continue;
    diff = std::max(diff, std::abs(value[c] - ref[c]));
    scale = std::max(scale, std::abs(ref[c]));
  }
  if (scale == 0.0) return {diff, true};
  return {diff / scale, false};
}

namespace {

double parse_double(const std::string& token, const std::filesystem::path& path) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ConfigError("malformed number '" + token + "' in " + path.string());
  }
  return v;
}

}  // namespace

FieldDump read_fdump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string magic;
  std::string time_token;
  FieldDump dump;
  int nx = 0;
  int ny = 0;
  if (!(in >> magic >> dump.name >> nx >> ny >> time_token) || magic != "FDUMP1" || nx <= 0 || ny <= 0) {
    throw ConfigError("bad FDUMP1 header in " + path.string());
  }
  dump.time = parse_double(time_token, path);
  dump.field = Field(nx, ny);
  std::string token;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (!(in >> token)) throw ConfigError("truncated FDUMP1 body in " + path.string());
      dump.field(i, j) = parse_double(token, path);
    }
  }
  return dump;
}

}  // namespace mmpar
