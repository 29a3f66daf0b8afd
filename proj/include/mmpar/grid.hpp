#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mmpar {

enum class CellType : std::uint8_t { Fluid, Solid };

/// Channel: uniform inflow at x = 0, zero-gradient outflow at x = L, symmetry planes at
/// y = 0 and y = H. Periodic: both directions wrap (solver verification only).
enum class BoundaryMode { Channel, Periodic };

struct MeshConfig {
  double length = 32.0;  // L
  double height = 16.0;  // H
  double cyl_x = 8.0;    // L_x
  double cyl_y = 8.0;    // H_y
  double radius = 1.0;
  int nx = 128;  // fine cells
  int ny = 64;
  int coarsening = 2;
  BoundaryMode boundaries = BoundaryMode::Channel;

  /// Throws ConfigError when the nesting or geometry invariants are violated.
  void validate() const;
};

/// Uniform cell-centred grid on [0, length] x [0, height] with a circular obstacle.
struct Geometry {
  int nx = 0;
  int ny = 0;
  double length = 0.0;
  double height = 0.0;
  double cyl_x = 0.0;
  double cyl_y = 0.0;
  double radius = 0.0;
  BoundaryMode boundaries = BoundaryMode::Channel;

  double dx() const { return length / nx; }
  double dy() const { return height / ny; }
  double xc(int i) const { return (i + 0.5) * dx(); }
  double yc(int j) const { return (j + 0.5) * dy(); }
  std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
};

/// A FLUID/SOLID interface on the stair-step cylinder surface. The normal points out of the
/// body, into `cell` (the fluid side).
struct SurfaceFace {
  std::size_t cell = 0;
  double normal_x = 0.0;
  double normal_y = 0.0;
  double area = 0.0;  // per unit depth
};

/// How a cell face couples its two sides.
enum class FaceKind : std::uint8_t {
  Interior,  // both sides fluid (includes periodic wrap faces)
  Wall,      // FLUID/SOLID interface: no-slip, zero flux
  Inlet,     // x = 0, prescribed inflow
  Outlet,    // x = L, zero-gradient velocity, p = 0
  Symmetry,  // y = 0 or y = H: zero normal velocity, slip
  Closed,    // no fluid on either side
};

struct Classification {
  std::vector<CellType> types;
  std::vector<SurfaceFace> surface;
};

/// SOLID iff the cell centre lies inside or on the circle. Total on any geometry.
Classification classify_cells(const Geometry& geometry);

class Mesh {
public:
  explicit Mesh(const Geometry& geometry);

  const Geometry& geometry() const { return geometry_; }
  int nx() const { return geometry_.nx; }
  int ny() const { return geometry_.ny; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  double cell_volume() const { return dx_ * dy_; }
  std::size_t cells() const { return geometry_.cells(); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(geometry_.nx) +
           static_cast<std::size_t>(i);
  }
  double xc(int i) const { return geometry_.xc(i); }
  double yc(int j) const { return geometry_.yc(j); }
  bool periodic() const { return geometry_.boundaries == BoundaryMode::Periodic; }

  CellType type(std::size_t c) const { return types_[c]; }
  bool fluid(std::size_t c) const { return types_[c] == CellType::Fluid; }
  bool fluid(int i, int j) const { return fluid(index(i, j)); }
  const std::vector<CellType>& types() const { return types_; }
  const std::vector<SurfaceFace>& surface() const { return surface_; }
  std::size_t solid_count() const;

  /// x-face (i, j), i in [0, nx], lies between cells (i-1, j) and (i, j).
  FaceKind xface(int i, int j) const { return xkind_[static_cast<std::size_t>(j) * (geometry_.nx + 1) + i]; }
  /// y-face (i, j), j in [0, ny], lies between cells (i, j-1) and (i, j).
  FaceKind yface(int i, int j) const { return ykind_[static_cast<std::size_t>(j) * geometry_.nx + i]; }

private:
  Geometry geometry_;
  double dx_;
  double dy_;
  std::vector<CellType> types_;
  std::vector<SurfaceFace> surface_;
  std::vector<FaceKind> xkind_;
  std::vector<FaceKind> ykind_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Two nested levels: every fine cell has exactly one coarse parent.
struct MeshPair {
  MeshPtr fine;
  MeshPtr coarse;
  int factor = 2;
  std::vector<std::size_t> parent;  // fine cell -> coarse cell
};

MeshPair build_mesh_pair(const MeshConfig& config);

/// Builds a single-level mesh from a validated config (fine resolution).
MeshPtr build_mesh(const MeshConfig& config);

/// Row-major 2D array of doubles, bottom row first.
class Field {
public:
  Field() = default;
  Field(int nx, int ny, double value = 0.0)
      : nx_(nx), ny_(ny), values_(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), value) {}

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t k) { return values_[k]; }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator()(int i, int j) { return values_[static_cast<std::size_t>(j) * nx_ + i]; }
  double operator()(int i, int j) const { return values_[static_cast<std::size_t>(j) * nx_ + i]; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  bool same_shape(const Field& o) const { return nx_ == o.nx_ && ny_ == o.ny_; }
  bool operator==(const Field& o) const = default;

private:
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> values_;
};

/// Full flow state on one mesh level. Velocity and pressure are cell-centred; `phix` holds
/// the volumetric flux through x-faces ((nx+1) x ny, positive in +x) and `phiy` through
/// y-faces (nx x (ny+1), positive in +y).
struct State {
  MeshPtr mesh;
  Field ux;
  Field uy;
  Field p;
  Field phix;
  Field phiy;
  double t = 0.0;

  static State zeros(MeshPtr mesh);
  bool operator==(const State& o) const {
    return mesh == o.mesh && ux == o.ux && uy == o.uy && p == o.p && phix == o.phix &&
           phiy == o.phiy && t == o.t;
  }
};

/// Returns base + (plus - minus) field by field, fluxes included. When `plus` and `minus`
/// are bitwise equal the result is bitwise equal to `base`.
State add_difference(const State& base, const State& plus, const State& minus);

/// max over cells of |u| dt/dx + |v| dt/dy.
double cfl_number(const State& state, double dt);

bool all_finite(const State& state);

// FDUMP1 text format: header `FDUMP1 <name> <nx> <ny> <time>` then ny rows of nx values.
void write_fdump(const std::filesystem::path& path, const std::string& name, const Field& field,
                 double time);

struct FieldDump {
  std::string name;
  double time = 0.0;
  Field field;
};
FieldDump read_fdump(const std::filesystem::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

struct RelativeError {
  double value = 0.0;
  bool absolute = false;  // reference was zero on every FLUID cell
};

/// max over FLUID cells |value - ref| / max over FLUID cells |ref|. Falls back to the
/// absolute max difference when ref vanishes on the fluid.
RelativeError relative_max_error(const Field& value, const Field& ref, const Mesh& mesh);

}  // namespace mmpar
