#pragma once

#include <cstddef>
#include <vector>

#include "mmpar/grid.hpp"

namespace mmpar {

/// Face-flux projection on one mesh: finds q with K q = -(net outflow) where K is the
/// 5-point Laplacian (Neumann at walls, inlet and symmetry planes, Dirichlet q = 0 on the
/// outlet face), then subtracts the face gradient of q from the fluxes. Solved with
/// preconditioned conjugate gradients.
class PressureSolver {
public:
  /// SymmetricMic averages two MIC(0) factorisations built in bottom-up and top-down row
  /// order, so a mirror-symmetric mesh keeps mirror-symmetric iterates. Periodic meshes
  /// always use Jacobi.
  enum class Preconditioner { SymmetricMic, Mic, Jacobi };

  explicit PressureSolver(MeshPtr mesh, Preconditioner kind = Preconditioner::SymmetricMic);

  struct Result {
    Field q;  // potential, zero in SOLID cells
    int iterations = 0;
    double max_divergence = 0.0;  // max |net outflow| / V after correction (estimated)
  };

  /// Makes (phix, phiy) discretely divergence-free to `tolerance` (max over fluid cells of
  /// |net outflow| / cell volume). Returns the potential q that was applied. Leaves the fluxes
  /// untouched when they already meet `tolerance`. Throws ConvergenceError after `max_iters`.
  Result project(Field& phix, Field& phiy, double tolerance, int max_iters) const;

  /// Face gradient of q projected to cell centres (average of the two face gradients per
  /// direction), written into gx, gy.
  void cell_gradient(const Field& q, Field& gx, Field& gy) const;

  /// Face gradient through x-face (i, j) with the boundary treatment of the projection.
  double xface_gradient(const Field& q, int i, int j) const;
  double yface_gradient(const Field& q, int i, int j) const;

  const Mesh& mesh() const { return *mesh_; }
  Preconditioner preconditioner() const { return kind_; }

private:
  // Incomplete Cholesky factor of K in one row ordering. Arrays are indexed in that
  // ordering; `real` maps an ordered index back to the mesh cell.
  struct MicFactor {
    std::vector<std::size_t> order;  // fluid cells, ordered indices
    std::vector<std::size_t> real;
    std::vector<double> east;
    std::vector<double> north;
    std::vector<std::size_t> east_idx;
    std::vector<std::size_t> north_idx;
    std::vector<std::size_t> west_idx;
    std::vector<std::size_t> south_idx;
    std::vector<double> precon;
  };

  MicFactor build_factor(bool top_down) const;
  void solve_factor(const MicFactor& f, const std::vector<double>& r, std::vector<double>& z,
                    std::vector<double>& work) const;
  void apply(const std::vector<double>& x, std::vector<double>& y) const;
  void precondition(const std::vector<double>& r, std::vector<double>& z, std::vector<double>& work,
                    std::vector<double>& other) const;
  void remove_mean(std::vector<double>& v) const;

  MeshPtr mesh_;
  bool periodic_;
  Preconditioner kind_;
  std::vector<double> diag_;
  std::vector<double> east_;   // coupling to the +x neighbour
  std::vector<double> north_;  // coupling to the +y neighbour
  std::vector<std::size_t> east_idx_;
  std::vector<std::size_t> north_idx_;
  std::vector<std::size_t> west_idx_;
  std::vector<std::size_t> south_idx_;
  std::vector<double> jacobi_;
  std::vector<MicFactor> factors_;
  std::vector<std::size_t> fluid_cells_;
};

}  // namespace mmpar
