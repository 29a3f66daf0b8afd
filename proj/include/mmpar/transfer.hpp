#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmpar/grid.hpp"
#include "mmpar/pressure.hpp"

namespace mmpar {

enum class TransferScheme { NN, IN, CP };
enum class FluxMode { Average, Projected };

std::string to_string(TransferScheme scheme);
std::string to_string(FluxMode mode);
/// Case-insensitive; accepts nn/in/cp. Throws ConfigError otherwise.
TransferScheme parse_scheme(const std::string& text);
FluxMode parse_flux_mode(const std::string& text);

struct FluxOptions {
  FluxMode mode = FluxMode::Average;
  double inflow_speed = 1.0;
  double pressure_tol = 1e-8;
  int max_pressure_iters = 5000;
};

/// Linear map between two cell grids stored row by row: target cell t receives
/// sum of weight * source[index] over its row. Rows of SOLID targets are empty.
struct Stencil {
  std::vector<std::size_t> row_start;
  std::vector<std::size_t> index;
  std::vector<double> weight;

  Field apply(const Field& source, int nx, int ny) const;
};

/// Rebuilds phi from the cell velocity. AVERAGE uses linear face averaging and is
/// generally not divergence-free; PROJECTED follows it with one pressure projection.
void reconstruct_fluxes(State& state, const FluxOptions& options, const PressureSolver* solver = nullptr);

/// R, L and the FAS matching operator P for one nested mesh pair and one scheme.
/// Only cell fields (U_x, U_y, p) are mapped; fluxes are rebuilt on the target level.
class Transfer {
public:
  Transfer(MeshPair pair, TransferScheme scheme, FluxOptions flux = {});

  Field restrict_field(const Field& fine) const;
  Field lift_field(const Field& coarse) const;
  /// f + (L(u_hat) - L(R(f))).
  Field match_field(const Field& u_hat, const Field& f) const;

  State restrict(const State& fine) const;
  State lift(const State& coarse) const;

  /// Cells: f + (L(u_hat) - L(R(f))). Fluxes: phi_f plus the averaged fluxes of the cell
  /// velocity correction (homogeneous boundary values), projected in PROJECTED mode.
  State match_states(const State& u_hat, const State& f) const;

  const MeshPair& pair() const { return pair_; }
  TransferScheme scheme() const { return scheme_; }
  const FluxOptions& flux() const { return flux_; }
  const PressureSolver& fine_pressure() const { return fine_pressure_; }
  const PressureSolver& coarse_pressure() const { return coarse_pressure_; }
  const Stencil& restriction() const { return restriction_; }
  const Stencil& lifting() const { return lifting_; }

private:
  void check_level(const State& s, const MeshPtr& mesh, const char* what) const;

  MeshPair pair_;
  TransferScheme scheme_;
  FluxOptions flux_;
  Stencil restriction_;
  Stencil lifting_;
  PressureSolver fine_pressure_;
  PressureSolver coarse_pressure_;
};

enum class Variable { Ux, Uy, P };
inline constexpr std::array<Variable, 3> kVariables{Variable::Ux, Variable::Uy, Variable::P};
std::string to_string(Variable v);
const Field& component(const State& s, Variable v);
Field& component(State& s, Variable v);

struct ConsistencyRow {
  Variable variable = Variable::Ux;
  double err_rl = 0.0;  // |G - R(L(G))| / |G|
  double err_lr = 0.0;  // |F - L(R(F))| / |F|
  double err_rp = 0.0;  // |G - R(P(G, F))| / |G|
};

struct ConsistencyReport {
  TransferScheme scheme = TransferScheme::NN;
  std::array<ConsistencyRow, 3> rows{};
};

/// Evaluates the three consistency conditions of a transfer scheme on a coarse snapshot g
/// and a fine snapshot f, with relative max norms over FLUID cells.
ConsistencyReport consistency_audit(const State& g, const State& f, const Transfer& transfer);

/// Writes `scheme,variable,err_RL,err_LR,err_RP` with one row per report and variable.
void write_audit_csv(const std::filesystem::path& path, std::span<const ConsistencyReport> reports);

/// Ratio-form matching for a scalar macro value and a micro vector, with R the arithmetic
/// mean: P(u_hat, f) = u_hat * f / R(f). Throws ConfigError when R(f) == 0.
std::vector<double> ratio_match(double u_hat, std::span<const double> f);
double mean_restrict(std::span<const double> f);

}  // namespace mmpar
