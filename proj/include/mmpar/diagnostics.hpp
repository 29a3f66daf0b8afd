#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "mmpar/grid.hpp"

namespace mmpar {

struct ForceSample {
  double t = 0.0;
  double f_d = 0.0;  // drag per unit depth, kinematic
  double f_l = 0.0;  // lift per unit depth, kinematic
};

struct CoeffParams {
  double rho = 1.0;
  double diameter = 2.0;
  double u_inf = 1.0;
  double a_ref = 2.0;  // per unit depth
  /// Drop the extra diameter factor: 2 f / (rho u^2 A_ref).
  bool conventional = false;

  void validate() const;
};

/// Pressure force -p n A plus viscous force nu U_c / d A summed over the stair-step surface,
/// with n pointing out of the body and d the distance from the face to the fluid cell centre.
/// Throws ConfigError when the mesh has no cylinder surface.
ForceSample surface_forces(const State& state, double nu);

/// 2 f / (rho D u_inf^2 A_ref), or 2 f / (rho u_inf^2 A_ref) in conventional mode.
double lift_coefficient(double f_l, const CoeffParams& params);
double drag_coefficient(double f_d, const CoeffParams& params);

struct StrouhalResult {
  bool shedding = false;
  double frequency = 0.0;  // Hz
  double strouhal = 0.0;
  double resolution = 0.0;  // 1 / window length, Hz
  double periods = 0.0;     // oscillation periods inside the window
};

/// Dominant frequency of f_L for samples with t >= t_min, from the peak of a Hann-windowed,
/// zero-padded periodogram. `shedding` is false when the series is flat, the peak does not
/// stand out from the spectrum, or the window holds fewer than five periods of it.
StrouhalResult strouhal(std::span<const ForceSample> series, double diameter, double u_inf, double t_min);

/// max |c - r| / max |r| of the lift over the common time window, sampled at the reference
/// instants with linear interpolation of the candidate. Throws std::domain_error when the
/// windows do not overlap.
double series_error(std::span<const ForceSample> candidate, std::span<const ForceSample> reference);

/// `t,f_D,f_L,C_D,C_L` rows.
void write_forces_csv(const std::filesystem::path& path, std::span<const ForceSample> series,
                      const CoeffParams& params);
std::vector<ForceSample> read_forces_csv(const std::filesystem::path& path);

}  // namespace mmpar
