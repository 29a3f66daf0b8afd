#include "mmpar/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mmpar/errors.hpp"

namespace mmpar {

void CoeffParams::validate() const {
  if (!(rho > 0.0) || !(diameter > 0.0) || !(u_inf > 0.0) || !(a_ref > 0.0)) {
    throw ConfigError("force coefficient parameters must be positive");
  }
}

ForceSample surface_forces(const State& state, double nu) {
  const Mesh& m = *state.mesh;
  if (m.surface().empty()) throw ConfigError("mesh has no cylinder surface to integrate over");
  ForceSample out;
  out.t = state.t;
  for (const SurfaceFace& f : m.surface()) {
    const double d = 0.5 * (f.normal_x != 0.0 ? m.dx() : m.dy());
    const double p = state.p[f.cell];
    out.f_d += -p * f.normal_x * f.area + nu * state.ux[f.cell] / d * f.area;
    out.f_l += -p * f.normal_y * f.area + nu * state.uy[f.cell] / d * f.area;
  }
  return out;
}

namespace {

constexpr double kMinPeriods = 5.0;

double coefficient(double f, const CoeffParams& params) {
  const double scale = params.rho * params.u_inf * params.u_inf * params.a_ref;
  return 2.0 * f / (params.conventional ? scale : params.diameter * scale);
}

}  // namespace

double lift_coefficient(double f_l, const CoeffParams& params) { return coefficient(f_l, params); }
double drag_coefficient(double f_d, const CoeffParams& params) { return coefficient(f_d, params); }

StrouhalResult strouhal(std::span<const ForceSample> series, double diameter, double u_inf, double t_min) {
  std::vector<ForceSample> window;
  for (const ForceSample& s : series) {
    if (s.t >= t_min) window.push_back(s);
  }
  StrouhalResult out;
  if (window.size() < 4) return out;
  const double t0 = window.front().t;
  const double t1 = window.back().t;
  if (!(t1 > t0)) return out;

  // Resample onto a uniform grid with the same number of points.
  const std::size_t M = window.size();
  const double dt = (t1 - t0) / static_cast<double>(M - 1);
  std::vector<double> x(M);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < M; ++k) {
    const double t = t0 + dt * static_cast<double>(k);
    while (seg + 2 < M && window[seg + 1].t < t) ++seg;
    const ForceSample& a = window[seg];
    const ForceSample& b = window[seg + 1];
    const double w = b.t > a.t ? std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0) : 0.0;
    x[k] = (1.0 - w) * a.f_l + w * b.f_l;
  }
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(M);
  double spread = 0.0;
  for (double& v : x) {
    v -= mean;
    spread = std::max(spread, std::abs(v));
  }
  const double duration = dt * static_cast<double>(M);
  out.resolution = 1.0 / duration;
  if (spread <= 1e-12 * std::max(1.0, std::abs(mean))) return out;

  for (std::size_t k = 0; k < M; ++k) {
    x[k] *= 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(M - 1));
  }

  constexpr int kPad = 8;
  const std::size_t bins = kPad * M / 2;
  const double df = 1.0 / (kPad * duration);
  std::vector<double> power(bins + 1, 0.0);
  for (std::size_t q = 1; q <= bins; ++q) {
    const double omega = 2.0 * std::numbers::pi * df * static_cast<double>(q) * dt;
    double re = 0.0;
    double im = 0.0;
    for (std::size_t k = 0; k < M; ++k) {
      re += x[k] * std::cos(omega * static_cast<double>(k));
      im -= x[k] * std::sin(omega * static_cast<double>(k));
    }
    power[q] = re * re + im * im;
  }
  const auto peak = std::max_element(power.begin() + 1, power.end());
  std::vector<double> sorted(power.begin() + 1, power.end());
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];

  out.frequency = df * static_cast<double>(peak - power.begin());
  out.strouhal = out.frequency * diameter / u_inf;
  out.periods = out.frequency * duration;
  out.shedding = *peak > 100.0 * median && out.periods >= kMinPeriods;
  return out;
}

double series_error(std::span<const ForceSample> candidate, std::span<const ForceSample> reference) {
  if (candidate.empty() || reference.empty()) throw std::domain_error("series_error: empty series");
  const double lo = std::max(candidate.front().t, reference.front().t);
  const double hi = std::min(candidate.back().t, reference.back().t);
  const double tol = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
  double diff = 0.0;
  double scale = 0.0;
  std::size_t used = 0;
  std::size_t seg = 0;
  for (const ForceSample& r : reference) {
    if (r.t < lo - tol || r.t > hi + tol) continue;
    double c = candidate.front().f_l;
    if (candidate.size() > 1) {
      while (seg + 2 < candidate.size() && candidate[seg + 1].t < r.t) ++seg;
      const ForceSample& a = candidate[seg];
      const ForceSample& b = candidate[seg + 1];
      const double w = b.t > a.t ? std::clamp((r.t - a.t) / (b.t - a.t), 0.0, 1.0) : 0.0;
      c = (1.0 - w) * a.f_l + w * b.f_l;
    }
    diff = std::max(diff, std::abs(c - r.f_l));
    scale = std::max(scale, std::abs(r.f_l));
    ++used;
  }
  if (used == 0) throw std::domain_error("series_error: the two series do not overlap in time");
  return scale > 0.0 ? diff / scale : diff;
}

void write_forces_csv(const std::filesystem::path& path, std::span<const ForceSample> series,
                      const CoeffParams& params) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << "t,f_D,f_L,C_D,C_L\n";
  for (const ForceSample& s : series) {
    out << format_double(s.t) << ',' << format_double(s.f_d) << ',' << format_double(s.f_l) << ','
        << format_double(drag_coefficient(s.f_d, params)) << ',' << format_double(lift_coefficient(s.f_l, params))
        << '\n';
  }
}

std::vector<ForceSample> read_forces_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ForceSample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double v[3] = {0.0, 0.0, 0.0};
    for (double& x : v) {
      if (!std::getline(row, cell, ',')) throw ConfigError("short row in " + path.string());
      x = std::stod(cell);
    }
    out.push_back({v[0], v[1], v[2]});
  }
  return out;
}

}  // namespace mmpar
