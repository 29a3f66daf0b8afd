#include "mmpar/transfer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "mmpar/errors.hpp"
#include "mmpar/solver.hpp"

namespace mmpar {

std::string to_string(TransferScheme scheme) {
  switch (scheme) {
    case TransferScheme::NN:
      return "NN";
    case TransferScheme::IN:
      return "IN";
    case TransferScheme::CP:
      return "CP";
  }
  return "?";
}

std::string to_string(FluxMode mode) { return mode == FluxMode::Average ? "average" : "projected"; }

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

TransferScheme parse_scheme(const std::string& text) {
  const std::string s = lower(text);
  if (s == "nn") return TransferScheme::NN;
  if (s == "in") return TransferScheme::IN;
  if (s == "cp") return TransferScheme::CP;
  throw ConfigError("unknown transfer scheme '" + text + "' (expected nn, in or cp)");
}

FluxMode parse_flux_mode(const std::string& text) {
  const std::string s = lower(text);
  if (s == "average") return FluxMode::Average;
  if (s == "projected") return FluxMode::Projected;
  throw ConfigError("unknown flux mode '" + text + "' (expected average or projected)");
}

Field Stencil::apply(const Field& source, int nx, int ny) const {
  Field out(nx, ny);
  const std::size_t n = row_start.size() - 1;
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t k = row_start[t]; k < row_start[t + 1]; ++k) s += weight[k] * source[index[k]];
    out[t] = s;
  }
  return out;
}

namespace {

struct Entry {
  std::size_t index;
  double weight;
};

// Nearest FLUID centre of `src` to (x, y); ties within `tol` go to the lowest index.
std::size_t nearest_fluid(const Mesh& src, double x, double y, double tol) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < src.ny(); ++j) {
    for (int i = 0; i < src.nx(); ++i) {
      if (!src.fluid(i, j)) continue;
      const double d = std::hypot(src.xc(i) - x, src.yc(j) - y);
      if (d < best_d - tol) {
        best_d = d;
        best = src.index(i, j);
      }
    }
  }
  if (best == std::numeric_limits<std::size_t>::max()) throw ConfigError("mesh has no FLUID cells");
  return best;
}

// The 2x2 block of source centres around (x, y), clamped to the grid.
std::vector<Entry> bilinear(const Mesh& src, double x, double y) {
  const auto axis = [](double g, int n, int& i0, double& t) {
    if (n == 1) {
      i0 = 0;
      t = 0.0;
      return;
    }
    i0 = std::clamp(static_cast<int>(std::floor(g)), 0, n - 2);
    t = std::clamp(g - i0, 0.0, 1.0);
  };
  int i0 = 0;
  int j0 = 0;
  double tx = 0.0;
  double ty = 0.0;
  axis(x / src.dx() - 0.5, src.nx(), i0, tx);
  axis(y / src.dy() - 0.5, src.ny(), j0, ty);
  const int i1 = std::min(i0 + 1, src.nx() - 1);
  const int j1 = std::min(j0 + 1, src.ny() - 1);
  std::vector<Entry> out;
  const auto add = [&](int i, int j, double w) {
    if (w != 0.0) out.push_back({src.index(i, j), w});
  };
  add(i0, j0, (1.0 - tx) * (1.0 - ty));
  add(i1, j0, tx * (1.0 - ty));
  add(i0, j1, (1.0 - tx) * ty);
  add(i1, j1, tx * ty);
  return out;
}

std::vector<std::size_t> block(const Mesh& src, double x, double y) {
  const int i0 = std::clamp(static_cast<int>(std::floor(x / src.dx() - 0.5)), 0, std::max(0, src.nx() - 2));
  const int j0 = std::clamp(static_cast<int>(std::floor(y / src.dy() - 0.5)), 0, std::max(0, src.ny() - 2));
  std::vector<std::size_t> out;
  for (int j = j0; j <= std::min(j0 + 1, src.ny() - 1); ++j) {
    for (int i = i0; i <= std::min(i0 + 1, src.nx() - 1); ++i) out.push_back(src.index(i, j));
  }
  return out;
}

std::vector<Entry> inverse_distance(const Mesh& src, const std::vector<std::size_t>& cells, double x, double y,
                                    double tol) {
  std::vector<Entry> out;
  for (std::size_t c : cells) {
    const int i = static_cast<int>(c % src.nx());
    const int j = static_cast<int>(c / src.nx());
    const double d = std::hypot(src.xc(i) - x, src.yc(j) - y);
    if (d <= tol) return {{c, 1.0}};
    out.push_back({c, 1.0 / d});
  }
  return out;
}

std::vector<Entry> nearest_of(const Mesh& src, const std::vector<std::size_t>& cells, double x, double y,
                              double tol) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t c : cells) {
    if (!src.fluid(c)) continue;
    const double d = std::hypot(src.xc(static_cast<int>(c % src.nx())) - x, src.yc(static_cast<int>(c / src.nx())) - y);
    if (!found || d < best_d - tol || (std::abs(d - best_d) <= tol && c < best)) {
      best = c;
      best_d = d;
      found = true;
    }
  }
  if (!found) return {};
  return {{best, 1.0}};
}

// Drops SOLID sources and renormalises; an empty result falls back to the nearest fluid cell.
std::vector<Entry> finish(const Mesh& src, std::vector<Entry> entries, double x, double y, double tol) {
  std::vector<Entry> kept;
  double total = 0.0;
  for (const Entry& e : entries) {
    if (!src.fluid(e.index)) continue;
    kept.push_back(e);
    total += e.weight;
  }
  if (kept.empty() || !(total > 0.0)) return {{nearest_fluid(src, x, y, tol), 1.0}};
  for (Entry& e : kept) e.weight /= total;
  return kept;
}

template <class RowFn>
Stencil build(const Mesh& target, RowFn&& row) {
  Stencil s;
  s.row_start.reserve(target.cells() + 1);
  s.row_start.push_back(0);
  for (int j = 0; j < target.ny(); ++j) {
    for (int i = 0; i < target.nx(); ++i) {
      if (target.fluid(i, j)) {
        for (const Entry& e : row(i, j)) {
          s.index.push_back(e.index);
          s.weight.push_back(e.weight);
        }
      }
      s.row_start.push_back(s.index.size());
    }
  }
  return s;
}

Stencil build_restriction(const MeshPair& pair, TransferScheme scheme) {
  const Mesh& fine = *pair.fine;
  const Mesh& coarse = *pair.coarse;
  const int c = pair.factor;
  const double tol = 1e-12 * std::min(fine.dx(), fine.dy());
  return build(coarse, [&](int I, int J) {
    const double x = coarse.xc(I);
    const double y = coarse.yc(J);
    std::vector<std::size_t> children;
    for (int j = J * c; j < (J + 1) * c; ++j) {
      for (int i = I * c; i < (I + 1) * c; ++i) children.push_back(fine.index(i, j));
    }
    std::vector<Entry> e;
    switch (scheme) {
      case TransferScheme::NN:
        e = nearest_of(fine, children, x, y, tol);
        break;
      case TransferScheme::IN:
        e = bilinear(fine, x, y);
        break;
      case TransferScheme::CP:
        e = inverse_distance(fine, children, x, y, tol);
        break;
    }
    return finish(fine, std::move(e), x, y, tol);
  });
}

Stencil build_lifting(const MeshPair& pair, TransferScheme scheme) {
  const Mesh& fine = *pair.fine;
  const Mesh& coarse = *pair.coarse;
  const double tol = 1e-12 * std::min(coarse.dx(), coarse.dy());
  return build(fine, [&](int i, int j) {
    const double x = fine.xc(i);
    const double y = fine.yc(j);
    std::vector<Entry> e;
    switch (scheme) {
      case TransferScheme::NN:
        e = nearest_of(coarse, {pair.parent[fine.index(i, j)]}, x, y, tol);
        break;
      case TransferScheme::IN:
        e = bilinear(coarse, x, y);
        break;
      case TransferScheme::CP:
        e = inverse_distance(coarse, block(coarse, x, y), x, y, tol);
        break;
    }
    return finish(coarse, std::move(e), x, y, tol);
  });
}

}  // namespace

void reconstruct_fluxes(State& state, const FluxOptions& options, const PressureSolver* solver) {
  average_fluxes(state, options.inflow_speed);
  if (options.mode != FluxMode::Projected) return;
  if (solver != nullptr) {
    solver->project(state.phix, state.phiy, options.pressure_tol, options.max_pressure_iters);
  } else {
    PressureSolver(state.mesh).project(state.phix, state.phiy, options.pressure_tol, options.max_pressure_iters);
  }
}

Transfer::Transfer(MeshPair pair, TransferScheme scheme, FluxOptions flux)
    : pair_(std::move(pair)),
      scheme_(scheme),
      flux_(flux),
      restriction_(build_restriction(pair_, scheme)),
      lifting_(build_lifting(pair_, scheme)),
      fine_pressure_(pair_.fine),
      coarse_pressure_(pair_.coarse) {}

Field Transfer::restrict_field(const Field& fine) const {
  if (fine.nx() != pair_.fine->nx() || fine.ny() != pair_.fine->ny()) {
    throw ConfigError("restrict: field does not live on the fine mesh");
  }
  return restriction_.apply(fine, pair_.coarse->nx(), pair_.coarse->ny());
}

Field Transfer::lift_field(const Field& coarse) const {
  if (coarse.nx() != pair_.coarse->nx() || coarse.ny() != pair_.coarse->ny()) {
    throw ConfigError("lift: field does not live on the coarse mesh");
  }
  return lifting_.apply(coarse, pair_.fine->nx(), pair_.fine->ny());
}

Field Transfer::match_field(const Field& u_hat, const Field& f) const {
  const Field a = lift_field(u_hat);
  const Field b = lift_field(restrict_field(f));
  Field out = f;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = f[k] + (a[k] - b[k]);
  return out;
}

void Transfer::check_level(const State& s, const MeshPtr& mesh, const char* what) const {
  if (s.mesh != mesh && !(s.mesh && s.mesh->nx() == mesh->nx() && s.mesh->ny() == mesh->ny() &&
                          s.mesh->types() == mesh->types())) {
    throw ConfigError(std::string(what) + ": state does not live on the expected mesh level");
  }
}

State Transfer::restrict(const State& fine) const {
  check_level(fine, pair_.fine, "restrict");
  State out = State::zeros(pair_.coarse);
  for (Variable v : kVariables) component(out, v) = restrict_field(component(fine, v));
  out.t = fine.t;
  reconstruct_fluxes(out, flux_, &coarse_pressure_);
  return out;
}

State Transfer::lift(const State& coarse) const {
  check_level(coarse, pair_.coarse, "lift");
  State out = State::zeros(pair_.fine);
  for (Variable v : kVariables) component(out, v) = lift_field(component(coarse, v));
  out.t = coarse.t;
  reconstruct_fluxes(out, flux_, &fine_pressure_);
  return out;
}

State Transfer::match_states(const State& u_hat, const State& f) const {
  check_level(u_hat, pair_.coarse, "match_states");
  check_level(f, pair_.fine, "match_states");
  State out = f;
  out.mesh = pair_.fine;
  State delta = State::zeros(pair_.fine);
  for (Variable v : kVariables) {
    const Field a = lift_field(component(u_hat, v));
    const Field b = lift_field(restrict_field(component(f, v)));
    Field& d = component(delta, v);
    Field& o = component(out, v);
    for (std::size_t k = 0; k < d.size(); ++k) {
      d[k] = a[k] - b[k];
      o[k] = o[k] + d[k];
    }
  }
  average_fluxes(delta, 0.0);
  for (std::size_t k = 0; k < out.phix.size(); ++k) out.phix[k] = out.phix[k] + delta.phix[k];
  for (std::size_t k = 0; k < out.phiy.size(); ++k) out.phiy[k] = out.phiy[k] + delta.phiy[k];
  if (flux_.mode == FluxMode::Projected) {
    fine_pressure_.project(out.phix, out.phiy, flux_.pressure_tol, flux_.max_pressure_iters);
  }
  return out;
}

std::string to_string(Variable v) {
  switch (v) {
    case Variable::Ux:
      return "U_x";
    case Variable::Uy:
      return "U_y";
    case Variable::P:
      return "p";
  }
  return "?";
}

const Field& component(const State& s, Variable v) {
  switch (v) {
    case Variable::Ux:
      return s.ux;
    case Variable::Uy:
      return s.uy;
    default:
      return s.p;
  }
}

Field& component(State& s, Variable v) {
  return const_cast<Field&>(component(static_cast<const State&>(s), v));
}

ConsistencyReport consistency_audit(const State& g, const State& f, const Transfer& transfer) {
  const Mesh& coarse = *transfer.pair().coarse;
  const Mesh& fine = *transfer.pair().fine;
  ConsistencyReport report;
  report.scheme = transfer.scheme();
  for (std::size_t k = 0; k < kVariables.size(); ++k) {
    const Variable v = kVariables[k];
    const Field& G = component(g, v);
    const Field& F = component(f, v);
    ConsistencyRow& row = report.rows[k];
    row.variable = v;
    row.err_rl = relative_max_error(transfer.restrict_field(transfer.lift_field(G)), G, coarse).value;
    row.err_lr = relative_max_error(transfer.lift_field(transfer.restrict_field(F)), F, fine).value;
    row.err_rp = relative_max_error(transfer.restrict_field(transfer.match_field(G, F)), G, coarse).value;
  }
  return report;
}

void write_audit_csv(const std::filesystem::path& path, std::span<const ConsistencyReport> reports) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << "scheme,variable,err_RL,err_LR,err_RP\n";
  for (const ConsistencyReport& r : reports) {
    for (const ConsistencyRow& row : r.rows) {
      out << to_string(r.scheme) << ',' << to_string(row.variable) << ',' << format_double(row.err_rl) << ','
          << format_double(row.err_lr) << ',' << format_double(row.err_rp) << '\n';
    }
  }
}

double mean_restrict(std::span<const double> f) {
  if (f.empty()) throw ConfigError("mean_restrict: empty vector");
  double s = 0.0;
  for (double v : f) s += v;
  return s / static_cast<double>(f.size());
}

std::vector<double> ratio_match(double u_hat, std::span<const double> f) {
  const double r = mean_restrict(f);
  if (r == 0.0) throw ConfigError("ratio_match: restricted micro state is zero");
  std::vector<double> out(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = u_hat * f[k] / r;
  return out;
}

}  // namespace mmpar
