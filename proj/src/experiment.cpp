#include "mmpar/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmpar/errors.hpp"

namespace mmpar {

namespace {

constexpr const char* kVersion = "mmpar 1.0.0";

using Json = nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, int line) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
  return out;
}

int to_int(const std::string& v, int line) {
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
  return out;
}

bool to_bool(const std::string& v, int line) {
  std::string s = v;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw ConfigError("expected true or false, got '" + v + "'", line);
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&, int)> set;
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

template <class Member>
Key real(std::string name, Member member) {
  return {std::move(name),
          [member](ExperimentConfig& c, const std::string& v, int line) { member(c) = to_double(v, line); },
          [member](const ExperimentConfig& c) -> std::optional<std::string> {
            return format_double(member(const_cast<ExperimentConfig&>(c)));
          }};
}

template <class Member>
Key optional_real(std::string name, Member member) {
  return {std::move(name),
          [member](ExperimentConfig& c, const std::string& v, int line) { member(c) = to_double(v, line); },
          [member](const ExperimentConfig& c) -> std::optional<std::string> {
            const auto& o = member(const_cast<ExperimentConfig&>(c));
            if (!o) return std::nullopt;
            return format_double(*o);
          }};
}

template <class Member>
Key integer(std::string name, Member member) {
  return {std::move(name),
          [member](ExperimentConfig& c, const std::string& v, int line) { member(c) = to_int(v, line); },
          [member](const ExperimentConfig& c) -> std::optional<std::string> {
            return std::to_string(member(const_cast<ExperimentConfig&>(c)));
          }};
}

template <class Member>
Key boolean(std::string name, Member member) {
  return {std::move(name),
          [member](ExperimentConfig& c, const std::string& v, int line) { member(c) = to_bool(v, line); },
          [member](const ExperimentConfig& c) -> std::optional<std::string> {
            return from_bool(member(const_cast<ExperimentConfig&>(c)));
          }};
}

template <class Member>
Key text(std::string name, Member member) {
  return {std::move(name), [member](ExperimentConfig& c, const std::string& v, int) { member(c) = v; },
          [member](const ExperimentConfig& c) -> std::optional<std::string> {
            return member(const_cast<ExperimentConfig&>(c));
          }};
}

template <class Parse, class Print, class Member>
Key tagged(std::string name, Member member, Parse parse, Print print) {
  return {std::move(name),
          [member, parse](ExperimentConfig& c, const std::string& v, int line) {
            try {
              member(c) = parse(v);
            } catch (const ConfigError& e) {
              throw ConfigError(e.what(), line);
            }
          },
          [member, print](const ExperimentConfig& c) -> std::optional<std::string> {
            return print(member(const_cast<ExperimentConfig&>(c)));
          }};
}

const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  static const std::vector<Key> table = {
      real("length", [](C& c) -> double& { return c.mesh.length; }),
      real("height", [](C& c) -> double& { return c.mesh.height; }),
      real("cyl_x", [](C& c) -> double& { return c.mesh.cyl_x; }),
      real("cyl_y", [](C& c) -> double& { return c.mesh.cyl_y; }),
      real("radius", [](C& c) -> double& { return c.mesh.radius; }),
      integer("nx", [](C& c) -> int& { return c.mesh.nx; }),
      integer("ny", [](C& c) -> int& { return c.mesh.ny; }),
      integer("coarsening", [](C& c) -> int& { return c.mesh.coarsening; }),
      optional_real("re", [](C& c) -> std::optional<double>& { return c.re; }),
      optional_real("nu", [](C& c) -> std::optional<double>& { return c.nu; }),
      real("u_inf", [](C& c) -> double& { return c.inflow_speed; }),
      real("pressure_tol", [](C& c) -> double& { return c.pressure_tol; }),
      integer("max_pressure_iters", [](C& c) -> int& { return c.max_pressure_iters; }),
      optional_real("upwind_blend", [](C& c) -> std::optional<double>& { return c.upwind_blend; }),
      real("perturbation", [](C& c) -> double& { return c.perturbation; }),
      real("t_end", [](C& c) -> double& { return c.pint.t_end; }),
      integer("n_t", [](C& c) -> int& { return c.pint.n_t; }),
      integer("k_max", [](C& c) -> int& { return c.pint.k_max; }),
      real("dt_fine", [](C& c) -> double& { return c.pint.dt_fine; }),
      real("dt_coarse", [](C& c) -> double& { return c.pint.dt_coarse; }),
      tagged("scheme", [](C& c) -> TransferScheme& { return c.pint.scheme; }, parse_scheme,
             [](TransferScheme s) { return to_string(s); }),
      tagged("algorithm", [](C& c) -> Algorithm& { return c.pint.algorithm; }, parse_algorithm,
             [](Algorithm a) { return to_string(a); }),
      tagged("flux", [](C& c) -> FluxMode& { return c.pint.flux_mode; }, parse_flux_mode,
             [](FluxMode m) { return to_string(m); }),
      real("epsilon", [](C& c) -> double& { return c.pint.epsilon; }),
      boolean("report_mode", [](C& c) -> bool& { return c.pint.report_mode; }),
      real("abort_growth", [](C& c) -> double& { return c.pint.abort_growth; }),
      integer("workers", [](C& c) -> int& { return c.pint.workers; }),
      boolean("parareal", [](C& c) -> bool& { return c.parareal; }),
      boolean("same_mesh", [](C& c) -> bool& { return c.same_mesh; }),
      real("rho", [](C& c) -> double& { return c.rho; }),
      optional_real("a_ref", [](C& c) -> std::optional<double>& { return c.a_ref; }),
      boolean("conventional_cl", [](C& c) -> bool& { return c.conventional_cl; }),
      optional_real("strouhal_t_min", [](C& c) -> std::optional<double>& { return c.strouhal_t_min; }),
      optional_real("audit_time", [](C& c) -> std::optional<double>& { return c.audit_time; }),
      text("label", [](C& c) -> std::string& { return c.label; }),
      text("out_dir", [](C& c) -> std::string& { return c.out_dir; }),
      boolean("write_slices", [](C& c) -> bool& { return c.write_slices; }),
  };
  return table;
}

struct Issue {
  std::string message;
  std::vector<std::string> keys;
};

bool multiple_of(double interval, double dt) {
  const double r = interval / dt;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, std::abs(r));
}

std::optional<Issue> find_issue(const ExperimentConfig& c) {
  try {
    c.mesh.validate();
  } catch (const ConfigError& e) {
    return Issue{e.what(), {"length", "height", "cyl_x", "cyl_y", "radius", "nx", "ny", "coarsening"}};
  }
  if (c.re && c.nu) return Issue{"specify exactly one of re and nu, not both", {"re", "nu"}};
  if (c.re && !(*c.re > 0.0)) return Issue{"re must be positive", {"re"}};
  if (c.nu && !(*c.nu > 0.0)) return Issue{"nu must be positive", {"nu"}};
  if (!(c.inflow_speed > 0.0)) return Issue{"u_inf must be positive", {"u_inf"}};
  if (!(c.pressure_tol > 0.0)) return Issue{"pressure_tol must be positive", {"pressure_tol"}};
  if (c.max_pressure_iters < 1) return Issue{"max_pressure_iters must be at least 1", {"max_pressure_iters"}};
  if (c.upwind_blend && !(*c.upwind_blend >= 0.0 && *c.upwind_blend <= 1.0)) {
    return Issue{"upwind_blend must lie in [0, 1]", {"upwind_blend"}};
  }
  if (!std::isfinite(c.perturbation)) return Issue{"perturbation must be finite", {"perturbation"}};
  try {
    c.pint.validate();
  } catch (const ConfigError& e) {
    return Issue{e.what(), {"t_end", "n_t", "k_max", "dt_fine", "dt_coarse", "epsilon", "abort_growth", "workers"}};
  }
  if (c.same_mesh && c.pint.algorithm != Algorithm::Classic) {
    return Issue{"same_mesh requires algorithm = classic", {"same_mesh", "algorithm"}};
  }
  if (!(c.rho > 0.0)) return Issue{"rho must be positive", {"rho"}};
  if (c.a_ref && !(*c.a_ref > 0.0)) return Issue{"a_ref must be positive", {"a_ref"}};
  if (c.audit_time) {
    const double t = *c.audit_time;
    if (!(t >= 0.0) || !multiple_of(t, c.pint.dt_fine) || !multiple_of(t, c.pint.dt_coarse)) {
      return Issue{"audit_time must be a non-negative multiple of both time steps", {"audit_time"}};
    }
  }
  if (c.label.empty() || c.label.find_first_of("/\\") != std::string::npos) {
    return Issue{"label must be non-empty and contain no path separators", {"label"}};
  }
  return std::nullopt;
}

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

double ExperimentConfig::viscosity() const {
  if (nu) return *nu;
  return inflow_speed * diameter() / re.value_or(100.0);
}

double ExperimentConfig::reynolds() const {
  if (re) return *re;
  return inflow_speed * diameter() / viscosity();
}

double ExperimentConfig::blend() const {
  if (upwind_blend) return *upwind_blend;
  return reynolds() > 400.0 ? 0.1 : 0.0;
}

CoeffParams ExperimentConfig::coeff_params() const {
  CoeffParams p;
  p.rho = rho;
  p.diameter = diameter();
  p.u_inf = inflow_speed;
  p.a_ref = a_ref.value_or(diameter());
  p.conventional = conventional_cl;
  return p;
}

SolverParams ExperimentConfig::solver_params(double dt) const {
  SolverParams p;
  p.nu = viscosity();
  p.dt = dt;
  p.inflow_speed = inflow_speed;
  p.pressure_tol = pressure_tol;
  p.max_pressure_iters = max_pressure_iters;
  p.upwind_blend = blend();
  return p;
}

void ExperimentConfig::validate() const {
  if (const auto issue = find_issue(*this)) throw ConfigError(issue->message);
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + body + "'", line);
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
    if (it == table.end()) throw ConfigError("unknown key '" + key + "'", line);
    if (seen.count(key)) {
      throw ConfigError("key '" + key + "' repeated (first set on line " + std::to_string(seen[key]) + ")", line);
    }
    if (value.empty()) throw ConfigError("key '" + key + "' has no value", line);
    it->set(config, value, line);
    seen[key] = line;
  }
  if (const auto issue = find_issue(config)) {
    int at = 0;
    for (const std::string& k : issue->keys) {
      if (seen.count(k)) at = std::max(at, seen[k]);
    }
    throw ConfigError(issue->message, at);
  }
  if (!config.re && !config.nu) config.re = 100.0;
  return config;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const Key& k : keys()) {
    const auto v = k.get(config);
    if (!v || v->empty()) continue;
    out += k.name + " = " + *v + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : serialize_config(config)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunManifest read_manifest(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw AggregationError("no manifest.json in " + run_dir.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw AggregationError("unreadable manifest in " + run_dir.string() + ": " + e.what());
  }
  RunManifest m;
  m.config_hash = j.value("config_hash", "");
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.version = j.value("version", "");
  for (const auto& f : j.value("files", Json::array())) m.files.emplace_back(f.get<std::string>());
  return m;
}

bool manifest_complete(const std::filesystem::path& run_dir, const RunManifest& manifest) {
  for (const auto& f : manifest.files) {
    const auto p = run_dir / f;
    std::error_code ec;
    if (!std::filesystem::is_regular_file(p, ec) || std::filesystem::file_size(p, ec) == 0) return false;
  }
  return true;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (!config.out_dir.empty()) return config.out_dir;
  if (const char* env = std::getenv("MMP_OUT_DIR"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env) / config.label;
  }
  return std::filesystem::path("runs") / config.label;
}

std::string cmd_mesh(const ExperimentConfig& config) {
  config.validate();
  const MeshPair pair = build_mesh_pair(config.mesh);
  std::ostringstream out;
  const auto level = [&](const char* name, const Mesh& m) {
    out << name << ": " << m.nx() << " x " << m.ny() << " cells (" << m.cells() << "), dx " << format_double(m.dx())
        << ", dy " << format_double(m.dy()) << ", solid " << m.solid_count() << ", surface faces "
        << m.surface().size() << '\n';
  };
  level("fine", *pair.fine);
  level("coarse", *pair.coarse);
  out << "cell ratio " << pair.fine->cells() / pair.coarse->cells() << ", coarsening " << pair.factor << '\n';
  out << "cylinder centre (" << format_double(config.mesh.cyl_x) << ", " << format_double(config.mesh.cyl_y)
      << "), radius " << format_double(config.mesh.radius) << ", Re " << format_double(config.reynolds()) << ", nu "
      << format_double(config.viscosity()) << '\n';
  return out.str();
}

namespace {

struct Setup {
  MeshPair pair;
  std::shared_ptr<const Propagator> fine;
  std::shared_ptr<const Propagator> coarse;
};

Setup make_setup(const ExperimentConfig& config, bool coarse_on_fine_mesh) {
  Setup s;
  s.pair = build_mesh_pair(config.mesh);
  s.fine = std::make_shared<const Propagator>(s.pair.fine, config.solver_params(config.pint.dt_fine), Role::Fine);
  s.coarse = std::make_shared<const Propagator>(coarse_on_fine_mesh ? s.pair.fine : s.pair.coarse,
                                                config.solver_params(config.pint.dt_coarse), Role::Coarse);
  return s;
}

void write_cells(const std::filesystem::path& dir, const State& s) {
  std::filesystem::create_directories(dir);
  for (Variable v : kVariables) write_fdump(dir / (to_string(v) + ".fdump"), to_string(v), component(s, v), s.t);
}

std::optional<State> read_cells(const std::filesystem::path& dir, const MeshPtr& mesh, double t) {
  State s = State::zeros(mesh);
  for (Variable v : kVariables) {
    const auto path = dir / (to_string(v) + ".fdump");
    if (!std::filesystem::exists(path)) return std::nullopt;
    FieldDump d = read_fdump(path);
    if (d.field.nx() != mesh->nx() || d.field.ny() != mesh->ny() || std::abs(d.time - t) > 1e-9 * std::max(1.0, t)) {
      return std::nullopt;
    }
    component(s, v) = std::move(d.field);
  }
  s.t = t;
  return s;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<ConsistencyReport> cmd_audit(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  const Setup setup = make_setup(config, false);
  const double t = config.audit_time.value_or(config.pint.t_end);
  const auto snap = out_dir / "snapshots";
  const std::string hash = config_hash(config);

  std::optional<State> fine;
  std::optional<State> coarse;
  if (read_text(snap / "config_hash") == hash) {
    fine = read_cells(snap / "fine", setup.pair.fine, t);
    coarse = read_cells(snap / "coarse", setup.pair.coarse, t);
  }
  if (!fine || !coarse) {
    const State f0 = initial_state(setup.pair.fine, setup.fine->params(), config.perturbation);
    const State c0 = initial_state(setup.pair.coarse, setup.coarse->params(), config.perturbation);
    fine = setup.fine->propagate(f0, 0.0, t);
    coarse = setup.coarse->propagate(c0, 0.0, t);
    write_cells(snap / "fine", *fine);
    write_cells(snap / "coarse", *coarse);
    std::ofstream(snap / "config_hash") << hash;
  }

  FluxOptions flux{config.pint.flux_mode, config.inflow_speed, config.pressure_tol, config.max_pressure_iters};
  std::vector<ConsistencyReport> reports;
  for (TransferScheme s : {TransferScheme::NN, TransferScheme::IN, TransferScheme::CP}) {
    const Transfer tr(setup.pair, s, flux);
    reports.push_back(consistency_audit(*coarse, *fine, tr));
    write_audit_csv(out_dir / ("audit_" + to_string(s) + ".csv"), std::span(&reports.back(), 1));
  }
  write_audit_csv(out_dir / "audit.csv", reports);
  return reports;
}

RunManifest cmd_run(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  RunManifest manifest;
  manifest.started = iso_now();
  manifest.config_hash = config_hash(config);
  manifest.version = kVersion;
  std::filesystem::create_directories(out_dir);

  const bool classic = config.pint.algorithm == Algorithm::Classic;
  const Setup setup = make_setup(config, classic);
  const CoeffParams coeff = config.coeff_params();
  const double nu = config.viscosity();
  const State u0 = initial_state(setup.pair.fine, setup.fine->params(), config.perturbation);

  std::vector<ForceSample> ref_forces{surface_forces(u0, nu)};
  const std::vector<State> reference = run_serial_reference(
      *setup.fine, u0, config.pint, [&](const State& s) { ref_forces.push_back(surface_forces(s, nu)); });
  write_forces_csv(out_dir / "forces_reference.csv", ref_forces, coeff);
  manifest.files.emplace_back("forces_reference.csv");
  const StrouhalResult st = strouhal(ref_forces, config.diameter(), config.inflow_speed,
                                     config.strouhal_t_min.value_or(0.5 * config.pint.t_end));

  Json summary;
  summary["reynolds"] = config.reynolds();
  summary["nu"] = nu;
  summary["t_end"] = config.pint.t_end;
  summary["n_t"] = config.pint.n_t;
  summary["shedding"] = st.shedding;
  summary["strouhal"] = st.strouhal;
  summary["strouhal_resolution"] = st.resolution * config.diameter() / config.inflow_speed;

  if (config.parareal) {
    PintProblem problem;
    problem.fine = setup.fine;
    problem.coarse = setup.coarse;
    problem.initial = u0;
    if (!classic) {
      FluxOptions flux{config.pint.flux_mode, config.inflow_speed, config.pressure_tol, config.max_pressure_iters};
      problem.transfer = std::make_shared<const Transfer>(setup.pair, config.pint.scheme, flux);
    }
    std::map<std::tuple<int, int, int>, std::vector<ForceSample>> buckets;
    const bool coarse_surface = !setup.coarse->mesh()->surface().empty();
    const ObserverFactory factory = [&](Phase phase, int k, int n) -> StepObserver {
      if (phase == Phase::Coarse && !coarse_surface) return {};
      auto* bucket = &buckets[{phase == Phase::Fine ? 1 : 0, k, n}];
      return [bucket, nu](const State& s) { bucket->push_back(surface_forces(s, nu)); };
    };
    const PintReport report = run_pint(problem, config.pint, &reference, factory);

    write_errors_csv(out_dir / "errors.csv", report);
    write_timings_csv(out_dir / "timings.csv", report);
    write_speedup_csv(out_dir / "speedup.csv", report);
    manifest.files.insert(manifest.files.end(), {"errors.csv", "timings.csv", "speedup.csv"});
    if (config.write_slices) {
      for (const auto& p : write_slice_snapshots(out_dir, report)) {
        manifest.files.push_back(std::filesystem::relative(p, out_dir));
      }
    }

    const double last_start = config.pint.slice_start(config.pint.n_t - 1);
    std::vector<ForceSample> ref_last;
    for (const ForceSample& f : ref_forces) {
      if (f.t > last_start) ref_last.push_back(f);
    }
    std::ofstream diag(out_dir / "diagnostics.csv");
    diag << "k,cl_error_last_slice\n";
    for (const IterationRecord& r : report.iterations) {
      for (int fine_phase : {0, 1}) {
        if (fine_phase == 1 && r.k == 0) continue;
        std::vector<ForceSample> series;
        for (int n = 0; n < config.pint.n_t; ++n) {
          const auto it = buckets.find({fine_phase, r.k, n});
          if (it != buckets.end()) series.insert(series.end(), it->second.begin(), it->second.end());
        }
        const std::string name =
            std::string(fine_phase ? "forces_fine_k" : "forces_coarse_k") + std::to_string(r.k) + ".csv";
        write_forces_csv(out_dir / name, series, coeff);
        manifest.files.emplace_back(name);
        if (fine_phase == 1 && !ref_last.empty()) {
          std::vector<ForceSample> last;
          for (const ForceSample& f : series) {
            if (f.t > last_start) last.push_back(f);
          }
          if (!last.empty()) diag << r.k << ',' << format_double(series_error(last, ref_last)) << '\n';
        }
      }
    }
    diag.close();
    manifest.files.emplace_back("diagnostics.csv");

    summary["algorithm"] = to_string(config.pint.algorithm);
    summary["scheme"] = to_string(config.pint.scheme);
    summary["flux"] = to_string(config.pint.flux_mode);
    summary["iterations"] = static_cast<int>(report.iterations.size()) - 1;
    summary["converged"] = report.converged;
    summary["stop_reason"] = report.stop_reason;
    summary["m_theoretical"] = report.m_theoretical;
    summary["m_measured"] = report.iterations.back().m_measured;
  }

  std::ofstream(out_dir / "config.echo") << serialize_config(config);
  manifest.files.emplace_back("config.echo");
  manifest.finished = iso_now();

  Json j;
  j["config_hash"] = manifest.config_hash;
  j["label"] = config.label;
  j["started"] = manifest.started;
  j["finished"] = manifest.finished;
  j["version"] = manifest.version;
  j["compiler"] = __VERSION__;
  j["config"] = serialize_config(config);
  j["summary"] = summary;
  Json files = Json::array();
  for (const auto& f : manifest.files) files.push_back(f.generic_string());
  j["files"] = files;
  std::ofstream(out_dir / "manifest.json") << j.dump(2) << '\n';
  return manifest;
}

namespace {

struct RunData {
  std::string label;
  ExperimentConfig config;
  std::filesystem::path dir;
  // var -> k -> err
  std::map<std::string, std::map<int, std::string>> errors;
  int k_last = 0;
};

RunData load_run(const std::filesystem::path& dir) {
  const RunManifest m = read_manifest(dir);
  if (!manifest_complete(dir, m)) throw AggregationError("run " + dir.string() + " is incomplete");
  std::ifstream in(dir / "manifest.json");
  Json j;
  in >> j;
  RunData r;
  r.dir = dir;
  try {
    r.config = parse_config_text(j.at("config").get<std::string>());
  } catch (const std::exception& e) {
    throw AggregationError("run " + dir.string() + " has an unreadable config: " + e.what());
  }
  r.label = r.config.label;
  std::ifstream err(dir / "errors.csv");
  if (!err) throw AggregationError("run " + dir.string() + " has no parareal results (errors.csv)");
  std::string line;
  std::getline(err, line);
  while (std::getline(err, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string k;
    std::string var;
    std::string e;
    std::getline(row, k, ',');
    std::getline(row, var, ',');
    std::getline(row, e, ',');
    const int kk = std::stoi(k);
    r.errors[var][kk] = e;
    r.k_last = std::max(r.k_last, kk);
  }
  return r;
}

}  // namespace

std::vector<std::filesystem::path> cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                                              const std::filesystem::path& out_dir) {
  if (run_dirs.empty()) throw AggregationError("no run directories given");
  std::vector<RunData> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  for (const RunData& r : runs) {
    if (std::abs(r.config.pint.t_end - runs.front().config.pint.t_end) > 1e-12) {
      throw AggregationError("runs have different end times: " + runs.front().dir.string() + " (T = " +
                             format_double(runs.front().config.pint.t_end) + ") vs " + r.dir.string() + " (T = " +
                             format_double(r.config.pint.t_end) + ")");
    }
  }
  std::set<std::string> used;
  for (RunData& r : runs) {
    std::string base = r.label;
    for (int i = 2; used.count(r.label); ++i) r.label = base + "_" + std::to_string(i);
    used.insert(r.label);
  }

  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  int k_max = 0;
  for (const RunData& r : runs) k_max = std::max(k_max, r.k_last);
  for (Variable v : kVariables) {
    const std::string var = to_string(v);
    const auto path = out_dir / ("convergence_" + var + ".csv");
    std::ofstream out(path);
    out << 'k';
    for (const RunData& r : runs) out << ',' << r.label;
    out << '\n';
    for (int k = 0; k <= k_max; ++k) {
      out << k;
      for (const RunData& r : runs) {
        out << ',';
        const auto it = r.errors.find(var);
        if (it != r.errors.end()) {
          const auto e = it->second.find(k);
          if (e != it->second.end()) out << e->second;
        }
      }
      out << '\n';
    }
    written.push_back(path);
  }

  for (const RunData& r : runs) {
    const std::vector<ForceSample> ref = read_forces_csv(r.dir / "forces_reference.csv");
    const double last_start = r.config.pint.slice_start(r.config.pint.n_t - 1);
    const CoeffParams coeff = r.config.coeff_params();
    std::vector<std::vector<ForceSample>> iters;
    for (int k = 1; k <= r.k_last; ++k) {
      const auto p = r.dir / ("forces_fine_k" + std::to_string(k) + ".csv");
      iters.push_back(std::filesystem::exists(p) ? read_forces_csv(p) : std::vector<ForceSample>{});
    }
    const auto path = out_dir / ("cl_last_slice_" + r.label + ".csv");
    std::ofstream out(path);
    out << "t,reference";
    for (int k = 1; k <= r.k_last; ++k) out << ",k" << k;
    out << '\n';
    std::vector<std::size_t> cursor(iters.size(), 0);
    for (const ForceSample& f : ref) {
      if (f.t <= last_start) continue;
      out << format_double(f.t) << ',' << format_double(lift_coefficient(f.f_l, coeff));
      for (std::size_t i = 0; i < iters.size(); ++i) {
        out << ',';
        const auto& s = iters[i];
        auto& c = cursor[i];
        while (c < s.size() && s[c].t < f.t - 1e-9) ++c;
        if (c < s.size() && std::abs(s[c].t - f.t) <= 1e-9) out << format_double(lift_coefficient(s[c].f_l, coeff));
      }
      out << '\n';
    }
    written.push_back(path);
  }
  return written;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const ConvergenceError*>(&e)) return 3;
  if (const auto* p = dynamic_cast<const PararealError*>(&e)) {
    return p->cause() == PararealError::Cause::SliceSolve ? 3 : 4;
  }
  if (dynamic_cast<const AggregationError*>(&e)) return 5;
  return 1;
}

}  // namespace mmpar
