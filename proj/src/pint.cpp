#include "mmpar/pint.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "mmpar/errors.hpp"

namespace mmpar {

std::string to_string(Algorithm a) { return a == Algorithm::Classic ? "classic" : "micromacro"; }

Algorithm parse_algorithm(const std::string& text) {
  std::string s = text;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "classic") return Algorithm::Classic;
  if (s == "micromacro" || s == "micro_macro" || s == "micro-macro") return Algorithm::MicroMacro;
  throw ConfigError("unknown algorithm '" + text + "' (expected classic or micromacro)");
}

namespace {

bool divides(double interval, double dt) {
  const double ratio = interval / dt;
  return std::abs(ratio - std::round(ratio)) <= 1e-9 * std::max(1.0, std::abs(ratio));
}

}  // namespace

void PintConfig::validate() const {
  if (!(t_end >= 0.0)) throw ConfigError("t_end must be non-negative");
  if (n_t < 1) throw ConfigError("n_t must be at least 1");
  if (!(dt_fine > 0.0) || !(dt_coarse > 0.0)) throw ConfigError("time steps must be positive");
  const double slice = slice_length();
  if (!divides(slice, dt_fine) || !divides(slice, dt_coarse)) {
    throw ConfigError("slice length " + format_double(slice) + " is not a multiple of dt_fine " +
                      format_double(dt_fine) + " and dt_coarse " + format_double(dt_coarse));
  }
  if (k_max < 0) throw ConfigError("k_max must be non-negative");
  if (k_max > 0 && k_max > n_t - 1) {
    throw ConfigError("k_max " + std::to_string(k_max) + " exceeds n_t - 1 = " + std::to_string(n_t - 1));
  }
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
  if (!(abort_growth > 1.0)) throw ConfigError("abort_growth must exceed 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

int PintConfig::iteration_cap() const {
  if (k_max > 0) return k_max;
  return std::max(1, std::min(n_t / 2, n_t - 1));
}

VariableErrors error_norm(const State& u, const State& ref, std::array<bool, 3>* absolute) {
  if (!u.mesh || !ref.mesh || u.mesh->nx() != ref.mesh->nx() || u.mesh->ny() != ref.mesh->ny()) {
    throw ConfigError("error_norm: states live on different meshes");
  }
  VariableErrors out{};
  for (std::size_t k = 0; k < kVariables.size(); ++k) {
    const RelativeError e = relative_max_error(component(u, kVariables[k]), component(ref, kVariables[k]), *ref.mesh);
    out[k] = e.value;
    if (absolute != nullptr) (*absolute)[k] = e.absolute;
  }
  return out;
}

double speedup_estimate(double m, int k, int n_t) {
  if (k < 1) throw std::domain_error("speedup estimate needs at least one iteration (k >= 1)");
  if (!(m > 0.0)) throw std::domain_error("run-time ratio must be positive");
  if (n_t < 1) throw std::domain_error("n_t must be at least 1");
  return std::min(m / (k + 1), static_cast<double>(n_t) / k);
}

double measured_ratio(std::span<const double> fine_seconds, std::span<const double> coarse_seconds) {
  if (fine_seconds.empty() || coarse_seconds.empty()) throw std::domain_error("no timings to compare");
  double f = 0.0;
  double c = 0.0;
  for (double v : fine_seconds) f += v;
  for (double v : coarse_seconds) c += v;
  f /= static_cast<double>(fine_seconds.size());
  c /= static_cast<double>(coarse_seconds.size());
  if (!(c > 0.0)) throw std::domain_error("coarse propagation time is zero");
  return f / c;
}

double theoretical_ratio(const Mesh& fine, const Mesh& coarse, double dt_fine, double dt_coarse) {
  return static_cast<double>(fine.cells()) / static_cast<double>(coarse.cells()) * (dt_coarse / dt_fine);
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(n, 0)));
  const auto run = [&](int i) {
    try {
      fn(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<int> next{0};
    {
      std::vector<std::jthread> pool;
      const int count = std::min(workers, n);
      pool.reserve(static_cast<std::size_t>(count));
      for (int w = 0; w < count; ++w) {
        pool.emplace_back([&] {
          for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run(i);
        });
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<State> run_serial_reference(const Propagator& fine, const State& initial, const PintConfig& config,
                                        const StepObserver& observer) {
  config.validate();
  std::vector<State> out{initial};
  if (config.t_end == 0.0) return out;
  out.reserve(static_cast<std::size_t>(config.n_t) + 1);
  for (int n = 0; n < config.n_t; ++n) {
    out.push_back(fine.propagate(out.back(), config.slice_start(n), config.slice_start(n + 1), observer));
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double max_of(const VariableErrors& e) {
  double m = 0.0;
  for (double v : e) {
    if (std::isnan(v)) return v;
    m = std::max(m, v);
  }
  return m;
}

StepObserver observer_for(const ObserverFactory& f, Phase phase, int k, int n) {
  return f ? f(phase, k, n) : StepObserver{};
}

template <class Fn>
State guarded(int k, int n, Fn&& fn) {
  try {
    return fn();
  } catch (const PararealError&) {
    throw;
  } catch (const std::exception& e) {
    throw PararealError(e.what(), k, n, PararealError::Cause::SliceSolve);
  }
}

// Shared bookkeeping after each iteration: errors, timings, stopping and abort tests.
class Recorder {
public:
  Recorder(PintReport& report, const PintConfig& config, const std::vector<State>* reference)
      : report_(report), config_(config), reference_(reference) {
    if (reference_ != nullptr && reference_->size() != static_cast<std::size_t>(config.n_t) + 1) {
      throw ConfigError("reference trajectory has " + std::to_string(reference_->size()) + " snapshots, expected " +
                        std::to_string(config.n_t + 1));
    }
  }

  // Returns true when the iteration loop should stop.
  bool record(int k, const std::vector<State>& states, std::vector<double> coarse, std::vector<double> fine) {
    const int N = config_.n_t;
    IterationRecord rec;
    rec.k = k;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.error = {nan, nan, nan};
    rec.increment = {nan, nan, nan};
    if (reference_ != nullptr) rec.error = error_norm(states[N], (*reference_)[N], &rec.absolute);
    if (k > 0) rec.increment = error_norm(states[N], report_.slices.back()[N]);

    all_coarse_.insert(all_coarse_.end(), coarse.begin(), coarse.end());
    all_fine_.insert(all_fine_.end(), fine.begin(), fine.end());
    if (k > 0) {
      try {
        rec.m_measured = measured_ratio(all_fine_, all_coarse_);
        rec.speedup = speedup_estimate(rec.m_measured, k, N);
      } catch (const std::domain_error&) {
        rec.m_measured = 0.0;
        rec.speedup = 0.0;
      }
    }
    rec.coarse_seconds = std::move(coarse);
    rec.fine_seconds = std::move(fine);
    report_.iterations.push_back(std::move(rec));
    report_.slices.push_back(states);

    const IterationRecord& r = report_.iterations.back();
    const bool against_reference = config_.report_mode && reference_ != nullptr;
    const double metric = against_reference ? max_of(r.error) : max_of(r.increment);
    if (k == 0 && !against_reference) return false;
    if (!std::isfinite(metric)) {
      throw PararealError("iterate error is not finite", k, N, PararealError::Cause::ErrorGrowth);
    }
    if (baseline_ < 0.0) baseline_ = metric;
    if (baseline_ > 0.0 && metric > config_.abort_growth * baseline_) {
      throw PararealError("iterate error " + format_double(metric) + " grew beyond " +
                              format_double(config_.abort_growth) + " x initial " + format_double(baseline_),
                          k, N, PararealError::Cause::ErrorGrowth);
    }
    if (metric <= config_.epsilon) {
      report_.converged = true;
      report_.stop_reason = "error " + format_double(metric) + " <= epsilon at k = " + std::to_string(k);
      return true;
    }
    return false;
  }

private:
  PintReport& report_;
  const PintConfig& config_;
  const std::vector<State>* reference_;
  std::vector<double> all_coarse_;
  std::vector<double> all_fine_;
  double baseline_ = -1.0;
};

struct FineSweep {
  std::vector<State> results;  // index n + 1 holds F(U_n)
  std::vector<double> seconds;
};

FineSweep fine_sweep(const PintProblem& problem, const PintConfig& config, const std::vector<State>& start, int k,
                     const ObserverFactory& observers) {
  const int N = config.n_t;
  FineSweep out;
  out.results.resize(static_cast<std::size_t>(N) + 1);
  out.seconds.assign(static_cast<std::size_t>(N), 0.0);
  std::vector<StepObserver> obs(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) obs[n] = observer_for(observers, Phase::Fine, k, n);
  parallel_for(N, config.workers, [&](int n) {
    const auto t0 = Clock::now();
    out.results[n + 1] = guarded(k, n, [&] {
      return problem.fine->propagate(start[n], config.slice_start(n), config.slice_start(n + 1), obs[n]);
    });
    out.seconds[n] = seconds_since(t0);
  });
  return out;
}

State coarse_slice(const PintProblem& problem, const PintConfig& config, const State& s, int k, int n,
                   const ObserverFactory& observers, double& seconds) {
  const StepObserver obs = observer_for(observers, Phase::Coarse, k, n);
  const auto t0 = Clock::now();
  State out = guarded(k, n, [&] {
    return problem.coarse->propagate(s, config.slice_start(n), config.slice_start(n + 1), obs);
  });
  seconds = seconds_since(t0);
  return out;
}

void check_problem(const PintProblem& problem, const PintConfig& config) {
  config.validate();
  if (!(config.t_end > 0.0)) throw ConfigError("parareal needs t_end > 0");
  if (!problem.fine || !problem.coarse) throw ConfigError("parareal needs both propagators");
  if (problem.initial.mesh != problem.fine->mesh()) {
    throw ConfigError("initial state does not live on the fine mesh");
  }
  problem.fine->steps_between(0.0, config.slice_length());
  problem.coarse->steps_between(0.0, config.slice_length());
}

}  // namespace

PintReport run_parareal(const PintProblem& problem, const PintConfig& config, const std::vector<State>* reference,
                        const ObserverFactory& observers) {
  check_problem(problem, config);
  if (problem.coarse->mesh() != problem.fine->mesh()) {
    throw ConfigError("classic parareal needs coarse and fine propagators on the same mesh");
  }
  const int N = config.n_t;
  const int K = config.iteration_cap();
  PintReport report;
  report.algorithm = Algorithm::Classic;
  report.n_t = N;
  report.m_theoretical = theoretical_ratio(*problem.fine->mesh(), *problem.coarse->mesh(),
                                           problem.fine->params().dt, problem.coarse->params().dt);
  Recorder recorder(report, config, reference);

  std::vector<State> U(static_cast<std::size_t>(N) + 1);
  std::vector<State> g_old(static_cast<std::size_t>(N) + 1);
  std::vector<double> coarse_seconds(static_cast<std::size_t>(N), 0.0);
  U[0] = problem.initial;
  for (int n = 0; n < N; ++n) {
    g_old[n + 1] = coarse_slice(problem, config, U[n], 0, n, observers, coarse_seconds[n]);
    U[n + 1] = g_old[n + 1];
  }
  if (recorder.record(0, U, coarse_seconds, {})) return report;

  for (int k = 1; k <= K; ++k) {
    FineSweep fine = fine_sweep(problem, config, U, k, observers);
    std::vector<State> next(static_cast<std::size_t>(N) + 1);
    next[0] = problem.initial;
    for (int n = 0; n < N; ++n) {
      State g_new = coarse_slice(problem, config, next[n], k, n, observers, coarse_seconds[n]);
      next[n + 1] = add_difference(fine.results[n + 1], g_new, g_old[n + 1]);
      g_old[n + 1] = std::move(g_new);
    }
    U = std::move(next);
    if (recorder.record(k, U, coarse_seconds, std::move(fine.seconds))) return report;
  }
  report.stop_reason = "iteration cap K = " + std::to_string(K) + " reached";
  return report;
}

PintReport run_micro_macro(const PintProblem& problem, const PintConfig& config, const std::vector<State>* reference,
                           const ObserverFactory& observers) {
  check_problem(problem, config);
  if (!problem.transfer) throw ConfigError("micro-macro parareal needs a transfer scheme");
  const Transfer& tr = *problem.transfer;
  if (problem.coarse->mesh() != tr.pair().coarse || problem.fine->mesh() != tr.pair().fine) {
    throw ConfigError("propagator meshes do not match the transfer mesh pair");
  }
  const int N = config.n_t;
  const int K = config.iteration_cap();
  PintReport report;
  report.algorithm = Algorithm::MicroMacro;
  report.n_t = N;
  report.m_theoretical = theoretical_ratio(*problem.fine->mesh(), *problem.coarse->mesh(),
                                           problem.fine->params().dt, problem.coarse->params().dt);
  Recorder recorder(report, config, reference);

  std::vector<State> U(static_cast<std::size_t>(N) + 1);
  std::vector<State> u_hat(static_cast<std::size_t>(N) + 1);
  std::vector<State> g_old(static_cast<std::size_t>(N) + 1);
  std::vector<double> coarse_seconds(static_cast<std::size_t>(N), 0.0);
  U[0] = problem.initial;
  u_hat[0] = tr.restrict(problem.initial);
  for (int n = 0; n < N; ++n) {
    g_old[n + 1] = coarse_slice(problem, config, u_hat[n], 0, n, observers, coarse_seconds[n]);
    u_hat[n + 1] = g_old[n + 1];
    U[n + 1] = tr.lift(u_hat[n + 1]);
  }
  if (recorder.record(0, U, coarse_seconds, {})) return report;

  for (int k = 1; k <= K; ++k) {
    FineSweep fine = fine_sweep(problem, config, U, k, observers);
    std::vector<State> next(static_cast<std::size_t>(N) + 1);
    std::vector<State> next_hat(static_cast<std::size_t>(N) + 1);
    next[0] = problem.initial;
    next_hat[0] = u_hat[0];
    for (int n = 0; n < N; ++n) {
      State g_new = coarse_slice(problem, config, next_hat[n], k, n, observers, coarse_seconds[n]);
      const State& f = fine.results[n + 1];
      next_hat[n + 1] = add_difference(tr.restrict(f), g_new, g_old[n + 1]);
      next[n + 1] = guarded(k, n, [&] { return tr.match_states(next_hat[n + 1], f); });
      g_old[n + 1] = std::move(g_new);
    }
    U = std::move(next);
    u_hat = std::move(next_hat);
    if (recorder.record(k, U, coarse_seconds, std::move(fine.seconds))) return report;
  }
  report.stop_reason = "iteration cap K = " + std::to_string(K) + " reached";
  return report;
}

PintReport run_pint(const PintProblem& problem, const PintConfig& config, const std::vector<State>* reference,
                    const ObserverFactory& observers) {
  if (config.algorithm == Algorithm::Classic) return run_parareal(problem, config, reference, observers);
  return run_micro_macro(problem, config, reference, observers);
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << header << '\n';
  return out;
}

}  // namespace

void write_errors_csv(const std::filesystem::path& path, const PintReport& report) {
  std::ofstream out = open_csv(path, "k,var,err");
  for (const IterationRecord& r : report.iterations) {
    for (std::size_t v = 0; v < kVariables.size(); ++v) {
      const double e = std::isnan(r.error[v]) ? r.increment[v] : r.error[v];
      if (std::isnan(e)) continue;
      out << r.k << ',' << to_string(kVariables[v]) << ',' << format_double(e) << '\n';
    }
  }
}

void write_timings_csv(const std::filesystem::path& path, const PintReport& report) {
  std::ofstream out = open_csv(path, "phase,slice,k,seconds");
  for (const IterationRecord& r : report.iterations) {
    for (std::size_t n = 0; n < r.coarse_seconds.size(); ++n) {
      out << "coarse," << n << ',' << r.k << ',' << format_double(r.coarse_seconds[n]) << '\n';
    }
    for (std::size_t n = 0; n < r.fine_seconds.size(); ++n) {
      out << "fine," << n << ',' << r.k << ',' << format_double(r.fine_seconds[n]) << '\n';
    }
  }
}

void write_speedup_csv(const std::filesystem::path& path, const PintReport& report) {
  std::ofstream out = open_csv(path, "k,m_theoretical,m_measured,S");
  for (const IterationRecord& r : report.iterations) {
    if (r.k == 0) continue;
    out << r.k << ',' << format_double(report.m_theoretical) << ',' << format_double(r.m_measured) << ','
        << format_double(r.speedup) << '\n';
  }
}

std::vector<std::filesystem::path> write_slice_snapshots(const std::filesystem::path& dir, const PintReport& report) {
  std::vector<std::filesystem::path> written;
  for (std::size_t k = 0; k < report.slices.size(); ++k) {
    for (std::size_t n = 0; n < report.slices[k].size(); ++n) {
      const State& s = report.slices[k][n];
      const auto sub = dir / "slices" / ("k" + std::to_string(k)) / ("t" + std::to_string(n));
      std::filesystem::create_directories(sub);
      for (Variable v : kVariables) {
        const auto path = sub / (to_string(v) + ".fdump");
        write_fdump(path, to_string(v), component(s, v), s.t);
        written.push_back(path);
      }
    }
  }
  return written;
}

}  // namespace mmpar
