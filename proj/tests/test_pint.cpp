#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mmpar/errors.hpp"
#include "mmpar/pint.hpp"
#include "support.hpp"

using namespace mmpar;

namespace {

double worst(const VariableErrors& e) { return std::max({e[0], e[1], e[2]}); }

struct Setup {
  MeshPair pair;
  PintConfig config;
  PintProblem problem;
};

// 32x16 / 16x8 pair, T = 4 over four slices.
Setup tiny(Algorithm algorithm, double dt_coarse = 0.1, TransferScheme scheme = TransferScheme::NN) {
  Setup s;
  s.pair = build_mesh_pair(mmtest::small_channel(32, 16));
  s.config.t_end = 4.0;
  s.config.n_t = 4;
  s.config.k_max = 3;
  s.config.dt_fine = 0.05;
  s.config.dt_coarse = dt_coarse;
  s.config.epsilon = 0.0;
  s.config.algorithm = algorithm;
  s.config.scheme = scheme;
  SolverParams fine;
  fine.dt = s.config.dt_fine;
  SolverParams coarse = fine;
  coarse.dt = dt_coarse;
  s.problem.fine = std::make_shared<Propagator>(s.pair.fine, fine, Role::Fine);
  const MeshPtr coarse_mesh = algorithm == Algorithm::Classic ? s.pair.fine : s.pair.coarse;
  s.problem.coarse = std::make_shared<Propagator>(coarse_mesh, coarse, Role::Coarse);
  s.problem.transfer = std::make_shared<Transfer>(s.pair, scheme);
  s.problem.initial = initial_state(s.pair.fine, fine, 0.05);
  return s;
}

}  // namespace

TEST_SUITE("pint") {

TEST_CASE("speedup estimate") {
  CHECK(speedup_estimate(8, 1, 5) == 4.0);
  CHECK(speedup_estimate(10, 4, 20) == 2.0);
  CHECK(speedup_estimate(5, 1, 20) == 2.5);
  CHECK(speedup_estimate(100, 4, 8) == 2.0);
  CHECK_THROWS_AS(speedup_estimate(8, 0, 5), std::domain_error);
  CHECK_THROWS_AS(speedup_estimate(0, 1, 5), std::domain_error);
  CHECK_THROWS_AS(speedup_estimate(8, 1, 0), std::domain_error);
}

TEST_CASE("measured ratio") {
  const std::vector<double> fine{7.6};
  const std::vector<double> coarse{1.0};
  CHECK(measured_ratio(fine, coarse) == doctest::Approx(7.6).epsilon(1e-15));
  const std::vector<double> a{2.0, 4.0};
  const std::vector<double> b{3.0, 3.0};
  CHECK(measured_ratio(a, b) == 1.0);
  const std::vector<double> zero{0.0};
  CHECK_THROWS_AS(measured_ratio(fine, zero), std::domain_error);
  CHECK_THROWS_AS(measured_ratio({}, coarse), std::domain_error);
}

TEST_CASE("theoretical ratio counts cells and steps") {
  const MeshPair pair = build_mesh_pair(mmtest::small_channel(32, 16));
  CHECK(theoretical_ratio(*pair.fine, *pair.coarse, 0.05, 0.1) == doctest::Approx(8.0));
  CHECK(theoretical_ratio(*pair.fine, *pair.fine, 0.05, 0.05) == doctest::Approx(1.0));
}

TEST_CASE("error norm") {
  const MeshPtr m = build_mesh(mmtest::small_channel(32, 16));
  State ref = State::zeros(m);
  for (std::size_t c = 0; c < m->cells(); ++c) {
    if (!m->fluid(c)) continue;
    ref.ux[c] = 1.0;
    ref.p[c] = 0.5;
  }
  std::array<bool, 3> absolute{};
  const VariableErrors same = error_norm(ref, ref, &absolute);
  CHECK(same == VariableErrors{0.0, 0.0, 0.0});
  CHECK_FALSE(absolute[0]);
  CHECK(absolute[1]);
  CHECK_FALSE(absolute[2]);

  State up = ref;
  State down = ref;
  for (std::size_t c = 0; c < m->cells(); ++c) {
    up.ux[c] += 0.1;
    down.ux[c] -= 0.1;
  }
  CHECK(error_norm(up, ref)[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(error_norm(up, ref)[0] == doctest::Approx(error_norm(down, ref)[0]).epsilon(1e-12));
  CHECK(error_norm(up, ref)[2] == 0.0);
  CHECK_THROWS_AS(error_norm(ref, State::zeros(build_mesh(mmtest::small_channel(16, 8)))), ConfigError);
}

TEST_CASE("configuration invariants") {
  PintConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.iteration_cap() == 2);
  c.n_t = 10;
  CHECK(c.iteration_cap() == 5);
  const auto rejects = [](auto mutate) {
    PintConfig bad;
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  };
  rejects([](PintConfig& b) { b.k_max = 5; });
  rejects([](PintConfig& b) { b.dt_coarse = 0.07; });
  rejects([](PintConfig& b) { b.n_t = 0; });
  rejects([](PintConfig& b) { b.abort_growth = 1.0; });
  rejects([](PintConfig& b) { b.workers = 0; });
  rejects([](PintConfig& b) { b.epsilon = -1.0; });
  CHECK(parse_algorithm("Classic") == Algorithm::Classic);
  CHECK(parse_algorithm("micro_macro") == Algorithm::MicroMacro);
  CHECK_THROWS_AS(parse_algorithm("pipelined"), ConfigError);
}

TEST_CASE("serial reference snapshots") {
  const MeshPtr m = build_mesh(mmtest::small_channel(16, 8));
  SolverParams p;
  p.dt = 0.5;
  p.nu = 0.1;
  const Propagator prop(m, p);
  const State s0 = initial_state(m, p);
  PintConfig c;
  c.t_end = 200;
  c.n_t = 5;
  c.dt_fine = 0.5;
  c.dt_coarse = 0.5;
  const std::vector<State> a = run_serial_reference(prop, s0, c);
  REQUIRE(a.size() == 6);
  for (int n = 0; n <= 5; ++n) CHECK(a[n].t == doctest::Approx(40.0 * n));
  CHECK(a[0] == s0);
  CHECK(run_serial_reference(prop, s0, c) == a);
  c.t_end = 0;
  const std::vector<State> zero = run_serial_reference(prop, s0, c);
  REQUIRE(zero.size() == 1);
  CHECK(zero[0] == s0);
}

TEST_CASE("classic iteration zero is the serial coarse trajectory") {
  Setup s = tiny(Algorithm::Classic);
  const PintReport r = run_parareal(s.problem, s.config);
  PintConfig coarse_cfg = s.config;
  const std::vector<State> g = run_serial_reference(*s.problem.coarse, s.problem.initial, coarse_cfg);
  CHECK(r.slices[0] == g);
}

TEST_CASE("classic with G equal to F matches the reference at once") {
  Setup s = tiny(Algorithm::Classic, 0.05);
  const std::vector<State> ref = run_serial_reference(*s.problem.fine, s.problem.initial, s.config);
  s.config.k_max = 1;
  const PintReport r = run_parareal(s.problem, s.config);
  REQUIRE(r.slices.size() == 2);
  CHECK(r.converged);
  for (int k = 0; k <= 1; ++k) {
    for (int n = 0; n <= s.config.n_t; ++n) CHECK(worst(error_norm(r.slices[k][n], ref[n])) <= 1e-12);
  }
}

TEST_CASE("after k iterations the first k slices are exact") {
  for (Algorithm a : {Algorithm::Classic, Algorithm::MicroMacro}) {
    CAPTURE(to_string(a));
    Setup s = tiny(a);
    const std::vector<State> ref = run_serial_reference(*s.problem.fine, s.problem.initial, s.config);
    const PintReport r = run_pint(s.problem, s.config, &ref);
    REQUIRE(r.iterations.size() == 4);
    for (int k = 0; k <= 3; ++k) {
      for (int n = 1; n <= k; ++n) CHECK(worst(error_norm(r.slices[k][n], ref[n])) <= 1e-10);
    }
    // Slice n is not reached before iteration n.
    CHECK(worst(error_norm(r.slices[3][4], ref[4])) > 1e-6);
  }
}

TEST_CASE("micro-macro iteration zero lifts the serial coarse trajectory") {
  for (TransferScheme scheme : {TransferScheme::NN, TransferScheme::IN, TransferScheme::CP}) {
    Setup s = tiny(Algorithm::MicroMacro, 0.1, scheme);
    const PintReport r = run_micro_macro(s.problem, s.config);
    State u = s.problem.transfer->restrict(s.problem.initial);
    for (int n = 0; n < s.config.n_t; ++n) {
      u = s.problem.coarse->propagate(u, s.config.slice_start(n), s.config.slice_start(n + 1));
      CHECK(r.slices[0][n + 1] == s.problem.transfer->lift(u));
    }
  }
}

TEST_CASE("half the slice count caps the iterations") {
  Setup s = tiny(Algorithm::MicroMacro);
  s.config.t_end = 2.0;
  s.config.n_t = 10;
  s.config.k_max = 0;
  const PintReport r = run_micro_macro(s.problem, s.config);
  CHECK(r.iterations.size() == 6);
  CHECK(r.iterations.back().k == 5);
  CHECK_FALSE(r.converged);
}

TEST_CASE("reported speedups are recomputable") {
  Setup s = tiny(Algorithm::MicroMacro);
  const PintReport r = run_micro_macro(s.problem, s.config);
  CHECK(r.m_theoretical == doctest::Approx(8.0));
  CHECK(r.iterations[0].speedup == 0.0);
  for (std::size_t k = 1; k < r.iterations.size(); ++k) {
    const IterationRecord& it = r.iterations[k];
    REQUIRE(it.m_measured > 0.0);
    CHECK(it.speedup == speedup_estimate(it.m_measured, it.k, r.n_t));
    CHECK(it.fine_seconds.size() == 4);
    CHECK(it.coarse_seconds.size() == 4);
  }
}

TEST_CASE("results do not depend on the worker count") {
  for (Algorithm a : {Algorithm::Classic, Algorithm::MicroMacro}) {
    Setup s = tiny(a);
    const std::vector<State> ref = run_serial_reference(*s.problem.fine, s.problem.initial, s.config);
    const PintReport one = run_pint(s.problem, s.config, &ref);
    s.config.workers = 4;
    const PintReport many = run_pint(s.problem, s.config, &ref);
    CHECK(one.slices == many.slices);
    REQUIRE(one.iterations.size() == many.iterations.size());
    for (std::size_t k = 0; k < one.iterations.size(); ++k) {
      CHECK(one.iterations[k].error == many.iterations[k].error);
    }
  }
}

TEST_CASE("convergence threshold stops the iteration") {
  Setup s = tiny(Algorithm::Classic, 0.05);
  s.config.epsilon = 1e-9;
  const std::vector<State> ref = run_serial_reference(*s.problem.fine, s.problem.initial, s.config);
  const PintReport r = run_parareal(s.problem, s.config, &ref);
  CHECK(r.converged);
  CHECK(r.iterations.size() == 1);
}

TEST_CASE("live mode stops on the successive increment") {
  Setup s = tiny(Algorithm::Classic, 0.05);
  s.config.epsilon = 1e-9;
  s.config.report_mode = false;
  const PintReport r = run_parareal(s.problem, s.config);
  CHECK(r.converged);
  REQUIRE(r.iterations.size() == 2);
  CHECK(std::isnan(r.iterations[0].increment[0]));
  CHECK(worst(r.iterations[1].increment) <= 1e-9);
}

TEST_CASE("error growth aborts with the iteration") {
  Setup s = tiny(Algorithm::Classic);
  // A reference that sits almost on the coarse trajectory makes the error grow.
  std::vector<State> ref = run_serial_reference(*s.problem.coarse, s.problem.initial, s.config);
  for (std::size_t c = 0; c < ref.back().ux.size(); ++c) ref.back().ux[c] *= 1.0 + 1e-9;
  s.config.abort_growth = 10.0;
  try {
    run_parareal(s.problem, s.config, &ref);
    FAIL("expected an abort");
  } catch (const PararealError& e) {
    CHECK(e.cause() == PararealError::Cause::ErrorGrowth);
    CHECK(e.iteration() == 1);
  }
}

TEST_CASE("slice solver failure reports iteration and slice") {
  Setup s = tiny(Algorithm::MicroMacro);
  SolverParams bad = s.problem.fine->params();
  bad.max_pressure_iters = 1;
  s.problem.fine = std::make_shared<Propagator>(s.pair.fine, bad);
  try {
    run_micro_macro(s.problem, s.config);
    FAIL("expected a slice failure");
  } catch (const PararealError& e) {
    CHECK(e.cause() == PararealError::Cause::SliceSolve);
    CHECK(e.iteration() == 1);
    CHECK(e.slice() == 0);
  }
}

TEST_CASE("mismatched problems are rejected") {
  Setup s = tiny(Algorithm::MicroMacro);
  CHECK_THROWS_AS(run_parareal(s.problem, s.config), ConfigError);
  Setup c = tiny(Algorithm::Classic);
  CHECK_THROWS_AS(run_micro_macro(c.problem, c.config), ConfigError);
  s.config.t_end = 0.0;
  CHECK_THROWS_AS(run_micro_macro(s.problem, s.config), ConfigError);
}

TEST_CASE("parallel_for runs every index and rethrows the lowest failure") {
  std::vector<int> hits(50, 0);
  parallel_for(50, 6, [&](int i) { ++hits[i]; });
  for (int h : hits) CHECK(h == 1);
  try {
    parallel_for(20, 4, [](int i) {
      if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "7");
  }
}

TEST_CASE("report files") {
  Setup s = tiny(Algorithm::MicroMacro);
  s.config.k_max = 2;
  const std::vector<State> ref = run_serial_reference(*s.problem.fine, s.problem.initial, s.config);
  const PintReport r = run_micro_macro(s.problem, s.config, &ref);
  const auto dir = std::filesystem::temp_directory_path() / "mmpar_pint_files";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_errors_csv(dir / "errors.csv", r);
  write_timings_csv(dir / "timings.csv", r);
  write_speedup_csv(dir / "speedup.csv", r);
  const auto lines = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  };
  const auto errors = lines(dir / "errors.csv");
  CHECK(errors.front() == "k,var,err");
  CHECK(errors.size() == 1 + 3 * 3);
  CHECK(errors[1].rfind("0,U_x,", 0) == 0);
  const auto timings = lines(dir / "timings.csv");
  CHECK(timings.front() == "phase,slice,k,seconds");
  CHECK(timings.size() == 1 + 4 * 3 + 4 * 2);
  const auto speedup = lines(dir / "speedup.csv");
  CHECK(speedup.front() == "k,m_theoretical,m_measured,S");
  CHECK(speedup.size() == 3);
  const auto written = write_slice_snapshots(dir, r);
  CHECK(written.size() == 3 * 5 * 3);
  const FieldDump d = read_fdump(dir / "slices" / "k2" / "t1" / "U_y.fdump");
  CHECK(d.field == r.slices[2][1].uy);
  std::filesystem::remove_all(dir);
}

}
