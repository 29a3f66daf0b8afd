#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmpar/errors.hpp"
#include "mmpar/experiment.hpp"

using namespace mmpar;

namespace {

namespace fs = std::filesystem;

const char* kTiny =
    "nx = 32\n"
    "ny = 16\n"
    "t_end = 4\n"
    "n_t = 4\n"
    "k_max = 3\n"
    "dt_fine = 0.05\n"
    "dt_coarse = 0.1\n"
    "epsilon = 0\n"
    "label = tiny\n";

int error_line(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mmpar_exp_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("experiment matrix row parses") {
  const ExperimentConfig c = parse_config_text(
      "re = 100\ndt_fine = 0.05\ndt_coarse = 0.1\nn_t = 5\nscheme = NN\nt_end = 200\n");
  CHECK(c.reynolds() == 100.0);
  CHECK(c.viscosity() == doctest::Approx(0.02));
  CHECK(c.pint.n_t == 5);
  CHECK(c.pint.t_end == 200.0);
  CHECK(c.pint.scheme == TransferScheme::NN);
  CHECK(c.pint.iteration_cap() == 2);
  CHECK(c.blend() == 0.0);
  CHECK(parse_config_text("re = 1000\n").blend() > 0.0);
}

TEST_CASE("empty config takes every default") {
  const ExperimentConfig c = parse_config_text("# nothing here\n\n");
  CHECK(c.reynolds() == 100.0);
  CHECK(c.mesh.nx == MeshConfig{}.nx);
  CHECK(c.pint.t_end == PintConfig{}.t_end);
  CHECK(c.label == "run");
  const std::string text = serialize_config(c);
  CHECK(text.find("re = 100") != std::string::npos);
  CHECK(text.find("t_end = ") != std::string::npos);
  CHECK(text.find("scheme = NN") != std::string::npos);
}

TEST_CASE("parse errors carry the line number") {
  CHECK(error_line("re = 100\nnu = 0.02\n") == 2);
  CHECK(error_line("nx = 64\n\nbogus = 1\n") == 3);
  CHECK(error_line("nx = sixty\n") == 1);
  CHECK(error_line("n_t = 2.5\n") == 1);
  CHECK(error_line("parareal = maybe\n") == 1);
  CHECK(error_line("nx = 64\nnx = 32\n") == 2);
  CHECK(error_line("scheme =\n") == 1);
  CHECK(error_line("just words\n") == 1);
  CHECK(error_line("scheme = bilinear\n") == 1);
  // Slice length 12 is not a multiple of dt_coarse 5.
  CHECK(error_line("t_end = 60\n# comment\ndt_coarse = 5\n") == 3);
  CHECK(error_line("n_t = 4\nk_max = 4\n") == 2);
  CHECK(error_line("re = 100\nnx = 101\n") == 2);
}

TEST_CASE("config text round trip and hash") {
  const ExperimentConfig a = parse_config_text(
      "nu = 0.01\nnx = 64\nny = 32\nscheme = cp\nalgorithm = classic\nflux = projected\nworkers = 3\n"
      "a_ref = 1.5\nstrouhal_t_min = 30\nlabel = alpha\n");
  const std::string text = serialize_config(a);
  const ExperimentConfig b = parse_config_text(text);
  CHECK(serialize_config(b) == text);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK_FALSE(b.re.has_value());
  CHECK(b.viscosity() == 0.01);
  CHECK(b.pint.scheme == TransferScheme::CP);
  CHECK(b.pint.flux_mode == FluxMode::Projected);
  CHECK(b.coeff_params().a_ref == 1.5);
  ExperimentConfig c = b;
  c.pint.workers = 4;
  CHECK(config_hash(c) != config_hash(b));
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(DivergenceError("x")) == 3);
  CHECK(exit_code_for(ConvergenceError("x", 1.0)) == 3);
  CHECK(exit_code_for(PararealError("x", 1, 2, PararealError::Cause::SliceSolve)) == 3);
  CHECK(exit_code_for(PararealError("x", 1, 2)) == 4);
  CHECK(exit_code_for(AggregationError("x")) == 5);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("output directory precedence") {
  ExperimentConfig c;
  c.label = "lbl";
  ::unsetenv("MMP_OUT_DIR");
  CHECK(resolve_output_dir(c, "") == fs::path("runs") / "lbl");
  ::setenv("MMP_OUT_DIR", "/tmp/mmp_root", 1);
  CHECK(resolve_output_dir(c, "") == fs::path("/tmp/mmp_root") / "lbl");
  c.out_dir = "cfg_dir";
  CHECK(resolve_output_dir(c, "") == fs::path("cfg_dir"));
  CHECK(resolve_output_dir(c, "cli_dir") == fs::path("cli_dir"));
  ::unsetenv("MMP_OUT_DIR");
}

TEST_CASE("mesh summary") {
  const std::string s = cmd_mesh(parse_config_text("nx = 64\nny = 32\n"));
  CHECK(s.find("64 x 32") != std::string::npos);
  CHECK(s.find("32 x 16") != std::string::npos);
}

TEST_CASE("audit on a small configuration") {
  const fs::path dir = scratch("audit");
  ExperimentConfig c = parse_config_text("nx = 64\nny = 32\nt_end = 2\ndt_coarse = 0.1\n");
  const auto reports = cmd_audit(c, dir);
  REQUIRE(reports.size() == 3);
  for (const ConsistencyReport& r : reports) {
    for (const ConsistencyRow& row : r.rows) {
      if (r.scheme == TransferScheme::NN) {
        CHECK(row.err_rl <= 1e-14);
        CHECK(row.err_rp <= 1e-14);
      } else {
        CHECK(row.err_rl > 0.0);
      }
    }
  }
  CHECK(fs::exists(dir / "audit.csv"));
  CHECK(fs::exists(dir / "audit_CP.csv"));
  const std::string first = slurp(dir / "audit.csv");
  // Second call reuses the cached snapshots.
  cmd_audit(c, dir);
  CHECK(slurp(dir / "audit.csv") == first);
  fs::remove_all(dir);
}

TEST_CASE("run manifest lists every artifact") {
  const fs::path dir = scratch("run");
  const RunManifest m = cmd_run(parse_config_text(kTiny), dir);
  CHECK_FALSE(m.files.empty());
  const RunManifest back = read_manifest(dir);
  CHECK(back.config_hash == m.config_hash);
  CHECK(back.files == m.files);
  CHECK(manifest_complete(dir, back));
  for (const char* name : {"forces_reference.csv", "errors.csv", "timings.csv", "speedup.csv", "config.echo",
                           "diagnostics.csv", "forces_fine_k1.csv", "slices/k3/t4/p.fdump"}) {
    CAPTURE(name);
    CHECK(std::find(back.files.begin(), back.files.end(), fs::path(name)) != back.files.end());
  }
  const ExperimentConfig echoed = parse_config(dir / "config.echo");
  CHECK(config_hash(echoed) == m.config_hash);
  fs::remove(dir / "errors.csv");
  CHECK_FALSE(manifest_complete(dir, back));
  fs::remove_all(dir);
}

TEST_CASE("serial-only run skips the parareal files") {
  const fs::path dir = scratch("serial");
  const RunManifest m = cmd_run(parse_config_text(std::string(kTiny) + "parareal = false\n"), dir);
  CHECK(fs::exists(dir / "forces_reference.csv"));
  CHECK_FALSE(fs::exists(dir / "errors.csv"));
  CHECK(manifest_complete(dir, m));
  fs::remove_all(dir);
}

TEST_CASE("emitted results do not depend on the worker count") {
  const fs::path one = scratch("w1");
  const fs::path many = scratch("w8");
  cmd_run(parse_config_text(std::string(kTiny) + "workers = 1\n"), one);
  cmd_run(parse_config_text(std::string(kTiny) + "workers = 8\n"), many);
  for (const char* name : {"errors.csv", "forces_reference.csv", "forces_fine_k2.csv", "diagnostics.csv",
                           "slices/k2/t3/U_x.fdump"}) {
    CAPTURE(name);
    CHECK(slurp(one / name) == slurp(many / name));
  }
  fs::remove_all(one);
  fs::remove_all(many);
}

TEST_CASE("report merges runs with a common end time") {
  const fs::path root = scratch("report");
  const fs::path a = root / "a";
  const fs::path b = root / "b";
  const fs::path c = root / "c";
  cmd_run(parse_config_text(std::string(kTiny)), a);
  cmd_run(parse_config_text(std::string(kTiny) + "workers = 2\n"), b);
  std::string two = kTiny;
  two.replace(two.find("n_t = 4"), 7, "n_t = 2");
  two.replace(two.find("k_max = 3"), 9, "k_max = 1");
  two.replace(two.find("label = tiny"), 12, "label = two");
  cmd_run(parse_config_text(two), c);

  const auto files = cmd_report({a, b, c}, root / "out");
  CHECK(files.size() == 3 + 3);
  std::ifstream in(root / "out" / "convergence_U_x.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "k,tiny,tiny_2,two");
  int rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  CHECK(rows == 4);
  CHECK(fs::exists(root / "out" / "cl_last_slice_two.csv"));

  const auto single = cmd_report({c}, root / "single");
  std::ifstream s(root / "single" / "convergence_p.csv");
  std::getline(s, header);
  CHECK(header == "k,two");

  const fs::path d = root / "d";
  std::string longer = kTiny;
  longer.replace(longer.find("t_end = 4"), 9, "t_end = 8");
  cmd_run(parse_config_text(longer), d);
  CHECK_THROWS_AS(cmd_report({a, d}, root / "bad"), AggregationError);
  CHECK_THROWS_AS(cmd_report({root / "missing"}, root / "bad"), AggregationError);
  fs::remove_all(root);
}

}
