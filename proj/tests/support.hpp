#pragma once

#include <cstdint>
#include <random>

#include "mmpar/grid.hpp"
#include "mmpar/solver.hpp"

namespace mmtest {

// 32x16 fine / 16x8 coarse channel with the default cylinder proportions scaled down.
inline mmpar::MeshConfig small_channel(int nx = 32, int ny = 16) {
  mmpar::MeshConfig c;
  c.nx = nx;
  c.ny = ny;
  return c;
}

// A mesh whose cylinder hits no cell centre.
inline mmpar::MeshConfig empty_channel(int nx = 16, int ny = 8) {
  mmpar::MeshConfig c;
  c.length = nx;
  c.height = ny;
  c.cyl_x = nx / 2.0;
  c.cyl_y = ny / 2.0;
  c.radius = 0.1;
  c.nx = nx;
  c.ny = ny;
  return c;
}

inline mmpar::Field random_field(const mmpar::Mesh& m, std::uint32_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  mmpar::Field f(m.nx(), m.ny());
  for (std::size_t c = 0; c < m.cells(); ++c) {
    const double v = dist(gen);
    if (m.fluid(c)) f[c] = v;
  }
  return f;
}

inline mmpar::State random_state(const mmpar::MeshPtr& m, std::uint32_t seed) {
  mmpar::State s = mmpar::State::zeros(m);
  s.ux = random_field(*m, seed);
  s.uy = random_field(*m, seed + 1);
  s.p = random_field(*m, seed + 2);
  mmpar::average_fluxes(s, 1.0);
  return s;
}

inline bool same_cells(const mmpar::State& a, const mmpar::State& b) {
  return a.ux == b.ux && a.uy == b.uy && a.p == b.p;
}

}  // namespace mmtest
