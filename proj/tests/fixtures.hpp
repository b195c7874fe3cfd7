#pragma once

#include <cstdint>
#include <numeric>
#include <random>

#include "cgport/data_io.hpp"
#include "cgport/model.hpp"

namespace cgport::testing {

// Hand-built universe: one sector, quintiles dealt 1..5 in order.
inline AssetUniverse make_universe(Vector bench, Vector alpha, Matrix omega, Vector beta = {}) {
  AssetUniverse u;
  const auto n = bench.size();
  u.date = std::chrono::sys_days{std::chrono::year{2020} / 1 / 1};
  for (Eigen::Index i = 0; i < n; ++i) {
    u.ids.push_back("A" + std::to_string(i));
    u.names.push_back("Asset " + std::to_string(i));
    u.sector_of.push_back(0);
    u.mcapq_of.push_back(1 + static_cast<int>(i % kNumQuintiles));
  }
  u.sector_names = {"ALL"};
  u.bench = std::move(bench);
  u.alpha = std::move(alpha);
  u.omega = std::move(omega);
  u.beta = beta.size() == 0 ? Vector(Vector::Ones(n)) : std::move(beta);
  return u;
}

// Limits wide enough that small universes (n < 20) stay feasible.
inline ModelLimits loose_limits() { return {0.3, 0.3, 0.3, 0.3}; }

// Single-period synthetic universe with near-uniform benchmark weights.
inline AssetUniverse small_universe(int n, std::uint64_t seed, int sectors = 2) {
  SyntheticSpec spec;
  spec.n_assets = n;
  spec.n_sectors = sectors;
  spec.n_factors = 2;
  spec.n_periods = 1;
  spec.seed = seed;
  spec.bench_concentration = 20.0;
  return generate_synthetic(spec).universes.front();
}

// Uniform draw from the probability simplex.
inline Vector random_simplex(int n, std::mt19937_64& gen) {
  std::exponential_distribution<double> e(1.0);
  Vector w(n);
  for (int i = 0; i < n; ++i) w[i] = e(gen);
  return w / w.sum();
}

}  // namespace cgport::testing
