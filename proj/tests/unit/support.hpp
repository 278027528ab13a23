#pragma once

// Small hand-rolled generators for the property tests.

#include <cstdint>
#include <random>
#include <vector>

#include "profmon/core.hpp"

namespace testkit {

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double normal() { return std::normal_distribution<double>()(rng); }

  // Values from a small integer grid so that ties are common.
  std::vector<double> grid_sample(std::size_t n, int lo = 0, int hi = 5) {
    std::vector<double> v(n);
    for (auto& x : v) x = integer(lo, hi);
    return v;
  }

  std::vector<double> normal_sample(std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = normal();
    return v;
  }

  // y = step in x1 plus noise, p predictors in (0, 1)
  profmon::ObservationBatch batch(std::size_t n, std::size_t p, std::int64_t t = 0, double noise = 1.0) {
    std::vector<double> x(n * p), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < p; ++f) x[i * p + f] = uniform();
      y[i] = 3.0 * x[i * p] + (x[i * p] > 0.5 ? 2.0 : 0.0) + noise * normal();
    }
    return profmon::ObservationBatch(t, p, std::move(x), std::move(y));
  }
};

// Independent ECDF oracle: direct counting.
inline double count_le(const std::vector<double>& v, double z) {
  std::size_t c = 0;
  for (double x : v) c += x <= z ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(v.size());
}

}  // namespace testkit
