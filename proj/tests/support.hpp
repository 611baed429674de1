#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "bnwvad/tensor.hpp"

namespace testing {

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline bnwvad::Tensor3 random_tensor(std::mt19937_64& rng, std::size_t b, std::size_t t,
                                     std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  bnwvad::Tensor3 x(b, t, c);
  for (double& v : x.flat()) v = n(rng);
  return x;
}

inline bnwvad::Grid random_grid(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  bnwvad::Grid g(rows, cols);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : g.flat()) v = u(rng);
  return g;
}

/// Central finite difference of f at every coordinate of `x`.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x,
                                            double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// |a - b| <= max(abs_floor, rel * max(|a|, |b|)).
inline bool close(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

}  // namespace testing
