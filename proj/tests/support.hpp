#pragma once

// Random instance generators and independent reference computations shared
// by the unit tests and the acceptance runner. Nothing here calls the
// library's dynamic programs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nlstop/controlstop.hpp"
#include "nlstop/lattice.hpp"

namespace nlstop::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

inline AdaptedProcess random_process(const ModelPtr& model, Rng& rng, double lo, double hi) {
  return AdaptedProcess::generate(model, [&](int, std::size_t, double) { return uniform(rng, lo, hi); });
}

inline StoppingRule random_rule(const ModelPtr& model, Rng& rng, double p_stop) {
  std::bernoulli_distribution stop(p_stop);
  return StoppingRule::first_hitting(model, [&](int, std::size_t) { return stop(rng); });
}

/// Textbook American put on the arithmetic binomial walk
/// S(t, j) = x0 + (2j - t) sqrt(dt), up/down with probability 1/2.
/// Returns the full value table indexed [t][j].
inline std::vector<std::vector<double>> american_put_table(int n, double dt, double x0, double strike) {
  const double sq = std::sqrt(dt);
  std::vector<std::vector<double>> v(n + 1);
  for (int j = 0; j <= n; ++j) v[n].push_back(std::max(strike - (x0 + (2.0 * j - n) * sq), 0.0));
  for (int t = n - 1; t >= 0; --t)
    for (int j = 0; j <= t; ++j) {
      const double hold = 0.5 * v[t + 1][j] + 0.5 * v[t + 1][j + 1];
      const double exercise = std::max(strike - (x0 + (2.0 * j - t) * sq), 0.0);
      v[t].push_back(std::max(hold, exercise));
    }
  return v;
}

inline double binomial_coefficient(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

/// E[xi] for a recombining binomial with up-probability p, by summing the
/// terminal distribution directly.
inline double binomial_expectation(const std::vector<double>& terminal, double p) {
  const int n = static_cast<int>(terminal.size()) - 1;
  double sum = 0.0;
  for (int j = 0; j <= n; ++j)
    sum += binomial_coefficient(n, j) * std::pow(p, j) * std::pow(1.0 - p, n - j) * terminal[j];
  return sum;
}

/// Random controller-stopper spec with a two-point control grid and a
/// state-dependent volatility, valid for dt = 0.25 and x0 = 1.
inline ControlledSpec random_control_spec(Rng& rng) {
  const double a = uniform(rng, 1.0, 1.5), b = uniform(rng, 0.05, 0.3);
  const double c = uniform(rng, -1.0, 1.0), d = uniform(rng, -0.5, 0.5);
  const double e = uniform(rng, -0.4, 0.2), f0 = uniform(rng, -0.2, 0.2);
  const double c1 = uniform(rng, 0.0, 1.5), c2 = uniform(rng, -0.3, 0.3), c0 = uniform(rng, 0.0, 0.5);
  ControlledSpec spec;
  spec.sigma = [a, b](double, double x) { return a + b * std::abs(x); };
  spec.drift = [c, d](double, double x, double u) { return std::clamp(c * u + d * std::sin(x), -1.5, 1.5); };
  spec.running = [e, f0](double, double x, double u) { return e * u * u + f0 * u + 0.1 * std::cos(x); };
  spec.terminal = [c1, c2, c0](double x) { return c1 * std::abs(x) + c2 * x - c0; };
  spec.controls = {-1.0, 1.0};
  spec.k_bound = 2.0;
  return spec;
}

}  // namespace nlstop::testing
