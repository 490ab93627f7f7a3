#pragma once

// Toy channels and independent oracles shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "sicnn/app_matrix.hpp"
#include "sicnn/signal_chain.hpp"

namespace sicnn::testing {

/// Square-law link with a short dispersive pulse: N_sim = N_os = 2, total
/// memory floor((K_g - 1) / 2) symbols (K_g = 5 -> 2, K_g = 7 -> 3).
inline ChannelConfig toy_fiber(int alphabet_size, int pulse_taps, double ptx_db) {
  ChannelConfig c;
  c.alphabet = Alphabet(AlphabetKind::bipolar_ask, alphabet_size);
  c.n_os = 2;
  c.n_sim = 2;
  c.nonlinearity.kind = Nonlinearity::Kind::square_law;
  c.fiber = FiberConfig{};
  c.pulse_taps = pulse_taps;
  c.receiver = ReceiverKind::brickwall;
  c.receiver_taps = 1;
  c.noise = NoiseKind::real;
  c.noise_variance = 1.0;
  c.ptx_db = ptx_db;
  return c;
}

/// Memoryless real AWGN: y = a * point + noise, one sample per symbol.
inline ChannelConfig memoryless(AlphabetKind kind, int alphabet_size, double ptx_db) {
  ChannelConfig c;
  c.alphabet = Alphabet(kind, alphabet_size);
  c.n_os = 1;
  c.n_sim = 1;
  c.nonlinearity.kind = Nonlinearity::Kind::identity;
  c.custom_pulse = {Sample{1.0, 0.0}};
  c.pulse_taps = 1;
  c.receiver = ReceiverKind::identity;
  c.receiver_taps = 1;
  c.noise = NoiseKind::real;
  c.noise_variance = 1.0;
  c.ptx_db = ptx_db;
  return c;
}

/// Enumerate all M^n sequences (index vectors), calling fn on each.
inline void for_each_sequence(int n, int m, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> x(static_cast<std::size_t>(n), 0);
  while (true) {
    fn(x);
    int k = 0;
    while (k < n && ++x[static_cast<std::size_t>(k)] == m) x[static_cast<std::size_t>(k++)] = 0;
    if (k == n) return;
  }
}

/// Exact symbol posteriors by brute force over the true channel law,
/// optionally restricted to sequences agreeing with `pins` (>= 0 entries).
inline std::vector<double> exhaustive_posteriors(const DiscreteChannel& chan, const std::vector<double>& y, int n,
                                                 const std::vector<int>& pins = {}) {
  const int m = chan.alphabet().size();
  const double inv2var = 0.5 / chan.component_variance();
  std::vector<std::vector<double>> logs(static_cast<std::size_t>(n * m));
  for_each_sequence(n, m, [&](const std::vector<int>& x) {
    for (std::size_t k = 0; k < pins.size(); ++k)
      if (pins[k] >= 0 && pins[k] != x[k]) return;
    const auto z = chan.noiseless(x, Exec::serial);
    double q = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) q += (y[j] - z[j]) * (y[j] - z[j]);
    for (int k = 0; k < n; ++k) logs[static_cast<std::size_t>(k * m + x[static_cast<std::size_t>(k)])].push_back(-q * inv2var);
  });
  std::vector<double> out(static_cast<std::size_t>(n * m));
  for (int k = 0; k < n; ++k) {
    std::vector<double> row(static_cast<std::size_t>(m));
    for (int a = 0; a < m; ++a) row[static_cast<std::size_t>(a)] = log_sum_exp(logs[static_cast<std::size_t>(k * m + a)]);
    const double z = log_sum_exp(row);
    for (int a = 0; a < m; ++a) out[static_cast<std::size_t>(k * m + a)] = std::exp(row[static_cast<std::size_t>(a)] - z);
  }
  return out;
}

/// I(X;Y) in bits for y = level[x] + N(0, var), uniform x, by trapezoidal
/// quadrature of the output density.
inline double memoryless_mi(const std::vector<double>& levels, double var) {
  const double sd = std::sqrt(var);
  const auto [lo_it, hi_it] = std::minmax_element(levels.begin(), levels.end());
  const double lo = *lo_it - 12.0 * sd;
  const double hi = *hi_it + 12.0 * sd;
  const int steps = 200000;
  const double h = (hi - lo) / steps;
  const double m = static_cast<double>(levels.size());
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi * var);
  double hy = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double y = lo + i * h;
    double p = 0.0;
    for (double a : levels) p += c * std::exp(-(y - a) * (y - a) / (2.0 * var));
    p /= m;
    const double term = p > 0.0 ? -p * std::log2(p) : 0.0;
    hy += (i == 0 || i == steps) ? 0.5 * term : term;
  }
  hy *= h;
  const double hn = 0.5 * std::log2(2.0 * std::numbers::pi * std::numbers::e * var);
  return hy - hn;
}

}  // namespace sicnn::testing
