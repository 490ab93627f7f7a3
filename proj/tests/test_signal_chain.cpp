#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "sicnn/signal_chain.hpp"
#include "support.hpp"

using namespace sicnn;

namespace {

std::vector<Sample> naive_dft(std::span<const Sample> x) {
  const auto n = x.size();
  std::vector<Sample> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      out[k] += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(n));
  return out;
}

ChannelConfig impulse_channel(Nonlinearity::Kind kind, int n_sim, double var) {
  ChannelConfig c;
  c.alphabet = Alphabet(AlphabetKind::bipolar_ask, 4);
  c.n_os = n_sim;
  c.n_sim = n_sim;
  c.nonlinearity.kind = kind;
  c.custom_pulse = {Sample{1.0, 0.0}};
  c.receiver = ReceiverKind::identity;
  c.noise_variance = var;
  return c;
}

}  // namespace

TEST_CASE("alphabets") {
  const Alphabet ask(AlphabetKind::bipolar_ask, 4);
  CHECK(std::vector<double>(ask.points().begin(), ask.points().end()) == std::vector<double>{-3, -1, 1, 3});
  CHECK(ask.mean_energy() == doctest::Approx(5.0));
  CHECK(ask.bits() == 2);
  const Alphabet pam(AlphabetKind::unipolar_pam, 4);
  CHECK(std::vector<double>(pam.points().begin(), pam.points().end()) == std::vector<double>{0, 1, 2, 3});
  CHECK_THROWS_AS(Alphabet(AlphabetKind::bipolar_ask, 3), ConfigError);
  CHECK_THROWS_AS(Alphabet(AlphabetKind::bipolar_ask, 1), ConfigError);
}

TEST_CASE("filters need odd length") {
  CHECK_THROWS_AS(FirFilter(std::vector<Sample>(4), 2), ConfigError);
  const FirFilter f(std::vector<Sample>{1.0, 2.0, 3.0}, 2);
  CHECK(f.at(-1) == Sample{1.0});
  CHECK(f.at(0) == Sample{2.0});
  CHECK(f.at(2) == Sample{});
  CHECK(f.symbol_memory() == 1);
}

TEST_CASE("sinc pulse without fiber") {
  ChannelConfig c;
  c.n_sim = 2;
  c.pulse_taps = 2 * c.n_sim + 1;
  const auto g = build_pulse(c, PulseOptions{false});
  REQUIRE(g.length() == 5);
  CHECK(g.at(0).real() == doctest::Approx(1.0));
  CHECK(std::abs(g.at(2)) < 1e-15);
  CHECK(std::abs(g.at(-2)) < 1e-15);
  CHECK(g.at(1).real() == doctest::Approx(2.0 / std::numbers::pi));

  const auto gn = build_pulse(c);
  CHECK(gn.energy() / c.n_sim == doctest::Approx(1.0));
}

TEST_CASE("fiber response is all-pass") {
  ChannelConfig c;
  c.fiber = FiberConfig{};
  c.fiber->beta2_s2_per_km = -2.168e-23;
  c.fiber->length_km = 30.0;
  c.symbol_rate = 35e9;
  const auto d = build_dispersion(c, 63);
  // Undo the recentring before the DFT.
  std::vector<Sample> circ(63);
  for (int u = -31; u <= 31; ++u) circ[static_cast<std::size_t>((u + 63) % 63)] = d.at(u);
  for (const auto& v : naive_dft(circ)) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.energy() == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<Sample> sig(40);
  Rng rng(3);
  std::normal_distribution<double> nd;
  double e_in = 0.0;
  for (auto& v : sig) {
    v = {nd(rng), nd(rng)};
    e_in += std::norm(v);
  }
  double e_out = 0.0;
  for (const auto& v : apply_dispersion(c, sig)) e_out += std::norm(v);
  CHECK(e_out == doctest::Approx(e_in).epsilon(1e-12));
}

TEST_CASE("default pulse length gives 151 symbols of memory") {
  ChannelConfig c;
  c.fiber = FiberConfig{};
  CHECK(c.resolved_pulse_taps() == 303);
  const auto g = build_pulse(c);
  CHECK(g.length() == 303);
  CHECK(g.symbol_memory() == 151);
}

TEST_CASE("nonlinearities") {
  const Nonlinearity sq{Nonlinearity::Kind::square_law};
  CHECK(apply_nonlinearity({3.0, 0.0}, sq) == Sample{9.0, 0.0});
  CHECK(apply_nonlinearity({1.0, 1.0}, sq).real() == doctest::Approx(2.0));
  Nonlinearity hard{Nonlinearity::Kind::rapp, 1e6, 1.0};
  const Sample z = std::polar(2.0, 0.7);
  const auto r = apply_nonlinearity(z, hard);
  CHECK(std::abs(r) == doctest::Approx(1.0));
  CHECK(std::arg(r) == doctest::Approx(0.7));
  Nonlinearity soft{Nonlinearity::Kind::rapp, 3.0, 1.0};
  const auto s = apply_nonlinearity({0.01, 0.0}, soft);
  CHECK(s.real() == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(apply_nonlinearity({}, soft) == Sample{});
}

TEST_CASE("config validation") {
  ChannelConfig c;
  c.n_sim = 1;
  c.n_os = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.nonlinearity.kind = Nonlinearity::Kind::identity;
  CHECK_THROWS_AS(c.validate(), ConfigError);  // default K_g = 152 is even
  c.pulse_taps = 3;
  CHECK_NOTHROW(c.validate());
  c.n_sim = 3;
  c.n_os = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("noise-free identity channel reproduces the symbols") {
  const DiscreteChannel chan(impulse_channel(Nonlinearity::Kind::identity, 2, 0.0), FirFilter::impulse(2),
                             FirFilter::impulse(2), 1.0);
  const std::vector<int> x{2};
  const auto b = simulate_block(chan, x, 1);
  REQUIRE(b.y.size() == 2);
  CHECK(b.y[0] == 1.0);
  CHECK(b.y[1] == 0.0);  // impulse pulse: zero between symbol instants
  CHECK(b.y == b.z);
}

TEST_CASE("square law on a symbol-rate impulse") {
  const DiscreteChannel chan(impulse_channel(Nonlinearity::Kind::square_law, 2, 0.0), FirFilter::impulse(2),
                             FirFilter::impulse(2), 1.0);
  const std::vector<int> x{0};  // level -3
  CHECK(chan.noiseless(x, Exec::serial)[0] == 9.0);
  CHECK_THROWS_AS(simulate_block(chan, std::vector<int>{}, 1), ConfigError);
}

TEST_CASE("noiseless output agrees with a direct convolution") {
  auto cfg = testing::toy_fiber(4, 7, 3.0);
  cfg.receiver_taps = 5;
  const DiscreteChannel chan(cfg);
  const std::vector<int> x{0, 3, 1, 2, 2, 0, 1};
  const auto z = chan.noiseless(x, Exec::serial);
  const auto lv = chan.levels();
  const auto& g = chan.pulse();
  const auto& h = chan.receiver();
  const int n = static_cast<int>(x.size());
  auto xs = [&](int w) {
    Sample acc{};
    for (int k = 0; k < n; ++k) acc += g.at(w - 2 * k) * lv[static_cast<std::size_t>(x[static_cast<std::size_t>(k)])];
    return std::norm(acc);
  };
  for (int j = 0; j < 2 * n; ++j) {
    double acc = 0.0;
    for (int u = -2; u <= 2; ++u) acc += h.at(u).real() * xs(j - u);
    CHECK(z[static_cast<std::size_t>(j)] == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK(chan.noiseless(x, Exec::parallel) == z);
}

TEST_CASE("serial and parallel blocks are identical") {
  const DiscreteChannel chan(testing::toy_fiber(4, 7, 2.0));
  const auto a = draw_block(chan, 300, 17, Exec::serial);
  const auto b = draw_block(chan, 300, 17, Exec::parallel);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  const auto c = draw_block(chan, 300, 18, Exec::serial);
  CHECK(a.y != c.y);
}

TEST_CASE("direct noise has the configured variance") {
  auto cfg = impulse_channel(Nonlinearity::Kind::identity, 1, 0.25);
  const DiscreteChannel chan(cfg, FirFilter::impulse(1), FirFilter::impulse(1), 1.0);
  const auto b = draw_block(chan, 200000, 5, Exec::serial);
  double s2 = 0.0;
  for (std::size_t i = 0; i < b.y.size(); ++i) s2 += (b.y[i] - b.z[i]) * (b.y[i] - b.z[i]);
  CHECK(s2 / static_cast<double>(b.y.size()) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("differential precoding") {
  const Alphabet ask(AlphabetKind::bipolar_ask, 4);
  // indices 2,3 positive; 0,1 negative
  const std::vector<int> data{3, 2, 1, 0};
  const auto e = differential_precode(data, ask);
  CHECK(e == std::vector<int>{3, 2, 1, 3});
  const std::vector<int> pos{2, 3, 3, 2};
  CHECK(differential_precode(pos, ask) == pos);
  Rng rng(9);
  std::vector<int> r(200);
  for (auto& v : r) v = static_cast<int>(rng() % 4);
  CHECK(differential_decode(differential_precode(r, ask), ask) == r);
  const Alphabet pam(AlphabetKind::unipolar_pam, 4);
  CHECK(differential_precode(r, pam) == r);
}

TEST_CASE("transmit power") {
  auto cfg = testing::toy_fiber(4, 7, 0.0);
  cfg.pulse_taps = 31;
  const DiscreteChannel chan(cfg, build_pulse(cfg), FirFilter::impulse(2), 1.0);
  CHECK(chan.pulse().energy() / 2 == doctest::Approx(1.0));
  const auto b = draw_block(chan, 40000, 3, Exec::serial);
  CHECK(transmit_power(chan, b) == doctest::Approx(5.0).epsilon(0.03));

  const DiscreteChannel unit(cfg, build_pulse(cfg), FirFilter::impulse(2), 1.0 / std::sqrt(5.0));
  CHECK(transmit_power(unit, draw_block(unit, 40000, 4, Exec::serial)) == doctest::Approx(1.0).epsilon(0.03));

  const DiscreteChannel zero(cfg, build_pulse(cfg), FirFilter::impulse(2), 0.0);
  CHECK(transmit_power(zero, draw_block(zero, 100, 4, Exec::serial)) == 0.0);

  // Amplitude follows the configured power.
  cfg.ptx_db = 10.0;
  const DiscreteChannel scaled(cfg);
  CHECK(transmit_power(scaled, draw_block(scaled, 40000, 6, Exec::serial)) == doctest::Approx(10.0).epsilon(0.03));
}

TEST_CASE("block dump round trip") {
  const DiscreteChannel chan(testing::toy_fiber(2, 5, 1.0));
  const auto b = draw_block(chan, 50, 2);
  const auto dir = std::filesystem::temp_directory_path() / "sicnn_block_test";
  std::filesystem::create_directories(dir);
  save_block(dir / "blk", b, chan, "{}");
  const auto l = load_block(dir / "blk");
  CHECK(l.y == b.y);
  CHECK(l.seed == b.seed);
  REQUIRE(l.x_levels.size() == 50);
  for (int k = 0; k < 50; ++k)
    CHECK(l.x_levels[static_cast<std::size_t>(k)] == chan.alphabet().point(b.x[static_cast<std::size_t>(k)]));
  std::filesystem::remove_all(dir);
}
