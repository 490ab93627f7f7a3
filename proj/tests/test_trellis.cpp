#include <cmath>
#include <vector>

#include "doctest.h"
#include "sicnn/trellis.hpp"
#include "support.hpp"

using namespace sicnn;

TEST_CASE("memoryless auxiliary channel") {
  const DiscreteChannel chan(testing::memoryless(AlphabetKind::bipolar_ask, 4, 0.0));
  const auto aux = build_aux_channel(chan, 0);
  CHECK(aux.memory() == 0);
  CHECK(aux.exact());
  for (std::size_t b = 0; b < 4; ++b) CHECK(aux.means(b)[0] == doctest::Approx(chan.levels()[b]));
}

TEST_CASE("square law with identity pulse gives squared levels") {
  ChannelConfig c = testing::memoryless(AlphabetKind::bipolar_ask, 4, 0.0);
  c.n_sim = 2;
  c.n_os = 2;
  c.nonlinearity.kind = Nonlinearity::Kind::square_law;
  const DiscreteChannel chan(c, FirFilter::impulse(2), FirFilter::impulse(2), 1.0);
  const auto aux = build_aux_channel(chan, 0);
  for (std::size_t b = 0; b < 4; ++b) {
    const double a = chan.levels()[b];
    CHECK(aux.means(b)[0] == doctest::Approx(a * a));
    CHECK(aux.means(b)[1] == 0.0);
  }
}

TEST_CASE("memoryless APPs follow the closed form") {
  const DiscreteChannel chan(testing::memoryless(AlphabetKind::bipolar_ask, 4, 3.0));
  const auto aux = build_aux_channel(chan, 0);
  const auto blk = draw_block(chan, 20, 4);
  const std::vector<int> pins(20, -1);
  const auto run = fba_run(aux, blk.y, pins);
  const auto lv = chan.levels();
  for (int k = 0; k < 20; ++k) {
    double w[4], z = 0.0;
    for (int a = 0; a < 4; ++a) {
      const double e = blk.y[static_cast<std::size_t>(k)] - lv[static_cast<std::size_t>(a)];
      w[a] = std::exp(-0.5 * e * e);
      z += w[a];
    }
    for (int a = 0; a < 4; ++a)
      CHECK(std::exp(run.log_app[static_cast<std::size_t>(k * 4 + a)]) == doctest::Approx(w[a] / z).epsilon(1e-12));
  }
}

TEST_CASE("exact memory matches exhaustive enumeration") {
  for (double ptx : {-2.0, 4.0}) {
    const DiscreteChannel chan(testing::toy_fiber(2, 5, ptx));
    const auto aux = build_aux_channel(chan, 8);
    CHECK(aux.exact());
    const int n = 6;
    const auto blk = draw_block(chan, n, 21);
    const std::vector<int> pins(n, -1);
    const auto run = fba_run(aux, blk.y, pins);
    const auto oracle = testing::exhaustive_posteriors(chan, blk.y, n);
    for (std::size_t i = 0; i < oracle.size(); ++i)
      CHECK(std::abs(std::exp(run.log_app[i]) - oracle[i]) < 1e-9);

    // Pinned positions restrict the sum.
    std::vector<int> some(n, -1);
    some[1] = blk.x[1];
    some[4] = blk.x[4];
    const auto pinned = fba_run(aux, blk.y, some);
    const auto oracle_p = testing::exhaustive_posteriors(chan, blk.y, n, some);
    for (std::size_t i = 0; i < oracle_p.size(); ++i)
      CHECK(std::abs(std::exp(pinned.log_app[i]) - oracle_p[i]) < 1e-9);
  }
}

TEST_CASE("log metric sum equals the exhaustive sum") {
  const DiscreteChannel chan(testing::toy_fiber(2, 5, 1.0));
  const auto aux = build_aux_channel(chan, 8);
  const int n = 5;
  const auto blk = draw_block(chan, n, 2);
  std::vector<double> terms;
  testing::for_each_sequence(n, 2, [&](const std::vector<int>& x) {
    const auto z = chan.noiseless(x, Exec::serial);
    double q = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) q += (blk.y[j] - z[j]) * (blk.y[j] - z[j]);
    terms.push_back(-0.5 * q / chan.component_variance());
  });
  const std::vector<int> pins(n, -1);
  CHECK(fba_run(aux, blk.y, pins, false).log_metric_sum == doctest::Approx(log_sum_exp(terms)).epsilon(1e-12));
}

TEST_CASE("truncated memory is a mismatched model") {
  const DiscreteChannel chan(testing::toy_fiber(2, 5, 4.0));
  const auto exact = build_aux_channel(chan, 2);
  const auto trunc = build_aux_channel(chan, 1);
  CHECK(exact.exact());
  CHECK_FALSE(trunc.exact());
  const std::vector<int> x{1, 0, 1, 1, 0, 0, 1};
  const auto z = chan.noiseless(x, Exec::serial);
  // The exact model reproduces an interior slot; the truncated one does not.
  auto slot_from = [&](const AuxChannel& aux, int k) {
    std::vector<double> w(static_cast<std::size_t>(aux.memory() + 1));
    for (int i = 0; i <= aux.memory(); ++i) {
      const int idx = k - aux.past() + i;
      w[static_cast<std::size_t>(i)] = idx >= 0 && idx < 7 ? chan.levels()[static_cast<std::size_t>(x[static_cast<std::size_t>(idx)])] : 0.0;
    }
    std::vector<double> out(static_cast<std::size_t>(aux.obs_per_slot()));
    aux.slot_mean(w, out);
    return out;
  };
  const auto e = slot_from(exact, 3);
  CHECK(e[0] == doctest::Approx(z[6]).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(z[7]).epsilon(1e-12));
  const auto t = slot_from(trunc, 3);
  CHECK(std::abs(t[0] - z[6]) + std::abs(t[1] - z[7]) > 1e-6);
}

TEST_CASE("fba_app returns point masses for known positions and rows per target") {
  const DiscreteChannel chan(testing::toy_fiber(2, 5, 2.0));
  const auto aux = build_aux_channel(chan, 2);
  const auto blk = draw_block(chan, 12, 3);
  const SicPlan plan(3, 12);
  const StageView view(plan, 2, blk.x);
  const auto app = fba_app(aux, blk.y, view);
  CHECK(app.rows() == 4);
  const auto oracle = testing::exhaustive_posteriors(chan, blk.y, 12, std::vector<int>(view.pins().begin(), view.pins().end()));
  const auto targets = view.targets();
  for (int t = 0; t < 4; ++t)
    for (int a = 0; a < 2; ++a)
      CHECK(std::abs(app.prob(t, a) - oracle[static_cast<std::size_t>((targets[static_cast<std::size_t>(t)] - 1) * 2 + a)]) <
            1e-9);
}

TEST_CASE("multiplication counts") {
  const DiscreteChannel chan(testing::memoryless(AlphabetKind::bipolar_ask, 2, 0.0));
  const auto aux = build_aux_channel(chan, 0);
  // Per section: M branch metrics of (1 + 1) products, M forward terms,
  // M backward terms, 2M APP terms.
  CHECK(count_fba_multiplications(aux, 4, 1) == 2 * 2 + 2 + 2 + 4);
  const DiscreteChannel fiber(testing::toy_fiber(4, 7, 0.0));
  const auto aux3 = build_aux_channel(fiber, 3);
  const auto one = count_fba_multiplications(aux3, 12, 1);
  CHECK(count_fba_multiplications(aux3, 12, 4) == 4 * one);
  CHECK(count_fba_multiplications(aux3, 20, 1) == one);
  CHECK(build_aux_channel(fiber, 1).branches() == 16);
  CHECK_THROWS_AS(build_aux_channel(fiber, 3, 100), ConfigError);
}

TEST_CASE("JDD bounds") {
  SUBCASE("high SNR invertible channel approaches m bits") {
    const DiscreteChannel chan(testing::memoryless(AlphabetKind::bipolar_ask, 4, 30.0));
    const auto aux = build_aux_channel(chan, 0);
    std::vector<Block> blocks;
    for (int b = 0; b < 10; ++b) blocks.push_back(draw_block(chan, 200, static_cast<std::uint64_t>(b)));
    const auto ub = fba_ub(aux, blocks);
    CHECK(ub.upper.mean == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(ub.pinned.mean == doctest::Approx(ub.upper.mean).epsilon(1e-9));
  }
  SUBCASE("vanishing power approaches zero") {
    const DiscreteChannel chan(testing::toy_fiber(2, 5, -40.0));
    const auto aux = build_aux_channel(chan, 2);
    std::vector<Block> blocks;
    for (int b = 0; b < 10; ++b) blocks.push_back(draw_block(chan, 200, static_cast<std::uint64_t>(b)));
    const auto ub = fba_ub(aux, blocks);
    CHECK(std::abs(ub.upper.mean) < 0.01);
  }
  SUBCASE("serial and parallel agree") {
    const DiscreteChannel chan(testing::toy_fiber(2, 7, 3.0));
    const auto aux = build_aux_channel(chan, 2);
    std::vector<Block> blocks;
    for (int b = 0; b < 6; ++b) blocks.push_back(draw_block(chan, 100, static_cast<std::uint64_t>(b)));
    const auto s = fba_ub(aux, blocks, Exec::serial);
    const auto p = fba_ub(aux, blocks, Exec::parallel);
    CHECK(s.upper_blocks == p.upper_blocks);
    CHECK(s.pinned_blocks == p.pinned_blocks);
  }
}
