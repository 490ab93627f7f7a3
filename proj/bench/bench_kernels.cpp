// Serial reference vs OpenMP kernels. Each pair runs the same work; the
// second argument selects the execution policy (0 serial, 1 parallel).

#include <benchmark/benchmark.h>

#include "sicnn/gibbs.hpp"
#include "sicnn/rnn.hpp"
#include "sicnn/signal_chain.hpp"
#include "sicnn/trainer.hpp"
#include "sicnn/trellis.hpp"

using namespace sicnn;

namespace {

Exec policy(const benchmark::State& st) { return st.range(0) == 0 ? Exec::serial : Exec::parallel; }

ChannelConfig fiber_channel(int pulse_taps) {
  ChannelConfig c;
  c.alphabet = Alphabet(AlphabetKind::bipolar_ask, 4);
  c.fiber = FiberConfig{};
  c.pulse_taps = pulse_taps;
  c.ptx_db = 6.0;
  return c;
}

void BM_Shaping(benchmark::State& st) {
  const DiscreteChannel chan(fiber_channel(303));
  Rng rng(1);
  std::vector<int> x(4096);
  for (auto& v : x) v = static_cast<int>(rng() % 4);
  for (auto _ : st) benchmark::DoNotOptimize(chan.noiseless(x, policy(st)));
}
BENCHMARK(BM_Shaping)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_FbaBlocks(benchmark::State& st) {
  const DiscreteChannel chan(fiber_channel(31));
  const auto aux = build_aux_channel(chan, 4);
  std::vector<Block> blocks;
  for (int b = 0; b < 8; ++b) blocks.push_back(draw_block(chan, 512, static_cast<std::uint64_t>(b)));
  for (auto _ : st) benchmark::DoNotOptimize(fba_ub(aux, blocks, policy(st)));
}
BENCHMARK(BM_FbaBlocks)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RnnGradient(benchmark::State& st) {
  const DiscreteChannel chan(fiber_channel(31));
  RnnShape shape{{48, 64, 32}, 32, 16, 2, 1, 4, 2};
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.t_rnn = 32;
  const auto norm = estimate_normalization(chan, 3);
  const auto model = RnnModel::initialized(shape, norm, 5);
  const auto batch = make_training_batch(chan, shape, norm, cfg, 7);
  for (auto _ : st) benchmark::DoNotOptimize(rnn_gradient(model, batch, policy(st)));
}
BENCHMARK(BM_RnnGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GibbsChains(benchmark::State& st) {
  const DiscreteChannel chan(fiber_channel(31));
  const AuxChannel aux(chan, 8, 0, Exec::serial, false);
  const auto block = draw_block(chan, 120, 11);
  const SicPlan plan(2, 120);
  const StageView view(plan, 1, block.x);
  GibbsConfig cfg{8, 30, 16, 10};
  for (auto _ : st) benchmark::DoNotOptimize(gibbs_app(aux, block.y, view, cfg, 13, policy(st)));
}
BENCHMARK(BM_GibbsChains)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
