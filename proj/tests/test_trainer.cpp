#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "sicnn/trainer.hpp"
#include "support.hpp"

using namespace sicnn;

namespace {

struct Fixture {
  ChannelConfig cfg = testing::toy_fiber(4, 7, 4.0);
  DiscreteChannel chan{cfg};
  RnnShape shape{{8, 6, 4}, 6, 2, 2, 1, 4, 2};
  TrainConfig train;
  InputNormalization norm;
  Fixture() {
    train.batch = 5;
    train.t_rnn = 8;
    norm = estimate_normalization(chan, 3);
  }
};

double batch_loss(const RnnModel& m, const std::vector<LabeledSequence>& b) { return rnn_loss(m, b, Exec::serial).bits; }

}  // namespace

TEST_CASE("config validation") {
  Fixture f;
  f.train.t_rnn = 7;
  CHECK_THROWS_AS(f.train.validate(f.shape), ConfigError);
  f.train.t_rnn = 8;
  CHECK(f.train.targets_per_sequence(f.shape) == 4);
  f.train.batch = 0;
  CHECK_THROWS_AS(f.train.validate(f.shape), ConfigError);
}

TEST_CASE("training batches") {
  Fixture f;
  const auto batch = make_training_batch(f.chan, f.shape, f.norm, f.train, 11);
  REQUIRE(batch.size() == 5);
  for (const auto& s : batch) {
    CHECK(s.inputs.steps == 8);
    CHECK(s.labels.size() == 4);
  }
  // Consecutive segments of one block: stage-1 targets 1, 3, 5, ...
  CHECK(batch[0].inputs.targets.front() == 1);
  CHECK(batch[1].inputs.targets.front() == 9);
  const auto again = make_training_batch(f.chan, f.shape, f.norm, f.train, 11, Exec::serial);
  CHECK(again[3].inputs.data == batch[3].inputs.data);
}

TEST_CASE("normalization") {
  Fixture f;
  CHECK(f.norm.obs_scale > 0.0);
  double ms = 0.0;
  for (double v : f.norm.symbol_values) ms += v * v;
  CHECK(ms / 4 == doctest::Approx(1.0));
}

TEST_CASE("zero model costs m bits") {
  Fixture f;
  const RnnModel zero(f.shape, f.norm);
  const auto batch = make_training_batch(f.chan, f.shape, f.norm, f.train, 2);
  const auto l = rnn_loss(zero, batch);
  CHECK(l.bits == doctest::Approx(2.0));
  CHECK(l.targets == 20);
  CHECK(l.clamped == 0);
}

TEST_CASE("gradient matches central differences") {
  Fixture f;
  const auto model = RnnModel::initialized(f.shape, f.norm, 4);
  const auto batch = make_training_batch(f.chan, f.shape, f.norm, f.train, 5);
  const auto g = rnn_gradient(model, batch, Exec::serial);
  CHECK(g.loss.bits == doctest::Approx(batch_loss(model, batch)).epsilon(1e-12));
  const double h = 1e-5;
  for (std::size_t i = 0; i < model.parameter_count(); i += 7) {
    auto plus = model;
    auto minus = model;
    plus.params()[i] += h;
    minus.params()[i] -= h;
    const double fd = (batch_loss(plus, batch) - batch_loss(minus, batch)) / (2 * h);
    CHECK(g.grad[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
  }
}

TEST_CASE("output bias gradient has the closed form") {
  Fixture f;
  const auto model = RnnModel::initialized(f.shape, f.norm, 8);
  const auto batch = make_training_batch(f.chan, f.shape, f.norm, f.train, 6);
  const auto g = rnn_gradient(model, batch);
  std::vector<double> want(4, 0.0);
  int total = 0;
  for (const auto& s : batch) {
    const auto app = rnn_app(model, s.inputs);
    for (int t = 0; t < app.rows(); ++t, ++total)
      for (int a = 0; a < 4; ++a)
        want[static_cast<std::size_t>(a)] += app.prob(t, a) - (s.labels[static_cast<std::size_t>(t)] == a ? 1.0 : 0.0);
  }
  for (int a = 0; a < 4; ++a)
    CHECK(g.grad[model.layout().b_out() + static_cast<std::size_t>(a)] ==
          doctest::Approx(want[static_cast<std::size_t>(a)] / (total * std::numbers::ln2)).epsilon(1e-10));
}

TEST_CASE("duplicating every item leaves the mean gradient unchanged") {
  Fixture f;
  const auto model = RnnModel::initialized(f.shape, f.norm, 9);
  const auto batch = make_training_batch(f.chan, f.shape, f.norm, f.train, 7);
  auto twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  const auto a = rnn_gradient(model, batch);
  const auto b = rnn_gradient(model, twice);
  for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(b.grad[i] == doctest::Approx(a.grad[i]).epsilon(1e-12));
}

TEST_CASE("serial and parallel gradients are bitwise equal") {
  Fixture f;
  f.train.batch = 13;
  const auto model = RnnModel::initialized(f.shape, f.norm, 10);
  const auto batch = make_training_batch(f.chan, f.shape, f.norm, f.train, 8);
  const auto s = rnn_gradient(model, batch, Exec::serial);
  const auto p = rnn_gradient(model, batch, Exec::parallel);
  CHECK(s.grad == p.grad);
  CHECK(s.loss.bits == p.loss.bits);
}

TEST_CASE("clamped targets contribute the floor and no gradient") {
  Fixture f;
  RnnModel model(f.shape, f.norm);
  model.params()[model.layout().b_out()] = 1e4;
  const auto batch = make_training_batch(f.chan, f.shape, f.norm, f.train, 12);
  int others = 0;
  for (const auto& s : batch)
    for (int l : s.labels) others += l != 0;
  const auto g = rnn_gradient(model, batch);
  CHECK(g.loss.clamped == others);
  CHECK(g.loss.bits == doctest::Approx(others * -std::log2(kProbabilityFloor) / 20.0));
  for (double v : g.grad) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("adam first step moves each parameter by the learning rate") {
  Adam adam(3, 0.01);
  std::vector<double> p{1.0, 2.0, 3.0};
  const std::vector<double> g{0.5, -2.0, 0.0};
  adam.step(p, g);
  CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(2.01).epsilon(1e-6));
  CHECK(p[2] == 3.0);
  CHECK(adam.steps() == 1);
}

TEST_CASE("train_stage") {
  SUBCASE("zero iterations returns the initial model") {
    Fixture f;
    f.train.iterations = 0;
    const auto r = train_stage(f.chan, f.shape, f.train);
    CHECK(r.log.rows.empty());
    CHECK_FALSE(r.warm_started);
    const auto again = train_stage(f.chan, f.shape, f.train);
    CHECK(again.model == r.model);
  }
  SUBCASE("memoryless channel approaches the posterior entropy") {
    const DiscreteChannel chan(testing::memoryless(AlphabetKind::bipolar_ask, 2, 0.0));
    const RnnShape shape{{1, 4, 4}, 1, 0, 1, 1, 2, 1};
    TrainConfig cfg;
    cfg.batch = 16;
    cfg.t_rnn = 8;
    cfg.iterations = 600;
    cfg.learning_rate = 1e-2;
    const auto r = train_stage(chan, shape, cfg);
    REQUIRE(r.log.rows.size() == 600);
    double tail = 0.0;
    for (int i = 500; i < 600; ++i) tail += r.log.rows[static_cast<std::size_t>(i)].loss_bits;
    tail /= 100;
    const auto lv = chan.levels();
    const double h = 1.0 - testing::memoryless_mi({lv[0], lv[1]}, 1.0);
    CHECK(tail < r.log.rows.front().loss_bits);
    CHECK(tail == doctest::Approx(h).epsilon(0.08));
  }
  SUBCASE("warm starts") {
    Fixture f;
    f.train.iterations = 2;
    const auto cold = train_stage(f.chan, f.shape, f.train);
    const auto warm = train_stage(f.chan, f.shape, f.train, &cold.model);
    CHECK(warm.warm_started);
    f.train.warm_start = std::filesystem::temp_directory_path() / "sicnn_no_such_model";
    const auto missing = train_stage(f.chan, f.shape, f.train);
    CHECK_FALSE(missing.warm_started);
    CHECK(missing.warnings.size() == 1);
    auto other = f.shape;
    other.dims = {8, 4, 4};
    const RnnModel wrong(other, f.norm);
    f.train.warm_start.reset();
    CHECK_THROWS_AS(train_stage(f.chan, f.shape, f.train, &wrong), ConfigError);
  }
  SUBCASE("log is reproducible") {
    Fixture f;
    f.train.iterations = 3;
    const auto a = train_stage(f.chan, f.shape, f.train);
    const auto b = train_stage(f.chan, f.shape, f.train, nullptr, Exec::serial);
    CHECK(a.log.to_csv() == b.log.to_csv());
    CHECK(a.log.to_csv().rfind("iter,loss_bits,grad_norm,wall_ms\n1,", 0) == 0);
  }
}
