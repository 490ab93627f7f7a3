#pragma once

// Cross-entropy training of one stage's RNN: exact backpropagation through
// both recurrent paths, ADAM updates over freshly simulated batches.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sicnn/common.hpp"
#include "sicnn/rnn.hpp"
#include "sicnn/signal_chain.hpp"

namespace sicnn {

struct TrainConfig {
  double learning_rate = 5e-4;
  int iterations = 20000;
  int batch = 128;
  /// Sequential RNN inputs per training sequence.
  int t_rnn = 64;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> warm_start;
  /// Abort when the loss exceeds 4 m bits for this many consecutive steps.
  int divergence_window = 100;
  /// Record per-step wall time in the log (off keeps logs reproducible).
  bool record_wall_time = false;

  /// Throws unless T_RNN is a multiple of the phase count.
  void validate(const RnnShape& shape) const;
  /// Targets per training sequence, T_RNN / P.
  int targets_per_sequence(const RnnShape& shape) const { return t_rnn / shape.phases(); }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LabeledSequence {
  InputTensor inputs;
  std::vector<int> labels;  // true symbol index per target
};

/// Probability floor of the cross-entropy.
inline constexpr double kProbabilityFloor = 1e-30;

struct LossResult {
  double bits = 0.0;  // mean -log2 Q(truth) per target
  std::int64_t clamped = 0;
  std::int64_t targets = 0;
};

LossResult rnn_loss(const RnnModel& model, std::span<const LabeledSequence> batch, Exec exec = Exec::parallel);

struct GradientResult {
  std::vector<double> grad;  // same layout as RnnModel::params()
  LossResult loss;
};

/// Gradient of the mean loss. Batch items are accumulated in fixed groups
/// and reduced in order, so both policies give identical bits.
GradientResult rnn_gradient(const RnnModel& model, std::span<const LabeledSequence> batch, Exec exec = Exec::parallel);

class Adam {
 public:
  Adam(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);
  int steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Observation statistics from a block drawn with `seed`; symbol encoding
/// is the alphabet scaled to unit RMS.
InputNormalization estimate_normalization(const DiscreteChannel& chan, std::uint64_t seed, int symbols = 8192,
                                          Exec exec = Exec::parallel);

/// One simulated block cut into `cfg.batch` consecutive sequences of
/// T_RNN / P targets each. Prior-stage symbols are the true ones.
std::vector<LabeledSequence> make_training_batch(const DiscreteChannel& chan, const RnnShape& shape,
                                                 const InputNormalization& norm, const TrainConfig& cfg,
                                                 std::uint64_t seed, Exec exec = Exec::parallel);

struct TrainLogRow {
  int iter = 0;
  double loss_bits = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  RnnModel model;
  TrainLog log;
  bool warm_started = false;
  std::vector<std::string> warnings;
  std::int64_t clamped = 0;
};

/// Train the stage-`shape.stage` network on `chan`. A warm-start model (or
/// cfg.warm_start file) provides the initial parameters when its shape matches.
TrainResult train_stage(const DiscreteChannel& chan, const RnnShape& shape, const TrainConfig& cfg,
                        const RnnModel* warm = nullptr, Exec exec = Exec::parallel);

}  // namespace sicnn
