#pragma once

// Experiment configuration and the simulate / train / evaluate / sweep /
// report commands behind the CLI.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sicnn/gibbs.hpp"
#include "sicnn/rnn.hpp"
#include "sicnn/signal_chain.hpp"
#include "sicnn/trainer.hpp"
#include "sicnn/trellis.hpp"

namespace sicnn {

enum class DetectorKind { fba, gibbs, rnn, uniform };

struct DetectorConfig {
  DetectorKind kind = DetectorKind::fba;
  /// fba / gibbs auxiliary memory.
  int memory = 9;
  std::size_t table_budget = kDefaultTableBudget;
  GibbsConfig gibbs;
  // rnn
  std::vector<int> dims;  // (l_1, ..., l_L)
  int l_y = 0;
  int l_ic = 0;
  TrainConfig train;
  bool warm_start = true;

  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

struct EvalConfig {
  int n_blk = 100;
  int n = 2400;
  bool upper_bound = false;
  /// Auxiliary memory of the upper bound (defaults to detector.memory).
  int ub_memory = -1;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct ExperimentConfig {
  ChannelConfig channel;
  int stages = 1;
  DetectorConfig detector;
  std::vector<double> sweep{0.0};
  EvalConfig eval;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";

  void validate() const;
  /// RNN shape of stage `stage`.
  RnnShape rnn_shape(int stage) const;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Strict parse: unknown keys and malformed values raise ConfigError naming
/// the offending key. channel.fiber.beta2 accepts a number in s^2/km or a
/// string "<value> <unit>" with unit s^2/km, ps^2/km or s^2/m.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Resolved configuration as JSON text (parse(emit(c)) == c).
std::string emit_experiment_config(const ExperimentConfig& cfg);
/// Digest of the resolved configuration without output_dir.
std::string config_hash(const ExperimentConfig& cfg);

/// out/<hash>
std::filesystem::path run_directory(const ExperimentConfig& cfg);
/// Channel at a given transmit power.
ChannelConfig channel_at(const ExperimentConfig& cfg, double ptx_db);
/// Checkpoint stem models/stage<s>_ptx<p>.
std::filesystem::path model_stem(const ExperimentConfig& cfg, int stage, double ptx_db);

struct CommandResult {
  std::vector<std::filesystem::path> artifacts;
  std::vector<std::string> log;
};

CommandResult cmd_simulate(const ExperimentConfig& cfg, Exec exec = Exec::parallel);
CommandResult cmd_train(const ExperimentConfig& cfg, Exec exec = Exec::parallel);
CommandResult cmd_evaluate(const ExperimentConfig& cfg, Exec exec = Exec::parallel);
CommandResult cmd_sweep(const ExperimentConfig& cfg, Exec exec = Exec::parallel);
/// Prints a per-SNR summary of rates.csv.
void cmd_report(const ExperimentConfig& cfg, std::ostream& os);

/// Writes manifest.json (hash, code version, seeds, wall clock, artifacts).
void write_manifest(const ExperimentConfig& cfg, const std::string& command, const CommandResult& result,
                    double wall_seconds);

inline constexpr const char* kCodeVersion = "sicnn 1.0.0";

}  // namespace sicnn
