#pragma once

// Monte-Carlo estimates of mismatched SDD / SIC rates and report assembly.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sicnn/app_matrix.hpp"
#include "sicnn/common.hpp"
#include "sicnn/gibbs.hpp"
#include "sicnn/rnn.hpp"
#include "sicnn/sic_plan.hpp"
#include "sicnn/signal_chain.hpp"
#include "sicnn/trellis.hpp"

namespace sicnn {

/// Produces APPs Q(v_{s,t} | y, v^{s-1}) for the targets of a stage view.
class AppDetector {
 public:
  virtual ~AppDetector() = default;
  virtual std::string id() const = 0;
  /// Rows ordered by t. `seed` feeds randomized detectors.
  virtual AppMatrix app(const Block& block, const StageView& view, std::uint64_t seed) const = 0;
  /// Multiplications per APP estimate of stage `stage` (0 when not counted).
  virtual std::int64_t multiplications_per_app(int /*stage*/) const { return 0; }
};

class UniformDetector : public AppDetector {
 public:
  explicit UniformDetector(int alphabet_size) : m_(alphabet_size) {}
  std::string id() const override { return "uniform"; }
  AppMatrix app(const Block& block, const StageView& view, std::uint64_t seed) const override;

 private:
  int m_;
};

/// Point mass on the transmitted symbol.
class OracleDetector : public AppDetector {
 public:
  explicit OracleDetector(int alphabet_size) : m_(alphabet_size) {}
  std::string id() const override { return "oracle"; }
  AppMatrix app(const Block& block, const StageView& view, std::uint64_t seed) const override;

 private:
  int m_;
};

class FbaDetector : public AppDetector {
 public:
  explicit FbaDetector(std::shared_ptr<const AuxChannel> aux) : aux_(std::move(aux)) {}
  std::string id() const override { return "fba"; }
  AppMatrix app(const Block& block, const StageView& view, std::uint64_t seed) const override;
  std::int64_t multiplications_per_app(int stage) const override;
  const AuxChannel& aux() const { return *aux_; }

 private:
  std::shared_ptr<const AuxChannel> aux_;
};

class GibbsDetector : public AppDetector {
 public:
  GibbsDetector(std::shared_ptr<const AuxChannel> aux, GibbsConfig cfg, Exec exec = Exec::parallel)
      : aux_(std::move(aux)), cfg_(cfg), exec_(exec) {}
  std::string id() const override { return "gibbs"; }
  AppMatrix app(const Block& block, const StageView& view, std::uint64_t seed) const override;
  std::int64_t multiplications_per_app(int stage) const override;

 private:
  std::shared_ptr<const AuxChannel> aux_;
  GibbsConfig cfg_;
  Exec exec_;
};

/// One model per stage; blocks are processed in segments of T_RNN inputs.
class RnnDetector : public AppDetector {
 public:
  RnnDetector(std::vector<RnnModel> models, int t_rnn);
  std::string id() const override { return "rnn"; }
  AppMatrix app(const Block& block, const StageView& view, std::uint64_t seed) const override;
  std::int64_t multiplications_per_app(int stage) const override;

 private:
  std::vector<RnnModel> models_;
  int t_rnn_;
};

struct StageRate {
  Estimate rate;
  std::vector<double> blocks;  // per-block rates
  std::int64_t clamped = 0;
  std::int64_t targets = 0;
};

/// rate = m + mean log2 Q(truth) over `n_blk` blocks of `n` symbols. Block b
/// uses derive_seed(seed, {b}) for every stage.
StageRate estimate_stage_rate(const AppDetector& det, const DiscreteChannel& chan, int stages, int stage, int n_blk,
                              int n, std::uint64_t seed, Exec exec = Exec::parallel);

struct RateReport {
  double ptx_db = 0.0;
  int stages = 1;
  std::string detector;
  std::string config_hash;
  int n_blk = 0;
  int n = 0;
  std::vector<Estimate> stage_rates;
  std::vector<std::vector<double>> stage_blocks;
  std::vector<std::int64_t> stage_multiplications;
  /// (1/S) sum of stage rates; stderr from per-block stage averages.
  Estimate sic;
  std::vector<double> sic_blocks;
  std::optional<Estimate> upper_bound;
  std::vector<double> upper_blocks;
  std::int64_t clamped = 0;
  /// More than 1% of targets hit the probability floor.
  bool flagged = false;

  static std::string csv_header();
  std::string csv_rows() const;
  std::string summary_json() const;
};

RateReport estimate_sic(const AppDetector& det, const DiscreteChannel& chan, int stages, int n_blk, int n,
                        std::uint64_t seed, Exec exec = Exec::parallel, const AuxChannel* ub_aux = nullptr);

/// Mean and stderr of a_i - b_i over paired blocks.
Estimate paired_difference(std::span<const double> a, std::span<const double> b);

}  // namespace sicnn
