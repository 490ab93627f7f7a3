#pragma once

// Forward-backward APP detection over a truncated-memory auxiliary channel.
//
// The auxiliary channel models the observations of slot k as depending on
// the symbol window [k - past, k + future] (past + future = memory), with
// zeros outside the window and outside the block, plus white Gaussian noise.
// Trellis section k appends symbol k; its branch index encodes the window
// positions k - memory .. k as base-M digits, oldest position least
// significant. Section k observes slot k - future.

#include <cstdint>
#include <span>
#include <vector>

#include "sicnn/app_matrix.hpp"
#include "sicnn/common.hpp"
#include "sicnn/sic_plan.hpp"
#include "sicnn/signal_chain.hpp"

namespace sicnn {

class AuxChannel {
 public:
  /// `with_tables = false` skips the branch-mean tables (direct slot_mean
  /// evaluation only, as used by the Gibbs sampler).
  AuxChannel(const DiscreteChannel& chan, int memory, std::size_t table_budget, Exec exec, bool with_tables = true);

  int memory() const { return past_ + future_; }
  int past() const { return past_; }
  int future() const { return future_; }
  /// True when the window covers the full channel memory.
  bool exact() const { return exact_; }
  bool has_tables() const { return !steady_.empty(); }
  int alphabet_size() const { return m_; }
  int obs_per_slot() const { return dim_; }
  double component_variance() const { return variance_; }
  std::span<const double> levels() const { return levels_; }
  std::size_t states() const { return states_; }
  std::size_t branches() const { return states_ * static_cast<std::size_t>(m_); }

  /// Noiseless slot observations for a window of memory()+1 symbol
  /// amplitudes. Returns the number of real multiplications performed.
  std::int64_t slot_mean(std::span<const double> window, std::span<double> out) const;

  /// Table lookups. `lead`/`trail` count leading/trailing window positions
  /// that fall outside the block (zero amplitude).
  std::span<const double> means(std::size_t branch) const;
  std::span<const double> means(std::size_t branch, int lead, int trail) const;

 private:
  void fill_table(std::vector<double>& table, int lead, int trail, Exec exec) const;

  int m_ = 0;
  int past_ = 0;
  int future_ = 0;
  bool exact_ = false;
  int dim_ = 0;
  int n_os_ = 0;
  int h_half_ = 0;
  bool complex_obs_ = false;
  double variance_ = 1.0;
  Nonlinearity nl_;
  std::vector<double> levels_;
  std::size_t states_ = 1;
  std::vector<std::size_t> radix_;  // M^i
  // kernel_[((r * (2 h_half + 1)) + (w + h_half)) * (memory+1) + i]
  std::vector<Sample> kernel_;
  std::vector<Sample> h_;
  std::vector<double> steady_;
  std::vector<std::vector<double>> lead_;   // lead_[L-1], L = 1..memory
  std::vector<std::vector<double>> trail_;  // trail_[T-1], T = 1..future
};

inline constexpr std::size_t kDefaultTableBudget = std::size_t{1} << 22;

/// Throws ConfigError when M^(memory+1) exceeds `table_budget`. A memory
/// larger than the channel's is clamped to it. Requires positive noise variance.
AuxChannel build_aux_channel(const DiscreteChannel& chan, int memory,
                             std::size_t table_budget = kDefaultTableBudget, Exec exec = Exec::parallel);

struct FbaRun {
  /// Normalized log-APPs for every block position (n x M).
  std::vector<double> log_app;
  /// log of sum over admissible sequences of exp(sum of branch metrics).
  double log_metric_sum = 0.0;
  std::int64_t multiplications = 0;
  /// Multiplications of one interior trellis section (0 if none exists).
  std::int64_t interior_section_multiplications = 0;
};

/// Forward-backward over the whole block. `pins[k] >= 0` fixes position k.
FbaRun fba_run(const AuxChannel& aux, std::span<const double> y, std::span<const int> pins, bool want_app = true);

/// APPs for the current stage's targets, rows ordered by t.
AppMatrix fba_app(const AuxChannel& aux, std::span<const double> y, const StageView& view);

struct JddBounds {
  /// (1/n) E[log2 p(y|x) - log2 q(y)], p the true channel law.
  Estimate upper;
  /// (1/n) E[log2 q(y|x) - log2 q(y)] with q(y|x) from the pinned recursion.
  Estimate pinned;
  /// Per-block values behind the two estimates.
  std::vector<double> upper_blocks;
  std::vector<double> pinned_blocks;
};

/// Monte-Carlo JDD bounds over independent blocks (bpcu).
JddBounds fba_ub(const AuxChannel& aux, std::span<const Block> blocks, Exec exec = Exec::parallel);

/// Multiplications per APP estimate in steady state: S times the
/// instrumented count of one interior trellis section.
std::int64_t count_fba_multiplications(const AuxChannel& aux, int n, int stages);

}  // namespace sicnn
