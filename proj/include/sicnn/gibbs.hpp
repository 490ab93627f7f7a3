#pragma once

// Bit-wise Gibbs sampling of symbol APPs under the auxiliary channel.

#include <cstdint>
#include <span>
#include <vector>

#include "sicnn/app_matrix.hpp"
#include "sicnn/common.hpp"
#include "sicnn/sic_plan.hpp"
#include "sicnn/trellis.hpp"

namespace sicnn {

struct GibbsConfig {
  int memory = 21;       // auxiliary memory
  int iterations = 125;  // sweeps per chain, burn-in included
  int chains = 64;
  int burn_in = 25;

  void validate() const;
  friend bool operator==(const GibbsConfig&, const GibbsConfig&) = default;
};

/// Binary-reflected Gray label of a symbol index and its inverse.
inline int gray_encode(int index) { return index ^ (index >> 1); }
int gray_decode(int label);

/// One Markov chain over the unknown symbols of a block. Pinned positions
/// are never resampled.
class GibbsChain {
 public:
  GibbsChain(const AuxChannel& aux, std::span<const double> y, std::span<const int> pins, std::uint64_t seed);

  /// One sweep: every unknown position in ascending order, every bit of its
  /// Gray label in turn, each drawn from its full conditional.
  void sweep();
  /// Resample the bits of one position (exposed for instrumentation).
  void update_position(int position);

  std::span<const int> state() const { return state_; }
  std::int64_t multiplications() const { return mults_; }

 private:
  double local_log_likelihood(int position);

  const AuxChannel* aux_;
  std::span<const double> y_;
  std::vector<int> pins_;
  std::vector<int> state_;
  std::vector<double> window_;
  std::vector<double> mean_;
  Rng rng_;
  std::int64_t mults_ = 0;
};

/// Post-burn-in symbol frequencies over all chains, add-one smoothed, for
/// the current stage's targets.
AppMatrix gibbs_app(const AuxChannel& aux, std::span<const double> y, const StageView& view, const GibbsConfig& cfg,
                    std::uint64_t seed, Exec exec = Exec::parallel);

/// Multiplications per APP estimate in steady state:
/// S * (instrumented cost of one interior symbol update) * iterations * chains.
std::int64_t count_gs_multiplications(const AuxChannel& aux, const GibbsConfig& cfg, int stages);

}  // namespace sicnn
