#include "sicnn/gibbs.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace sicnn {

void GibbsConfig::validate() const {
  if (chains < 1) throw ConfigError("detector.chains must be >= 1");
  if (burn_in < 0) throw ConfigError("detector.burn_in must be >= 0");
  if (iterations <= burn_in) throw ConfigError("detector.iterations must exceed detector.burn_in");
  if (memory < 0) throw ConfigError("detector.memory must be >= 0");
}

int gray_decode(int label) {
  int index = label;
  for (int shift = 1; (label >> shift) != 0; ++shift) index ^= label >> shift;
  return index;
}

GibbsChain::GibbsChain(const AuxChannel& aux, std::span<const double> y, std::span<const int> pins,
                       std::uint64_t seed)
    : aux_(&aux),
      y_(y),
      pins_(pins.begin(), pins.end()),
      state_(pins.size()),
      window_(static_cast<std::size_t>(aux.memory() + 1)),
      mean_(static_cast<std::size_t>(aux.obs_per_slot())),
      rng_(seed) {
  if (y.size() != pins.size() * static_cast<std::size_t>(aux.obs_per_slot()))
    throw ConfigError("gibbs: observation length mismatch");
  std::uniform_int_distribution<int> pick(0, aux.alphabet_size() - 1);
  for (std::size_t k = 0; k < state_.size(); ++k) state_[k] = pins_[k] >= 0 ? pins_[k] : pick(rng_);
}

// Log-likelihood of all slots whose window contains `position`.
double GibbsChain::local_log_likelihood(int position) {
  const int n = static_cast<int>(state_.size());
  const int past = aux_->past();
  const int future = aux_->future();
  const int dim = aux_->obs_per_slot();
  const double inv2var = 0.5 / aux_->component_variance();
  const auto levels = aux_->levels();
  double ll = 0.0;
  for (int slot = std::max(0, position - future); slot <= std::min(n - 1, position + past); ++slot) {
    for (int i = 0; i <= past + future; ++i) {
      const int p = slot - past + i;
      window_[static_cast<std::size_t>(i)] =
          (p < 0 || p >= n) ? 0.0 : levels[static_cast<std::size_t>(state_[static_cast<std::size_t>(p)])];
    }
    mults_ += aux_->slot_mean(window_, mean_);
    double q = 0.0;
    for (int r = 0; r < dim; ++r) {
      const double e = y_[static_cast<std::size_t>(slot * dim + r)] - mean_[static_cast<std::size_t>(r)];
      q += e * e;
    }
    mults_ += dim;
    ll -= q * inv2var;
    mults_ += 1;
  }
  return ll;
}

void GibbsChain::update_position(int position) {
  auto& sym = state_[static_cast<std::size_t>(position)];
  const int bits = std::countr_zero(static_cast<unsigned>(aux_->alphabet_size()));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int bit = 0; bit < bits; ++bit) {
    const int label = gray_encode(sym);
    const int cand0 = gray_decode(label & ~(1 << bit));
    const int cand1 = gray_decode(label | (1 << bit));
    sym = cand0;
    const double ll0 = local_log_likelihood(position);
    sym = cand1;
    const double ll1 = local_log_likelihood(position);
    const double p1 = 1.0 / (1.0 + std::exp(ll0 - ll1));
    sym = unif(rng_) < p1 ? cand1 : cand0;
  }
}

void GibbsChain::sweep() {
  for (int k = 0; k < static_cast<int>(state_.size()); ++k)
    if (pins_[static_cast<std::size_t>(k)] < 0) update_position(k);
}

AppMatrix gibbs_app(const AuxChannel& aux, std::span<const double> y, const StageView& view, const GibbsConfig& cfg,
                    std::uint64_t seed, Exec exec) {
  cfg.validate();
  const auto targets = view.targets();
  const int m = aux.alphabet_size();
  const auto rows = targets.size();
  std::vector<std::vector<std::int64_t>> per_chain(static_cast<std::size_t>(cfg.chains),
                                                   std::vector<std::int64_t>(rows * static_cast<std::size_t>(m), 0));
  auto run_chain = [&](int c) {
    GibbsChain chain(aux, y, view.pins(), derive_seed(seed, {static_cast<std::uint64_t>(c)}));
    auto& counts = per_chain[static_cast<std::size_t>(c)];
    for (int it = 0; it < cfg.iterations; ++it) {
      chain.sweep();
      if (it < cfg.burn_in) continue;
      for (std::size_t t = 0; t < rows; ++t)
        ++counts[t * static_cast<std::size_t>(m) +
                 static_cast<std::size_t>(chain.state()[static_cast<std::size_t>(targets[t] - 1)])];
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  } else {
    for (int c = 0; c < cfg.chains; ++c) run_chain(c);
  }
  // Ordered reduction over chains, then add-one smoothing.
  std::vector<double> logw(rows * static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < logw.size(); ++i) {
    std::int64_t total = 1;
    for (const auto& counts : per_chain) total += counts[i];
    logw[i] = std::log(static_cast<double>(total));
  }
  return AppMatrix::from_log_weights(static_cast<int>(rows), m, logw);
}

std::int64_t count_gs_multiplications(const AuxChannel& aux, const GibbsConfig& cfg, int stages) {
  cfg.validate();
  // Block long enough that the probed position sees full windows on both sides.
  const int reach = aux.past() + aux.future();
  const int n = 2 * reach + 1;
  std::vector<double> y(static_cast<std::size_t>(n * aux.obs_per_slot()), 0.0);
  std::vector<int> pins(static_cast<std::size_t>(n), -1);
  GibbsChain chain(aux, y, pins, 1);
  chain.update_position(reach);
  return static_cast<std::int64_t>(stages) * chain.multiplications() * cfg.iterations * cfg.chains;
}

}  // namespace sicnn
