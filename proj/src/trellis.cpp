#include "sicnn/trellis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>

namespace sicnn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int nonlinearity_multiplications(const Nonlinearity& nl) {
  switch (nl.kind) {
    case Nonlinearity::Kind::identity:
      return 0;
    case Nonlinearity::Kind::square_law:
      return 2;
    case Nonlinearity::Kind::rapp:
      return 6;  // |z|^2, two powers, rescale of re/im
  }
  return 0;
}

}  // namespace

AuxChannel::AuxChannel(const DiscreteChannel& chan, int memory, std::size_t table_budget, Exec exec,
                       bool with_tables) {
  if (memory < 0) throw ConfigError("detector.memory must be >= 0");
  if (!(chan.component_variance() > 0.0)) throw ConfigError("auxiliary channel needs a positive noise variance");
  m_ = chan.alphabet().size();
  const int full_past = chan.reach_past();
  const int full_future = chan.reach_future();
  if (memory >= full_past + full_future) {
    past_ = full_past;
    future_ = full_future;
    exact_ = true;
  } else {
    // Centred truncation, clipped to the channel's actual reach.
    future_ = std::min(full_future, (memory + 1) / 2);
    past_ = memory - future_;
    if (past_ > full_past) {
      past_ = full_past;
      future_ = memory - past_;
    }
  }
  const int w = this->memory() + 1;
  radix_.assign(static_cast<std::size_t>(w) + 1, 1);
  for (int i = 1; with_tables && i <= w; ++i) {
    if (radix_[static_cast<std::size_t>(i - 1)] > table_budget)
      throw ConfigError("detector.memory: trellis table exceeds the configured budget");
    radix_[static_cast<std::size_t>(i)] = radix_[static_cast<std::size_t>(i - 1)] * static_cast<std::size_t>(m_);
  }
  if (with_tables && radix_[static_cast<std::size_t>(w)] > table_budget)
    throw ConfigError("detector.memory: M^(memory+1) = " + std::to_string(radix_[static_cast<std::size_t>(w)]) +
                      " exceeds the table budget of " + std::to_string(table_budget));
  states_ = radix_[static_cast<std::size_t>(w - 1)];

  dim_ = chan.obs_per_symbol();
  n_os_ = chan.n_os();
  complex_obs_ = chan.obs_dim() == 2;
  variance_ = chan.component_variance();
  nl_ = chan.config().nonlinearity;
  levels_ = chan.levels();
  h_half_ = chan.receiver().length() / 2;
  h_.assign(chan.receiver().taps().begin(), chan.receiver().taps().end());
  const int d = chan.decimation();
  const int ns = chan.n_sim();
  kernel_.resize(static_cast<std::size_t>(n_os_ * (2 * h_half_ + 1) * w));
  std::size_t idx = 0;
  for (int r = 0; r < n_os_; ++r)
    for (int u = -h_half_; u <= h_half_; ++u)
      for (int i = 0; i < w; ++i) kernel_[idx++] = chan.pulse().at(d * r - u - ns * (i - past_));

  if (!with_tables) return;
  fill_table(steady_, 0, 0, exec);
  lead_.resize(static_cast<std::size_t>(this->memory()));
  for (int lead = 1; lead <= this->memory(); ++lead) fill_table(lead_[static_cast<std::size_t>(lead - 1)], lead, 0, exec);
  trail_.resize(static_cast<std::size_t>(future_));
  for (int trail = 1; trail <= future_; ++trail)
    fill_table(trail_[static_cast<std::size_t>(trail - 1)], 0, trail, exec);
}

std::int64_t AuxChannel::slot_mean(std::span<const double> window, std::span<double> out) const {
  const int w = memory() + 1;
  const int nl_mults = nonlinearity_multiplications(nl_);
  std::int64_t mults = 0;
  std::size_t idx = 0;
  for (int r = 0; r < n_os_; ++r) {
    Sample z{};
    for (int u = 0; u < 2 * h_half_ + 1; ++u) {
      Sample x{};
      for (int i = 0; i < w; ++i) x += kernel_[idx++] * window[static_cast<std::size_t>(i)];
      mults += 2 * w;
      z += h_[static_cast<std::size_t>(u)] * apply_nonlinearity(x, nl_);
      mults += nl_mults + 4;
    }
    if (complex_obs_) {
      out[static_cast<std::size_t>(2 * r)] = z.real();
      out[static_cast<std::size_t>(2 * r + 1)] = z.imag();
    } else {
      out[static_cast<std::size_t>(r)] = z.real();
    }
  }
  return mults;
}

void AuxChannel::fill_table(std::vector<double>& table, int lead, int trail, Exec exec) const {
  const int w = memory() + 1;
  const int free_digits = w - lead - trail;
  const std::size_t entries = radix_[static_cast<std::size_t>(free_digits)];
  table.assign(entries * static_cast<std::size_t>(dim_), 0.0);
  const auto count = static_cast<std::int64_t>(entries);
  auto body = [&](std::int64_t sub) {
    std::vector<double> window(static_cast<std::size_t>(w), 0.0);
    auto rest = static_cast<std::size_t>(sub);
    for (int i = lead; i < lead + free_digits; ++i) {
      window[static_cast<std::size_t>(i)] = levels_[rest % static_cast<std::size_t>(m_)];
      rest /= static_cast<std::size_t>(m_);
    }
    slot_mean(window, std::span<double>(table).subspan(static_cast<std::size_t>(sub) * static_cast<std::size_t>(dim_),
                                                       static_cast<std::size_t>(dim_)));
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t s = 0; s < count; ++s) body(s);
  } else {
    for (std::int64_t s = 0; s < count; ++s) body(s);
  }
}

std::span<const double> AuxChannel::means(std::size_t branch) const {
  return std::span<const double>(steady_).subspan(branch * static_cast<std::size_t>(dim_),
                                                  static_cast<std::size_t>(dim_));
}

std::span<const double> AuxChannel::means(std::size_t branch, int lead, int trail) const {
  const auto d = static_cast<std::size_t>(dim_);
  if (lead == 0 && trail == 0) return means(branch);
  if (trail == 0) {
    const auto sub = branch / radix_[static_cast<std::size_t>(lead)];
    return std::span<const double>(lead_[static_cast<std::size_t>(lead - 1)]).subspan(sub * d, d);
  }
  if (lead == 0) {
    const auto sub = branch % radix_[static_cast<std::size_t>(memory() + 1 - trail)];
    return std::span<const double>(trail_[static_cast<std::size_t>(trail - 1)]).subspan(sub * d, d);
  }
  throw ConfigError("AuxChannel::means: window clipped on both sides");
}

AuxChannel build_aux_channel(const DiscreteChannel& chan, int memory, std::size_t table_budget, Exec exec) {
  return AuxChannel(chan, memory, table_budget, exec);
}

// ---------------------------------------------------------------------------

FbaRun fba_run(const AuxChannel& aux, std::span<const double> y, std::span<const int> pins, bool want_app) {
  const int n = static_cast<int>(pins.size());
  const int dim = aux.obs_per_slot();
  if (!aux.has_tables()) throw ConfigError("fba: auxiliary channel was built without tables");
  if (n < 1) throw ConfigError("fba: empty block");
  if (static_cast<int>(y.size()) != n * dim) throw ConfigError("fba: observation length mismatch");
  const int m = aux.alphabet_size();
  const int mem = aux.memory();
  const int future = aux.future();
  const std::size_t ms = aux.states();
  const std::size_t mb = aux.branches();
  const int sections = n + future;
  const double inv2var = 0.5 / aux.component_variance();
  const auto um = static_cast<std::size_t>(m);

  FbaRun run;
  std::vector<std::int64_t> section_mults(static_cast<std::size_t>(sections), 0);

  // Windows clipped at both ends (only for very short blocks): direct means.
  std::map<std::pair<int, int>, std::vector<double>> clipped;
  auto clipped_means = [&](std::size_t b, int lead, int trail) -> std::span<const double> {
    auto& tab = clipped[{lead, trail}];
    if (tab.empty()) {
      const int free_digits = mem + 1 - lead - trail;
      std::size_t entries = 1;
      for (int i = 0; i < free_digits; ++i) entries *= um;
      tab.resize(entries * static_cast<std::size_t>(dim));
      std::vector<double> window(static_cast<std::size_t>(mem + 1));
      for (std::size_t sub = 0; sub < entries; ++sub) {
        std::fill(window.begin(), window.end(), 0.0);
        auto rest = sub;
        for (int i = lead; i < lead + free_digits; ++i) {
          window[static_cast<std::size_t>(i)] = aux.levels()[rest % um];
          rest /= um;
        }
        aux.slot_mean(window, std::span<double>(tab).subspan(sub * static_cast<std::size_t>(dim),
                                                             static_cast<std::size_t>(dim)));
      }
    }
    std::size_t lead_radix = 1;
    for (int i = 0; i < lead; ++i) lead_radix *= um;
    std::size_t keep_radix = 1;
    for (int i = 0; i < mem + 1 - trail; ++i) keep_radix *= um;
    const auto sub = (b % keep_radix) / lead_radix;
    return std::span<const double>(tab).subspan(sub * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
  };

  // Branch metrics, stored per section.
  std::vector<double> gamma(static_cast<std::size_t>(sections) * mb);
  for (int k = 0; k < sections; ++k) {
    const int slot = k - future;
    const int lead = std::max(0, mem - k);
    const int trail = std::max(0, k - (n - 1));
    const int pinned = k < n ? pins[static_cast<std::size_t>(k)] : 0;
    double* g = gamma.data() + static_cast<std::size_t>(k) * mb;
    auto yk = slot >= 0 ? y.subspan(static_cast<std::size_t>(slot * dim), static_cast<std::size_t>(dim))
                        : std::span<const double>{};
    std::int64_t mults = 0;
    for (std::size_t b = 0; b < mb; ++b) {
      double metric = 0.0;
      if (slot >= 0) {
        auto mu = (lead > 0 && trail > 0) ? clipped_means(b, lead, trail) : aux.means(b, lead, trail);
        double q = 0.0;
        for (int r = 0; r < dim; ++r) {
          const double e = yk[static_cast<std::size_t>(r)] - mu[static_cast<std::size_t>(r)];
          q += e * e;
        }
        metric = -q * inv2var;
        mults += dim + 1;
      }
      const int newest = static_cast<int>(b / ms);
      if (pinned >= 0 && newest != pinned) metric = kNegInf;
      g[b] = metric;
    }
    section_mults[static_cast<std::size_t>(k)] += mults;
  }

  // Forward recursion.
  std::vector<double> alpha(static_cast<std::size_t>(sections + 1) * ms, kNegInf);
  alpha[0] = 0.0;
  std::vector<double> buf(um);
  for (int k = 0; k < sections; ++k) {
    const double* a_prev = alpha.data() + static_cast<std::size_t>(k) * ms;
    double* a_next = alpha.data() + static_cast<std::size_t>(k + 1) * ms;
    const double* g = gamma.data() + static_cast<std::size_t>(k) * mb;
    for (std::size_t ns = 0; ns < ms; ++ns) {
      for (std::size_t d0 = 0; d0 < um; ++d0) {
        const std::size_t b = ns * um + d0;
        buf[d0] = a_prev[b % ms] + g[b];
      }
      a_next[ns] = log_sum_exp(buf);
    }
    section_mults[static_cast<std::size_t>(k)] += static_cast<std::int64_t>(mb);
  }
  run.log_metric_sum = log_sum_exp(std::span<const double>(alpha).subspan(static_cast<std::size_t>(sections) * ms, ms));
  if (!std::isfinite(run.log_metric_sum)) throw NumericError("fba: no admissible sequence (inconsistent pinning)");

  if (want_app) {
    std::vector<double> beta(static_cast<std::size_t>(sections + 1) * ms, kNegInf);
    std::fill(beta.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(sections) * ms), beta.end(), 0.0);
    run.log_app.assign(static_cast<std::size_t>(n) * um, kNegInf);
    std::vector<double> terms(ms);
    for (int k = sections - 1; k >= 0; --k) {
      const double* b_next = beta.data() + static_cast<std::size_t>(k + 1) * ms;
      double* b_prev = beta.data() + static_cast<std::size_t>(k) * ms;
      const double* a_prev = alpha.data() + static_cast<std::size_t>(k) * ms;
      const double* g = gamma.data() + static_cast<std::size_t>(k) * mb;
      for (std::size_t ps = 0; ps < ms; ++ps) {
        for (std::size_t x = 0; x < um; ++x) {
          const std::size_t b = ps + x * ms;
          buf[x] = g[b] + b_next[b / um];
        }
        b_prev[ps] = log_sum_exp(buf);
      }
      section_mults[static_cast<std::size_t>(k)] += static_cast<std::int64_t>(mb);
      if (k < n) {
        for (std::size_t x = 0; x < um; ++x) {
          for (std::size_t ps = 0; ps < ms; ++ps) {
            const std::size_t b = ps + x * ms;
            terms[ps] = a_prev[ps] + g[b] + b_next[b / um];
          }
          run.log_app[static_cast<std::size_t>(k) * um + x] = log_sum_exp(terms);
        }
        section_mults[static_cast<std::size_t>(k)] += 2 * static_cast<std::int64_t>(mb);
        auto row = std::span<double>(run.log_app).subspan(static_cast<std::size_t>(k) * um, um);
        const double z = log_sum_exp(row);
        if (!std::isfinite(z)) throw NumericError("fba: all-zero APP column at position " + std::to_string(k));
        for (auto& v : row) v -= z;
      }
    }
  }

  for (auto c : section_mults) run.multiplications += c;
  const int interior = std::max(mem, future);
  if (interior < n) run.interior_section_multiplications = section_mults[static_cast<std::size_t>(interior)];
  return run;
}

AppMatrix fba_app(const AuxChannel& aux, std::span<const double> y, const StageView& view) {
  auto run = fba_run(aux, y, view.pins());
  const auto targets = view.targets();
  const int m = aux.alphabet_size();
  std::vector<double> w(targets.size() * static_cast<std::size_t>(m));
  for (std::size_t t = 0; t < targets.size(); ++t)
    for (int a = 0; a < m; ++a)
      w[t * static_cast<std::size_t>(m) + static_cast<std::size_t>(a)] =
          run.log_app[static_cast<std::size_t>(targets[t] - 1) * static_cast<std::size_t>(m) + static_cast<std::size_t>(a)];
  return AppMatrix::from_log_weights(static_cast<int>(targets.size()), m, w);
}

JddBounds fba_ub(const AuxChannel& aux, std::span<const Block> blocks, Exec exec) {
  if (blocks.empty()) throw ConfigError("fba_ub: no blocks");
  const auto count = static_cast<int>(blocks.size());
  std::vector<double> upper(blocks.size()), pinned(blocks.size());
  const double inv2var = 0.5 / aux.component_variance();
  const double log_m = std::log(static_cast<double>(aux.alphabet_size()));
  auto body = [&](int i) {
    const auto& blk = blocks[static_cast<std::size_t>(i)];
    const int n = blk.size();
    std::vector<int> free(static_cast<std::size_t>(n), -1);
    const double lq_y = fba_run(aux, blk.y, free, false).log_metric_sum;
    const double lq_yx = fba_run(aux, blk.y, blk.x, false).log_metric_sum;
    double noise = 0.0;
    for (std::size_t j = 0; j < blk.y.size(); ++j) noise += (blk.y[j] - blk.z[j]) * (blk.y[j] - blk.z[j]);
    const double lp_yx = -noise * inv2var;
    const double scale = std::numbers::log2e / n;
    upper[static_cast<std::size_t>(i)] = scale * (lp_yx - lq_y + n * log_m);
    pinned[static_cast<std::size_t>(i)] = scale * (lq_yx - lq_y + n * log_m);
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) body(i);
  } else {
    for (int i = 0; i < count; ++i) body(i);
  }
  return {jackknife_mean(upper), jackknife_mean(pinned), std::move(upper), std::move(pinned)};
}

std::int64_t count_fba_multiplications(const AuxChannel& aux, int n, int stages) {
  if (n <= std::max(aux.memory(), aux.future()))
    throw ConfigError("count_fba_multiplications: block too short for an interior section");
  std::vector<double> y(static_cast<std::size_t>(n * aux.obs_per_slot()), 0.0);
  std::vector<int> pins(static_cast<std::size_t>(n), -1);
  auto run = fba_run(aux, y, pins);
  return static_cast<std::int64_t>(stages) * run.interior_section_multiplications;
}

}  // namespace sicnn
