#include "sicnn/signal_chain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fftw3.h>
#include "json.hpp"

namespace sicnn {

namespace {

double sinc(double t) {
  if (t == 0.0) return 1.0;
  const double x = std::numbers::pi * t;
  return std::sin(x) / x;
}

int floor_div(int a, int b) {
  int q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int ceil_div(int a, int b) { return -floor_div(-a, b); }

// In-place complex DFT through FFTW; `sign` is FFTW_FORWARD or FFTW_BACKWARD.
// Unnormalized in both directions.
void dft_inplace(std::vector<Sample>& data, int sign) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(data.size()), buf, buf, sign, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
}

// Centered integer frequency index for DFT bin k of an n-point grid.
int centered_bin(int k, int n) { return k <= (n - 1) / 2 ? k : k - n; }

// exp(j beta2/2 w^2 L) at DFT bin k of an n-point grid spanning fs Hz.
Sample dispersion_response(const FiberConfig& fiber, double fs, int k, int n) {
  const double f = static_cast<double>(centered_bin(k, n)) * fs / static_cast<double>(n);
  const double w = 2.0 * std::numbers::pi * f;
  const double phase = 0.5 * fiber.beta2_s2_per_km * fiber.length_km * w * w;
  return std::polar(1.0, phase);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

Alphabet::Alphabet(AlphabetKind kind, int size) : kind_(kind) {
  if (size < 2 || !std::has_single_bit(static_cast<unsigned>(size)))
    throw ConfigError("alphabet size must be a power of two >= 2, got " + std::to_string(size));
  bits_ = std::countr_zero(static_cast<unsigned>(size));
  points_.resize(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    points_[static_cast<std::size_t>(i)] =
        kind == AlphabetKind::unipolar_pam ? static_cast<double>(i) : static_cast<double>(2 * i - (size - 1));
  }
}

double Alphabet::mean_energy() const {
  double e = 0.0;
  for (double p : points_) e += p * p;
  return e / static_cast<double>(points_.size());
}

FirFilter::FirFilter(std::vector<Sample> taps, int rate) : taps_(std::move(taps)), rate_(rate) {
  if (taps_.empty() || taps_.size() % 2 == 0)
    throw ConfigError("FIR filter length must be odd, got " + std::to_string(taps_.size()));
  if (rate_ < 1) throw ConfigError("FIR filter rate must be >= 1");
}

double FirFilter::energy() const {
  double e = 0.0;
  for (auto t : taps_) e += std::norm(t);
  return e;
}

bool FirFilter::is_real() const {
  return std::all_of(taps_.begin(), taps_.end(), [](Sample t) { return t.imag() == 0.0; });
}

Sample apply_nonlinearity(Sample z, const Nonlinearity& nl) {
  switch (nl.kind) {
    case Nonlinearity::Kind::identity:
      return z;
    case Nonlinearity::Kind::square_law:
      return {std::norm(z), 0.0};
    case Nonlinearity::Kind::rapp: {
      const double mag = std::abs(z);
      if (mag == 0.0) return {};
      const double p2 = 2.0 * nl.rapp_smoothness;
      const double ratio = mag / nl.rapp_saturation;
      // Hard limiter as p grows; pow overflows to inf there, which is the limit.
      const double denom = std::isinf(std::pow(ratio, p2)) ? ratio : std::pow(1.0 + std::pow(ratio, p2), 1.0 / p2);
      return z * ((mag / denom) / mag);
    }
  }
  return z;
}

void ChannelConfig::validate() const {
  if (n_os < 1 || n_sim < 1) throw ConfigError("channel.n_os and channel.n_sim must be >= 1");
  if (n_sim % n_os != 0) throw ConfigError("channel: N_sim/N_os must be a positive integer");
  if (nonlinearity.kind == Nonlinearity::Kind::square_law && n_sim < 2)
    throw ConfigError("channel.n_sim: square-law detection needs N_sim >= 2 for sufficient statistics");
  if (symbol_rate <= 0.0) throw ConfigError("channel.symbol_rate must be positive");
  if (noise_variance < 0.0) throw ConfigError("channel.noise.variance must be >= 0");
  if (custom_pulse.empty() && resolved_pulse_taps() % 2 == 0) throw ConfigError("channel.pulse_taps must be odd");
  if (!custom_pulse.empty() && custom_pulse.size() % 2 == 0) throw ConfigError("channel.pulse.taps must have odd length");
  if (receiver_taps < 1 || receiver_taps % 2 == 0) throw ConfigError("channel.receiver.taps must be odd");
  if (nonlinearity.kind == Nonlinearity::Kind::rapp &&
      (nonlinearity.rapp_smoothness <= 0.0 || nonlinearity.rapp_saturation <= 0.0))
    throw ConfigError("channel.nonlinearity: Rapp parameters must be positive");
}

FirFilter build_dispersion(const ChannelConfig& cfg, int taps) {
  if (taps < 1 || taps % 2 == 0) throw ConfigError("dispersion filter length must be odd");
  if (!cfg.fiber) throw ConfigError("channel.fiber is required for dispersion");
  const double fs = cfg.symbol_rate * cfg.n_sim;
  std::vector<Sample> spec(static_cast<std::size_t>(taps));
  for (int k = 0; k < taps; ++k) spec[static_cast<std::size_t>(k)] = dispersion_response(*cfg.fiber, fs, k, taps);
  dft_inplace(spec, FFTW_BACKWARD);
  // Recentre: circular index u -> u + taps/2.
  std::vector<Sample> out(static_cast<std::size_t>(taps));
  const int half = taps / 2;
  for (int u = -half; u <= half; ++u) {
    const int src = (u + taps) % taps;
    out[static_cast<std::size_t>(u + half)] = spec[static_cast<std::size_t>(src)] / static_cast<double>(taps);
  }
  return FirFilter(std::move(out), cfg.n_sim);
}

std::vector<Sample> apply_dispersion(const ChannelConfig& cfg, std::span<const Sample> signal) {
  if (!cfg.fiber) throw ConfigError("channel.fiber is required for dispersion");
  const auto n = next_pow2(2 * signal.size());
  std::vector<Sample> buf(n);
  std::copy(signal.begin(), signal.end(), buf.begin());
  dft_inplace(buf, FFTW_FORWARD);
  const double fs = cfg.symbol_rate * cfg.n_sim;
  for (std::size_t k = 0; k < n; ++k)
    buf[k] *= dispersion_response(*cfg.fiber, fs, static_cast<int>(k), static_cast<int>(n));
  dft_inplace(buf, FFTW_BACKWARD);
  for (auto& v : buf) v /= static_cast<double>(n);
  return buf;
}

FirFilter build_pulse(const ChannelConfig& cfg, PulseOptions opts) {
  cfg.validate();
  const int taps = cfg.resolved_pulse_taps();
  const int half = taps / 2;
  std::vector<Sample> g(static_cast<std::size_t>(taps));
  if (!cfg.fiber) {
    for (int u = -half; u <= half; ++u)
      g[static_cast<std::size_t>(u + half)] = sinc(static_cast<double>(u) / cfg.n_sim);
  } else {
    // Truncated sinc on a zero-padded circular grid, dispersion applied per
    // bin, then the central K_g taps are kept.
    const auto n = next_pow2(4 * static_cast<std::size_t>(taps));
    std::vector<Sample> buf(n);
    for (int u = -half; u <= half; ++u) {
      const auto idx = static_cast<std::size_t>((u + static_cast<int>(n)) % static_cast<int>(n));
      buf[idx] = sinc(static_cast<double>(u) / cfg.n_sim);
    }
    dft_inplace(buf, FFTW_FORWARD);
    const double fs = cfg.symbol_rate * cfg.n_sim;
    for (std::size_t k = 0; k < n; ++k)
      buf[k] *= dispersion_response(*cfg.fiber, fs, static_cast<int>(k), static_cast<int>(n));
    dft_inplace(buf, FFTW_BACKWARD);
    for (int u = -half; u <= half; ++u) {
      const auto idx = static_cast<std::size_t>((u + static_cast<int>(n)) % static_cast<int>(n));
      g[static_cast<std::size_t>(u + half)] = buf[idx] / static_cast<double>(n);
    }
  }
  FirFilter out(std::move(g), cfg.n_sim);
  if (opts.normalize) {
    const double scale = std::sqrt(static_cast<double>(cfg.n_sim) / out.energy());
    std::vector<Sample> t(out.taps().begin(), out.taps().end());
    for (auto& v : t) v *= scale;
    out = FirFilter(std::move(t), cfg.n_sim);
  }
  return out;
}

FirFilter build_receiver(const ChannelConfig& cfg) {
  if (cfg.receiver == ReceiverKind::identity) return FirFilter::impulse(cfg.n_sim);
  const int half = cfg.receiver_taps / 2;
  std::vector<Sample> h(static_cast<std::size_t>(cfg.receiver_taps));
  const double scale = 2.0 / cfg.n_sim;
  for (int u = -half; u <= half; ++u)
    h[static_cast<std::size_t>(u + half)] = scale * sinc(2.0 * u / cfg.n_sim);
  return FirFilter(std::move(h), cfg.n_sim);
}

// ---------------------------------------------------------------------------

namespace {

double amplitude_for(const ChannelConfig& cfg, const FirFilter& g) {
  const double ptx = std::pow(10.0, cfg.ptx_db / 10.0);
  const double pulse_power = g.energy() / cfg.n_sim;
  return std::sqrt(ptx / (cfg.alphabet.mean_energy() * pulse_power));
}

FirFilter pulse_from(const ChannelConfig& cfg) {
  if (!cfg.custom_pulse.empty()) return FirFilter(cfg.custom_pulse, cfg.n_sim);
  return build_pulse(cfg);
}

}  // namespace

DiscreteChannel::DiscreteChannel(const ChannelConfig& cfg)
    : DiscreteChannel(cfg, pulse_from(cfg), build_receiver(cfg), 1.0) {
  amplitude_ = amplitude_for(cfg_, g_);
}

DiscreteChannel::DiscreteChannel(const ChannelConfig& cfg, FirFilter g, FirFilter h, double amplitude)
    : cfg_(cfg), g_(std::move(g)), h_(std::move(h)), amplitude_(amplitude) {
  cfg_.validate();
  if (g_.rate() != cfg_.n_sim || h_.rate() != cfg_.n_sim)
    throw ConfigError("channel filters must run at N_sim samples per symbol");
  if (cfg_.noise == NoiseKind::real) {
    const bool real_out = h_.is_real() && (cfg_.nonlinearity.kind == Nonlinearity::Kind::square_law || g_.is_real());
    if (!real_out) throw ConfigError("channel.noise: real noise requires real-valued observations");
  }
}

double DiscreteChannel::component_variance() const {
  return cfg_.noise == NoiseKind::real ? cfg_.noise_variance : 0.5 * cfg_.noise_variance;
}

int DiscreteChannel::reach_past() const {
  const int r = g_.length() / 2 + h_.length() / 2;
  return r / cfg_.n_sim;
}

int DiscreteChannel::reach_future() const {
  const int r = g_.length() / 2 + h_.length() / 2;
  return (cfg_.n_sim - decimation() + r) / cfg_.n_sim;
}

bool DiscreteChannel::direct_noise() const {
  if (h_.length() == 1) return true;
  return cfg_.receiver == ReceiverKind::brickwall && cfg_.n_os == 2;
}

std::vector<double> DiscreteChannel::levels() const {
  std::vector<double> out(static_cast<std::size_t>(alphabet().size()));
  for (int i = 0; i < alphabet().size(); ++i) out[static_cast<std::size_t>(i)] = amplitude_ * alphabet().point(i);
  return out;
}

std::vector<Sample> DiscreteChannel::shaped(std::span<const int> symbols, Exec exec) const {
  const int n = static_cast<int>(symbols.size());
  const int hh = h_.length() / 2;
  const int gh = g_.length() / 2;
  const int ns = cfg_.n_sim;
  const int d = decimation();
  const int w_lo = -hh;
  const int w_hi = d * (cfg_.n_os * n - 1) + hh;
  const auto lv = levels();
  std::vector<double> a(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const int s = symbols[k];
    if (s < 0 || s >= alphabet().size()) throw ConfigError("symbol index out of range");
    a[k] = lv[static_cast<std::size_t>(s)];
  }
  std::vector<Sample> x(static_cast<std::size_t>(std::max(0, w_hi - w_lo + 1)));
  const int count = static_cast<int>(x.size());
  auto body = [&](int i) {
    const int w = w_lo + i;
    const int k_lo = std::max(0, ceil_div(w - gh, ns));
    const int k_hi = std::min(n - 1, floor_div(w + gh, ns));
    Sample acc{};
    for (int k = k_lo; k <= k_hi; ++k) acc += g_.at(w - ns * k) * a[static_cast<std::size_t>(k)];
    x[static_cast<std::size_t>(i)] = acc;
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < count; ++i) body(i);
  } else {
    for (int i = 0; i < count; ++i) body(i);
  }
  return x;
}

std::vector<double> DiscreteChannel::noiseless(std::span<const int> symbols, Exec exec) const {
  const int n = static_cast<int>(symbols.size());
  const int hh = h_.length() / 2;
  const int d = decimation();
  auto x = shaped(symbols, exec);
  for (auto& v : x) v = apply_nonlinearity(v, cfg_.nonlinearity);
  const int outputs = cfg_.n_os * n;
  const int dim = obs_dim();
  std::vector<double> z(static_cast<std::size_t>(outputs * dim));
  auto body = [&](int j) {
    // x index of sim time w is w + hh.
    Sample acc{};
    for (int u = -hh; u <= hh; ++u) acc += h_.at(u) * x[static_cast<std::size_t>(d * j - u + hh)];
    require_finite(acc.real(), "noiseless observation");
    require_finite(acc.imag(), "noiseless observation");
    if (dim == 1) {
      z[static_cast<std::size_t>(j)] = acc.real();
    } else {
      z[static_cast<std::size_t>(2 * j)] = acc.real();
      z[static_cast<std::size_t>(2 * j + 1)] = acc.imag();
    }
  };
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < outputs; ++j) body(j);
  } else {
    for (int j = 0; j < outputs; ++j) body(j);
  }
  return z;
}

Block simulate_block(const DiscreteChannel& chan, std::span<const int> symbols, std::uint64_t seed, Exec exec) {
  if (symbols.empty()) throw ConfigError("simulate_block: block must hold at least one symbol");
  Block b;
  b.x.assign(symbols.begin(), symbols.end());
  b.seed = seed;
  b.z = chan.noiseless(symbols, exec);
  b.y = b.z;
  const double var = chan.component_variance();
  if (var == 0.0) return b;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int dim = chan.obs_dim();
  const int outputs = chan.n_os() * b.size();
  if (chan.direct_noise()) {
    const double sd = std::sqrt(var);
    for (auto& v : b.y) v += sd * normal(rng);
    return b;
  }
  // White noise at N_sim rate, filtered by h and decimated. The per-sample
  // variance is chosen so each output component has variance `var`.
  const auto& h = chan.receiver();
  const int hh = h.length() / 2;
  const int d = chan.decimation();
  const int span = d * (outputs - 1) + 2 * hh + 1;
  const double sd = std::sqrt(var / h.energy());
  std::vector<Sample> w(static_cast<std::size_t>(span));
  for (auto& v : w) {
    const double re = normal(rng);
    const double im = dim == 2 ? normal(rng) : 0.0;
    v = sd * Sample{re, im};
  }
  for (int j = 0; j < outputs; ++j) {
    Sample acc{};
    for (int u = -hh; u <= hh; ++u) acc += h.at(u) * w[static_cast<std::size_t>(d * j - u + hh)];
    if (dim == 1) {
      b.y[static_cast<std::size_t>(j)] += acc.real();
    } else {
      b.y[static_cast<std::size_t>(2 * j)] += acc.real();
      b.y[static_cast<std::size_t>(2 * j + 1)] += acc.imag();
    }
  }
  return b;
}

Block draw_block(const DiscreteChannel& chan, int n, std::uint64_t seed, Exec exec) {
  if (n < 1) throw ConfigError("draw_block: n must be >= 1");
  Rng rng(derive_seed(seed, {0}));
  std::uniform_int_distribution<int> pick(0, chan.alphabet().size() - 1);
  std::vector<int> data(static_cast<std::size_t>(n));
  for (auto& s : data) s = pick(rng);
  if (chan.config().precoding == Precoding::differential) data = differential_precode(data, chan.alphabet());
  auto b = simulate_block(chan, data, derive_seed(seed, {1}), exec);
  b.seed = seed;
  return b;
}

std::vector<int> differential_precode(std::span<const int> data, const Alphabet& alphabet) {
  std::vector<int> out(data.begin(), data.end());
  if (alphabet.kind() != AlphabetKind::bipolar_ask) return out;
  const int half = alphabet.size() / 2;
  bool negative = false;  // sign of the previous emitted symbol, + before the block
  for (auto& s : out) {
    const bool data_neg = s < half;
    const int mag = data_neg ? half - 1 - s : s - half;
    negative = negative != data_neg;
    s = negative ? half - 1 - mag : half + mag;
  }
  return out;
}

std::vector<int> differential_decode(std::span<const int> emitted, const Alphabet& alphabet) {
  std::vector<int> out(emitted.begin(), emitted.end());
  if (alphabet.kind() != AlphabetKind::bipolar_ask) return out;
  const int half = alphabet.size() / 2;
  bool prev_negative = false;
  for (auto& s : out) {
    const bool neg = s < half;
    const int mag = neg ? half - 1 - s : s - half;
    const bool data_neg = neg != prev_negative;
    prev_negative = neg;
    s = data_neg ? half - 1 - mag : half + mag;
  }
  return out;
}

double transmit_power(const DiscreteChannel& chan, const Block& block) {
  if (block.x.empty()) throw ConfigError("transmit_power: empty block");
  // Whole waveform support on the simulation grid.
  const int n = block.size();
  const int gh = chan.pulse().length() / 2;
  const int ns = chan.n_sim();
  const auto lv = chan.levels();
  double e = 0.0;
  for (int w = -gh; w <= ns * (n - 1) + gh; ++w) {
    Sample acc{};
    for (int k = std::max(0, ceil_div(w - gh, ns)); k <= std::min(n - 1, floor_div(w + gh, ns)); ++k)
      acc += chan.pulse().at(w - ns * k) * lv[static_cast<std::size_t>(block.x[static_cast<std::size_t>(k)])];
    e += std::norm(acc);
  }
  return e / (static_cast<double>(n) * ns);
}

void save_block(const std::filesystem::path& stem, const Block& block, const DiscreteChannel& chan,
                const std::string& channel_json) {
  const auto lv = chan.alphabet().points();
  std::vector<double> xs(block.x.size());
  for (std::size_t k = 0; k < xs.size(); ++k) xs[k] = lv[static_cast<std::size_t>(block.x[k])];
  std::string buf;
  append_f64_le(buf, xs);
  append_f64_le(buf, block.y);
  {
    std::ofstream os(stem.string() + ".f64", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + stem.string() + ".f64");
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  nlohmann::ordered_json side;
  side["format"] = "sicnn-block";
  side["version"] = 1;
  side["byte_order"] = "little-endian";
  side["dtype"] = "f64";
  side["layout"] = {{{"name", "x"}, {"count", xs.size()}, {"units", "alphabet level"}},
                    {{"name", "y"}, {"count", block.y.size()}, {"obs_dim", chan.obs_dim()}, {"n_os", chan.n_os()}}};
  side["seed"] = block.seed;
  side["amplitude"] = chan.amplitude();
  side["channel"] = nlohmann::ordered_json::parse(channel_json);
  std::ofstream js(stem.string() + ".json");
  js << side.dump(2) << '\n';
}

LoadedBlock load_block(const std::filesystem::path& stem) {
  std::ifstream js(stem.string() + ".json");
  if (!js) throw std::runtime_error("missing sidecar " + stem.string() + ".json");
  auto side = nlohmann::json::parse(js);
  const auto nx = side.at("layout").at(0).at("count").get<std::size_t>();
  const auto ny = side.at("layout").at(1).at("count").get<std::size_t>();
  auto all = read_f64_le(stem.string() + ".f64");
  if (all.size() != nx + ny) throw ConfigError("block dump size does not match its sidecar");
  LoadedBlock out;
  out.x_levels.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(nx));
  out.y.assign(all.begin() + static_cast<std::ptrdiff_t>(nx), all.end());
  out.seed = side.at("seed").get<std::uint64_t>();
  return out;
}

}  // namespace sicnn
