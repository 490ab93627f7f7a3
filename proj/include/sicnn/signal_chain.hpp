#pragma once

// Discrete-time ground-truth channel: pulse shaping with chromatic
// dispersion, memoryless nonlinearity, receiver filter, decimation, noise.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sicnn/common.hpp"

namespace sicnn {

using Sample = std::complex<double>;

enum class AlphabetKind { unipolar_pam, bipolar_ask };

/// Ordered real amplitude levels. Symbols travel through the library as
/// indices into `points()`.
class Alphabet {
 public:
  Alphabet(AlphabetKind kind, int size);

  AlphabetKind kind() const { return kind_; }
  int size() const { return static_cast<int>(points_.size()); }
  int bits() const { return bits_; }
  std::span<const double> points() const { return points_; }
  double point(int index) const { return points_.at(static_cast<std::size_t>(index)); }
  /// E[A^2] under uniform symbols.
  double mean_energy() const;

  friend bool operator==(const Alphabet&, const Alphabet&) = default;

 private:
  AlphabetKind kind_;
  int bits_ = 0;
  std::vector<double> points_;
};

/// Odd-length FIR filter on the simulation grid; tap `taps[center()]` is t=0.
class FirFilter {
 public:
  FirFilter() = default;
  FirFilter(std::vector<Sample> taps, int rate);

  static FirFilter impulse(int rate) { return FirFilter({Sample{1.0, 0.0}}, rate); }

  std::span<const Sample> taps() const { return taps_; }
  int length() const { return static_cast<int>(taps_.size()); }
  int center() const { return length() / 2; }
  int rate() const { return rate_; }
  /// Tap at signed offset `u` from the center, zero outside the support.
  Sample at(int u) const {
    const int i = u + center();
    return (i < 0 || i >= length()) ? Sample{} : taps_[static_cast<std::size_t>(i)];
  }
  /// floor((K-1)/rate)
  int symbol_memory() const { return (length() - 1) / rate_; }
  double energy() const;
  bool is_real() const;

 private:
  std::vector<Sample> taps_;
  int rate_ = 1;
};

struct Nonlinearity {
  enum class Kind { identity, square_law, rapp };
  Kind kind = Kind::square_law;
  double rapp_smoothness = 3.0;  // p
  double rapp_saturation = 1.0;  // x_sat

  friend bool operator==(const Nonlinearity&, const Nonlinearity&) = default;
};

Sample apply_nonlinearity(Sample z, const Nonlinearity& nl);

struct FiberConfig {
  double length_km = 30.0;
  double beta2_s2_per_km = -2.168e-23;
  double wavelength_nm = 1550.0;

  friend bool operator==(const FiberConfig&, const FiberConfig&) = default;
};

enum class NoiseKind { real, complex };
enum class Precoding { none, differential };
enum class ReceiverKind { brickwall, identity };

struct ChannelConfig {
  Alphabet alphabet{AlphabetKind::bipolar_ask, 4};
  double symbol_rate = 35e9;
  int n_os = 2;
  int n_sim = 2;
  Nonlinearity nonlinearity{};
  std::optional<FiberConfig> fiber;
  NoiseKind noise = NoiseKind::real;
  double noise_variance = 1.0;  // sigma^2
  Precoding precoding = Precoding::none;
  int pulse_taps = 0;            // K_g; 0 selects 151 * n_sim + 1
  std::vector<Sample> custom_pulse;  // overrides the sinc/fiber pulse when set
  ReceiverKind receiver = ReceiverKind::brickwall;
  int receiver_taps = 1;         // K_h
  double ptx_db = 0.0;

  int decimation() const { return n_sim / n_os; }
  int resolved_pulse_taps() const { return pulse_taps > 0 ? pulse_taps : 151 * n_sim + 1; }
  void validate() const;

  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

struct PulseOptions {
  /// Scale so that (1/N_sim) * sum |g_u|^2 = 1.
  bool normalize = true;
};

/// g = truncated sinc at rate B convolved with the SSMF all-pass response.
FirFilter build_pulse(const ChannelConfig& cfg, PulseOptions opts = {});

/// SSMF response exp(j beta2/2 w^2 L) sampled on a `taps`-point DFT grid at
/// N_sim * B and recentred. Its own DFT has unit magnitude in every bin.
FirFilter build_dispersion(const ChannelConfig& cfg, int taps);

/// Apply the dispersion all-pass to a finite signal by circular FFT
/// filtering over a zero-padded grid (energy preserving).
std::vector<Sample> apply_dispersion(const ChannelConfig& cfg, std::span<const Sample> signal);

/// Brickwall of bandwidth 2B, unit DC gain, `cfg.receiver_taps` taps.
FirFilter build_receiver(const ChannelConfig& cfg);

struct Block {
  std::vector<int> x;     // emitted symbol indices (detector targets)
  std::vector<double> y;  // observations, obs_dim * n_os per symbol
  std::vector<double> z;  // noiseless observations, same layout as y
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(x.size()); }
};

class DiscreteChannel {
 public:
  /// Filters from `cfg`, amplitude chosen so that P_tx = 10^(ptx_db/10).
  explicit DiscreteChannel(const ChannelConfig& cfg);
  DiscreteChannel(const ChannelConfig& cfg, FirFilter g, FirFilter h, double amplitude);

  const ChannelConfig& config() const { return cfg_; }
  const Alphabet& alphabet() const { return cfg_.alphabet; }
  const FirFilter& pulse() const { return g_; }
  const FirFilter& receiver() const { return h_; }
  int n_os() const { return cfg_.n_os; }
  int n_sim() const { return cfg_.n_sim; }
  int decimation() const { return cfg_.decimation(); }
  double amplitude() const { return amplitude_; }
  double noise_variance() const { return cfg_.noise_variance; }
  /// Noise variance of each real observation component.
  double component_variance() const;
  int obs_dim() const { return cfg_.noise == NoiseKind::real ? 1 : 2; }
  int obs_per_symbol() const { return obs_dim() * cfg_.n_os; }

  int memory_g() const { return g_.symbol_memory(); }
  int memory_h() const { return h_.symbol_memory(); }
  int memory() const { return memory_g() + memory_h(); }
  /// Symbols before/after slot k that influence its observations.
  int reach_past() const;
  int reach_future() const;
  int guard_symbols() const { return g_.length() / 2 + h_.length() / 2; }
  /// Noise drawn i.i.d. at the output rate instead of filtered at N_sim.
  bool direct_noise() const;

  /// Transmitted amplitude of each symbol index (amplitude * point).
  std::vector<double> levels() const;

  /// X on the simulation grid for sim times [-hh, d*(n_os*n-1)+hh], hh = half
  /// receiver length. Index 0 corresponds to sim time -hh.
  std::vector<Sample> shaped(std::span<const int> symbols, Exec exec = Exec::parallel) const;
  std::vector<double> noiseless(std::span<const int> symbols, Exec exec = Exec::parallel) const;

 private:
  ChannelConfig cfg_;
  FirFilter g_;
  FirFilter h_;
  double amplitude_ = 1.0;
};

/// Simulate one block for the given emitted symbols; the noise stream is
/// seeded from `seed`.
Block simulate_block(const DiscreteChannel& chan, std::span<const int> symbols, std::uint64_t seed,
                     Exec exec = Exec::parallel);

/// Draw u.i.i.d. data, apply the configured precoding, then simulate.
Block draw_block(const DiscreteChannel& chan, int n, std::uint64_t seed, Exec exec = Exec::parallel);

/// Sign of emitted symbol k = sign(k-1) * data sign k; magnitudes pass.
/// Identity for unipolar PAM.
std::vector<int> differential_precode(std::span<const int> data, const Alphabet& alphabet);
std::vector<int> differential_decode(std::span<const int> emitted, const Alphabet& alphabet);

/// (1/(n T_s)) * energy of the shaped waveform on the simulation grid.
double transmit_power(const DiscreteChannel& chan, const Block& block);

/// Block dump: `<stem>.f64` holds x levels then y as little-endian f64,
/// `<stem>.json` the sidecar (channel section, seed, layout).
void save_block(const std::filesystem::path& stem, const Block& block, const DiscreteChannel& chan,
                const std::string& channel_json);
struct LoadedBlock {
  std::vector<double> x_levels;
  std::vector<double> y;
  std::uint64_t seed = 0;
};
LoadedBlock load_block(const std::filesystem::path& stem);

}  // namespace sicnn
