#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sicnn {

/// Invalid configuration or argument. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, divergence, inconsistent pinning. Maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Execution policy for the data-parallel kernels. `serial` is the
/// reference path; `parallel` must produce bit-identical results.
enum class Exec { serial, parallel };

using Rng = std::mt19937_64;

/// Derive an independent 64-bit stream seed from a base seed and a path of
/// stream identifiers (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

/// Mean and jackknife standard error of independent per-unit values.
struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};
Estimate jackknife_mean(std::span<const double> values);

/// Throws NumericError naming `what` if `v` is not finite.
void require_finite(double v, const std::string& what);

// Little-endian f64 arrays, independent of host byte order.
void write_f64_le(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64_le(const std::filesystem::path& path);
void append_f64_le(std::string& out, std::span<const double> values);
std::vector<double> parse_f64_le(std::span<const char> bytes);

/// 64-bit FNV-1a digest rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view data);

/// Number of worker threads honoured by the parallel kernels
/// (SICNN_THREADS overrides the OpenMP default).
int configure_threads();

}  // namespace sicnn
