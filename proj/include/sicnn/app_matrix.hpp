#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace sicnn {

/// Per-target PMFs over the alphabet, row-major (rows x alphabet size).
/// Both the probabilities and their natural logs are kept.
class AppMatrix {
 public:
  AppMatrix() = default;
  AppMatrix(int rows, int alphabet_size);

  /// Build from unnormalized log-weights; each row is normalized with
  /// log-sum-exp. Throws NumericError on an all -inf row.
  static AppMatrix from_log_weights(int rows, int alphabet_size, std::span<const double> log_weights);
  static AppMatrix uniform(int rows, int alphabet_size);

  int rows() const { return rows_; }
  int alphabet_size() const { return m_; }
  std::span<const double> row(int r) const;
  std::span<const double> log_row(int r) const;
  double prob(int r, int a) const { return prob_[index(r, a)]; }
  double log_prob(int r, int a) const { return logp_[index(r, a)]; }
  /// Set row `r` to a point mass on `a`.
  void set_point_mass(int r, int a);
  /// Max |sum_a p(r,a) - 1| over rows.
  double max_normalization_error() const;

 private:
  std::size_t index(int r, int a) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(m_) + static_cast<std::size_t>(a);
  }

  int rows_ = 0;
  int m_ = 0;
  std::vector<double> prob_;
  std::vector<double> logp_;
};

/// log(sum exp(v)) with max subtraction; -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

/// Pairwise max-star: log(exp(a) + exp(b)).
inline double max_star(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace sicnn
