#include "sicnn/app_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sicnn/common.hpp"

namespace sicnn {

double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

AppMatrix::AppMatrix(int rows, int alphabet_size)
    : rows_(rows),
      m_(alphabet_size),
      prob_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(alphabet_size)),
      logp_(prob_.size(), -std::numeric_limits<double>::infinity()) {}

AppMatrix AppMatrix::from_log_weights(int rows, int alphabet_size, std::span<const double> log_weights) {
  AppMatrix out(rows, alphabet_size);
  for (int r = 0; r < rows; ++r) {
    auto w = log_weights.subspan(static_cast<std::size_t>(r) * static_cast<std::size_t>(alphabet_size),
                                 static_cast<std::size_t>(alphabet_size));
    const double z = log_sum_exp(w);
    if (!std::isfinite(z)) throw NumericError("APP row " + std::to_string(r) + " has no admissible symbol");
    for (int a = 0; a < alphabet_size; ++a) {
      const double lp = w[static_cast<std::size_t>(a)] - z;
      out.logp_[out.index(r, a)] = lp;
      out.prob_[out.index(r, a)] = std::exp(lp);
    }
  }
  return out;
}

AppMatrix AppMatrix::uniform(int rows, int alphabet_size) {
  AppMatrix out(rows, alphabet_size);
  const double p = 1.0 / alphabet_size;
  std::fill(out.prob_.begin(), out.prob_.end(), p);
  std::fill(out.logp_.begin(), out.logp_.end(), std::log(p));
  return out;
}

std::span<const double> AppMatrix::row(int r) const {
  return std::span<const double>(prob_).subspan(index(r, 0), static_cast<std::size_t>(m_));
}

std::span<const double> AppMatrix::log_row(int r) const {
  return std::span<const double>(logp_).subspan(index(r, 0), static_cast<std::size_t>(m_));
}

void AppMatrix::set_point_mass(int r, int a) {
  for (int b = 0; b < m_; ++b) {
    prob_[index(r, b)] = b == a ? 1.0 : 0.0;
    logp_[index(r, b)] = b == a ? 0.0 : -std::numeric_limits<double>::infinity();
  }
}

double AppMatrix::max_normalization_error() const {
  double worst = 0.0;
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (double p : row(r)) s += p;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace sicnn
