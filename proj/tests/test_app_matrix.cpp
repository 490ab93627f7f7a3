#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "sicnn/app_matrix.hpp"
#include "sicnn/common.hpp"

using namespace sicnn;

TEST_CASE("log_sum_exp is stable") {
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(std::vector<double>{ninf, ninf}) == ninf);
  CHECK(log_sum_exp(std::vector<double>{}) == ninf);
  CHECK(max_star(0.0, 0.0) == doctest::Approx(std::log(2.0)));
  CHECK(max_star(ninf, 3.0) == 3.0);
}

TEST_CASE("from_log_weights normalizes rows") {
  const double ninf = -std::numeric_limits<double>::infinity();
  const std::vector<double> w{0.0, std::log(3.0), -700.0, 5.0, ninf, 5.0};
  const auto a = AppMatrix::from_log_weights(2, 3, w);
  CHECK(a.prob(0, 0) == doctest::Approx(1.0 / (4.0 + std::exp(-700.0))));
  CHECK(a.prob(1, 1) == 0.0);
  CHECK(a.prob(1, 0) == doctest::Approx(0.5));
  CHECK(a.max_normalization_error() < 1e-12);
  CHECK_THROWS_AS(AppMatrix::from_log_weights(1, 2, std::vector<double>{ninf, ninf}), NumericError);
}

TEST_CASE("uniform and point-mass rows") {
  auto a = AppMatrix::uniform(3, 4);
  CHECK(a.prob(2, 3) == 0.25);
  a.set_point_mass(1, 2);
  CHECK(a.prob(1, 2) == 1.0);
  CHECK(a.log_prob(1, 2) == 0.0);
  CHECK(a.log_prob(1, 0) == -std::numeric_limits<double>::infinity());
}
