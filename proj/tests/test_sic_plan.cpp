#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "sicnn/common.hpp"
#include "sicnn/sic_plan.hpp"

using namespace sicnn;

TEST_CASE("kappa maps the parallel grid to serial indices") {
  CHECK(kappa(1, 1, 3) == 1);
  std::vector<int> row;
  for (int t = 1; t <= 5; ++t) row.push_back(kappa(1, t, 3));
  CHECK(row == std::vector<int>{1, 4, 7, 10, 13});
  CHECK(kappa(3, 5, 3) == 15);
  CHECK_THROWS_AS(kappa(0, 1, 3), ConfigError);
  CHECK_THROWS_AS(kappa(4, 1, 3), ConfigError);
  CHECK_THROWS_AS(kappa(1, 0, 3), ConfigError);
}

TEST_CASE("partition of the n = 15, S = 3 grid") {
  std::vector<int> x(15);
  std::iota(x.begin(), x.end(), 1);  // x[k-1] = k
  const SicPlan plan(3, 15);
  const auto v = plan.partition(x);
  CHECK(v[0] == std::vector<int>{1, 4, 7, 10, 13});
  CHECK(v[1] == std::vector<int>{2, 5, 8, 11, 14});
  CHECK(v[2] == std::vector<int>{3, 6, 9, 12, 15});
  CHECK(plan.interleave(v) == x);
  CHECK(SicPlan(1, 15).partition(x)[0] == x);
  const auto single = SicPlan(15, 15).partition(x);
  for (int s = 0; s < 15; ++s) CHECK(single[static_cast<std::size_t>(s)] == std::vector<int>{s + 1});
  CHECK_THROWS_AS(SicPlan(4, 15), ConfigError);
}

TEST_CASE("partition and interleave are inverse for every divisor") {
  const int n = 24;
  std::vector<int> x(n);
  for (int k = 0; k < n; ++k) x[static_cast<std::size_t>(k)] = (k * 7 + 3) % 11;
  for (int s = 1; s <= n; ++s) {
    if (n % s != 0) continue;
    const SicPlan plan(s, n);
    CHECK(plan.interleave(plan.partition(x)) == x);
    for (int k = 1; k <= n; ++k) CHECK(plan.stage_of(k) == (k - 1) % s + 1);
  }
}

TEST_CASE("stage view: known symbols are exactly earlier stages") {
  std::vector<int> x(12);
  std::iota(x.begin(), x.end(), 0);
  const SicPlan plan(3, 12);
  const StageView v1(plan, 1, x);
  CHECK(v1.known().empty());
  CHECK(std::all_of(v1.pins().begin(), v1.pins().end(), [](int p) { return p < 0; }));
  const StageView v3(plan, 3, x);
  const std::vector<int> known(v3.known().begin(), v3.known().end());
  CHECK(known == std::vector<int>{1, 2, 4, 5, 7, 8, 10, 11});
  CHECK(v3.targets() == std::vector<int>{3, 6, 9, 12});
  for (int k : v3.targets()) CHECK_FALSE(v3.is_known(k));
  CHECK(v3.symbol_at(5) == 4);
  const StageView v2(plan, 2, x);
  CHECK(v2.remaining() == std::vector<int>{2, 3, 5, 6, 8, 9, 11, 12});
}

namespace {

// Brute-force argmin over all L-subsets of the known indices; ties prefer
// the lexicographically smallest sorted subset.
std::vector<int> brute_window(int target, const std::vector<int>& known, int length) {
  const int k = static_cast<int>(known.size());
  if (length > k) length = k;
  std::vector<int> best;
  long best_cost = -1;
  std::vector<bool> pick(static_cast<std::size_t>(k), false);
  std::fill(pick.begin(), pick.begin() + length, true);
  do {
    std::vector<int> sub;
    long cost = 0;
    for (int i = 0; i < k; ++i)
      if (pick[static_cast<std::size_t>(i)]) {
        sub.push_back(known[static_cast<std::size_t>(i)]);
        cost += std::abs(known[static_cast<std::size_t>(i)] - target);
      }
    if (best_cost < 0 || cost < best_cost || (cost == best_cost && sub < best)) {
      best = sub;
      best_cost = cost;
    }
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace

TEST_CASE("ic_window matches the brute-force argmin") {
  const std::vector<int> odd{1, 3, 5, 7, 9, 11};
  CHECK(ic_window(6, odd, 2) == std::vector<int>{5, 7});
  CHECK(ic_window(6, {}, 3) == std::vector<int>{0, 0, 0});
  CHECK(ic_window(6, odd, 0).empty());
  CHECK(ic_window(2, std::vector<int>{1}, 3) == std::vector<int>{0, 0, 1});
  const std::vector<int> known{1, 2, 4, 5, 7, 8, 10, 11, 13, 14};
  for (int target = 1; target <= 15; ++target)
    for (int len = 1; len <= 6; ++len) {
      std::vector<int> others;
      for (int k : known)
        if (k != target) others.push_back(k);
      CHECK(ic_window(target, others, len) == brute_window(target, others, len));
    }
}

TEST_CASE("ic_window nesting: growing by two keeps the previous entries") {
  const std::vector<int> known{1, 3, 4, 6, 9, 10, 12, 15, 16};
  for (int target = 2; target <= 14; ++target)
    for (int len = 1; len <= 5; ++len) {
      const auto a = ic_window(target, known, len);
      const auto b = ic_window(target, known, len + 2);
      for (int s : a) CHECK(std::find(b.begin(), b.end(), s) != b.end());
    }
}
