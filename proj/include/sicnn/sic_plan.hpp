#pragma once

// SIC index algebra. Public indices follow the 1-based convention
// kappa(s, t) = s + (t - 1) S; block storage is 0-based, so symbol
// kappa lives at x[kappa - 1].

#include <span>
#include <vector>

namespace sicnn {

/// kappa(s, t) = s + (t-1) S. Throws ConfigError unless 1 <= s <= S, t >= 1.
int kappa(int s, int t, int stages);

class SicPlan {
 public:
  SicPlan(int stages, int block_symbols);

  int stages() const { return stages_; }
  int block_symbols() const { return n_; }
  int per_stage() const { return n_ / stages_; }
  /// 1-based stage owning 1-based serial index `serial`.
  int stage_of(int serial) const { return (serial - 1) % stages_ + 1; }

  /// V_s[t-1] = x[kappa(s,t) - 1] for s = 1..S.
  std::vector<std::vector<int>> partition(std::span<const int> x) const;
  /// Inverse of partition.
  std::vector<int> interleave(const std::vector<std::vector<int>>& streams) const;

 private:
  int stages_;
  int n_;
};

/// What stage `s` may condition on: the true symbols of stages 1..s-1.
class StageView {
 public:
  StageView(const SicPlan& plan, int stage, std::span<const int> x);

  const SicPlan& plan() const { return plan_; }
  int stage() const { return stage_; }
  /// Serial (1-based) indices of known symbols, ascending.
  std::span<const int> known() const { return known_; }
  /// Symbol index at each position, -1 where unknown (0-based positions).
  std::span<const int> pins() const { return pins_; }
  /// Serial indices kappa(s, t), t = 1..N, of the current stage's targets.
  std::vector<int> targets() const;
  /// Serial indices kappa(j, t) for all j = s..S, t = 1..N.
  std::vector<int> remaining() const;
  bool is_known(int serial) const { return pins_[static_cast<std::size_t>(serial - 1)] >= 0; }
  int symbol_at(int serial) const { return pins_[static_cast<std::size_t>(serial - 1)]; }

 private:
  SicPlan plan_;
  int stage_;
  std::vector<int> known_;
  std::vector<int> pins_;
};

/// The L_IC known serial indices closest to `target` (ties prefer the
/// smaller index), returned ascending. Missing entries are reported as 0
/// on the left so the result always has `length` entries.
std::vector<int> ic_window(int target, std::span<const int> known_sorted, int length);

}  // namespace sicnn
