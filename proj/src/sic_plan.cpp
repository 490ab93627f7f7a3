#include "sicnn/sic_plan.hpp"

#include <algorithm>
#include <string>

#include "sicnn/common.hpp"

namespace sicnn {

int kappa(int s, int t, int stages) {
  if (stages < 1 || s < 1 || s > stages) throw ConfigError("kappa: stage " + std::to_string(s) + " out of range");
  if (t < 1) throw ConfigError("kappa: t must be >= 1");
  return s + (t - 1) * stages;
}

SicPlan::SicPlan(int stages, int block_symbols) : stages_(stages), n_(block_symbols) {
  if (stages < 1) throw ConfigError("sic.stages must be >= 1");
  if (block_symbols < 1 || block_symbols % stages != 0)
    throw ConfigError("block length " + std::to_string(block_symbols) + " is not divisible by S=" +
                      std::to_string(stages));
}

std::vector<std::vector<int>> SicPlan::partition(std::span<const int> x) const {
  if (static_cast<int>(x.size()) != n_) throw ConfigError("partition: block length mismatch");
  std::vector<std::vector<int>> v(static_cast<std::size_t>(stages_));
  for (int s = 1; s <= stages_; ++s) {
    auto& row = v[static_cast<std::size_t>(s - 1)];
    row.reserve(static_cast<std::size_t>(per_stage()));
    for (int t = 1; t <= per_stage(); ++t) row.push_back(x[static_cast<std::size_t>(kappa(s, t, stages_) - 1)]);
  }
  return v;
}

std::vector<int> SicPlan::interleave(const std::vector<std::vector<int>>& streams) const {
  if (static_cast<int>(streams.size()) != stages_) throw ConfigError("interleave: stage count mismatch");
  std::vector<int> x(static_cast<std::size_t>(n_));
  for (int s = 1; s <= stages_; ++s) {
    const auto& row = streams[static_cast<std::size_t>(s - 1)];
    if (static_cast<int>(row.size()) != per_stage()) throw ConfigError("interleave: stream length mismatch");
    for (int t = 1; t <= per_stage(); ++t)
      x[static_cast<std::size_t>(kappa(s, t, stages_) - 1)] = row[static_cast<std::size_t>(t - 1)];
  }
  return x;
}

StageView::StageView(const SicPlan& plan, int stage, std::span<const int> x) : plan_(plan), stage_(stage) {
  if (stage < 1 || stage > plan.stages()) throw ConfigError("stage " + std::to_string(stage) + " out of range");
  if (static_cast<int>(x.size()) != plan.block_symbols()) throw ConfigError("StageView: block length mismatch");
  pins_.assign(x.size(), -1);
  for (int k = 1; k <= plan.block_symbols(); ++k) {
    if (plan.stage_of(k) < stage) {
      known_.push_back(k);
      pins_[static_cast<std::size_t>(k - 1)] = x[static_cast<std::size_t>(k - 1)];
    }
  }
}

std::vector<int> StageView::targets() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(plan_.per_stage()));
  for (int t = 1; t <= plan_.per_stage(); ++t) out.push_back(kappa(stage_, t, plan_.stages()));
  return out;
}

std::vector<int> StageView::remaining() const {
  std::vector<int> out;
  for (int t = 1; t <= plan_.per_stage(); ++t)
    for (int j = stage_; j <= plan_.stages(); ++j) out.push_back(kappa(j, t, plan_.stages()));
  return out;
}

std::vector<int> ic_window(int target, std::span<const int> known_sorted, int length) {
  if (length < 0) throw ConfigError("L_IC must be >= 0");
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(length));
  // Two-pointer expansion around the target; on equal distance the left
  // (smaller) index is taken first.
  auto right = std::lower_bound(known_sorted.begin(), known_sorted.end(), target);
  auto left = right;
  if (right != known_sorted.end() && *right == target) ++right;
  while (static_cast<int>(picked.size()) < length) {
    const bool has_left = left != known_sorted.begin();
    const bool has_right = right != known_sorted.end();
    if (!has_left && !has_right) break;
    if (has_left && (!has_right || target - *(left - 1) <= *right - target)) {
      --left;
      picked.push_back(*left);
    } else {
      picked.push_back(*right);
      ++right;
    }
  }
  std::sort(picked.begin(), picked.end());
  std::vector<int> out(static_cast<std::size_t>(length) - picked.size(), 0);
  out.insert(out.end(), picked.begin(), picked.end());
  return out;
}

}  // namespace sicnn
