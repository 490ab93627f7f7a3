#include "sicnn/rates.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "json.hpp"

namespace sicnn {

AppMatrix UniformDetector::app(const Block& block, const StageView& view, std::uint64_t) const {
  (void)block;
  return AppMatrix::uniform(view.plan().per_stage(), m_);
}

AppMatrix OracleDetector::app(const Block& block, const StageView& view, std::uint64_t) const {
  const auto targets = view.targets();
  AppMatrix out(static_cast<int>(targets.size()), m_);
  for (std::size_t t = 0; t < targets.size(); ++t)
    out.set_point_mass(static_cast<int>(t), block.x[static_cast<std::size_t>(targets[t] - 1)]);
  return out;
}

AppMatrix FbaDetector::app(const Block& block, const StageView& view, std::uint64_t) const {
  return fba_app(*aux_, block.y, view);
}

std::int64_t FbaDetector::multiplications_per_app(int) const {
  return count_fba_multiplications(*aux_, 2 * std::max(aux_->memory(), aux_->future()) + 2, 1);
}

AppMatrix GibbsDetector::app(const Block& block, const StageView& view, std::uint64_t seed) const {
  return gibbs_app(*aux_, block.y, view, cfg_, seed, exec_);
}

std::int64_t GibbsDetector::multiplications_per_app(int) const { return count_gs_multiplications(*aux_, cfg_, 1); }

RnnDetector::RnnDetector(std::vector<RnnModel> models, int t_rnn) : models_(std::move(models)), t_rnn_(t_rnn) {
  if (models_.empty()) throw ConfigError("rnn detector needs one model per stage");
  for (std::size_t k = 0; k < models_.size(); ++k) {
    const auto& sh = models_[k].shape();
    if (sh.stage != static_cast<int>(k) + 1 || sh.stages != static_cast<int>(models_.size()))
      throw ConfigError("rnn detector: model " + std::to_string(k + 1) + " has the wrong stage layout");
    if (t_rnn_ < 1 || t_rnn_ % sh.phases() != 0) throw ConfigError("rnn detector: t_rnn must be a multiple of S - s + 1");
  }
}

AppMatrix RnnDetector::app(const Block& block, const StageView& view, std::uint64_t) const {
  const auto& model = models_[static_cast<std::size_t>(view.stage() - 1)];
  const auto& shape = model.shape();
  const int per_stage = view.plan().per_stage();
  const int seg = t_rnn_ / shape.phases();
  std::vector<double> logits;
  logits.reserve(static_cast<std::size_t>(per_stage) * static_cast<std::size_t>(shape.alphabet_size));
  for (int t0 = 1; t0 <= per_stage; t0 += seg) {
    const auto in = assemble_inputs(block.y, view, shape, model.normalization(), t0, std::min(seg, per_stage - t0 + 1));
    const auto fwd = rnn_forward(model, in);
    logits.insert(logits.end(), fwd.logits.begin(), fwd.logits.end());
  }
  return AppMatrix::from_log_weights(per_stage, shape.alphabet_size, logits);
}

std::int64_t RnnDetector::multiplications_per_app(int stage) const {
  return count_rnn_multiplications(models_[static_cast<std::size_t>(stage - 1)].shape());
}

namespace {

const double kFloorLog2 = std::log2(1e-30);

struct BlockStageValue {
  double rate = 0.0;
  std::int64_t clamped = 0;
  std::int64_t targets = 0;
};

BlockStageValue stage_value(const AppDetector& det, const Block& block, int stages, int stage, std::uint64_t seed) {
  const SicPlan plan(stages, block.size());
  const StageView view(plan, stage, block.x);
  const auto app = det.app(block, view, seed);
  const auto targets = view.targets();
  if (app.rows() != static_cast<int>(targets.size())) throw NumericError("detector returned the wrong number of rows");
  const int m = app.alphabet_size();
  BlockStageValue v;
  double sum = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double l2 = app.log_prob(static_cast<int>(t), block.x[static_cast<std::size_t>(targets[t] - 1)]) / std::numbers::ln2;
    if (!(l2 >= kFloorLog2)) {
      l2 = kFloorLog2;
      ++v.clamped;
    }
    sum += l2;
  }
  v.targets = static_cast<std::int64_t>(targets.size());
  v.rate = std::log2(static_cast<double>(m)) + sum / static_cast<double>(targets.size());
  return v;
}

template <class Fn>
void for_blocks(int n_blk, Exec exec, Fn&& fn) {
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < n_blk; ++b) fn(b);
  } else {
    for (int b = 0; b < n_blk; ++b) fn(b);
  }
}

}  // namespace

StageRate estimate_stage_rate(const AppDetector& det, const DiscreteChannel& chan, int stages, int stage, int n_blk,
                              int n, std::uint64_t seed, Exec exec) {
  if (n_blk < 1) throw ConfigError("eval.n_blk must be >= 1");
  const SicPlan check(stages, n);  // validates divisibility
  (void)check;
  std::vector<BlockStageValue> values(static_cast<std::size_t>(n_blk));
  for_blocks(n_blk, exec, [&](int b) {
    const auto block = draw_block(chan, n, derive_seed(seed, {static_cast<std::uint64_t>(b)}), Exec::serial);
    values[static_cast<std::size_t>(b)] =
        stage_value(det, block, stages, stage,
                    derive_seed(seed, {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(stage), 7}));
  });
  StageRate out;
  for (const auto& v : values) {
    out.blocks.push_back(v.rate);
    out.clamped += v.clamped;
    out.targets += v.targets;
  }
  out.rate = jackknife_mean(out.blocks);
  return out;
}

RateReport estimate_sic(const AppDetector& det, const DiscreteChannel& chan, int stages, int n_blk, int n,
                        std::uint64_t seed, Exec exec, const AuxChannel* ub_aux) {
  RateReport rep;
  rep.ptx_db = chan.config().ptx_db;
  rep.stages = stages;
  rep.detector = det.id();
  rep.n_blk = n_blk;
  rep.n = n;
  std::int64_t targets = 0;
  rep.sic_blocks.assign(static_cast<std::size_t>(n_blk), 0.0);
  double mean_sum = 0.0;
  for (int s = 1; s <= stages; ++s) {
    auto sr = estimate_stage_rate(det, chan, stages, s, n_blk, n, seed, exec);
    rep.stage_rates.push_back(sr.rate);
    mean_sum += sr.rate.mean;
    for (int b = 0; b < n_blk; ++b) rep.sic_blocks[static_cast<std::size_t>(b)] += sr.blocks[static_cast<std::size_t>(b)];
    rep.stage_blocks.push_back(std::move(sr.blocks));
    rep.stage_multiplications.push_back(det.multiplications_per_app(s));
    rep.clamped += sr.clamped;
    targets += sr.targets;
  }
  for (auto& v : rep.sic_blocks) v /= stages;
  rep.sic = jackknife_mean(rep.sic_blocks);
  rep.sic.mean = mean_sum / stages;
  rep.flagged = rep.clamped * 100 > targets;
  if (ub_aux) {
    std::vector<Block> blocks(static_cast<std::size_t>(n_blk));
    for_blocks(n_blk, exec, [&](int b) {
      blocks[static_cast<std::size_t>(b)] =
          draw_block(chan, n, derive_seed(seed, {static_cast<std::uint64_t>(b)}), Exec::serial);
    });
    auto bounds = fba_ub(*ub_aux, blocks, exec);
    rep.upper_bound = bounds.upper;
    rep.upper_blocks = std::move(bounds.upper_blocks);
  }
  return rep;
}

Estimate paired_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("paired_difference: sample counts differ");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return jackknife_mean(d);
}

std::string RateReport::csv_header() {
  return "ptx_db,detector,stages,stage,rate_bpcu,rate_stderr,sic_bpcu,sic_stderr,ub_bpcu,ub_stderr,mults_per_app,"
         "n_blk,n,clamped,config_hash\n";
}

std::string RateReport::csv_rows() const {
  std::string out;
  char ub[64] = ",";
  if (upper_bound) std::snprintf(ub, sizeof ub, "%.6f,%.6f", upper_bound->mean, upper_bound->std_error);
  char line[512];
  for (int s = 1; s <= stages; ++s) {
    const auto& r = stage_rates[static_cast<std::size_t>(s - 1)];
    std::snprintf(line, sizeof line, "%.3f,%s,%d,%d,%.6f,%.6f,%.6f,%.6f,%s,%lld,%d,%d,%lld,%s\n", ptx_db,
                  detector.c_str(), stages, s, r.mean, r.std_error, sic.mean, sic.std_error, ub,
                  static_cast<long long>(stage_multiplications[static_cast<std::size_t>(s - 1)]), n_blk, n,
                  static_cast<long long>(clamped), config_hash.c_str());
    out += line;
  }
  return out;
}

std::string RateReport::summary_json() const {
  using nlohmann::json;
  json stages_j = json::array();
  for (int s = 1; s <= stages; ++s) {
    const auto& r = stage_rates[static_cast<std::size_t>(s - 1)];
    stages_j.push_back({{"stage", s},
                        {"rate_bpcu", r.mean},
                        {"stderr", r.std_error},
                        {"mults_per_app", stage_multiplications[static_cast<std::size_t>(s - 1)]}});
  }
  json j{{"ptx_db", ptx_db},   {"detector", detector}, {"stages", stages},   {"n_blk", n_blk},
         {"n", n},             {"stage_rates", stages_j}, {"sic_bpcu", sic.mean}, {"sic_stderr", sic.std_error},
         {"clamped", clamped}, {"flagged", flagged},   {"config_hash", config_hash}};
  if (stages == 1) j["sdd_bpcu"] = sic.mean;
  if (upper_bound) {
    j["ub_bpcu"] = upper_bound->mean;
    j["ub_stderr"] = upper_bound->std_error;
  }
  return j.dump(2);
}

}  // namespace sicnn
