#include "sicnn/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "sicnn/sic_plan.hpp"

namespace sicnn {

void TrainConfig::validate(const RnnShape& shape) const {
  if (learning_rate <= 0.0) throw ConfigError("train.learning_rate must be > 0");
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (t_rnn < 1 || t_rnn % shape.phases() != 0)
    throw ConfigError("train.t_rnn must be a positive multiple of S - s + 1");
  if (divergence_window < 1) throw ConfigError("train.divergence_window must be >= 1");
}

namespace {

constexpr int kGroups = 8;
const double kClampBits = -std::log2(kProbabilityFloor);

// Loss of one sequence; optionally fills dlogits (already scaled).
LossResult sequence_loss(const RnnModel& model, const LabeledSequence& seq, const ForwardResult& fwd, double scale,
                         std::vector<double>* dlogits) {
  const int m = model.shape().alphabet_size;
  const int n = seq.inputs.target_count();
  if (static_cast<int>(seq.labels.size()) != n) throw ConfigError("labels do not match the sequence targets");
  LossResult out;
  out.targets = n;
  if (dlogits) dlogits->assign(fwd.logits.size(), 0.0);
  for (int t = 0; t < n; ++t) {
    const std::span<const double> z(fwd.logits.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(m),
                                    static_cast<std::size_t>(m));
    const double lse = log_sum_exp(z);
    const int truth = seq.labels[static_cast<std::size_t>(t)];
    const double bits = -(z[static_cast<std::size_t>(truth)] - lse) / std::numbers::ln2;
    if (bits > kClampBits) {
      out.bits += kClampBits;
      ++out.clamped;
      continue;
    }
    out.bits += bits;
    if (!dlogits) continue;
    for (int a = 0; a < m; ++a) {
      const double p = std::exp(z[static_cast<std::size_t>(a)] - lse);
      (*dlogits)[static_cast<std::size_t>(t * m + a)] = (p - (a == truth ? 1.0 : 0.0)) * scale;
    }
  }
  return out;
}

void accumulate_gradient(const RnnModel& model, const LabeledSequence& seq, double scale, std::vector<double>& g,
                         LossResult& loss) {
  const auto& shape = model.shape();
  const auto& L = model.layout();
  const auto p = model.params();
  const int P = shape.phases();
  const int T = seq.inputs.steps;
  const int m = shape.alphabet_size;
  ForwardCache cache;
  const auto fwd = rnn_forward(model, seq.inputs, &cache);
  std::vector<double> dz;
  const auto l = sequence_loss(model, seq, fwd, scale, &dz);
  loss.bits += l.bits;
  loss.clamped += l.clamped;
  loss.targets += l.targets;

  // Output layer.
  const int last = shape.dims.back();
  const int layers = shape.layers() - 1;
  std::vector<double> dout(static_cast<std::size_t>(T) * static_cast<std::size_t>(last), 0.0);
  const auto& rl = cache.r.back();
  for (int t = 0; t < T / P; ++t) {
    const auto tau = static_cast<std::size_t>(t) * static_cast<std::size_t>(P);
    const double* r = rl.data() + tau * static_cast<std::size_t>(last);
    double* dr = dout.data() + tau * static_cast<std::size_t>(last);
    for (int a = 0; a < m; ++a) {
      const double d = dz[static_cast<std::size_t>(t * m + a)];
      if (d == 0.0) continue;
      const auto row = L.w_out() + static_cast<std::size_t>(a) * static_cast<std::size_t>(last);
      for (int c = 0; c < last; ++c) {
        g[row + static_cast<std::size_t>(c)] += d * r[c];
        dr[c] += p[row + static_cast<std::size_t>(c)] * d;
      }
      g[L.b_out() + static_cast<std::size_t>(a)] += d;
    }
  }

  // Recurrent layers, top to bottom.
  for (int i = layers - 1; i >= 0; --i) {
    const int in_w = shape.dims[static_cast<std::size_t>(i)];
    const int out_w = shape.dims[static_cast<std::size_t>(i) + 1];
    const int h = out_w / 2;
    const auto& rin = cache.r[static_cast<std::size_t>(i)];
    const auto& rout = cache.r[static_cast<std::size_t>(i) + 1];
    const bool need_din = i > 0;
    std::vector<double> din(need_din ? static_cast<std::size_t>(T) * static_cast<std::size_t>(in_w) : 0, 0.0);
    std::vector<double> carry(static_cast<std::size_t>(h)), da(static_cast<std::size_t>(h));

    for (int dir = 0; dir < 2; ++dir) {
      const auto& pre = dir == 0 ? cache.pre_fwd[static_cast<std::size_t>(i)] : cache.pre_bwd[static_cast<std::size_t>(i)];
      std::fill(carry.begin(), carry.end(), 0.0);
      for (int k = 0; k < T; ++k) {
        // Reverse of the direction's processing order.
        const int tau = dir == 0 ? T - 1 - k : k;
        const int q = tau % P;
        const int qs = dir == 0 ? (q + P - 1) % P : (q + 1) % P;
        const int nb = dir == 0 ? tau - 1 : tau + 1;
        const bool has_nb = nb >= 0 && nb < T;
        const auto& cin = L.cell(i, q, dir);
        const auto& cst = L.cell(i, qs, dir);
        const double* a = pre.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(h);
        const double* dr = dout.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(out_w) + dir * h;
        for (int r = 0; r < h; ++r)
          da[static_cast<std::size_t>(r)] = a[r] > 0.0 ? dr[r] + carry[static_cast<std::size_t>(r)] : 0.0;
        const double* x = rin.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(in_w);
        double* dx = need_din ? din.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(in_w) : nullptr;
        const double* hn =
            has_nb ? rout.data() + static_cast<std::size_t>(nb) * static_cast<std::size_t>(out_w) + dir * h : nullptr;
        std::fill(carry.begin(), carry.end(), 0.0);
        for (int r = 0; r < h; ++r) {
          const double d = da[static_cast<std::size_t>(r)];
          if (d == 0.0) continue;
          const auto wi = cin.w_in + static_cast<std::size_t>(r) * static_cast<std::size_t>(in_w);
          for (int c = 0; c < in_w; ++c) g[wi + static_cast<std::size_t>(c)] += d * x[c];
          if (dx)
            for (int c = 0; c < in_w; ++c) dx[c] += p[wi + static_cast<std::size_t>(c)] * d;
          g[cin.b_in + static_cast<std::size_t>(r)] += d;
          g[cst.b + static_cast<std::size_t>(r)] += d;
          if (!has_nb) continue;
          const auto ws = cst.w + static_cast<std::size_t>(r) * static_cast<std::size_t>(h);
          for (int c = 0; c < h; ++c) {
            g[ws + static_cast<std::size_t>(c)] += d * hn[c];
            carry[static_cast<std::size_t>(c)] += p[ws + static_cast<std::size_t>(c)] * d;
          }
        }
      }
    }
    dout = std::move(din);
  }
}

template <class Fn>
void for_groups(int items, Exec exec, Fn&& fn) {
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static, 1)
    for (int gi = 0; gi < kGroups; ++gi) fn(gi, gi * items / kGroups, (gi + 1) * items / kGroups);
  } else {
    for (int gi = 0; gi < kGroups; ++gi) fn(gi, gi * items / kGroups, (gi + 1) * items / kGroups);
  }
}

LossResult reduce_losses(const std::vector<LossResult>& parts) {
  LossResult out;
  for (const auto& l : parts) {
    out.bits += l.bits;
    out.clamped += l.clamped;
    out.targets += l.targets;
  }
  if (out.targets > 0) out.bits /= static_cast<double>(out.targets);
  return out;
}

std::int64_t total_targets(std::span<const LabeledSequence> batch) {
  std::int64_t n = 0;
  for (const auto& s : batch) n += s.inputs.target_count();
  return n;
}

}  // namespace

LossResult rnn_loss(const RnnModel& model, std::span<const LabeledSequence> batch, Exec exec) {
  std::vector<LossResult> parts(kGroups);
  const int items = static_cast<int>(batch.size());
  for_groups(items, exec, [&](int gi, int lo, int hi) {
    for (int b = lo; b < hi; ++b) {
      const auto& seq = batch[static_cast<std::size_t>(b)];
      const auto l = sequence_loss(model, seq, rnn_forward(model, seq.inputs), 0.0, nullptr);
      parts[static_cast<std::size_t>(gi)].bits += l.bits;
      parts[static_cast<std::size_t>(gi)].clamped += l.clamped;
      parts[static_cast<std::size_t>(gi)].targets += l.targets;
    }
  });
  return reduce_losses(parts);
}

GradientResult rnn_gradient(const RnnModel& model, std::span<const LabeledSequence> batch, Exec exec) {
  const auto size = model.parameter_count();
  const auto n = total_targets(batch);
  if (n == 0) throw ConfigError("rnn_gradient: empty batch");
  const double scale = 1.0 / (static_cast<double>(n) * std::numbers::ln2);
  std::vector<std::vector<double>> grads(kGroups);
  std::vector<LossResult> parts(kGroups);
  const int items = static_cast<int>(batch.size());
  for_groups(items, exec, [&](int gi, int lo, int hi) {
    auto& g = grads[static_cast<std::size_t>(gi)];
    g.assign(size, 0.0);
    for (int b = lo; b < hi; ++b)
      accumulate_gradient(model, batch[static_cast<std::size_t>(b)], scale, g, parts[static_cast<std::size_t>(gi)]);
  });
  GradientResult res;
  res.grad.assign(size, 0.0);
  for (const auto& g : grads)
    for (std::size_t k = 0; k < size; ++k) res.grad[k] += g[k];
  for (std::size_t k = 0; k < size; ++k)
    if (!std::isfinite(res.grad[k])) throw NumericError("non-finite gradient at " + model.layout().tensor_name(k));
  res.loss = reduce_losses(parts);
  return res;
}

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ConfigError("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * grad[k];
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * grad[k] * grad[k];
    params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

InputNormalization estimate_normalization(const DiscreteChannel& chan, std::uint64_t seed, int symbols, Exec exec) {
  const auto block = draw_block(chan, symbols, seed, exec);
  InputNormalization norm;
  double sum = 0.0;
  for (double v : block.y) sum += v;
  norm.obs_mean = sum / static_cast<double>(block.y.size());
  double var = 0.0;
  for (double v : block.y) var += (v - norm.obs_mean) * (v - norm.obs_mean);
  var /= static_cast<double>(block.y.size());
  norm.obs_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  const auto pts = chan.alphabet().points();
  const double rms = std::sqrt(chan.alphabet().mean_energy());
  for (double a : pts) norm.symbol_values.push_back(rms > 0.0 ? a / rms : a);
  return norm;
}

std::vector<LabeledSequence> make_training_batch(const DiscreteChannel& chan, const RnnShape& shape,
                                                 const InputNormalization& norm, const TrainConfig& cfg,
                                                 std::uint64_t seed, Exec exec) {
  cfg.validate(shape);
  const int per_seq = cfg.targets_per_sequence(shape);
  const int n = cfg.batch * per_seq * shape.stages;
  const auto block = draw_block(chan, n, seed, exec);
  const SicPlan plan(shape.stages, n);
  const StageView view(plan, shape.stage, block.x);
  std::vector<LabeledSequence> batch(static_cast<std::size_t>(cfg.batch));
  for (int b = 0; b < cfg.batch; ++b) {
    auto& seq = batch[static_cast<std::size_t>(b)];
    seq.inputs = assemble_inputs(block.y, view, shape, norm, b * per_seq + 1, per_seq);
    for (int k : seq.inputs.targets) seq.labels.push_back(block.x[static_cast<std::size_t>(k - 1)]);
  }
  return batch;
}

std::string TrainLog::to_csv() const {
  std::string out = "iter,loss_bits,grad_norm,wall_ms\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.10f,%.10e,%.3f\n", r.iter, r.loss_bits, r.grad_norm, r.wall_ms);
    out += line;
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << to_csv();
}

TrainResult train_stage(const DiscreteChannel& chan, const RnnShape& shape, const TrainConfig& cfg,
                        const RnnModel* warm, Exec exec) {
  shape.validate();
  cfg.validate(shape);
  if (shape.alphabet_size != chan.alphabet().size()) throw ConfigError("rnn alphabet size does not match the channel");
  if (shape.obs_stride != chan.obs_per_symbol()) throw ConfigError("rnn observation stride does not match the channel");

  TrainResult res;
  const auto norm = estimate_normalization(chan, derive_seed(cfg.seed, {1}), 8192, exec);
  std::optional<RnnModel> loaded;
  if (!warm && cfg.warm_start) {
    auto bin = *cfg.warm_start;
    bin += ".bin";
    if (std::filesystem::exists(bin)) {
      loaded = RnnModel::load(*cfg.warm_start);
      warm = &*loaded;
    } else {
      res.warnings.push_back("warm-start checkpoint " + cfg.warm_start->string() + " not found; cold start");
    }
  }
  if (warm) {
    if (!(warm->shape() == shape)) throw ConfigError("warm-start model shape does not match");
    res.model = *warm;
    res.model.set_normalization(norm);
    res.warm_started = true;
  } else {
    res.model = RnnModel::initialized(shape, norm, derive_seed(cfg.seed, {0}));
  }

  const int m_bits = std::countr_zero(static_cast<unsigned>(shape.alphabet_size));
  const double diverge_bits = 4.0 * std::max(1, m_bits);
  Adam adam(res.model.parameter_count(), cfg.learning_rate);
  int above = 0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch =
        make_training_batch(chan, shape, norm, cfg, derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(it)}), exec);
    const auto gr = rnn_gradient(res.model, batch, exec);
    double norm2 = 0.0;
    for (double g : gr.grad) norm2 += g * g;
    adam.step(res.model.params(), gr.grad);
    res.clamped += gr.loss.clamped;
    TrainLogRow row;
    row.iter = it;
    row.loss_bits = gr.loss.bits;
    row.grad_norm = std::sqrt(norm2);
    if (cfg.record_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.log.rows.push_back(row);
    above = gr.loss.bits > diverge_bits ? above + 1 : 0;
    if (above >= cfg.divergence_window)
      throw NumericError("training diverged at iteration " + std::to_string(it) + ": loss " +
                         std::to_string(gr.loss.bits) + " bits above " + std::to_string(diverge_bits) + " for " +
                         std::to_string(above) + " steps (grad norm " + std::to_string(row.grad_norm) + ")");
  }
  return res;
}

}  // namespace sicnn
