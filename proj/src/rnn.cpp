#include "sicnn/rnn.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace sicnn {

using nlohmann::json;

void RnnShape::validate() const {
  if (dims.size() < 2) throw ConfigError("rnn.dims needs at least one recurrent layer and the output layer");
  if (l_y < 1 || l_ic < 0) throw ConfigError("rnn: L_Y must be >= 1 and L_IC >= 0");
  if (dims[0] != l_y + l_ic) throw ConfigError("rnn.dims[0] must equal L_Y + L_IC");
  for (std::size_t i = 1; i < dims.size(); ++i)
    if (dims[i] < 2 || dims[i] % 2 != 0) throw ConfigError("rnn.dims: recurrent output widths must be even and >= 2");
  if (stages < 1 || stage < 1 || stage > stages) throw ConfigError("rnn: stage must lie in 1..S");
  if (alphabet_size < 2) throw ConfigError("rnn: alphabet size must be >= 2");
  if (obs_stride < 1) throw ConfigError("rnn: observation stride must be >= 1");
}

ParamLayout::ParamLayout(const RnnShape& shape) : phases_(shape.phases()) {
  shape.validate();
  std::size_t off = 0;
  for (int i = 0; i + 1 < shape.layers(); ++i) {
    const int rows = shape.dims[static_cast<std::size_t>(i) + 1] / 2;
    const int cols = shape.dims[static_cast<std::size_t>(i)];
    for (int q = 0; q < phases_; ++q)
      for (int d = 0; d < 2; ++d) {
        Cell c{};
        c.rows = rows;
        c.cols = cols;
        c.w_in = off;
        off += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        c.b_in = off;
        off += static_cast<std::size_t>(rows);
        c.w = off;
        off += static_cast<std::size_t>(rows) * static_cast<std::size_t>(rows);
        c.b = off;
        off += static_cast<std::size_t>(rows);
        cells_.push_back(c);
      }
  }
  m_ = shape.alphabet_size;
  last_ = shape.dims.back();
  w_out_ = off;
  off += static_cast<std::size_t>(m_) * static_cast<std::size_t>(last_);
  b_out_ = off;
  off += static_cast<std::size_t>(m_);
  size_ = off;
}

const ParamLayout::Cell& ParamLayout::cell(int layer, int phase, int dir) const {
  return cells_[(static_cast<std::size_t>(layer) * static_cast<std::size_t>(phases_) + static_cast<std::size_t>(phase)) *
                    2 +
                static_cast<std::size_t>(dir)];
}

std::string ParamLayout::tensor_name(std::size_t i) const {
  if (i >= b_out_) return "b_out[" + std::to_string(i - b_out_) + "]";
  if (i >= w_out_) return "W_out[" + std::to_string(i - w_out_) + "]";
  for (std::size_t k = cells_.size(); k-- > 0;) {
    const auto& c = cells_[k];
    if (i < c.w_in) continue;
    const auto layer = k / (2 * static_cast<std::size_t>(phases_));
    const auto phase = (k / 2) % static_cast<std::size_t>(phases_);
    const std::string where = "[layer " + std::to_string(layer + 1) + ", phase " + std::to_string(phase) + ", " +
                              (k % 2 == 0 ? "fwd" : "bwd") + "]";
    if (i >= c.b) return "b" + where;
    if (i >= c.w) return "W" + where;
    if (i >= c.b_in) return "b_in" + where;
    return "W_in" + where;
  }
  return "?";
}

RnnModel::RnnModel(RnnShape shape, InputNormalization norm)
    : shape_(std::move(shape)), layout_(shape_), norm_(std::move(norm)), params_(layout_.size(), 0.0) {
  if (!norm_.symbol_values.empty() && static_cast<int>(norm_.symbol_values.size()) != shape_.alphabet_size)
    throw ConfigError("rnn: symbol encoding size does not match the alphabet");
}

RnnModel RnnModel::initialized(RnnShape shape, InputNormalization norm, std::uint64_t seed) {
  RnnModel model(std::move(shape), std::move(norm));
  Rng rng(seed);
  auto fill = [&](std::size_t off, std::size_t count, int fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    for (std::size_t k = 0; k < count; ++k) model.params_[off + k] = u(rng);
  };
  const auto& L = model.layout_;
  const auto& s = model.shape_;
  for (int i = 0; i + 1 < s.layers(); ++i)
    for (int q = 0; q < s.phases(); ++q)
      for (int d = 0; d < 2; ++d) {
        const auto& c = L.cell(i, q, d);
        const auto r = static_cast<std::size_t>(c.rows);
        fill(c.w_in, r * static_cast<std::size_t>(c.cols), c.cols);
        fill(c.b_in, r, c.cols);
        fill(c.w, r * r, c.rows);
        fill(c.b, r, c.rows);
      }
  const auto m = static_cast<std::size_t>(s.alphabet_size);
  fill(L.w_out(), m * static_cast<std::size_t>(s.dims.back()), s.dims.back());
  fill(L.b_out(), m, s.dims.back());
  return model;
}

std::size_t classic_recurrent_parameter_count(const std::vector<int>& dims) {
  std::size_t total = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto h = static_cast<std::size_t>(dims[i + 1] / 2);
    total += 2 * (h * static_cast<std::size_t>(dims[i]) + h + h * h + h);
  }
  return total;
}

namespace {

constexpr char kMagic[8] = {'S', 'I', 'C', 'N', 'N', 'R', 'N', 'N'};
constexpr double kFormatVersion = 1.0;

json shape_json(const RnnShape& s) {
  return json{{"dims", s.dims},         {"l_y", s.l_y},
              {"l_ic", s.l_ic},         {"stages", s.stages},
              {"stage", s.stage},       {"alphabet_size", s.alphabet_size},
              {"obs_stride", s.obs_stride}, {"phases", s.phases()}};
}

}  // namespace

void RnnModel::save(const std::filesystem::path& stem, const std::string& provenance_json) const {
  std::string buf(kMagic, sizeof kMagic);
  std::vector<double> header{kFormatVersion, static_cast<double>(shape_.layers())};
  for (int d : shape_.dims) header.push_back(d);
  for (int v : {shape_.l_y, shape_.l_ic, shape_.stages, shape_.stage, shape_.alphabet_size, shape_.obs_stride,
                shape_.phases()})
    header.push_back(v);
  header.push_back(static_cast<double>(params_.size()));
  append_f64_le(buf, header);
  append_f64_le(buf, params_);
  auto bin = stem;
  bin += ".bin";
  std::ofstream os(bin, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + bin.string() + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));

  json side{{"format", "sicnn-rnn"},
            {"version", static_cast<int>(kFormatVersion)},
            {"shape", shape_json(shape_)},
            {"normalization",
             {{"obs_mean", norm_.obs_mean}, {"obs_scale", norm_.obs_scale}, {"symbol_values", norm_.symbol_values}}},
            {"provenance", json::parse(provenance_json)}};
  auto js = stem;
  js += ".json";
  std::ofstream ojs(js);
  if (!ojs) throw std::runtime_error("cannot open " + js.string() + " for writing");
  ojs << side.dump(2) << '\n';
}

RnnModel RnnModel::load(const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  std::ifstream is(bin, std::ios::binary);
  if (!is) throw ConfigError("missing model checkpoint " + bin.string());
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof kMagic || buf.compare(0, sizeof kMagic, std::string(kMagic, sizeof kMagic)) != 0)
    throw ConfigError("not a model checkpoint: " + bin.string());
  const auto v = parse_f64_le(std::span<const char>(buf.data() + sizeof kMagic, buf.size() - sizeof kMagic));
  auto at = [&](std::size_t i) {
    if (i >= v.size()) throw ConfigError("truncated model checkpoint " + bin.string());
    return v[i];
  };
  if (at(0) != kFormatVersion) throw ConfigError("unsupported checkpoint version in " + bin.string());
  RnnShape shape;
  const auto layers = static_cast<std::size_t>(at(1));
  std::size_t k = 2;
  for (std::size_t i = 0; i < layers; ++i) shape.dims.push_back(static_cast<int>(at(k++)));
  shape.l_y = static_cast<int>(at(k++));
  shape.l_ic = static_cast<int>(at(k++));
  shape.stages = static_cast<int>(at(k++));
  shape.stage = static_cast<int>(at(k++));
  shape.alphabet_size = static_cast<int>(at(k++));
  shape.obs_stride = static_cast<int>(at(k++));
  if (static_cast<int>(at(k++)) != shape.phases()) throw ConfigError("inconsistent phase count in " + bin.string());
  const auto count = static_cast<std::size_t>(at(k++));

  auto js = stem;
  js += ".json";
  std::ifstream ijs(js);
  if (!ijs) throw ConfigError("missing model sidecar " + js.string());
  const json side = json::parse(ijs);
  InputNormalization norm;
  norm.obs_mean = side.at("normalization").at("obs_mean").get<double>();
  norm.obs_scale = side.at("normalization").at("obs_scale").get<double>();
  norm.symbol_values = side.at("normalization").at("symbol_values").get<std::vector<double>>();

  RnnModel model(shape, norm);
  if (count != model.params_.size() || v.size() != k + count)
    throw ConfigError("parameter count mismatch in " + bin.string());
  std::copy(v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), model.params_.begin());
  for (double p : model.params_) require_finite(p, "checkpoint " + bin.string());
  return model;
}

InputTensor assemble_inputs(std::span<const double> y, const StageView& view, const RnnShape& shape,
                            const InputNormalization& norm, int t_first, int count) {
  shape.validate();
  const auto& plan = view.plan();
  if (plan.stages() != shape.stages || view.stage() != shape.stage)
    throw ConfigError("assemble_inputs: stage layout does not match the model shape");
  const int n = plan.block_symbols();
  if (y.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(shape.obs_stride))
    throw ConfigError("assemble_inputs: observation length does not match the block");
  if (shape.l_ic > 0 && static_cast<int>(norm.symbol_values.size()) != shape.alphabet_size)
    throw ConfigError("assemble_inputs: missing known-symbol encoding");
  const int per_stage = plan.per_stage();
  if (count < 0) count = per_stage - t_first + 1;
  if (t_first < 1 || count < 0 || t_first + count - 1 > per_stage)
    throw ConfigError("assemble_inputs: target range outside the stage");

  InputTensor in;
  in.phases = shape.phases();
  in.width = shape.dims[0];
  in.steps = count * in.phases;
  in.data.assign(static_cast<std::size_t>(in.steps) * static_cast<std::size_t>(in.width), 0.0);
  in.targets.reserve(static_cast<std::size_t>(count));
  const auto len = static_cast<long long>(y.size());
  const double inv_scale = 1.0 / norm.obs_scale;
  for (int t = t_first; t < t_first + count; ++t) {
    for (int j = shape.stage; j <= shape.stages; ++j) {
      const int kap = kappa(j, t, shape.stages);
      if (j == shape.stage) in.targets.push_back(kap);
      const auto step = static_cast<std::size_t>((t - t_first) * in.phases + (j - shape.stage));
      double* r = in.data.data() + step * static_cast<std::size_t>(in.width);
      // Observation window, 1-based indices N_os * kappa + u.
      const long long centre = static_cast<long long>(shape.obs_stride) * kap;
      for (int u = -shape.delta(); u <= shape.nabla(); ++u) {
        const long long idx = centre + u;
        r[u + shape.delta()] = (idx < 1 || idx > len) ? 0.0 : (y[static_cast<std::size_t>(idx - 1)] - norm.obs_mean) * inv_scale;
      }
      if (shape.l_ic == 0) continue;
      const auto known = ic_window(kap, view.known(), shape.l_ic);
      for (int k = 0; k < shape.l_ic; ++k) {
        const int serial = known[static_cast<std::size_t>(k)];
        r[shape.l_y + k] =
            serial == 0 ? 0.0 : norm.symbol_values[static_cast<std::size_t>(view.symbol_at(serial))];
      }
    }
  }
  return in;
}

namespace {

// y = W x + b, W rows x cols row-major. Returns the multiplication count.
std::int64_t affine(const double* w, const double* b, const double* x, int rows, int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
    double acc = b[r];
    for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
  return static_cast<std::int64_t>(rows) * cols;
}

}  // namespace

ForwardResult rnn_forward(const RnnModel& model, const InputTensor& inputs, ForwardCache* cache) {
  const auto& shape = model.shape();
  const auto& L = model.layout();
  const auto p = model.params();
  const int P = shape.phases();
  const int T = inputs.steps;
  if (inputs.width != shape.dims[0] || inputs.phases != P || T % P != 0)
    throw ConfigError("rnn_forward: inputs do not match the model shape");
  const int layers = shape.layers() - 1;

  ForwardResult res;
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.r.assign(static_cast<std::size_t>(layers) + 1, {});
  c.pre_fwd.assign(static_cast<std::size_t>(layers), {});
  c.pre_bwd.assign(static_cast<std::size_t>(layers), {});
  c.r[0] = inputs.data;

  std::vector<double> tmp;
  for (int i = 0; i < layers; ++i) {
    const int in_w = shape.dims[static_cast<std::size_t>(i)];
    const int out_w = shape.dims[static_cast<std::size_t>(i) + 1];
    const int h = out_w / 2;
    const auto& rin = c.r[static_cast<std::size_t>(i)];
    auto& rout = c.r[static_cast<std::size_t>(i) + 1];
    auto& af = c.pre_fwd[static_cast<std::size_t>(i)];
    auto& ab = c.pre_bwd[static_cast<std::size_t>(i)];
    rout.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(out_w), 0.0);
    af.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(h), 0.0);
    ab.assign(static_cast<std::size_t>(T) * static_cast<std::size_t>(h), 0.0);
    tmp.assign(static_cast<std::size_t>(h), 0.0);
    const std::vector<double> zero(static_cast<std::size_t>(h), 0.0);

    // Forward path; the state map of step tau uses the previous step's phase.
    for (int tau = 0; tau < T; ++tau) {
      const int q = tau % P;
      const int qp = (q + P - 1) % P;
      const auto& cin = L.cell(i, q, 0);
      const auto& cst = L.cell(i, qp, 0);
      double* a = af.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(h);
      const double* prev = tau == 0 ? zero.data() : rout.data() + static_cast<std::size_t>(tau - 1) * static_cast<std::size_t>(out_w);
      res.multiplications += affine(&p[cin.w_in], &p[cin.b_in],
                                    rin.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(in_w), h, in_w, a);
      res.multiplications += affine(&p[cst.w], &p[cst.b], prev, h, h, tmp.data());
      double* out = rout.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(out_w);
      for (int k = 0; k < h; ++k) {
        a[k] += tmp[static_cast<std::size_t>(k)];
        out[k] = a[k] > 0.0 ? a[k] : 0.0;
      }
    }
    // Backward path, mirrored; the step after the last has phase 0.
    for (int tau = T - 1; tau >= 0; --tau) {
      const int q = tau % P;
      const int qn = (q + 1) % P;
      const auto& cin = L.cell(i, q, 1);
      const auto& cst = L.cell(i, qn, 1);
      double* a = ab.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(h);
      const double* next =
          tau == T - 1 ? zero.data() : rout.data() + static_cast<std::size_t>(tau + 1) * static_cast<std::size_t>(out_w) + h;
      res.multiplications += affine(&p[cin.w_in], &p[cin.b_in],
                                    rin.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(in_w), h, in_w, a);
      res.multiplications += affine(&p[cst.w], &p[cst.b], next, h, h, tmp.data());
      double* out = rout.data() + static_cast<std::size_t>(tau) * static_cast<std::size_t>(out_w) + h;
      for (int k = 0; k < h; ++k) {
        a[k] += tmp[static_cast<std::size_t>(k)];
        out[k] = a[k] > 0.0 ? a[k] : 0.0;
      }
    }
  }

  const int m = shape.alphabet_size;
  const int last = shape.dims.back();
  const auto& rl = c.r.back();
  const int N = T / P;
  res.logits.assign(static_cast<std::size_t>(N) * static_cast<std::size_t>(m), 0.0);
  for (int t = 0; t < N; ++t) {
    const auto tau = static_cast<std::size_t>(t) * static_cast<std::size_t>(P);
    double* z = res.logits.data() + static_cast<std::size_t>(t) * static_cast<std::size_t>(m);
    res.multiplications += affine(&p[L.w_out()], &p[L.b_out()], rl.data() + tau * static_cast<std::size_t>(last), m, last, z);
    for (int a = 0; a < m; ++a)
      if (!std::isfinite(z[a])) throw NumericError("rnn_forward: non-finite output at step " + std::to_string(tau));
  }
  return res;
}

AppMatrix rnn_app(const RnnModel& model, const InputTensor& inputs) {
  const auto res = rnn_forward(model, inputs);
  return AppMatrix::from_log_weights(inputs.target_count(), model.shape().alphabet_size, res.logits);
}

std::int64_t count_rnn_multiplications(const RnnShape& shape) {
  shape.validate();
  RnnModel model(shape, InputNormalization{});
  constexpr int kTargets = 4;
  InputTensor in;
  in.phases = shape.phases();
  in.width = shape.dims[0];
  in.steps = kTargets * in.phases;
  in.data.assign(static_cast<std::size_t>(in.steps) * static_cast<std::size_t>(in.width), 0.0);
  return rnn_forward(model, in).multiplications / kTargets;
}

std::int64_t rnn_multiplications_closed_form(const RnnShape& shape) {
  shape.validate();
  std::int64_t rec = 0;
  for (std::size_t i = 0; i + 1 < shape.dims.size(); ++i) {
    const std::int64_t a = shape.dims[i];
    const std::int64_t b = shape.dims[i + 1];
    rec += a * b + b * b / 2;
  }
  return shape.phases() * rec + static_cast<std::int64_t>(shape.dims.back()) * shape.alphabet_size;
}

}  // namespace sicnn
