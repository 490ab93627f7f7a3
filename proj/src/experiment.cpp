#include "sicnn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sicnn/rates.hpp"

namespace sicnn {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!ok.count(key)) throw ConfigError((path.empty() ? key : path + "." + key) + ": unknown key");
  }
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_double(const json& obj, const std::string& path, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key) + ": expected a number");
  return v.get<double>();
}

long long get_int(const json& obj, const std::string& path, const char* key, long long fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<long long>(v.get<double>());
  throw ConfigError(join(path, key) + ": expected an integer");
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(join(path, key) + ": expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key) + ": expected a string");
  return v.get<std::string>();
}

template <class E>
E get_enum(const json& obj, const std::string& path, const char* key, E fallback,
           const std::map<std::string, E>& names) {
  if (!obj.contains(key)) return fallback;
  const auto s = get_string(obj, path, key, "");
  const auto it = names.find(s);
  if (it == names.end()) throw ConfigError(join(path, key) + ": unknown value '" + s + "'");
  return it->second;
}

template <class E>
std::string enum_name(E value, const std::map<std::string, E>& names) {
  for (const auto& [k, v] : names)
    if (v == value) return k;
  return "?";
}

const std::map<std::string, AlphabetKind> kAlphabetNames{{"unipolar_pam", AlphabetKind::unipolar_pam},
                                                         {"bipolar_ask", AlphabetKind::bipolar_ask}};
const std::map<std::string, Nonlinearity::Kind> kNonlinNames{{"identity", Nonlinearity::Kind::identity},
                                                             {"square_law", Nonlinearity::Kind::square_law},
                                                             {"rapp", Nonlinearity::Kind::rapp}};
const std::map<std::string, NoiseKind> kNoiseNames{{"real", NoiseKind::real}, {"complex", NoiseKind::complex}};
const std::map<std::string, Precoding> kPrecodingNames{{"none", Precoding::none},
                                                       {"differential", Precoding::differential}};
const std::map<std::string, ReceiverKind> kReceiverNames{{"brickwall", ReceiverKind::brickwall},
                                                         {"identity", ReceiverKind::identity}};
const std::map<std::string, DetectorKind> kDetectorNames{{"fba", DetectorKind::fba},
                                                         {"gibbs", DetectorKind::gibbs},
                                                         {"rnn", DetectorKind::rnn},
                                                         {"uniform", DetectorKind::uniform}};

double parse_beta2(const json& v) {
  const std::string key = "channel.fiber.beta2";
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ConfigError(key + ": expected a number or a string with unit");
  std::istringstream is(v.get<std::string>());
  double value = 0.0;
  std::string unit, extra;
  if (!(is >> value)) throw ConfigError(key + ": cannot read a value from '" + v.get<std::string>() + "'");
  if (!(is >> unit) || (is >> extra)) throw ConfigError(key + ": expected '<value> <unit>'");
  static const std::map<std::string, double> scale{{"s^2/km", 1.0}, {"ps^2/km", 1e-24}, {"s^2/m", 1e3}};
  const auto it = scale.find(unit);
  if (it == scale.end()) throw ConfigError(key + ": unknown unit '" + unit + "'");
  return value * it->second;
}

ChannelConfig parse_channel(const json& j) {
  const std::string p = "channel";
  check_keys(j, p,
             {"alphabet", "symbol_rate", "n_os", "n_sim", "nonlinearity", "fiber", "noise", "noise_variance",
              "precoding", "pulse_taps", "custom_pulse", "receiver", "receiver_taps"});
  ChannelConfig c;
  if (j.contains("alphabet")) {
    const auto& a = j.at("alphabet");
    check_keys(a, "channel.alphabet", {"kind", "size"});
    const auto kind = get_enum(a, "channel.alphabet", "kind", AlphabetKind::bipolar_ask, kAlphabetNames);
    const auto size = get_int(a, "channel.alphabet", "size", 4);
    try {
      c.alphabet = Alphabet(kind, static_cast<int>(size));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("channel.alphabet.size: ") + e.what());
    }
  }
  c.symbol_rate = get_double(j, p, "symbol_rate", c.symbol_rate);
  c.n_os = static_cast<int>(get_int(j, p, "n_os", c.n_os));
  c.n_sim = static_cast<int>(get_int(j, p, "n_sim", c.n_sim));
  if (j.contains("nonlinearity")) {
    const auto& nl = j.at("nonlinearity");
    const std::string q = "channel.nonlinearity";
    check_keys(nl, q, {"kind", "rapp_smoothness", "rapp_saturation"});
    c.nonlinearity.kind = get_enum(nl, q, "kind", c.nonlinearity.kind, kNonlinNames);
    c.nonlinearity.rapp_smoothness = get_double(nl, q, "rapp_smoothness", c.nonlinearity.rapp_smoothness);
    c.nonlinearity.rapp_saturation = get_double(nl, q, "rapp_saturation", c.nonlinearity.rapp_saturation);
  }
  if (j.contains("fiber") && !j.at("fiber").is_null()) {
    const auto& f = j.at("fiber");
    const std::string q = "channel.fiber";
    check_keys(f, q, {"length_km", "beta2", "wavelength_nm"});
    FiberConfig fc;
    fc.length_km = get_double(f, q, "length_km", fc.length_km);
    if (f.contains("beta2")) fc.beta2_s2_per_km = parse_beta2(f.at("beta2"));
    fc.wavelength_nm = get_double(f, q, "wavelength_nm", fc.wavelength_nm);
    c.fiber = fc;
  }
  c.noise = get_enum(j, p, "noise", c.noise, kNoiseNames);
  c.noise_variance = get_double(j, p, "noise_variance", c.noise_variance);
  c.precoding = get_enum(j, p, "precoding", c.precoding, kPrecodingNames);
  c.pulse_taps = static_cast<int>(get_int(j, p, "pulse_taps", c.pulse_taps));
  if (j.contains("custom_pulse")) {
    const auto& cp = j.at("custom_pulse");
    if (!cp.is_array()) throw ConfigError("channel.custom_pulse: expected an array");
    for (const auto& t : cp) {
      if (t.is_number()) {
        c.custom_pulse.emplace_back(t.get<double>(), 0.0);
      } else if (t.is_array() && t.size() == 2 && t[0].is_number() && t[1].is_number()) {
        c.custom_pulse.emplace_back(t[0].get<double>(), t[1].get<double>());
      } else {
        throw ConfigError("channel.custom_pulse: taps must be numbers or [re, im] pairs");
      }
    }
  }
  c.receiver = get_enum(j, p, "receiver", c.receiver, kReceiverNames);
  c.receiver_taps = static_cast<int>(get_int(j, p, "receiver_taps", c.receiver_taps));
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("channel: ") + e.what());
  }
  return c;
}

json emit_channel(const ChannelConfig& c) {
  json j{{"alphabet", {{"kind", enum_name(c.alphabet.kind(), kAlphabetNames)}, {"size", c.alphabet.size()}}},
         {"symbol_rate", c.symbol_rate},
         {"n_os", c.n_os},
         {"n_sim", c.n_sim},
         {"nonlinearity",
          {{"kind", enum_name(c.nonlinearity.kind, kNonlinNames)},
           {"rapp_smoothness", c.nonlinearity.rapp_smoothness},
           {"rapp_saturation", c.nonlinearity.rapp_saturation}}},
         {"noise", enum_name(c.noise, kNoiseNames)},
         {"noise_variance", c.noise_variance},
         {"precoding", enum_name(c.precoding, kPrecodingNames)},
         {"pulse_taps", c.pulse_taps},
         {"receiver", enum_name(c.receiver, kReceiverNames)},
         {"receiver_taps", c.receiver_taps}};
  if (c.fiber)
    j["fiber"] = {{"length_km", c.fiber->length_km},
                  {"beta2", c.fiber->beta2_s2_per_km},
                  {"wavelength_nm", c.fiber->wavelength_nm}};
  else
    j["fiber"] = nullptr;
  if (!c.custom_pulse.empty()) {
    json taps = json::array();
    for (const auto& t : c.custom_pulse) taps.push_back({t.real(), t.imag()});
    j["custom_pulse"] = taps;
  }
  return j;
}

DetectorConfig parse_detector(const json& j) {
  const std::string p = "detector";
  if (!j.is_object()) throw ConfigError("detector: expected an object");
  DetectorConfig d;
  d.kind = get_enum(j, p, "kind", d.kind, kDetectorNames);
  switch (d.kind) {
    case DetectorKind::fba:
      check_keys(j, p, {"kind", "memory", "table_budget"});
      d.memory = static_cast<int>(get_int(j, p, "memory", d.memory));
      d.table_budget = static_cast<std::size_t>(get_int(j, p, "table_budget", static_cast<long long>(d.table_budget)));
      break;
    case DetectorKind::gibbs:
      check_keys(j, p, {"kind", "memory", "iterations", "chains", "burn_in"});
      d.gibbs.memory = static_cast<int>(get_int(j, p, "memory", d.gibbs.memory));
      d.gibbs.iterations = static_cast<int>(get_int(j, p, "iterations", d.gibbs.iterations));
      d.gibbs.chains = static_cast<int>(get_int(j, p, "chains", d.gibbs.chains));
      d.gibbs.burn_in = static_cast<int>(get_int(j, p, "burn_in", d.gibbs.burn_in));
      d.memory = d.gibbs.memory;
      d.gibbs.validate();
      break;
    case DetectorKind::rnn: {
      check_keys(j, p, {"kind", "dims", "l_y", "l_ic", "warm_start", "train"});
      if (!j.contains("dims") || !j.at("dims").is_array()) throw ConfigError("detector.dims: expected an array");
      for (const auto& v : j.at("dims")) {
        if (!v.is_number_integer()) throw ConfigError("detector.dims: expected integers");
        d.dims.push_back(v.get<int>());
      }
      d.l_y = static_cast<int>(get_int(j, p, "l_y", 0));
      d.l_ic = static_cast<int>(get_int(j, p, "l_ic", 0));
      d.warm_start = get_bool(j, p, "warm_start", d.warm_start);
      if (j.contains("train")) {
        const auto& t = j.at("train");
        const std::string q = "detector.train";
        check_keys(t, q, {"learning_rate", "iterations", "batch", "t_rnn", "divergence_window", "record_wall_time"});
        d.train.learning_rate = get_double(t, q, "learning_rate", d.train.learning_rate);
        d.train.iterations = static_cast<int>(get_int(t, q, "iterations", d.train.iterations));
        d.train.batch = static_cast<int>(get_int(t, q, "batch", d.train.batch));
        d.train.t_rnn = static_cast<int>(get_int(t, q, "t_rnn", d.train.t_rnn));
        d.train.divergence_window = static_cast<int>(get_int(t, q, "divergence_window", d.train.divergence_window));
        d.train.record_wall_time = get_bool(t, q, "record_wall_time", d.train.record_wall_time);
      }
      break;
    }
    case DetectorKind::uniform:
      check_keys(j, p, {"kind"});
      break;
  }
  return d;
}

json emit_detector(const DetectorConfig& d) {
  json j{{"kind", enum_name(d.kind, kDetectorNames)}};
  switch (d.kind) {
    case DetectorKind::fba:
      j["memory"] = d.memory;
      j["table_budget"] = d.table_budget;
      break;
    case DetectorKind::gibbs:
      j["memory"] = d.gibbs.memory;
      j["iterations"] = d.gibbs.iterations;
      j["chains"] = d.gibbs.chains;
      j["burn_in"] = d.gibbs.burn_in;
      break;
    case DetectorKind::rnn:
      j["dims"] = d.dims;
      j["l_y"] = d.l_y;
      j["l_ic"] = d.l_ic;
      j["warm_start"] = d.warm_start;
      j["train"] = {{"learning_rate", d.train.learning_rate},     {"iterations", d.train.iterations},
                    {"batch", d.train.batch},                     {"t_rnn", d.train.t_rnn},
                    {"divergence_window", d.train.divergence_window}, {"record_wall_time", d.train.record_wall_time}};
      break;
    case DetectorKind::uniform:
      break;
  }
  return j;
}

json emit_json(const ExperimentConfig& cfg, bool with_output) {
  json j{{"channel", emit_channel(cfg.channel)},
         {"sic", {{"stages", cfg.stages}}},
         {"detector", emit_detector(cfg.detector)},
         {"sweep", cfg.sweep},
         {"eval",
          {{"n_blk", cfg.eval.n_blk},
           {"n", cfg.eval.n},
           {"upper_bound", cfg.eval.upper_bound},
           {"ub_memory", cfg.eval.ub_memory}}},
         {"seed", cfg.seed}};
  if (with_output) j["output_dir"] = cfg.output_dir.generic_string();
  return j;
}

std::string ptx_tag(double ptx) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", ptx);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
}

std::uint64_t eval_seed(const ExperimentConfig& cfg, std::size_t sweep_index) {
  return derive_seed(cfg.seed, {100, static_cast<std::uint64_t>(sweep_index)});
}

}  // namespace

void ExperimentConfig::validate() const {
  channel.validate();
  if (stages < 1) throw ConfigError("sic.stages must be >= 1");
  if (sweep.empty()) throw ConfigError("sweep: at least one transmit power is required");
  if (eval.n_blk < 1) throw ConfigError("eval.n_blk must be >= 1");
  if (eval.n < stages || eval.n % stages != 0) throw ConfigError("eval.n must be a positive multiple of sic.stages");
  if (detector.kind == DetectorKind::rnn) {
    for (int s = 1; s <= stages; ++s) {
      const auto shape = rnn_shape(s);
      shape.validate();
      detector.train.validate(shape);
    }
    if (detector.warm_start && !std::is_sorted(sweep.begin(), sweep.end()))
      throw ConfigError("sweep: transmit powers must be ascending when warm starts are enabled");
  }
  if (detector.kind == DetectorKind::gibbs) detector.gibbs.validate();
}

RnnShape ExperimentConfig::rnn_shape(int stage) const {
  RnnShape s;
  s.dims = detector.dims;
  s.l_y = detector.l_y;
  s.l_ic = detector.l_ic;
  s.stages = stages;
  s.stage = stage;
  s.alphabet_size = channel.alphabet.size();
  s.obs_stride = (channel.noise == NoiseKind::complex ? 2 : 1) * channel.n_os;
  return s;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(j, "", {"channel", "sic", "detector", "sweep", "eval", "seed", "output_dir"});
  ExperimentConfig cfg;
  if (j.contains("channel")) cfg.channel = parse_channel(j.at("channel"));
  if (j.contains("sic")) {
    check_keys(j.at("sic"), "sic", {"stages"});
    cfg.stages = static_cast<int>(get_int(j.at("sic"), "sic", "stages", 1));
  }
  if (j.contains("detector")) cfg.detector = parse_detector(j.at("detector"));
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    if (!s.is_array()) throw ConfigError("sweep: expected an array of transmit powers in dB");
    cfg.sweep.clear();
    for (const auto& v : s) {
      if (!v.is_number()) throw ConfigError("sweep: expected numbers");
      cfg.sweep.push_back(v.get<double>());
    }
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval", {"n_blk", "n", "upper_bound", "ub_memory"});
    cfg.eval.n_blk = static_cast<int>(get_int(e, "eval", "n_blk", cfg.eval.n_blk));
    cfg.eval.n = static_cast<int>(get_int(e, "eval", "n", cfg.eval.n));
    cfg.eval.upper_bound = get_bool(e, "eval", "upper_bound", cfg.eval.upper_bound);
    cfg.eval.ub_memory = static_cast<int>(get_int(e, "eval", "ub_memory", cfg.eval.ub_memory));
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  cfg.output_dir = get_string(j, "", "output_dir", cfg.output_dir.generic_string());
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string emit_experiment_config(const ExperimentConfig& cfg) { return emit_json(cfg, true).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(emit_json(cfg, false).dump()); }

std::filesystem::path run_directory(const ExperimentConfig& cfg) { return cfg.output_dir / config_hash(cfg); }

ChannelConfig channel_at(const ExperimentConfig& cfg, double ptx_db) {
  auto c = cfg.channel;
  c.ptx_db = ptx_db;
  return c;
}

std::filesystem::path model_stem(const ExperimentConfig& cfg, int stage, double ptx_db) {
  return run_directory(cfg) / "models" / ("stage" + std::to_string(stage) + "_ptx" + ptx_tag(ptx_db));
}

namespace {

void prepare_run_directory(const ExperimentConfig& cfg) {
  const auto dir = run_directory(cfg);
  std::filesystem::create_directories(dir);
  write_text(dir / "config.json", emit_experiment_config(cfg));
}

}  // namespace

CommandResult cmd_simulate(const ExperimentConfig& cfg, Exec exec) {
  cfg.validate();
  prepare_run_directory(cfg);
  const auto dir = run_directory(cfg) / "blocks";
  std::filesystem::create_directories(dir);
  CommandResult res;
  for (std::size_t i = 0; i < cfg.sweep.size(); ++i) {
    const auto ch = channel_at(cfg, cfg.sweep[i]);
    const DiscreteChannel chan(ch);
    const auto channel_json = emit_channel(ch).dump();
    for (int b = 0; b < cfg.eval.n_blk; ++b) {
      const auto block = draw_block(chan, cfg.eval.n, derive_seed(eval_seed(cfg, i), {static_cast<std::uint64_t>(b)}), exec);
      const auto stem = dir / ("ptx" + ptx_tag(cfg.sweep[i]) + "_blk" + std::to_string(b));
      save_block(stem, block, chan, channel_json);
      auto bin = stem;
      bin += ".f64";
      res.artifacts.push_back(bin);
    }
  }
  return res;
}

CommandResult cmd_train(const ExperimentConfig& cfg, Exec exec) {
  cfg.validate();
  if (cfg.detector.kind != DetectorKind::rnn) throw ConfigError("train: detector.kind must be rnn");
  prepare_run_directory(cfg);
  std::filesystem::create_directories(run_directory(cfg) / "models");
  CommandResult res;
  std::vector<std::size_t> order(cfg.sweep.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return cfg.sweep[a] < cfg.sweep[b]; });
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    const double ptx = cfg.sweep[i];
    const DiscreteChannel chan(channel_at(cfg, ptx));
    for (int s = 1; s <= cfg.stages; ++s) {
      auto tc = cfg.detector.train;
      tc.seed = derive_seed(cfg.seed, {200, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(s)});
      const auto tag = "stage " + std::to_string(s) + " ptx " + ptx_tag(ptx) + ": ";
      if (cfg.detector.warm_start && k > 0) tc.warm_start = model_stem(cfg, s, cfg.sweep[order[k - 1]]);
      TrainResult tr;
      try {
        tr = train_stage(chan, cfg.rnn_shape(s), tc, nullptr, exec);
      } catch (const NumericError& e) {
        res.log.push_back(tag + "aborted: " + e.what());
        write_manifest(cfg, "train", res, 0.0);
        throw;
      }
      for (const auto& w : tr.warnings) res.log.push_back(tag + "warning: " + w);
      if (tr.warm_started) res.log.push_back(tag + "warm start from " + tc.warm_start->generic_string());
      else res.log.push_back(tag + "cold start");
      const auto stem = model_stem(cfg, s, ptx);
      json prov{{"ptx_db", ptx},
                {"stage", s},
                {"train_seed", tc.seed},
                {"iterations", tc.iterations},
                {"warm_start", tr.warm_started ? tc.warm_start->generic_string() : std::string()},
                {"final_loss_bits", tr.log.rows.empty() ? 0.0 : tr.log.rows.back().loss_bits},
                {"clamped", tr.clamped}};
      tr.model.save(stem, prov.dump());
      auto csv = stem;
      csv += "_train.csv";
      tr.log.write_csv(csv);
      auto bin = stem;
      bin += ".bin";
      res.artifacts.push_back(bin);
      res.artifacts.push_back(csv);
    }
  }
  return res;
}

namespace {

std::unique_ptr<AppDetector> make_detector(const ExperimentConfig& cfg, const DiscreteChannel& chan, double ptx,
                                           std::shared_ptr<const AuxChannel>& aux, Exec exec) {
  const auto& d = cfg.detector;
  switch (d.kind) {
    case DetectorKind::fba:
      aux = std::make_shared<AuxChannel>(chan, d.memory, d.table_budget, exec);
      return std::make_unique<FbaDetector>(aux);
    case DetectorKind::gibbs:
      return std::make_unique<GibbsDetector>(std::make_shared<AuxChannel>(chan, d.gibbs.memory, 0, exec, false),
                                             d.gibbs, exec);
    case DetectorKind::rnn: {
      std::vector<RnnModel> models;
      for (int s = 1; s <= cfg.stages; ++s) {
        auto m = RnnModel::load(model_stem(cfg, s, ptx));
        if (!(m.shape() == cfg.rnn_shape(s))) throw ConfigError("checkpoint shape does not match the configuration");
        models.push_back(std::move(m));
      }
      return std::make_unique<RnnDetector>(std::move(models), d.train.t_rnn);
    }
    case DetectorKind::uniform:
      return std::make_unique<UniformDetector>(chan.alphabet().size());
  }
  throw ConfigError("detector.kind: unsupported");
}

}  // namespace

CommandResult cmd_evaluate(const ExperimentConfig& cfg, Exec exec) {
  cfg.validate();
  prepare_run_directory(cfg);
  const auto dir = run_directory(cfg);
  const auto hash = config_hash(cfg);
  std::string rates = RateReport::csv_header();
  std::string complexity = "detector,stages,stage,mults_per_app,mults_single_phase\n";
  json summary = json::array();
  for (std::size_t i = 0; i < cfg.sweep.size(); ++i) {
    const double ptx = cfg.sweep[i];
    const DiscreteChannel chan(channel_at(cfg, ptx));
    std::shared_ptr<const AuxChannel> aux;
    const auto det = make_detector(cfg, chan, ptx, aux, exec);
    std::shared_ptr<const AuxChannel> ub_aux;
    if (cfg.eval.upper_bound) {
      const int mem = cfg.eval.ub_memory >= 0 ? cfg.eval.ub_memory : cfg.detector.memory;
      ub_aux = (aux && aux->memory() == std::min(mem, chan.reach_past() + chan.reach_future()))
                   ? aux
                   : std::make_shared<AuxChannel>(chan, mem, cfg.detector.table_budget, exec);
    }
    auto rep = estimate_sic(*det, chan, cfg.stages, cfg.eval.n_blk, cfg.eval.n, eval_seed(cfg, i), exec, ub_aux.get());
    rep.config_hash = hash;
    rates += rep.csv_rows();
    summary.push_back(json::parse(rep.summary_json()));
    if (i == 0) {
      char line[256];
      for (int s = 1; s <= cfg.stages; ++s) {
        std::int64_t single = rep.stage_multiplications[static_cast<std::size_t>(s - 1)];
        if (cfg.detector.kind == DetectorKind::rnn) {
          auto shape = cfg.rnn_shape(s);
          shape.stage = shape.stages;
          single = rnn_multiplications_closed_form(shape);
        }
        std::snprintf(line, sizeof line, "%s,%d,%d,%lld,%lld\n", rep.detector.c_str(), cfg.stages, s,
                      static_cast<long long>(rep.stage_multiplications[static_cast<std::size_t>(s - 1)]),
                      static_cast<long long>(single));
        complexity += line;
      }
    }
  }
  write_text(dir / "rates.csv", rates);
  write_text(dir / "complexity.csv", complexity);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  CommandResult res;
  res.artifacts = {dir / "rates.csv", dir / "complexity.csv", dir / "summary.json"};
  return res;
}

CommandResult cmd_sweep(const ExperimentConfig& cfg, Exec exec) {
  CommandResult res;
  if (cfg.detector.kind == DetectorKind::rnn) res = cmd_train(cfg, exec);
  auto ev = cmd_evaluate(cfg, exec);
  res.artifacts.insert(res.artifacts.end(), ev.artifacts.begin(), ev.artifacts.end());
  res.log.insert(res.log.end(), ev.log.begin(), ev.log.end());
  return res;
}

void cmd_report(const ExperimentConfig& cfg, std::ostream& os) {
  const auto path = run_directory(cfg) / "rates.csv";
  std::ifstream is(path);
  if (!is) throw ConfigError("no rates.csv in " + run_directory(cfg).string() + "; run evaluate first");
  std::string line;
  std::getline(is, line);
  char buf[256];
  std::snprintf(buf, sizeof buf, "%8s  %-8s %3s %10s %10s %10s\n", "ptx_db", "detector", "S", "I_SIC", "stderr", "UB");
  os << buf;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() < 10 || f[3] != "1") continue;
    std::snprintf(buf, sizeof buf, "%8s  %-8s %3s %10s %10s %10s\n", f[0].c_str(), f[1].c_str(), f[2].c_str(),
                  f[6].c_str(), f[7].c_str(), f[8].empty() ? "-" : f[8].c_str());
    os << buf;
  }
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command, const CommandResult& result,
                    double wall_seconds) {
  const auto dir = run_directory(cfg);
  std::filesystem::create_directories(dir);
  json arts = json::array();
  for (const auto& a : result.artifacts) arts.push_back(std::filesystem::relative(a, dir).generic_string());
  json m{{"command", command},
         {"config_hash", config_hash(cfg)},
         {"code_version", kCodeVersion},
         {"code_hash", fnv1a_hex(kCodeVersion)},
         {"seed", cfg.seed},
         {"wall_clock_s", wall_seconds},
         {"artifacts", arts},
         {"log", result.log},
         {"config", emit_json(cfg, true)}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace sicnn
