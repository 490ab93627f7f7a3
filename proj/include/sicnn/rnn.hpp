#pragma once

// Periodically time-varying bidirectional ReLU RNN producing symbol APPs for
// one SIC stage. Stage s unrolls the inputs of stages s..S for every t and
// cycles through P = S - s + 1 phase-specific cells per layer and direction.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sicnn/app_matrix.hpp"
#include "sicnn/common.hpp"
#include "sicnn/sic_plan.hpp"

namespace sicnn {

struct RnnShape {
  /// Layer input widths (l_1, ..., l_L): L-1 recurrent layers, then the
  /// output layer. l_1 = L_Y + L_IC; recurrent outputs l_2..l_L are even.
  std::vector<int> dims;
  int l_y = 0;
  int l_ic = 0;
  int stages = 1;
  int stage = 1;
  int alphabet_size = 2;
  /// Real observation values per symbol (obs_dim * N_os).
  int obs_stride = 2;

  int layers() const { return static_cast<int>(dims.size()); }
  int phases() const { return stages - stage + 1; }
  int delta() const { return (l_y - 1) / 2; }
  int nabla() const { return l_y / 2; }
  /// floor(L_Y / N_os) + T_RNN - 1 with N_os = obs_stride.
  int capturable_memory(int t_rnn) const { return l_y / obs_stride + t_rnn - 1; }
  void validate() const;
  friend bool operator==(const RnnShape&, const RnnShape&) = default;
};

/// Standardization of observations and the unit-RMS known-symbol encoding.
struct InputNormalization {
  double obs_mean = 0.0;
  double obs_scale = 1.0;
  std::vector<double> symbol_values;
  friend bool operator==(const InputNormalization&, const InputNormalization&) = default;
};

/// Offsets of the parameter tensors inside the flat parameter vector.
/// Recurrent tensors are indexed by (layer, phase, direction); direction
/// 0 is forward, 1 backward. Matrices are row-major.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const RnnShape& shape);

  struct Cell {
    std::size_t w_in, b_in, w, b;
    int rows, cols;  // W_in is rows x cols, W is rows x rows
    friend bool operator==(const Cell&, const Cell&) = default;
  };
  const Cell& cell(int layer, int phase, int dir) const;
  std::size_t w_out() const { return w_out_; }
  std::size_t b_out() const { return b_out_; }
  std::size_t size() const { return size_; }
  /// Human-readable name of the tensor containing flat index `i`.
  std::string tensor_name(std::size_t i) const;
  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  int phases_ = 1;
  std::vector<Cell> cells_;
  std::size_t w_out_ = 0;
  std::size_t b_out_ = 0;
  std::size_t size_ = 0;
  int m_ = 0;
  int last_ = 0;
};

class RnnModel {
 public:
  RnnModel() = default;
  RnnModel(RnnShape shape, InputNormalization norm);

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases likewise.
  static RnnModel initialized(RnnShape shape, InputNormalization norm, std::uint64_t seed);

  const RnnShape& shape() const { return shape_; }
  const ParamLayout& layout() const { return layout_; }
  const InputNormalization& normalization() const { return norm_; }
  void set_normalization(InputNormalization norm) { norm_ = std::move(norm); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  /// Parameters of the recurrent cells plus the output layer.
  std::size_t parameter_count() const { return params_.size(); }

  /// Versioned little-endian binary (<stem>.bin) and JSON sidecar (<stem>.json).
  void save(const std::filesystem::path& stem, const std::string& provenance_json = "{}") const;
  static RnnModel load(const std::filesystem::path& stem);

  friend bool operator==(const RnnModel&, const RnnModel&) = default;

 private:
  RnnShape shape_;
  ParamLayout layout_;
  InputNormalization norm_;
  std::vector<double> params_;
};

/// Count of recurrent parameters of a classic (single-phase) bidirectional RNN.
std::size_t classic_recurrent_parameter_count(const std::vector<int>& dims);

/// Unrolled inputs r_{j,t} for t = t_first .. t_first + count - 1, ordered
/// t-major, then j = s..S. Row tau = (t - t_first) * P + (j - s).
struct InputTensor {
  int steps = 0;
  int width = 0;
  int phases = 1;
  std::vector<double> data;
  /// 1-based serial index of each phase-0 step (the stage targets).
  std::vector<int> targets;

  std::span<const double> row(int step) const {
    return {data.data() + static_cast<std::size_t>(step) * static_cast<std::size_t>(width),
            static_cast<std::size_t>(width)};
  }
  int target_count() const { return steps / phases; }
};

/// `count < 0` selects all remaining targets of the stage.
InputTensor assemble_inputs(std::span<const double> y, const StageView& view, const RnnShape& shape,
                            const InputNormalization& norm, int t_first = 1, int count = -1);

/// Activations kept for backpropagation.
struct ForwardCache {
  // r[i] holds steps x l_{i+1} layer inputs (r[0] = network input).
  std::vector<std::vector<double>> r;
  // Pre-activations per recurrent layer and direction, steps x l_{i+2}/2.
  std::vector<std::vector<double>> pre_fwd;
  std::vector<std::vector<double>> pre_bwd;
};

struct ForwardResult {
  /// target_count x M logits at the phase-0 steps.
  std::vector<double> logits;
  std::int64_t multiplications = 0;
};

/// Forward pass over one unrolled sequence. Throws NumericError naming the
/// step on non-finite outputs.
ForwardResult rnn_forward(const RnnModel& model, const InputTensor& inputs, ForwardCache* cache = nullptr);

/// Softmax APPs of the stage targets covered by `inputs`.
AppMatrix rnn_app(const RnnModel& model, const InputTensor& inputs);

/// Instrumented multiplications of the forward pass per APP estimate.
std::int64_t count_rnn_multiplications(const RnnShape& shape);

/// Closed form: P * sum_i (l_i l_{i+1} + l_{i+1}^2 / 2) + l_L |A|.
std::int64_t rnn_multiplications_closed_form(const RnnShape& shape);

}  // namespace sicnn
