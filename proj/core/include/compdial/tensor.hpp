#pragma once

#include <compare>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "compdial/rng.hpp"

namespace compdial {

/// Dense column-major matrix; batched activations use one column per sample.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

std::string shape_string(const Matrix& m);

/// Keeps freed activation buffers in the heap instead of returning them to
/// the OS; training allocates and frees the same large blocks every update.
/// No-op outside glibc.
void tune_allocator();

/// Registry key: (role, node/edge type, layer, tensor name). Layer -1 means
/// the parameter is not tied to an extraction layer.
struct ParamKey {
  std::string role;
  std::string type;
  int layer = -1;
  std::string name;

  std::string str() const;
  static ParamKey parse(const std::string& text);

  friend auto operator<=>(const ParamKey&, const ParamKey&) = default;
  friend bool operator==(const ParamKey&, const ParamKey&) = default;
};

struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;
  long step = 0;
  /// Clamped into [0, 1] after every optimizer step.
  bool unit_interval = false;

  explicit Parameter(Matrix init = {}, bool unit = false);
};

class ParamRegistry {
 public:
  Parameter& add(const ParamKey& key, Matrix init, bool unit_interval = false);

  Parameter& at(const ParamKey& key);
  const Parameter& at(const ParamKey& key) const;
  bool contains(const ParamKey& key) const { return params_.contains(key); }

  std::vector<ParamKey> keys() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void reset_optimizer_state();
  /// Copies values only; both registries must have identical keys and shapes.
  void copy_values_from(const ParamRegistry& other);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<ParamKey, Parameter> params_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(int rows, int cols, Rng& rng);

/// y = W x + b, with b broadcast over columns.
Matrix affine_forward(const Matrix& x, const Parameter& weight, const Parameter& bias);
/// Accumulates dW, db and returns dx.
Matrix affine_backward(const Matrix& x, const Matrix& upstream, Parameter& weight, Parameter& bias);

struct MlpSpec {
  /// Input width, hidden widths..., output width. At least two entries.
  std::vector<int> widths;
};

/// Affine layers with rectifier between them and an identity output.
class Mlp {
 public:
  struct Tape {
    std::vector<Matrix> inputs;  // input of every affine layer
    std::vector<Matrix> pre;     // pre-activation of every hidden layer
  };

  Mlp() = default;
  Mlp(ParamRegistry& params, const std::string& role, const std::string& type, MlpSpec spec, Rng& rng);

  Matrix forward(const ParamRegistry& params, const Matrix& x, Tape* tape = nullptr) const;
  Matrix backward(ParamRegistry& params, const Tape& tape, const Matrix& upstream) const;

  int input_dim() const { return spec_.widths.front(); }
  int output_dim() const { return spec_.widths.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  const ParamKey& weight_key(int layer) const { return weights_[static_cast<std::size_t>(layer)]; }
  const ParamKey& bias_key(int layer) const { return biases_[static_cast<std::size_t>(layer)]; }

 private:
  MlpSpec spec_;
  std::vector<ParamKey> weights_;
  std::vector<ParamKey> biases_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam on every parameter, then unit-interval clamping and
/// gradient reset.
void adam_step(ParamRegistry& params, const AdamConfig& config);

struct GradCheckEntry {
  ParamKey key;
  double max_rel_error = 0.0;
  bool clamped = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Loss closure: evaluates the loss at the current parameter values; when
/// `accumulate_grad` is set it also accumulates analytic gradients.
using LossClosure = std::function<double(ParamRegistry&, bool accumulate_grad)>;

/// Compares analytic gradients with central differences on every scalar.
/// Relative error is |a - n| / max(|a|, |n|, abs_floor). Unit-interval
/// parameters sitting on a bound are skipped and reported as clamped.
GradCheckReport grad_check(ParamRegistry& params, const LossClosure& loss, double step = 1e-5,
                           double abs_floor = 1e-7);

}  // namespace compdial
