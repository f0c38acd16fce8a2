#include "compdial/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace compdial {

std::string shape_string(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

std::string ParamKey::str() const {
  std::string out = role + "/" + type;
  if (layer >= 0) out += "/l" + std::to_string(layer);
  return out + "/" + name;
}

ParamKey ParamKey::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t slash = text.find('/', start);
    parts.push_back(text.substr(start, slash - start));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  if (parts.size() == 3) return {parts[0], parts[1], -1, parts[2]};
  if (parts.size() == 4 && parts[2].size() > 1 && parts[2][0] == 'l') {
    return {parts[0], parts[1], std::stoi(parts[2].substr(1)), parts[3]};
  }
  throw std::invalid_argument("malformed parameter key: " + text);
}

Parameter::Parameter(Matrix init, bool unit)
    : value(std::move(init)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      first_moment(Matrix::Zero(value.rows(), value.cols())),
      second_moment(Matrix::Zero(value.rows(), value.cols())),
      unit_interval(unit) {}

Parameter& ParamRegistry::add(const ParamKey& key, Matrix init, bool unit_interval) {
  auto [it, inserted] = params_.try_emplace(key, std::move(init), unit_interval);
  if (!inserted) throw std::invalid_argument("duplicate parameter key: " + key.str());
  return it->second;
}

Parameter& ParamRegistry::at(const ParamKey& key) {
  auto it = params_.find(key);
  if (it == params_.end()) throw std::out_of_range("unknown parameter key: " + key.str());
  return it->second;
}

const Parameter& ParamRegistry::at(const ParamKey& key) const {
  auto it = params_.find(key);
  if (it == params_.end()) throw std::out_of_range("unknown parameter key: " + key.str());
  return it->second;
}

std::vector<ParamKey> ParamRegistry::keys() const {
  std::vector<ParamKey> out;
  out.reserve(params_.size());
  for (const auto& [key, p] : params_) out.push_back(key);
  return out;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [key, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& [key, p] : params_) p.grad.setZero();
}

void ParamRegistry::reset_optimizer_state() {
  for (auto& [key, p] : params_) {
    p.first_moment.setZero();
    p.second_moment.setZero();
    p.step = 0;
    p.grad.setZero();
  }
}

void ParamRegistry::copy_values_from(const ParamRegistry& other) {
  if (other.params_.size() != params_.size()) {
    throw std::invalid_argument("copy_values_from: registries differ in size");
  }
  auto it = params_.begin();
  for (const auto& [key, p] : other.params_) {
    if (it->first != key || it->second.value.rows() != p.value.rows() ||
        it->second.value.cols() != p.value.cols()) {
      throw std::invalid_argument("copy_values_from: mismatch at " + key.str());
    }
    it->second.value = p.value;
    ++it;
  }
}

Matrix glorot_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

Matrix affine_forward(const Matrix& x, const Parameter& weight, const Parameter& bias) {
  if (weight.value.cols() != x.rows() || bias.value.rows() != weight.value.rows() ||
      bias.value.cols() != 1) {
    throw std::invalid_argument("affine_forward: shape mismatch W" + shape_string(weight.value) +
                                " b" + shape_string(bias.value) + " x" + shape_string(x));
  }
  Matrix y = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

Matrix affine_backward(const Matrix& x, const Matrix& upstream, Parameter& weight, Parameter& bias) {
  if (upstream.rows() != weight.value.rows() || upstream.cols() != x.cols()) {
    throw std::invalid_argument("affine_backward: shape mismatch dy" + shape_string(upstream) +
                                " W" + shape_string(weight.value) + " x" + shape_string(x));
  }
  weight.grad.noalias() += upstream * x.transpose();
  bias.grad.col(0) += upstream.rowwise().sum();
  return weight.value.transpose() * upstream;
}

Mlp::Mlp(ParamRegistry& params, const std::string& role, const std::string& type, MlpSpec spec,
         Rng& rng)
    : spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) throw std::invalid_argument("MlpSpec needs at least one layer");
  for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    const int in = spec_.widths[l];
    const int out = spec_.widths[l + 1];
    ParamKey w{role, type, -1, "W" + std::to_string(l)};
    ParamKey b{role, type, -1, "b" + std::to_string(l)};
    params.add(w, glorot_uniform(out, in, rng));
    params.add(b, Matrix::Zero(out, 1));
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

Matrix Mlp::forward(const ParamRegistry& params, const Matrix& x, Tape* tape) const {
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
    tape->inputs.reserve(weights_.size());
    tape->inputs.push_back(x);
  }
  const Matrix* in = &x;
  Matrix h;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = affine_forward(*in, params.at(weights_[l]), params.at(biases_[l]));
    if (l + 1 == weights_.size()) return z;
    h = z.cwiseMax(0.0);
    if (tape) {
      tape->pre.push_back(std::move(z));
      tape->inputs.push_back(std::move(h));
      in = &tape->inputs.back();
    } else {
      in = &h;
    }
  }
  return h;
}

Matrix Mlp::backward(ParamRegistry& params, const Tape& tape, const Matrix& upstream) const {
  Matrix grad = upstream;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    if (l + 1 < weights_.size()) {
      grad = grad.cwiseProduct((tape.pre[l].array() > 0.0).cast<double>().matrix());
    }
    grad = affine_backward(tape.inputs[l], grad, params.at(weights_[l]), params.at(biases_[l]));
  }
  return grad;
}

void adam_step(ParamRegistry& params, const AdamConfig& config) {
  for (auto& [key, p] : params) {
    p.step += 1;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(p.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(p.step));
    p.first_moment = config.beta1 * p.first_moment + (1.0 - config.beta1) * p.grad;
    p.second_moment = config.beta2 * p.second_moment + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= config.lr * (p.first_moment.array() / c1) /
                       ((p.second_moment.array() / c2).sqrt() + config.eps);
    if (p.unit_interval) p.value = p.value.cwiseMax(0.0).cwiseMin(1.0);
    p.grad.setZero();
  }
}

GradCheckReport grad_check(ParamRegistry& params, const LossClosure& loss, double step,
                           double abs_floor) {
  params.zero_grad();
  const double base = loss(params, true);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");

  GradCheckReport report;
  for (auto& [key, p] : params) {
    GradCheckEntry entry{key, 0.0, false};
    const Matrix analytic = p.grad;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& theta = p.value.data()[i];
      if (p.unit_interval && (theta <= 0.0 || theta >= 1.0)) {
        entry.clamped = true;
        continue;
      }
      const double saved = theta;
      theta = saved + step;
      const double plus = loss(params, false);
      theta = saved - step;
      const double minus = loss(params, false);
      theta = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw std::runtime_error("grad_check: non-finite loss at " + key.str());
      }
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - numeric) / denom);
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.entries.push_back(std::move(entry));
  }
  params.zero_grad();
  return report;
}

}  // namespace compdial
