#pragma once

#include <memory>
#include <string>
#include <vector>

#include "compdial/qfunction.hpp"

namespace compdial {

/// Baseline Q-network: a plain MLP over the flat input vector.
class MlpQFunction : public QFunction {
 public:
  MlpQFunction(int input_dim, int output_dim, std::vector<int> hidden, Rng& rng);

  std::string family() const override { return "mlp"; }
  int input_dim() const override { return net_.input_dim(); }
  int output_dim() const override { return net_.output_dim(); }

  Matrix forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape = nullptr) const override;
  void backward(const ForwardTape& tape, const Matrix& grad_output) override;

  ParamRegistry& params() override { return params_; }
  const ParamRegistry& params() const override { return params_; }
  std::unique_ptr<QFunction> clone() const override { return std::make_unique<MlpQFunction>(*this); }

 private:
  ParamRegistry params_;
  Mlp net_;
};

}  // namespace compdial
