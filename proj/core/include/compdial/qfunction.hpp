#pragma once

#include <memory>
#include <string>

#include "compdial/tensor.hpp"

namespace compdial {

/// Opaque intermediates recorded by a forward pass for the matching backward.
struct ForwardTape {
  virtual ~ForwardTape() = default;
};

/// A Q-network over flat inputs (one column per sample). Top-level networks
/// read the belief vector; low-level networks read belief (+) subtask one-hot.
class QFunction {
 public:
  virtual ~QFunction() = default;

  virtual std::string family() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;

  virtual Matrix forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape = nullptr) const = 0;
  /// Accumulates parameter gradients for d(loss)/d(output) = `grad_output`.
  virtual void backward(const ForwardTape& tape, const Matrix& grad_output) = 0;

  virtual ParamRegistry& params() = 0;
  virtual const ParamRegistry& params() const = 0;
  virtual std::unique_ptr<QFunction> clone() const = 0;
};

}  // namespace compdial
