#include "compdial/mlp_policy.hpp"

#include <stdexcept>

namespace compdial {

namespace {

struct MlpTape : ForwardTape {
  Mlp::Tape tape;
};

}  // namespace

MlpQFunction::MlpQFunction(int input_dim, int output_dim, std::vector<int> hidden, Rng& rng) {
  MlpSpec spec;
  spec.widths.push_back(input_dim);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(output_dim);
  net_ = Mlp(params_, "mlp", "flat", std::move(spec), rng);
}

Matrix MlpQFunction::forward(const Matrix& input, std::unique_ptr<ForwardTape>* tape) const {
  if (input.rows() != net_.input_dim()) {
    throw std::invalid_argument("MlpQFunction: input has " + std::to_string(input.rows()) + " rows, expected " +
                                std::to_string(net_.input_dim()));
  }
  if (!tape) return net_.forward(params_, input);
  auto t = std::make_unique<MlpTape>();
  Matrix out = net_.forward(params_, input, &t->tape);
  *tape = std::move(t);
  return out;
}

void MlpQFunction::backward(const ForwardTape& tape, const Matrix& grad_output) {
  net_.backward(params_, dynamic_cast<const MlpTape&>(tape).tape, grad_output);
}

}  // namespace compdial
