// SPDX-License-Identifier: Apache-2.0
#include "dmla/text.hpp"

#include <stdexcept>
#include <string>

#include "dmla/ops.hpp"
#include "dmla/vision.hpp"

namespace dmla {

EmbeddingMatrix EmbeddingMatrix::random(std::size_t vocab, std::size_t width, bool trainable, Rng& rng) {
  std::vector<double> data(vocab * width);
  for (std::size_t i = width; i < data.size(); ++i) data[i] = rng.uniform(-0.5, 0.5);
  return from_values(Tensor(Shape{vocab, width}, std::move(data)), trainable);
}

EmbeddingMatrix EmbeddingMatrix::from_values(Tensor values, bool trainable) {
  if (values.rank() != 2) throw std::invalid_argument("embedding matrix must be [V x e]");
  auto row0 = values.mutable_data().subspan(0, values.dim(1));
  std::fill(row0.begin(), row0.end(), 0.0);
  values.set_requires_grad(trainable);
  return EmbeddingMatrix{std::move(values), trainable};
}

LstmParams LstmParams::init(std::size_t input_width, std::size_t hidden_width, Rng& rng) {
  auto gate = [&](double bias) {
    LstmGate g;
    g.input = glorot(Shape{input_width, hidden_width}, input_width, hidden_width, rng);
    g.recurrent = glorot(Shape{hidden_width, hidden_width}, hidden_width, hidden_width, rng);
    g.bias = Tensor::parameter(Shape{hidden_width}, std::vector<double>(hidden_width, bias));
    return g;
  };
  LstmParams p;
  p.in_gate = gate(0.0);
  p.forget_gate = gate(1.0);
  p.out_gate = gate(0.0);
  p.candidate = gate(0.0);
  return p;
}

Tensor embed(std::span<const std::size_t> tokens, const EmbeddingMatrix& embedding) {
  if (tokens.empty()) throw std::invalid_argument("embed: empty token sequence");
  return gather_rows(embedding.values, tokens);
}

Tensor lstm_forward(const Tensor& inputs, const LstmParams& p) {
  if (inputs.rank() != 2 || inputs.dim(1) != p.input_width()) {
    throw std::invalid_argument("lstm_forward: inputs " + shape_str(inputs.shape()) + " do not match input width " +
                                std::to_string(p.input_width()));
  }
  const std::size_t steps = inputs.dim(0), h = p.hidden_width();

  // Input projections for all steps at once; the recurrence adds h_{t-1} U.
  auto project = [&](const LstmGate& g) { return add_bias(matmul(inputs, g.input), g.bias); };
  const Tensor xi = project(p.in_gate), xf = project(p.forget_gate), xo = project(p.out_gate),
               xg = project(p.candidate);

  Tensor hidden = Tensor::zeros(Shape{h});
  Tensor cell = Tensor::zeros(Shape{h});
  std::vector<Tensor> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    auto pre = [&](const Tensor& x, const LstmGate& g) {
      Tensor row = select_row(x, t);
      return t == 0 ? row : add(row, vecmat(hidden, g.recurrent));
    };
    Tensor i = sigmoid(pre(xi, p.in_gate));
    Tensor f = sigmoid(pre(xf, p.forget_gate));
    Tensor o = sigmoid(pre(xo, p.out_gate));
    Tensor g = tanh(pre(xg, p.candidate));
    cell = t == 0 ? mul(i, g) : add(mul(f, cell), mul(i, g));
    hidden = mul(o, tanh(cell));
    states.push_back(hidden);
  }
  return stack_rows(states);
}

}  // namespace dmla
