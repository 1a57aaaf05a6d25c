// SPDX-License-Identifier: Apache-2.0
// Word embedding lookup and a single-layer unidirectional LSTM.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dmla/random.hpp"
#include "dmla/tensor.hpp"

namespace dmla {

// Token id 0 is reserved for padding / out-of-vocabulary words.
using TokenSequence = std::vector<std::size_t>;

struct EmbeddingMatrix {
  Tensor values;  // [V x e], row 0 is zero
  bool trainable = false;

  std::size_t vocab_size() const { return values.dim(0); }
  std::size_t width() const { return values.dim(1); }
  // Uniform(-0.5, 0.5) rows with a zero row 0.
  static EmbeddingMatrix random(std::size_t vocab, std::size_t width, bool trainable, Rng& rng);
  static EmbeddingMatrix from_values(Tensor values, bool trainable);
};

struct LstmGate {
  Tensor input;      // [e x h]
  Tensor recurrent;  // [h x h]
  Tensor bias;       // [h]
};

struct LstmParams {
  LstmGate in_gate;
  LstmGate forget_gate;
  LstmGate out_gate;
  LstmGate candidate;

  std::size_t input_width() const { return in_gate.input.dim(0); }
  std::size_t hidden_width() const { return in_gate.input.dim(1); }
  // Glorot weights, zero biases except the forget gate at 1.
  static LstmParams init(std::size_t input_width, std::size_t hidden_width, Rng& rng);
};

// Row i of the result is E[ids[i]]. Throws std::out_of_range naming the position of a bad id.
Tensor embed(std::span<const std::size_t> tokens, const EmbeddingMatrix& embedding);

// Hidden states for every step, [S x h], starting from h0 = c0 = 0.
Tensor lstm_forward(const Tensor& inputs, const LstmParams& p);

}  // namespace dmla
