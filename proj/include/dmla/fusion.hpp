// SPDX-License-Identifier: Apache-2.0
// Joint attended multimodal learning.
//
// Semantic attention uses the region-pooled visual vector as a query over
// word states; self-attention then weighs the two modality vectors; a softmax
// classifier reads the fused vector.
#pragma once

#include <cstddef>

#include "dmla/random.hpp"
#include "dmla/tensor.hpp"

namespace dmla {

struct SemanticAttentionParams {
  Tensor visual_projection;  // P_v [d x h]
  Tensor score;              // W [h x 1]

  static SemanticAttentionParams init(std::size_t visual_width, std::size_t text_width, Rng& rng);
};

struct SelfAttentionParams {
  Tensor text_projection;    // Q_t [h x p]
  Tensor visual_projection;  // Q_v [d x p]
  Tensor score;              // W [p x 1]
  Tensor bias;               // b [1]

  std::size_t joint_width() const { return text_projection.dim(1); }
  static SelfAttentionParams init(std::size_t text_width, std::size_t visual_width, std::size_t joint_width, Rng& rng);
};

struct ClassifierParams {
  Tensor weights;  // W_s [p x K]
  Tensor bias;     // [K]

  std::size_t classes() const { return weights.dim(1); }
  static ClassifierParams init(std::size_t input_width, std::size_t classes, Rng& rng);
};

struct SemanticAttention {
  Tensor alpha;     // [S], softmax over words
  Tensor attended;  // s_f [h]
};

// m_i = tanh(W^T (P_v^T mean(v_f) * t_i)), alpha = softmax(m), s_f = sum_i alpha_i t_i.
SemanticAttention semantic_attention(const Tensor& regions, const Tensor& words, const SemanticAttentionParams& p);

struct ModalityFusion {
  Tensor text_joint;    // Q_t^T s_f [p]
  Tensor visual_joint;  // Q_v^T mean(v_f) [p]
  Tensor weights;       // u [2] = (text, visual)
  Tensor fused;         // [p]
};

// Projects both modalities to width p; e_i = tanh(W^T J_i + b); u = softmax(e); fused = sum_i u_i J_i.
ModalityFusion self_attention_fuse(const Tensor& text, const Tensor& regions, const SelfAttentionParams& p);

// softmax(W_s^T x + bias) -> [K].
Tensor classify(const Tensor& fused, const ClassifierParams& p);

}  // namespace dmla
