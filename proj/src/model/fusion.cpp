// SPDX-License-Identifier: Apache-2.0
#include "dmla/fusion.hpp"

#include <stdexcept>
#include <string>

#include "dmla/ops.hpp"
#include "dmla/vision.hpp"

namespace dmla {

namespace {
void require_width(const char* op, const char* what, std::size_t got, std::size_t want) {
  if (got != want) {
    throw std::invalid_argument(std::string(op) + ": " + what + " width " + std::to_string(got) + ", expected " +
                                std::to_string(want));
  }
}
}  // namespace

SemanticAttentionParams SemanticAttentionParams::init(std::size_t visual_width, std::size_t text_width, Rng& rng) {
  SemanticAttentionParams p;
  p.visual_projection = glorot(Shape{visual_width, text_width}, visual_width, text_width, rng);
  p.score = glorot(Shape{text_width, 1}, text_width, 1, rng);
  return p;
}

SelfAttentionParams SelfAttentionParams::init(std::size_t text_width, std::size_t visual_width,
                                              std::size_t joint_width, Rng& rng) {
  SelfAttentionParams p;
  p.text_projection = glorot(Shape{text_width, joint_width}, text_width, joint_width, rng);
  p.visual_projection = glorot(Shape{visual_width, joint_width}, visual_width, joint_width, rng);
  p.score = glorot(Shape{joint_width, 1}, joint_width, 1, rng);
  p.bias = Tensor::parameter(Shape{1}, {0.0});
  return p;
}

ClassifierParams ClassifierParams::init(std::size_t input_width, std::size_t classes, Rng& rng) {
  ClassifierParams p;
  p.weights = glorot(Shape{input_width, classes}, input_width, classes, rng);
  p.bias = Tensor::parameter(Shape{classes}, std::vector<double>(classes, 0.0));
  return p;
}

SemanticAttention semantic_attention(const Tensor& regions, const Tensor& words, const SemanticAttentionParams& p) {
  if (words.rank() != 2 || words.dim(0) == 0) throw std::invalid_argument("semantic_attention: no words");
  if (regions.rank() != 2) throw std::invalid_argument("semantic_attention: regions must be [m x d]");
  require_width("semantic_attention", "region", regions.dim(1), p.visual_projection.dim(0));
  require_width("semantic_attention", "word", words.dim(1), p.visual_projection.dim(1));

  const std::size_t S = words.dim(0);
  Tensor query = vecmat(mean_rows(regions), p.visual_projection);
  Tensor scores = tanh(matmul(scale_channels(words, query), p.score));
  SemanticAttention out;
  out.alpha = softmax(reshape(scores, Shape{S}));
  out.attended = vecmat(out.alpha, words);
  return out;
}

ModalityFusion self_attention_fuse(const Tensor& text, const Tensor& regions, const SelfAttentionParams& p) {
  if (regions.rank() != 2) throw std::invalid_argument("self_attention_fuse: regions must be [m x d]");
  require_width("self_attention_fuse", "text", text.numel(), p.text_projection.dim(0));
  require_width("self_attention_fuse", "region", regions.dim(1), p.visual_projection.dim(0));

  ModalityFusion out;
  out.text_joint = vecmat(reshape(text, Shape{text.numel()}), p.text_projection);
  out.visual_joint = vecmat(mean_rows(regions), p.visual_projection);
  Tensor joint = stack_rows({out.text_joint, out.visual_joint});
  Tensor scores = tanh(add_bias(matmul(joint, p.score), p.bias));
  out.weights = softmax(reshape(scores, Shape{2}));
  out.fused = vecmat(out.weights, joint);
  return out;
}

Tensor classify(const Tensor& fused, const ClassifierParams& p) {
  require_width("classify", "input", fused.numel(), p.weights.dim(0));
  return softmax(add_bias(vecmat(reshape(fused, Shape{fused.numel()}), p.weights), p.bias));
}

}  // namespace dmla
