// SPDX-License-Identifier: Apache-2.0
// Visual branch: backbone feature map, channel attention, spatial
// attention, and the flattened bi-attentive region features.
//
// Feature maps are [H x W x C]. Region features are [H*W x C] with rows in
// row-major spatial order.
#pragma once

#include <cstddef>
#include <vector>

#include "dmla/random.hpp"
#include "dmla/tensor.hpp"

namespace dmla {

// Shared two-layer MLP applied to the avg- and max-pooled channel descriptors.
struct ChannelAttentionParams {
  Tensor w0;  // [C x hidden]
  Tensor w1;  // [hidden x C]
  std::size_t reduction = 8;

  static std::size_t hidden_width(std::size_t channels, std::size_t reduction);
  static ChannelAttentionParams init(std::size_t channels, std::size_t reduction, Rng& rng);
  std::size_t channels() const { return w0.dim(0); }
};

struct SpatialAttentionParams {
  static constexpr std::size_t kKernel = 7;
  Tensor kernel;  // [7 x 7 x 2 x 1]
  Tensor bias;    // [1]

  static SpatialAttentionParams init(Rng& rng);
};

struct ConvLayer {
  Tensor kernel;  // [3 x 3 x C_in x C_out]
  Tensor bias;    // [C_out]
};

// Stand-in image encoder: (conv3x3 + relu + 2x2 downsample) per block.
// conv3x3 + relu + 2x2 average pool per layer, then the whole map is
// rescaled to root-mean-square kOutputRms. The attention gates that follow
// are positively homogeneous of degree 4 in the map, so an unnormalized
// stack hands them vanishing inputs.
struct BackboneParams {
  static constexpr double kOutputRms = 0.5;
  std::vector<ConvLayer> layers;
  bool trainable = true;

  // Default widths {8, 16, C}: 32x32x3 -> 4x4xC.
  static BackboneParams init(std::size_t out_channels, bool trainable, Rng& rng);
  static BackboneParams init(const std::vector<std::size_t>& widths, bool trainable, Rng& rng);
  std::size_t out_channels() const { return layers.back().kernel.dim(3); }
};

// Raw [H0 x W0 x 3] image or a precomputed [H x W x C] map.
struct VisualInput {
  Tensor values;
  bool precomputed = false;
};

// Passes a precomputed map through (checking C) or runs the backbone.
Tensor backbone_features(const VisualInput& input, const BackboneParams& backbone);

// relu(W1 relu(W0 maxpool(M)) + W1 relu(W0 avgpool(M))) -> [1 x 1 x C].
Tensor channel_attention(const Tensor& map, const ChannelAttentionParams& p);
// F[h,w,c] = M[h,w,c] * A_c[c].
Tensor refine_channels(const Tensor& map, const Tensor& channel_gate);
// relu(conv7x7([avg_c(F) ; max_c(F)]) + b) -> [H x W x 1].
Tensor spatial_attention(const Tensor& refined, const SpatialAttentionParams& p);

struct BiAttentive {
  Tensor channel_gate;  // A_c [1 x 1 x C]
  Tensor spatial_gate;  // A_s [H x W x 1]
  Tensor regions;       // v_f [H*W x C]
};

BiAttentive bi_attentive_features(const Tensor& map, const ChannelAttentionParams& cp,
                                  const SpatialAttentionParams& sp);

// Flattens [H x W x C] into [H*W x C] region rows.
Tensor map_to_regions(const Tensor& map);

// Glorot-uniform draw for a weight with the given fans.
Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng, bool trainable = true);

}  // namespace dmla
