// SPDX-License-Identifier: Apache-2.0
#include "dmla/vision.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dmla/ops.hpp"

namespace dmla {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng, bool trainable) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(-limit, limit);
  Tensor t(std::move(shape), std::move(data));
  if (trainable) t.set_requires_grad(true);
  return t;
}

std::size_t ChannelAttentionParams::hidden_width(std::size_t channels, std::size_t reduction) {
  if (reduction == 0) throw std::invalid_argument("channel reduction ratio must be positive");
  return std::max<std::size_t>(1, channels / reduction);
}

ChannelAttentionParams ChannelAttentionParams::init(std::size_t channels, std::size_t reduction, Rng& rng) {
  const std::size_t hidden = hidden_width(channels, reduction);
  ChannelAttentionParams p;
  p.w0 = glorot(Shape{channels, hidden}, channels, hidden, rng);
  p.w1 = glorot(Shape{hidden, channels}, hidden, channels, rng);
  p.reduction = reduction;
  return p;
}

SpatialAttentionParams SpatialAttentionParams::init(Rng& rng) {
  SpatialAttentionParams p;
  p.kernel = glorot(Shape{kKernel, kKernel, 2, 1}, kKernel * kKernel * 2, kKernel * kKernel, rng);
  p.bias = Tensor::parameter(Shape{1}, {0.0});
  return p;
}

BackboneParams BackboneParams::init(std::size_t out_channels, bool trainable, Rng& rng) {
  return init(std::vector<std::size_t>{8, 16, out_channels}, trainable, rng);
}

BackboneParams BackboneParams::init(const std::vector<std::size_t>& widths, bool trainable, Rng& rng) {
  if (widths.empty()) throw std::invalid_argument("backbone needs at least one block");
  BackboneParams p;
  p.trainable = trainable;
  std::size_t in = 3;
  for (std::size_t out : widths) {
    ConvLayer layer;
    layer.kernel = glorot(Shape{3, 3, in, out}, 9 * in, 9 * out, rng, trainable);
    layer.bias = Tensor::zeros(Shape{out});
    if (trainable) layer.bias.set_requires_grad(true);
    p.layers.push_back(std::move(layer));
    in = out;
  }
  return p;
}

Tensor backbone_features(const VisualInput& input, const BackboneParams& backbone) {
  const Tensor& x = input.values;
  if (x.rank() != 3) throw std::invalid_argument("visual input must be [H x W x C], got " + shape_str(x.shape()));
  if (input.precomputed) {
    if (x.dim(2) != backbone.out_channels()) {
      throw std::invalid_argument("precomputed feature map has " + std::to_string(x.dim(2)) +
                                  " channels, model expects " + std::to_string(backbone.out_channels()));
    }
    return x;
  }
  if (x.dim(2) != 3) {
    throw std::invalid_argument("raw image must have 3 channels, got " + std::to_string(x.dim(2)));
  }
  Tensor h = x;
  for (const ConvLayer& layer : backbone.layers) {
    h = downsample2(relu(conv2d_same(h, layer.kernel, layer.bias)));
  }
  return rms_normalize(h, BackboneParams::kOutputRms);
}

Tensor channel_attention(const Tensor& map, const ChannelAttentionParams& p) {
  if (map.rank() != 3) throw std::invalid_argument("channel_attention: map must be [H x W x C]");
  const std::size_t C = map.dim(2);
  if (p.channels() != C) {
    throw std::invalid_argument("channel_attention: map has " + std::to_string(C) + " channels, params expect " +
                                std::to_string(p.channels()));
  }
  auto branch = [&](PoolMode mode) {
    Tensor pooled = reshape(global_pool(map, mode), Shape{C});
    return vecmat(relu(vecmat(pooled, p.w0)), p.w1);
  };
  Tensor gate = relu(add(branch(PoolMode::max), branch(PoolMode::avg)));
  return reshape(gate, Shape{1, 1, C});
}

Tensor refine_channels(const Tensor& map, const Tensor& channel_gate) {
  if (map.rank() != 3) throw std::invalid_argument("refine_channels: map must be [H x W x C]");
  return scale_channels(map, channel_gate);
}

Tensor spatial_attention(const Tensor& refined, const SpatialAttentionParams& p) {
  Tensor pooled = concat_last(channel_pool(refined, PoolMode::avg), channel_pool(refined, PoolMode::max));
  return relu(conv2d_same(pooled, p.kernel, p.bias));
}

Tensor map_to_regions(const Tensor& map) {
  if (map.rank() != 3) throw std::invalid_argument("map_to_regions: map must be [H x W x C]");
  return reshape(map, Shape{map.dim(0) * map.dim(1), map.dim(2)});
}

BiAttentive bi_attentive_features(const Tensor& map, const ChannelAttentionParams& cp,
                                  const SpatialAttentionParams& sp) {
  BiAttentive out;
  out.channel_gate = channel_attention(map, cp);
  Tensor refined = refine_channels(map, out.channel_gate);
  out.spatial_gate = spatial_attention(refined, sp);
  out.regions = map_to_regions(scale_locations(refined, out.spatial_gate));
  return out;
}

}  // namespace dmla
