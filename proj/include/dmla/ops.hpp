// SPDX-License-Identifier: Apache-2.0
// Differentiable tensor operations.
//
// Every op computes eagerly and records a backward closure onto the active
// tape when an input is tracked. Shape errors throw std::invalid_argument
// naming the offending extents.
//
// Conventions: vectors are rank-1, matrices rank-2 row-major, feature maps
// [H x W x C], conv kernels [k x k x C_in x C_out].
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dmla/tensor.hpp"

namespace dmla {

enum class PoolMode { avg, max };
enum class Activation { relu, tanh, sigmoid };

Tensor matmul(const Tensor& a, const Tensor& b);
// Row vector times matrix: v[d] * m[d x n] -> [n].
Tensor vecmat(const Tensor& v, const Tensor& m);

Tensor add(const Tensor& a, const Tensor& b);
// a + bias broadcast over the last axis (bias has as many entries as a's last extent).
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// target * a / sqrt(mean(a^2) + eps); a zero tensor stays zero.
Tensor rms_normalize(const Tensor& a, double target, double eps = 1e-12);

Tensor activation(const Tensor& x, Activation kind);
inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor tanh(const Tensor& x) { return activation(x, Activation::tanh); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }

// Numerically stable softmax over all entries; output keeps the input shape.
Tensor softmax(const Tensor& logits);

// Stride-1 cross-correlation with zero "same" padding; k must be odd.
Tensor conv2d_same(const Tensor& input, const Tensor& kernel, const Tensor& bias);
// [H x W x C] -> [1 x 1 x C]. Max routes gradient to the first row-major argmax.
Tensor global_pool(const Tensor& input, PoolMode mode);
// [H x W x C] -> [H x W x 1], pooling across channels.
Tensor channel_pool(const Tensor& input, PoolMode mode);
// 2x2 average pooling with stride 2; odd extents keep a partial last window.
Tensor downsample2(const Tensor& input);

// Concatenation along the last axis; leading extents must agree.
Tensor concat_last(const Tensor& a, const Tensor& b);
// x[..., c] * gate[c]: broadcast over every axis but the last.
Tensor scale_channels(const Tensor& map, const Tensor& gate);
// F[h,w,c] * gate[h,w] for a gate with H*W entries.
Tensor scale_locations(const Tensor& map, const Tensor& gate);

Tensor reshape(const Tensor& a, Shape shape);
// Mean over the rows of an [m x d] matrix -> [d].
Tensor mean_rows(const Tensor& a);
// Row i of an [S x h] matrix -> [h].
Tensor select_row(const Tensor& a, std::size_t i);
Tensor stack_rows(const std::vector<Tensor>& rows);
// Rows of table picked by ids -> [S x e]. Ids are bounds-checked.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

Tensor sum(const Tensor& a);
// -log(probs[label] + eps) -> [1].
Tensor neg_log_prob(const Tensor& probs, std::size_t label, double eps = 1e-12);
// Inverted dropout with a mask drawn from seed; rate 0 returns x itself.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed);

}  // namespace dmla
