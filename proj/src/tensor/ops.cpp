// SPDX-License-Identifier: Apache-2.0
#include "dmla/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "dmla/kernels.hpp"
#include "dmla/tape.hpp"

namespace dmla {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got shape " + shape_str(t.shape()));
  }
}

void record(const char* op, std::vector<Tensor> inputs, const Tensor& out, Tape::BackwardFn fn) {
  if (Tape* tape = active_tape()) tape->record(op, std::move(inputs), out, std::move(fn));
}

bool any_tracked(std::initializer_list<const Tensor*> ts) {
  Tape* tape = active_tape();
  if (!tape) return false;
  for (const Tensor* t : ts) {
    if (tape->tracks(*t)) return true;
  }
  return false;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q) {
    shape_error("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out(Shape{p, r});
  kernels::matmul(a.data(), b.data(), out.mutable_data(), p, q, r);
  if (any_tracked({&a, &b})) {
    record("matmul", {a, b}, out, [a, b, p, q, r](std::span<const double> g, InputGrads& in) {
      if (in.wants(0)) kernels::matmul_grad_a(g, b.data(), in[0], p, q, r);
      if (in.wants(1)) kernels::matmul_grad_b(a.data(), g, in[1], p, q, r);
    });
  }
  return out;
}

Tensor vecmat(const Tensor& v, const Tensor& m) {
  require_rank("vecmat", v, 1);
  Tensor row = matmul(reshape(v, Shape{1, v.numel()}), m);
  return reshape(row, Shape{row.numel()});
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.numel();
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + y[i];
  if (any_tracked({&a, &b})) {
    record("add", {a, b}, out, [n](std::span<const double> g, InputGrads& in) {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!in.wants(k)) continue;
        auto dst = in[k];
        for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t last = a.shape().back();
  if (bias.numel() != last) {
    shape_error("add_bias", "bias " + shape_str(bias.shape()) + " does not match last axis of " + shape_str(a.shape()));
  }
  const std::size_t n = a.numel();
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data(), b = bias.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] + b[i % last];
  if (any_tracked({&a, &bias})) {
    record("add_bias", {a, bias}, out, [n, last](std::span<const double> g, InputGrads& in) {
      if (in.wants(0)) {
        auto dst = in[0];
        for (std::size_t i = 0; i < n; ++i) dst[i] += g[i];
      }
      if (in.wants(1)) {
        auto dst = in[1];
        for (std::size_t i = 0; i < n; ++i) dst[i % last] += g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.numel();
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * y[i];
  if (any_tracked({&a, &b})) {
    record("mul", {a, b}, out, [a, b, n](std::span<const double> g, InputGrads& in) {
      if (in.wants(0)) {
        auto dst = in[0];
        auto y = b.data();
        for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * y[i];
      }
      if (in.wants(1)) {
        auto dst = in[1];
        auto x = a.data();
        for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * x[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  const std::size_t n = a.numel();
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * s;
  if (any_tracked({&a})) {
    record("scale", {a}, out, [n, s](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * s;
    });
  }
  return out;
}

Tensor rms_normalize(const Tensor& a, double target, double eps) {
  const std::size_t n = a.numel();
  auto x = a.data();
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += x[i] * x[i];
  const double r = std::sqrt(sq / static_cast<double>(n) + eps);
  const double k = target / r;
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] * k;
  if (any_tracked({&a})) {
    std::vector<double> saved(x.begin(), x.end());
    record("rms_normalize", {a}, out, [n, k, r, saved = std::move(saved)](std::span<const double> g, InputGrads& in) {
      double gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) gx += g[i] * saved[i];
      const double c = gx / (static_cast<double>(n) * r * r);
      auto dst = in[0];
      for (std::size_t i = 0; i < n; ++i) dst[i] += k * (g[i] - saved[i] * c);
    });
  }
  return out;
}

Tensor activation(const Tensor& x, Activation kind) {
  const std::size_t n = x.numel();
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto v = x.data();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < n; ++i) o[i] = v[i] > 0.0 ? v[i] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < n; ++i) o[i] = std::tanh(v[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        // Split by sign so exp never overflows.
        if (v[i] >= 0.0) {
          o[i] = 1.0 / (1.0 + std::exp(-v[i]));
        } else {
          const double e = std::exp(v[i]);
          o[i] = e / (1.0 + e);
        }
      }
      break;
  }
  if (any_tracked({&x})) {
    record("activation", {x}, out, [x, out, n, kind](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      auto y = out.data();
      switch (kind) {
        case Activation::relu: {
          auto v = x.data();
          for (std::size_t i = 0; i < n; ++i) dst[i] += v[i] > 0.0 ? g[i] : 0.0;
          break;
        }
        case Activation::tanh:
          for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * (1.0 - y[i] * y[i]);
          break;
        case Activation::sigmoid:
          for (std::size_t i = 0; i < n; ++i) dst[i] += g[i] * y[i] * (1.0 - y[i]);
          break;
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  const std::size_t n = logits.numel();
  auto x = logits.data();
  const double top = *std::max_element(x.begin(), x.end());
  Tensor out(logits.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) o[i] = std::exp(x[i] - top);
  // Ascending-order sum: the normalizer, and so each output, does not depend on element order.
  std::vector<double> terms(o.begin(), o.end());
  std::sort(terms.begin(), terms.end());
  double total = 0.0;
  for (double t : terms) total += t;
  for (std::size_t i = 0; i < n; ++i) o[i] /= total;
  if (any_tracked({&logits})) {
    record("softmax", {logits}, out, [out, n](std::span<const double> g, InputGrads& in) {
      auto y = out.data();
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
      auto dst = in[0];
      for (std::size_t i = 0; i < n; ++i) dst[i] += y[i] * (g[i] - dot);
    });
  }
  return out;
}

Tensor conv2d_same(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  require_rank("conv2d_same", input, 3);
  require_rank("conv2d_same", kernel, 4);
  const std::size_t k = kernel.dim(0);
  if (kernel.dim(1) != k) shape_error("conv2d_same", "kernel must be square, got " + shape_str(kernel.shape()));
  if (k % 2 == 0) shape_error("conv2d_same", "kernel size must be odd, got " + std::to_string(k));
  if (kernel.dim(2) != input.dim(2)) {
    shape_error("conv2d_same", "input has " + std::to_string(input.dim(2)) + " channels but kernel expects " +
                                   std::to_string(kernel.dim(2)));
  }
  if (bias.numel() != kernel.dim(3)) {
    shape_error("conv2d_same", "bias " + shape_str(bias.shape()) + " does not match " +
                                   std::to_string(kernel.dim(3)) + " output channels");
  }
  const kernels::ConvDims d{input.dim(0), input.dim(1), input.dim(2), k, kernel.dim(3)};
  Tensor out(Shape{d.height, d.width, d.out_channels});
  kernels::conv2d_same(input.data(), kernel.data(), bias.data(), out.mutable_data(), d);
  if (any_tracked({&input, &kernel, &bias})) {
    record("conv2d_same", {input, kernel, bias}, out,
           [input, kernel, d](std::span<const double> g, InputGrads& in) {
             if (in.wants(0)) kernels::conv2d_same_grad_input(g, kernel.data(), in[0], d);
             if (in.wants(1)) kernels::conv2d_same_grad_kernel(input.data(), g, in[1], d);
             if (in.wants(2)) {
               auto dst = in[2];
               const std::size_t cells = d.height * d.width;
               for (std::size_t p = 0; p < cells; ++p) {
                 for (std::size_t c = 0; c < d.out_channels; ++c) dst[c] += g[p * d.out_channels + c];
               }
             }
           });
  }
  return out;
}

Tensor global_pool(const Tensor& input, PoolMode mode) {
  require_rank("global_pool", input, 3);
  const std::size_t cells = input.dim(0) * input.dim(1), C = input.dim(2);
  auto x = input.data();
  Tensor out(Shape{1, 1, C});
  auto o = out.mutable_data();
  std::vector<std::size_t> arg(C, 0);
  if (mode == PoolMode::avg) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < cells; ++p) s += x[p * C + c];
      o[c] = s / static_cast<double>(cells);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t best = 0;
      for (std::size_t p = 1; p < cells; ++p) {
        if (x[p * C + c] > x[best * C + c]) best = p;
      }
      arg[c] = best;
      o[c] = x[best * C + c];
    }
  }
  if (any_tracked({&input})) {
    record("global_pool", {input}, out, [mode, cells, C, arg](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      if (mode == PoolMode::avg) {
        const double inv = 1.0 / static_cast<double>(cells);
        for (std::size_t p = 0; p < cells; ++p) {
          for (std::size_t c = 0; c < C; ++c) dst[p * C + c] += g[c] * inv;
        }
      } else {
        for (std::size_t c = 0; c < C; ++c) dst[arg[c] * C + c] += g[c];
      }
    });
  }
  return out;
}

Tensor channel_pool(const Tensor& input, PoolMode mode) {
  require_rank("channel_pool", input, 3);
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2), cells = H * W;
  auto x = input.data();
  Tensor out(Shape{H, W, 1});
  auto o = out.mutable_data();
  std::vector<std::size_t> arg(cells, 0);
  for (std::size_t p = 0; p < cells; ++p) {
    const double* px = x.data() + p * C;
    if (mode == PoolMode::avg) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c) s += px[c];
      o[p] = s / static_cast<double>(C);
    } else {
      std::size_t best = 0;
      for (std::size_t c = 1; c < C; ++c) {
        if (px[c] > px[best]) best = c;
      }
      arg[p] = best;
      o[p] = px[best];
    }
  }
  if (any_tracked({&input})) {
    record("channel_pool", {input}, out, [mode, cells, C, arg](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      if (mode == PoolMode::avg) {
        const double inv = 1.0 / static_cast<double>(C);
        for (std::size_t p = 0; p < cells; ++p) {
          for (std::size_t c = 0; c < C; ++c) dst[p * C + c] += g[p] * inv;
        }
      } else {
        for (std::size_t p = 0; p < cells; ++p) dst[p * C + arg[p]] += g[p];
      }
    });
  }
  return out;
}

Tensor downsample2(const Tensor& input) {
  require_rank("downsample2", input, 3);
  const std::size_t H = input.dim(0), W = input.dim(1), C = input.dim(2);
  const std::size_t Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  auto x = input.data();
  Tensor out(Shape{Ho, Wo, C});
  auto o = out.mutable_data();
  for (std::size_t h = 0; h < Ho; ++h) {
    for (std::size_t w = 0; w < Wo; ++w) {
      const std::size_t h1 = std::min(2 * h + 2, H), w1 = std::min(2 * w + 2, W);
      const double inv = 1.0 / static_cast<double>((h1 - 2 * h) * (w1 - 2 * w));
      double* dst = o.data() + (h * Wo + w) * C;
      for (std::size_t y = 2 * h; y < h1; ++y) {
        for (std::size_t xx = 2 * w; xx < w1; ++xx) {
          const double* src = x.data() + (y * W + xx) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
      for (std::size_t c = 0; c < C; ++c) dst[c] *= inv;
    }
  }
  if (any_tracked({&input})) {
    record("downsample2", {input}, out, [H, W, C, Ho, Wo](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t h = 0; h < Ho; ++h) {
        for (std::size_t w = 0; w < Wo; ++w) {
          const std::size_t h1 = std::min(2 * h + 2, H), w1 = std::min(2 * w + 2, W);
          const double inv = 1.0 / static_cast<double>((h1 - 2 * h) * (w1 - 2 * w));
          const double* src = g.data() + (h * Wo + w) * C;
          for (std::size_t y = 2 * h; y < h1; ++y) {
            for (std::size_t xx = 2 * w; xx < w1; ++xx) {
              double* d = dst.data() + (y * W + xx) * C;
              for (std::size_t c = 0; c < C; ++c) d[c] += src[c] * inv;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank()) shape_error("concat_last", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Shape shape = a.shape();
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) {
    if (a.dim(i) != b.dim(i)) shape_error("concat_last", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t ca = a.shape().back(), cb = b.shape().back(), lead = a.numel() / ca;
  shape.back() = ca + cb;
  Tensor out(shape);
  auto o = out.mutable_data();
  auto x = a.data(), y = b.data();
  for (std::size_t p = 0; p < lead; ++p) {
    std::copy_n(x.data() + p * ca, ca, o.data() + p * (ca + cb));
    std::copy_n(y.data() + p * cb, cb, o.data() + p * (ca + cb) + ca);
  }
  if (any_tracked({&a, &b})) {
    record("concat_last", {a, b}, out, [lead, ca, cb](std::span<const double> g, InputGrads& in) {
      auto ga = in[0];
      auto gb = in[1];
      for (std::size_t p = 0; p < lead; ++p) {
        const double* src = g.data() + p * (ca + cb);
        if (!ga.empty()) {
          for (std::size_t c = 0; c < ca; ++c) ga[p * ca + c] += src[c];
        }
        if (!gb.empty()) {
          for (std::size_t c = 0; c < cb; ++c) gb[p * cb + c] += src[ca + c];
        }
      }
    });
  }
  return out;
}

Tensor scale_channels(const Tensor& map, const Tensor& gate) {
  const std::size_t C = map.shape().back(), cells = map.numel() / C;
  if (gate.numel() != C) {
    shape_error("scale_channels", "gate " + shape_str(gate.shape()) + " does not match " + std::to_string(C) + " channels");
  }
  Tensor out(map.shape());
  auto o = out.mutable_data();
  auto x = map.data(), a = gate.data();
  for (std::size_t p = 0; p < cells; ++p) {
    for (std::size_t c = 0; c < C; ++c) o[p * C + c] = x[p * C + c] * a[c];
  }
  if (any_tracked({&map, &gate})) {
    record("scale_channels", {map, gate}, out, [map, gate, C, cells](std::span<const double> g, InputGrads& in) {
      auto x = map.data(), a = gate.data();
      auto gm = in[0];
      auto ga = in[1];
      for (std::size_t p = 0; p < cells; ++p) {
        for (std::size_t c = 0; c < C; ++c) {
          if (!gm.empty()) gm[p * C + c] += g[p * C + c] * a[c];
          if (!ga.empty()) ga[c] += g[p * C + c] * x[p * C + c];
        }
      }
    });
  }
  return out;
}

Tensor scale_locations(const Tensor& map, const Tensor& gate) {
  require_rank("scale_locations", map, 3);
  const std::size_t C = map.dim(2), cells = map.dim(0) * map.dim(1);
  if (gate.numel() != cells) {
    shape_error("scale_locations", "gate " + shape_str(gate.shape()) + " does not match map " + shape_str(map.shape()));
  }
  Tensor out(map.shape());
  auto o = out.mutable_data();
  auto x = map.data(), a = gate.data();
  for (std::size_t p = 0; p < cells; ++p) {
    for (std::size_t c = 0; c < C; ++c) o[p * C + c] = x[p * C + c] * a[p];
  }
  if (any_tracked({&map, &gate})) {
    record("scale_locations", {map, gate}, out, [map, gate, C, cells](std::span<const double> g, InputGrads& in) {
      auto x = map.data(), a = gate.data();
      auto gm = in[0];
      auto ga = in[1];
      for (std::size_t p = 0; p < cells; ++p) {
        for (std::size_t c = 0; c < C; ++c) {
          if (!gm.empty()) gm[p * C + c] += g[p * C + c] * a[p];
          if (!ga.empty()) ga[p] += g[p * C + c] * x[p * C + c];
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    shape_error("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto x = a.data();
  Tensor out(std::move(shape), std::vector<double>(x.begin(), x.end()));
  if (any_tracked({&a})) {
    record("reshape", {a}, out, [](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& a) {
  require_rank("mean_rows", a, 2);
  const std::size_t m = a.dim(0), d = a.dim(1);
  Tensor out(Shape{d});
  auto o = out.mutable_data();
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) o[j] += x[i * d + j];
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < d; ++j) o[j] *= inv;
  if (any_tracked({&a})) {
    record("mean_rows", {a}, out, [m, d, inv](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < d; ++j) dst[i * d + j] += g[j] * inv;
      }
    });
  }
  return out;
}

Tensor select_row(const Tensor& a, std::size_t i) {
  require_rank("select_row", a, 2);
  const std::size_t d = a.dim(1);
  if (i >= a.dim(0)) shape_error("select_row", "row " + std::to_string(i) + " of " + shape_str(a.shape()));
  auto x = a.data();
  Tensor out(Shape{d}, std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(i * d),
                                           x.begin() + static_cast<std::ptrdiff_t>((i + 1) * d)));
  if (any_tracked({&a})) {
    record("select_row", {a}, out, [i, d](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t j = 0; j < d; ++j) dst[i * d + j] += g[j];
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) shape_error("stack_rows", "no rows");
  const std::size_t d = rows.front().numel();
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (const Tensor& r : rows) {
    if (r.numel() != d) shape_error("stack_rows", "ragged rows");
    auto x = r.data();
    data.insert(data.end(), x.begin(), x.end());
  }
  Tensor out(Shape{rows.size(), d}, std::move(data));
  Tape* tape = active_tape();
  if (tape) {
    bool tracked = false;
    for (const Tensor& r : rows) tracked = tracked || tape->tracks(r);
    if (tracked) {
      const std::size_t S = rows.size();
      tape->record("stack_rows", rows, out, [S, d](std::span<const double> g, InputGrads& in) {
        for (std::size_t i = 0; i < S; ++i) {
          if (!in.wants(i)) continue;
          auto dst = in[i];
          for (std::size_t j = 0; j < d; ++j) dst[j] += g[i * d + j];
        }
      });
    }
  }
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank("gather_rows", table, 2);
  if (ids.empty()) shape_error("gather_rows", "empty id list");
  const std::size_t V = table.dim(0), e = table.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= V) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                              " is outside vocabulary of size " + std::to_string(V));
    }
  }
  Tensor out(Shape{ids.size(), e});
  auto o = out.mutable_data();
  auto x = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) std::copy_n(x.data() + ids[i] * e, e, o.data() + i * e);
  if (any_tracked({&table})) {
    std::vector<std::size_t> saved(ids.begin(), ids.end());
    record("gather_rows", {table}, out, [saved, e](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t i = 0; i < saved.size(); ++i) {
        for (std::size_t j = 0; j < e; ++j) dst[saved[i] * e + j] += g[i * e + j];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (any_tracked({&a})) {
    const std::size_t n = a.numel();
    record("sum", {a}, out, [n](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t i = 0; i < n; ++i) dst[i] += g[0];
    });
  }
  return out;
}

Tensor neg_log_prob(const Tensor& probs, std::size_t label, double eps) {
  if (label >= probs.numel()) {
    throw std::out_of_range("neg_log_prob: label " + std::to_string(label) + " outside " +
                            std::to_string(probs.numel()) + " classes");
  }
  const double p = probs[label] + eps;
  Tensor out = Tensor::scalar(-std::log(p));
  if (any_tracked({&probs})) {
    record("neg_log_prob", {probs}, out, [label, p](std::span<const double> g, InputGrads& in) {
      in[0][label] += -g[0] / p;
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const std::size_t n = x.numel();
  std::mt19937_64 rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(n);
  for (std::size_t i = 0; i < n; ++i) {
    // 53-bit uniform in [0, 1) from the raw engine output; portable across standard libraries.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask[i] = u < rate ? 0.0 : keep_scale;
  }
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto v = x.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = v[i] * mask[i];
  if (any_tracked({&x})) {
    record("dropout", {x}, out, [mask](std::span<const double> g, InputGrads& in) {
      auto dst = in[0];
      for (std::size_t i = 0; i < mask.size(); ++i) dst[i] += g[i] * mask[i];
    });
  }
  return out;
}

}  // namespace dmla
