// SPDX-License-Identifier: Apache-2.0
#include "dmla/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dmla::kernels {

namespace {
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

inline bool inside(std::ptrdiff_t v, std::size_t extent) {
  return v >= 0 && static_cast<std::size_t>(v) < extent;
}
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Serial reference kernels
// ---------------------------------------------------------------------------
namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += a[i * q + k] * b[k * r + j];
      out[i * r + j] = s;
    }
  }
}

void matmul_grad_a(std::span<const double> gout, std::span<const double> b, std::span<double> ga,
                   std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += gout[i * r + j] * b[k * r + j];
      ga[i * q + k] += s;
    }
  }
}

void matmul_grad_b(std::span<const double> a, std::span<const double> gout, std::span<double> gb,
                   std::size_t p, std::size_t q, std::size_t r) {
  for (std::size_t k = 0; k < q; ++k) {
    for (std::size_t j = 0; j < r; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < p; ++i) s += a[i * q + k] * gout[i * r + j];
      gb[k * r + j] += s;
    }
  }
}

void conv2d_same(std::span<const double> in, std::span<const double> kernel,
                 std::span<const double> bias, std::span<double> out, const ConvDims& d) {
  const auto half = static_cast<std::ptrdiff_t>(d.kernel / 2);
  for (std::size_t h = 0; h < d.height; ++h) {
    for (std::size_t w = 0; w < d.width; ++w) {
      for (std::size_t co = 0; co < d.out_channels; ++co) {
        double s = 0.0;
        for (std::size_t i = 0; i < d.kernel; ++i) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(h + i) - half;
          if (!inside(y, d.height)) continue;
          for (std::size_t j = 0; j < d.kernel; ++j) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(w + j) - half;
            if (!inside(x, d.width)) continue;
            for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
              s += in[(y * d.width + x) * d.in_channels + ci] *
                   kernel[((i * d.kernel + j) * d.in_channels + ci) * d.out_channels + co];
            }
          }
        }
        out[(h * d.width + w) * d.out_channels + co] = s + bias[co];
      }
    }
  }
}

void conv2d_same_grad_input(std::span<const double> gout, std::span<const double> kernel,
                            std::span<double> gin, const ConvDims& d) {
  const auto half = static_cast<std::ptrdiff_t>(d.kernel / 2);
  for (std::size_t y = 0; y < d.height; ++y) {
    for (std::size_t x = 0; x < d.width; ++x) {
      for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
        double s = 0.0;
        for (std::size_t i = 0; i < d.kernel; ++i) {
          const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(i) + half;
          if (!inside(h, d.height)) continue;
          for (std::size_t j = 0; j < d.kernel; ++j) {
            const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(j) + half;
            if (!inside(w, d.width)) continue;
            for (std::size_t co = 0; co < d.out_channels; ++co) {
              s += gout[(h * d.width + w) * d.out_channels + co] *
                   kernel[((i * d.kernel + j) * d.in_channels + ci) * d.out_channels + co];
            }
          }
        }
        gin[(y * d.width + x) * d.in_channels + ci] += s;
      }
    }
  }
}

void conv2d_same_grad_kernel(std::span<const double> in, std::span<const double> gout,
                             std::span<double> gkernel, const ConvDims& d) {
  const auto half = static_cast<std::ptrdiff_t>(d.kernel / 2);
  for (std::size_t i = 0; i < d.kernel; ++i) {
    for (std::size_t j = 0; j < d.kernel; ++j) {
      for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
        for (std::size_t co = 0; co < d.out_channels; ++co) {
          double s = 0.0;
          for (std::size_t h = 0; h < d.height; ++h) {
            const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(h + i) - half;
            if (!inside(y, d.height)) continue;
            for (std::size_t w = 0; w < d.width; ++w) {
              const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(w + j) - half;
              if (!inside(x, d.width)) continue;
              s += in[(y * d.width + x) * d.in_channels + ci] * gout[(h * d.width + w) * d.out_channels + co];
            }
          }
          gkernel[((i * d.kernel + j) * d.in_channels + ci) * d.out_channels + co] += s;
        }
      }
    }
  }
}

}  // namespace reference

// ---------------------------------------------------------------------------
// OpenMP kernels. Loop nests are reordered for locality but each output
// element keeps the reference accumulation order.
// ---------------------------------------------------------------------------

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t p, std::size_t q, std::size_t r) {
  const auto rows = static_cast<std::int64_t>(p);
#pragma omp parallel for schedule(static) if (p * q * r > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* o = out.data() + i * r;
    for (std::size_t j = 0; j < r; ++j) o[j] = 0.0;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      const double* brow = b.data() + k * r;
      for (std::size_t j = 0; j < r; ++j) o[j] += aik * brow[j];
    }
  }
}

void matmul_grad_a(std::span<const double> gout, std::span<const double> b, std::span<double> ga,
                   std::size_t p, std::size_t q, std::size_t r) {
  const auto rows = static_cast<std::int64_t>(p);
#pragma omp parallel for schedule(static) if (p * q * r > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* g = gout.data() + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double* brow = b.data() + k * r;
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += g[j] * brow[j];
      ga[i * q + k] += s;
    }
  }
}

void matmul_grad_b(std::span<const double> a, std::span<const double> gout, std::span<double> gb,
                   std::size_t p, std::size_t q, std::size_t r) {
  const auto cols = static_cast<std::int64_t>(q);
#pragma omp parallel for schedule(static) if (p * q * r > kParallelWork)
  for (std::int64_t kk = 0; kk < cols; ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    std::vector<double> acc(r, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
      const double aik = a[i * q + k];
      const double* g = gout.data() + i * r;
      for (std::size_t j = 0; j < r; ++j) acc[j] += aik * g[j];
    }
    double* dst = gb.data() + k * r;
    for (std::size_t j = 0; j < r; ++j) dst[j] += acc[j];
  }
}

void conv2d_same(std::span<const double> in, std::span<const double> kernel,
                 std::span<const double> bias, std::span<double> out, const ConvDims& d) {
  const auto half = static_cast<std::ptrdiff_t>(d.kernel / 2);
  const std::size_t work = d.height * d.width * d.kernel * d.kernel * d.in_channels * d.out_channels;
  const auto rows = static_cast<std::int64_t>(d.height);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t hh = 0; hh < rows; ++hh) {
    const auto h = static_cast<std::size_t>(hh);
    for (std::size_t w = 0; w < d.width; ++w) {
      double* o = out.data() + (h * d.width + w) * d.out_channels;
      for (std::size_t co = 0; co < d.out_channels; ++co) o[co] = 0.0;
      for (std::size_t i = 0; i < d.kernel; ++i) {
        const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(h + i) - half;
        if (!inside(y, d.height)) continue;
        for (std::size_t j = 0; j < d.kernel; ++j) {
          const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(w + j) - half;
          if (!inside(x, d.width)) continue;
          const double* px = in.data() + (y * d.width + x) * d.in_channels;
          const double* kt = kernel.data() + (i * d.kernel + j) * d.in_channels * d.out_channels;
          for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
            const double v = px[ci];
            const double* krow = kt + ci * d.out_channels;
            for (std::size_t co = 0; co < d.out_channels; ++co) o[co] += v * krow[co];
          }
        }
      }
      for (std::size_t co = 0; co < d.out_channels; ++co) o[co] += bias[co];
    }
  }
}

void conv2d_same_grad_input(std::span<const double> gout, std::span<const double> kernel,
                            std::span<double> gin, const ConvDims& d) {
  const auto half = static_cast<std::ptrdiff_t>(d.kernel / 2);
  const std::size_t work = d.height * d.width * d.kernel * d.kernel * d.in_channels * d.out_channels;
  const auto rows = static_cast<std::int64_t>(d.height);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t yy = 0; yy < rows; ++yy) {
    const auto y = static_cast<std::size_t>(yy);
    std::vector<double> acc(d.in_channels);
    for (std::size_t x = 0; x < d.width; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t i = 0; i < d.kernel; ++i) {
        const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(i) + half;
        if (!inside(h, d.height)) continue;
        for (std::size_t j = 0; j < d.kernel; ++j) {
          const std::ptrdiff_t w = static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(j) + half;
          if (!inside(w, d.width)) continue;
          const double* g = gout.data() + (h * d.width + w) * d.out_channels;
          const double* kt = kernel.data() + (i * d.kernel + j) * d.in_channels * d.out_channels;
          for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
            const double* krow = kt + ci * d.out_channels;
            double s = acc[ci];
            for (std::size_t co = 0; co < d.out_channels; ++co) s += g[co] * krow[co];
            acc[ci] = s;
          }
        }
      }
      double* dst = gin.data() + (y * d.width + x) * d.in_channels;
      for (std::size_t ci = 0; ci < d.in_channels; ++ci) dst[ci] += acc[ci];
    }
  }
}

void conv2d_same_grad_kernel(std::span<const double> in, std::span<const double> gout,
                             std::span<double> gkernel, const ConvDims& d) {
  const auto half = static_cast<std::ptrdiff_t>(d.kernel / 2);
  const std::size_t work = d.height * d.width * d.kernel * d.kernel * d.in_channels * d.out_channels;
  const auto taps = static_cast<std::int64_t>(d.kernel * d.kernel);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (std::int64_t t = 0; t < taps; ++t) {
    const std::size_t i = static_cast<std::size_t>(t) / d.kernel;
    const std::size_t j = static_cast<std::size_t>(t) % d.kernel;
    std::vector<double> acc(d.in_channels * d.out_channels, 0.0);
    for (std::size_t h = 0; h < d.height; ++h) {
      const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(h + i) - half;
      if (!inside(y, d.height)) continue;
      for (std::size_t w = 0; w < d.width; ++w) {
        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(w + j) - half;
        if (!inside(x, d.width)) continue;
        const double* px = in.data() + (y * d.width + x) * d.in_channels;
        const double* g = gout.data() + (h * d.width + w) * d.out_channels;
        for (std::size_t ci = 0; ci < d.in_channels; ++ci) {
          const double v = px[ci];
          double* arow = acc.data() + ci * d.out_channels;
          for (std::size_t co = 0; co < d.out_channels; ++co) arow[co] += v * g[co];
        }
      }
    }
    double* dst = gkernel.data() + (i * d.kernel + j) * d.in_channels * d.out_channels;
    for (std::size_t n = 0; n < acc.size(); ++n) dst[n] += acc[n];
  }
}

}  // namespace dmla::kernels
