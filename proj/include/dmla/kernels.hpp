// SPDX-License-Identifier: Apache-2.0
// Raw compute kernels behind matmul and conv2d_same.
//
// Every kernel exists twice: a serial reference in kernels::reference and an
// OpenMP version in kernels. Each output element is owned by exactly one
// thread and accumulated in the same order as the reference, so both produce
// bit-identical results at any thread count.
//
// Layouts: matrices are row-major; feature maps are [H x W x C]; conv kernels
// are [k x k x C_in x C_out].
#pragma once

#include <cstddef>
#include <span>

namespace dmla::kernels {

struct ConvDims {
  std::size_t height;
  std::size_t width;
  std::size_t in_channels;
  std::size_t kernel;
  std::size_t out_channels;
};

// out[p x r] = a[p x q] * b[q x r]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t p, std::size_t q, std::size_t r);
// ga[p x q] += gout[p x r] * b^T
void matmul_grad_a(std::span<const double> gout, std::span<const double> b, std::span<double> ga,
                   std::size_t p, std::size_t q, std::size_t r);
// gb[q x r] += a^T * gout
void matmul_grad_b(std::span<const double> a, std::span<const double> gout, std::span<double> gb,
                   std::size_t p, std::size_t q, std::size_t r);

void conv2d_same(std::span<const double> in, std::span<const double> kernel,
                 std::span<const double> bias, std::span<double> out, const ConvDims& d);
void conv2d_same_grad_input(std::span<const double> gout, std::span<const double> kernel,
                            std::span<double> gin, const ConvDims& d);
void conv2d_same_grad_kernel(std::span<const double> in, std::span<const double> gout,
                             std::span<double> gkernel, const ConvDims& d);

// Threads the OpenMP kernels may use (1 when built without OpenMP).
int max_threads();

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t p, std::size_t q, std::size_t r);
void matmul_grad_a(std::span<const double> gout, std::span<const double> b, std::span<double> ga,
                   std::size_t p, std::size_t q, std::size_t r);
void matmul_grad_b(std::span<const double> a, std::span<const double> gout, std::span<double> gb,
                   std::size_t p, std::size_t q, std::size_t r);
void conv2d_same(std::span<const double> in, std::span<const double> kernel,
                 std::span<const double> bias, std::span<double> out, const ConvDims& d);
void conv2d_same_grad_input(std::span<const double> gout, std::span<const double> kernel,
                            std::span<double> gin, const ConvDims& d);
void conv2d_same_grad_kernel(std::span<const double> in, std::span<const double> gout,
                             std::span<double> gkernel, const ConvDims& d);

}  // namespace reference
}  // namespace dmla::kernels
