#pragma once

#include <cstddef>

#include "nn/tensor.hpp"

namespace ddnet::nn {

// C[m x n] = A[m x k] * B[k x n] (or += when accumulate is set). Row-major with
// explicit leading dimensions. Each output element accumulates over k in
// ascending order, independent of blocking and thread count.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate = false);

enum class Op { none, transpose };

// Same, with either operand read transposed from its stored layout: with
// Op::transpose, A is stored [k x m] and B is stored [n x k].
void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate = false);

// dst[cols x rows] = src[rows x cols]^T
void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst);

Tensor matmul(const Tensor& a, const Tensor& b);

// Zero padding around a spatial axis. `after` may exceed `before` for even
// kernels under same-size padding.
struct Padding {
  std::size_t before = 0;
  std::size_t after = 0;

  static Padding symmetric(std::size_t p) { return {p, p}; }
  // Output extent equals input extent for stride 1.
  static Padding same(std::size_t kernel) { return {(kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2}; }

  friend bool operator==(const Padding&, const Padding&) = default;
};

// floor((in + before + after - kernel) / stride) + 1, or 0 when the kernel
// does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding pad);

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride;
  Padding pad;

  std::size_t out_h() const { return conv_output_extent(height, kernel, stride, pad); }
  std::size_t out_w() const { return conv_output_extent(width, kernel, stride, pad); }
  std::size_t patch() const { return channels * kernel * kernel; }
};

// Writes the (C*k*k) x (Hout*Wout) patch matrix of one CHW image into `out`
// (row stride `ld`). Row index is (c*k + i)*k + j, column is y*Wout + x.
void im2col_into(const double* image, const ConvGeometry& g, double* out, std::size_t ld);

// Adjoint of im2col_into: scatters columns back, adding into `image`.
void col2im_add(const double* cols, std::size_t ld, const ConvGeometry& g, double* image);

Tensor im2col(const Tensor& input, std::size_t kernel, std::size_t stride, Padding padding);
Tensor im2col(const Tensor& input, std::size_t kernel, std::size_t stride, std::size_t padding);

}  // namespace ddnet::nn
