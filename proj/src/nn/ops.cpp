#include "nn/ops.hpp"

#include <algorithm>
#include <vector>

#include "core/error.hpp"
#include "core/parallel.hpp"

namespace ddnet::nn {
namespace {

constexpr std::size_t kTileRows = 8;
constexpr std::size_t kTileCols = 16;
constexpr std::size_t kBlockCols = 256;
constexpr std::size_t kBlockDepth = 256;

using Vec = double __attribute__((vector_size(64)));
constexpr std::size_t kLanes = sizeof(Vec) / sizeof(double);
constexpr std::size_t kVecsPerTile = kTileCols / kLanes;

// Packs B[p0..p0+k, col0..col0+width) into tiles of kTileCols columns laid
// out [tile][p][kTileCols], zero-filling past `width`.
void pack_b(Op op, const double* b, std::size_t ldb, std::size_t p0, std::size_t k,
            std::size_t col0, std::size_t width, double* packed) {
  const std::size_t tiles = (width + kTileCols - 1) / kTileCols;
  for (std::size_t t = 0; t < tiles; ++t) {
    const std::size_t j0 = col0 + t * kTileCols;
    const std::size_t w = std::min(kTileCols, col0 + width - j0);
    double* dst = packed + t * k * kTileCols;
    std::fill_n(dst, k * kTileCols, 0.0);
    if (op == Op::none) {
      for (std::size_t p = 0; p < k; ++p) std::copy_n(b + (p0 + p) * ldb + j0, w, dst + p * kTileCols);
    } else {
      for (std::size_t q = 0; q < w; ++q) {
        const double* src = b + (j0 + q) * ldb + p0;
        for (std::size_t p = 0; p < k; ++p) dst[p * kTileCols + q] = src[p];
      }
    }
  }
}

// Packs A[row0..row0+rows, p0..p0+k) as [p][kTileRows], zero-filling missing rows.
void pack_a(Op op, const double* a, std::size_t lda, std::size_t row0, std::size_t rows,
            std::size_t p0, std::size_t k, double* packed) {
  std::fill_n(packed, k * kTileRows, 0.0);
  if (op == Op::none) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = a + (row0 + r) * lda + p0;
      for (std::size_t p = 0; p < k; ++p) packed[p * kTileRows + r] = src[p];
    }
  } else {
    for (std::size_t p = 0; p < k; ++p) std::copy_n(a + (p0 + p) * lda + row0, rows, packed + p * kTileRows);
  }
}

inline Vec load(const double* p) {
  Vec v;
  __builtin_memcpy(&v, p, sizeof(Vec));
  return v;
}

inline void store(double* p, Vec v) { __builtin_memcpy(p, &v, sizeof(Vec)); }

// C tile += A panel * B tile over k, starting from zero when `fresh`.
// Partial tiles go through scratch lanes so the inner loop stays branch-free.
void micro_kernel(std::size_t k, const double* a, const double* b, double* c, std::size_t ldc,
                  std::size_t rows, std::size_t cols, bool fresh) {
  Vec acc[kTileRows][kVecsPerTile];
  const bool full = rows == kTileRows && cols == kTileCols;
  for (std::size_t r = 0; r < kTileRows; ++r) {
    for (std::size_t v = 0; v < kVecsPerTile; ++v) {
      if (fresh) {
        acc[r][v] = Vec{};
      } else if (full) {
        acc[r][v] = load(c + r * ldc + v * kLanes);
      } else {
        double tmp[kLanes] = {};
        for (std::size_t q = 0; q < kLanes; ++q) {
          const std::size_t col = v * kLanes + q;
          if (r < rows && col < cols) tmp[q] = c[r * ldc + col];
        }
        acc[r][v] = load(tmp);
      }
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * kTileCols;
    const double* ap = a + p * kTileRows;
    Vec bv[kVecsPerTile];
    for (std::size_t v = 0; v < kVecsPerTile; ++v) bv[v] = load(bp + v * kLanes);
    for (std::size_t r = 0; r < kTileRows; ++r) {
      const Vec av = Vec{} + ap[r];
      for (std::size_t v = 0; v < kVecsPerTile; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t v = 0; v < kVecsPerTile; ++v) {
      if (full) {
        store(c + r * ldc + v * kLanes, acc[r][v]);
        continue;
      }
      double tmp[kLanes];
      store(tmp, acc[r][v]);
      for (std::size_t q = 0; q < kLanes && v * kLanes + q < cols; ++q) {
        c[r * ldc + v * kLanes + q] = tmp[q];
      }
    }
  }
}

}  // namespace

// Every C element is one running sum over p = 0..k-1 in ascending order,
// whatever the blocking or thread count.
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  gemm(Op::none, Op::none, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) {
      for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
    }
    return;
  }
  const std::size_t blocks = (n + kBlockCols - 1) / kBlockCols;
  const std::size_t row_tiles = (m + kTileRows - 1) / kTileRows;
  parallel_for(blocks, [&](std::size_t first, std::size_t last) {
    const std::size_t depth = std::min(k, kBlockDepth);
    std::vector<double> packed_b(depth * kBlockCols);
    std::vector<double> packed_a(row_tiles * depth * kTileRows);
    for (std::size_t blk = first; blk < last; ++blk) {
      const std::size_t col0 = blk * kBlockCols;
      const std::size_t width = std::min(kBlockCols, n - col0);
      for (std::size_t p0 = 0; p0 < k; p0 += kBlockDepth) {
        const std::size_t kc = std::min(kBlockDepth, k - p0);
        pack_b(op_b, b, ldb, p0, kc, col0, width, packed_b.data());
        for (std::size_t t = 0; t < row_tiles; ++t) {
          const std::size_t i = t * kTileRows;
          pack_a(op_a, a, lda, i, std::min(kTileRows, m - i), p0, kc,
                 packed_a.data() + t * kc * kTileRows);
        }
        const bool fresh = p0 == 0 && !accumulate;
        for (std::size_t t = 0; t < row_tiles; ++t) {
          const std::size_t i = t * kTileRows;
          const std::size_t rows = std::min(kTileRows, m - i);
          for (std::size_t j0 = 0; j0 < width; j0 += kTileCols) {
            micro_kernel(kc, packed_a.data() + t * kc * kTileRows,
                         packed_b.data() + (j0 / kTileCols) * kc * kTileCols,
                         c + i * ldc + col0 + j0, ldc, rows, std::min(kTileCols, width - j0), fresh);
          }
        }
      }
    }
  });
}

void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t ie = std::min(rows, i0 + kBlock);
      const std::size_t je = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < ie; ++i) {
        for (std::size_t j = j0; j < je; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail(Errc::dimension,
         "matmul shape mismatch: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  gemm(a.dim(0), b.dim(1), a.dim(1), a.raw(), a.dim(1), b.raw(), b.dim(1), out.raw(), b.dim(1));
  return out;
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding pad) {
  const std::size_t padded = in + pad.before + pad.after;
  if (stride == 0 || kernel == 0 || padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

void im2col_into(const double* image, const ConvGeometry& g, double* out, std::size_t ld) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const auto pad = static_cast<std::ptrdiff_t>(g.pad.before);
  const auto height = static_cast<std::ptrdiff_t>(g.height);
  const auto width = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        double* row = out + ((c * g.kernel + i) * g.kernel + j) * ld;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y * g.stride + i) - pad;
          double* dst = row + y * ow;
          if (sy < 0 || sy >= height) {
            std::fill_n(dst, ow, 0.0);
            continue;
          }
          const double* src = plane + sy * width;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x * g.stride + j) - pad;
            dst[x] = (sx < 0 || sx >= width) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t ld, const ConvGeometry& g, double* image) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const auto pad = static_cast<std::ptrdiff_t>(g.pad.before);
  const auto height = static_cast<std::ptrdiff_t>(g.height);
  const auto width = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const double* row = cols + ((c * g.kernel + i) * g.kernel + j) * ld;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y * g.stride + i) - pad;
          if (sy < 0 || sy >= height) continue;
          double* dst = plane + sy * width;
          const double* src = row + y * ow;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x * g.stride + j) - pad;
            if (sx >= 0 && sx < width) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

Tensor im2col(const Tensor& input, std::size_t kernel, std::size_t stride, Padding padding) {
  require_rank(input, 3, "im2col");
  if (kernel == 0 || stride == 0) fail(Errc::dimension, "im2col needs kernel >= 1 and stride >= 1");
  const ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel, stride, padding};
  if (g.out_h() == 0 || g.out_w() == 0) {
    fail(Errc::dimension, "kernel " + std::to_string(kernel) + " larger than padded input " +
                              shape_string(input.shape()));
  }
  Tensor out({g.patch(), g.out_h() * g.out_w()});
  im2col_into(input.raw(), g, out.raw(), out.dim(1));
  return out;
}

Tensor im2col(const Tensor& input, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return im2col(input, kernel, stride, Padding::symmetric(padding));
}

}  // namespace ddnet::nn
