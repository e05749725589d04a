#include <algorithm>
#include <cstddef>
#include <vector>

#include "egomesh/tensor.hpp"

namespace egomesh::kernels {

namespace {

constexpr std::size_t kRows = 6;
constexpr std::size_t kCols = 8;

// c[kRows x kCols] += a[kRows x k] * panel[k x kCols]; panel rows are
// contiguous so the inner loop streams through a small packed buffer.
inline void micro_full(std::size_t k, const double* __restrict a, std::size_t lda,
                       const double* __restrict panel, double* __restrict c, std::size_t ldc) {
  double acc[kRows][kCols] = {};
  for (std::size_t p = 0; p < k; ++p, panel += kCols) {
    double bv[kCols];
    for (std::size_t j = 0; j < kCols; ++j) bv[j] = panel[j];
#pragma GCC unroll 6
    for (std::size_t r = 0; r < kRows; ++r) {
      const double av = a[r * lda + p];
#pragma GCC unroll 8
      for (std::size_t j = 0; j < kCols; ++j) acc[r][j] += av * bv[j];
    }
  }
  for (std::size_t r = 0; r < kRows; ++r) {
    for (std::size_t j = 0; j < kCols; ++j) c[r * ldc + j] += acc[r][j];
  }
}

// Edge block (rows <= kRows, cols <= kCols) against the same packed panel.
inline void micro_edge(std::size_t rows, std::size_t cols, std::size_t k, const double* a,
                       std::size_t lda, const double* panel, double* c, std::size_t ldc) {
  double acc[kRows][kCols] = {};
  for (std::size_t p = 0; p < k; ++p, panel += kCols) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double av = a[r * lda + p];
      for (std::size_t j = 0; j < cols; ++j) acc[r][j] += av * panel[j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += acc[r][j];
  }
}

void transpose_into(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  // dst[cols x rows] = src[rows x cols]^T
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
    const std::size_t i1 = std::min(rows, i0 + kTile);
    for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
      const std::size_t j1 = std::min(cols, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  std::vector<double> panel(k * kCols);
  const std::size_t m_full = m - m % kRows;
  for (std::size_t j = 0; j < n; j += kCols) {
    const std::size_t cols = std::min(kCols, n - j);
    for (std::size_t p = 0; p < k; ++p) {
      std::copy_n(b + p * n + j, cols, panel.data() + p * kCols);
    }
    for (std::size_t i = 0; i < m; i += kRows) {
      if (i < m_full && cols == kCols) {
        micro_full(k, a + i * k, k, panel.data(), c + i * n + j, n);
      } else {
        micro_edge(std::min(kRows, m - i), cols, k, a + i * k, k, panel.data(), c + i * n + j, n);
      }
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  std::vector<double> at(m * k);
  transpose_into(k, m, a, at.data());
  gemm_nn(m, k, n, at.data(), b, c);
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  std::vector<double> bt(k * n);
  transpose_into(n, k, b, bt.data());
  gemm_nn(m, k, n, a, bt.data(), c);
}

}  // namespace egomesh::kernels
