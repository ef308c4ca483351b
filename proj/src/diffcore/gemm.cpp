#include "diffcore/gemm.hpp"

#include <algorithm>

namespace whdspot::diff {

namespace {
constexpr std::int64_t kColBlock = 256;
constexpr std::int64_t kRowBlock = 4;
}  // namespace

template <class T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::int64_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::int64_t jn = std::min(kColBlock, n - j0);
    std::int64_t i = 0;
    for (; i + kRowBlock <= m; i += kRowBlock) {
      T* c0 = c + (i + 0) * n + j0;
      T* c1 = c + (i + 1) * n + j0;
      T* c2 = c + (i + 2) * n + j0;
      T* c3 = c + (i + 3) * n + j0;
      const T* a0 = a + (i + 0) * k;
      const T* a1 = a + (i + 1) * k;
      const T* a2 = a + (i + 2) * k;
      const T* a3 = a + (i + 3) * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const T* brow = b + p * n + j0;
        const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
        for (std::int64_t j = 0; j < jn; ++j) {
          const T bv = brow[j];
          c0[j] += v0 * bv;
          c1[j] += v1 * bv;
          c2[j] += v2 * bv;
          c3[j] += v3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* crow = c + i * n + j0;
      const T* arow = a + i * k;
      for (std::int64_t p = 0; p < k; ++p) {
        const T* brow = b + p * n + j0;
        const T v = arow[p];
        for (std::int64_t j = 0; j < jn; ++j) crow[j] += v * brow[j];
      }
    }
  }
}

template <class T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst) {
  constexpr std::int64_t tile = 32;
  for (std::int64_t r0 = 0; r0 < rows; r0 += tile)
    for (std::int64_t c0 = 0; c0 < cols; c0 += tile)
      for (std::int64_t r = r0; r < std::min(rows, r0 + tile); ++r)
        for (std::int64_t col = c0; col < std::min(cols, c0 + tile); ++col) dst[col * rows + r] = src[r * cols + col];
}

template void gemm<double>(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*, bool);
template void gemm<float>(std::int64_t, std::int64_t, std::int64_t, const float*, const float*, float*, bool);
template void transpose<double>(std::int64_t, std::int64_t, const double*, double*);
template void transpose<float>(std::int64_t, std::int64_t, const float*, float*);

}  // namespace whdspot::diff
