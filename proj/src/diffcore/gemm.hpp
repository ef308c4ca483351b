#pragma once

#include <cstdint>

namespace whdspot::diff {

// C[M,N] (+)= A[M,K] * B[K,N], all row-major. Each output element is summed
// over k in increasing order starting from zero (or from C when
// accumulating), which matches a naive triple loop bit-for-bit.
template <class T>
void gemm(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c, bool accumulate);

// dst[cols,rows] = src[rows,cols]^T
template <class T>
void transpose(std::int64_t rows, std::int64_t cols, const T* src, T* dst);

}  // namespace whdspot::diff
