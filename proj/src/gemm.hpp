#pragma once

#include <cstddef>

namespace lff::detail {

/// Row-major C = alpha * op(A) * op(B) + beta * C, single-threaded.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace lff::detail
