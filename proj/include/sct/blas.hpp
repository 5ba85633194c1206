#pragma once

#include <cstddef>

namespace sct::blas {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
// Backed by OpenBLAS sgemm/dgemm; results are bit-reproducible for a fixed
// thread count.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float beta, float* c, std::size_t ldc);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc);

void set_threads(int n);

}  // namespace sct::blas
