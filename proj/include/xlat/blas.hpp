#pragma once

#include <cblas.h>
#include <malloc.h>

#include <cstdint>
#include <cstdlib>
#include <mutex>

namespace xlat {

inline void set_blas_threads(int n) { openblas_set_num_threads(n); }

/// Process-wide tuning for the training paths. BLAS threads default to 1
/// (XLAT_BLAS_THREADS overrides): on small cores the pthread pool's spin
/// waits cost more than the parallel GEMM wins. The malloc thresholds keep
/// multi-MB activation buffers recycled in the heap instead of being
/// returned to the kernel and page-zeroed again on every forward pass.
inline void tune_runtime() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    mallopt(M_MMAP_THRESHOLD, 128 << 20);
    mallopt(M_TRIM_THRESHOLD, 128 << 20);
    const char* threads = std::getenv("XLAT_BLAS_THREADS");
    set_blas_threads(threads ? std::atoi(threads) : 1);
  });
}

/// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 float alpha, const float* a, int64_t lda, const float* b,
                 int64_t ldb, float beta, float* c, int64_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 double alpha, const double* a, int64_t lda, const double* b,
                 int64_t ldb, double beta, double* c, int64_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

}  // namespace xlat
