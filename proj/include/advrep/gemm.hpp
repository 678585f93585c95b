#pragma once

#include <cstddef>

#include "advrep/common.hpp"

// Small dense GEMM kernels used by the conv/linear layers. Each output row is
// owned by exactly one thread and the inner k loop runs in a fixed serial
// order, so results are bit-identical for any OMP_NUM_THREADS.

namespace advrep {

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  const std::ptrdiff_t mblocks = static_cast<std::ptrdiff_t>(M / 4);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t mb = 0; mb < mblocks; ++mb) {
    const size_t m = static_cast<size_t>(mb) * 4;
    T* c0 = C + (m + 0) * N;
    T* c1 = C + (m + 1) * N;
    T* c2 = C + (m + 2) * N;
    T* c3 = C + (m + 3) * N;
    if (!accumulate) {
      for (size_t n = 0; n < N; ++n) c0[n] = c1[n] = c2[n] = c3[n] = T(0);
    }
    for (size_t k = 0; k < K; ++k) {
      const T a0 = A[(m + 0) * K + k];
      const T a1 = A[(m + 1) * K + k];
      const T a2 = A[(m + 2) * K + k];
      const T a3 = A[(m + 3) * K + k];
      const T* b = B + k * N;
      for (size_t n = 0; n < N; ++n) {
        c0[n] += a0 * b[n];
        c1[n] += a1 * b[n];
        c2[n] += a2 * b[n];
        c3[n] += a3 * b[n];
      }
    }
  }
  for (size_t m = static_cast<size_t>(mblocks) * 4; m < M; ++m) {
    T* c = C + m * N;
    if (!accumulate) {
      for (size_t n = 0; n < N; ++n) c[n] = T(0);
    }
    for (size_t k = 0; k < K; ++k) {
      const T a = A[m * K + k];
      const T* b = B + k * N;
      for (size_t n = 0; n < N; ++n) c[n] += a * b[n];
    }
  }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(size_t M, size_t N, size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t mi = 0; mi < static_cast<std::ptrdiff_t>(M); ++mi) {
    const size_t m = static_cast<size_t>(mi);
    const T* a = A + m * K;
    T* c = C + m * N;
    for (size_t n = 0; n < N; ++n) {
      const T* b = B + n * K;
      T acc = T(0);
      for (size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      c[n] = accumulate ? c[n] + acc : acc;
    }
  }
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(size_t M, size_t N, size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t mi = 0; mi < static_cast<std::ptrdiff_t>(M); ++mi) {
    const size_t m = static_cast<size_t>(mi);
    T* c = C + m * N;
    if (!accumulate) {
      for (size_t n = 0; n < N; ++n) c[n] = T(0);
    }
    for (size_t k = 0; k < K; ++k) {
      const T a = A[k * M + m];
      const T* b = B + k * N;
      for (size_t n = 0; n < N; ++n) c[n] += a * b[n];
    }
  }
}

}  // namespace advrep
