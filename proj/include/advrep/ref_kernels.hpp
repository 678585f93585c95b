#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "advrep/common.hpp"

// Plain serial reference kernels. Written in the most literal form possible
// (direct nested loops, no im2col, no blocking) so they can stand as an
// independent check on the fast paths, and as the baseline side of the
// kernel benchmark.

namespace advrep::ref {

// C[M,N] = A[M,K] * B[K,N]
template <typename T>
void matmul(size_t M, size_t N, size_t K, const T* A, const T* B, T* C) {
  for (size_t m = 0; m < M; ++m) {
    for (size_t n = 0; n < N; ++n) {
      T acc = T(0);
      for (size_t k = 0; k < K; ++k) acc += A[m * K + k] * B[k * N + n];
      C[m * N + n] = acc;
    }
  }
}

// x [N,C,H,W], w [F,C,kh,kw], b [F] -> out [N,F,Ho,Wo], stride 1.
template <typename T>
void conv2d(size_t N, size_t C, size_t H, size_t W, size_t F, size_t kh,
            size_t kw, size_t pad, const T* x, const T* w, const T* b,
            T* out) {
  const size_t Ho = H + 2 * pad - kh + 1;
  const size_t Wo = W + 2 * pad - kw + 1;
  for (size_t n = 0; n < N; ++n) {
    for (size_t f = 0; f < F; ++f) {
      for (size_t oy = 0; oy < Ho; ++oy) {
        for (size_t ox = 0; ox < Wo; ++ox) {
          T acc = b[f];
          for (size_t c = 0; c < C; ++c) {
            for (size_t ki = 0; ki < kh; ++ki) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ki) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (size_t kj = 0; kj < kw; ++kj) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox + kj) -
                    static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += w[((f * C + c) * kh + ki) * kw + kj] *
                       x[((n * C + c) * H + static_cast<size_t>(iy)) * W +
                         static_cast<size_t>(ix)];
              }
            }
          }
          out[((n * F + f) * Ho + oy) * Wo + ox] = acc;
        }
      }
    }
  }
}

// x [N,F,H,W], w [F,C,kh,kw], b [C] -> out [N,C,Ho,Wo] with
// Ho = H + kh - 1 - 2*pad; literal adjoint of the convolution above.
template <typename T>
void conv_transpose2d(size_t N, size_t F, size_t H, size_t W, size_t C,
                      size_t kh, size_t kw, size_t pad, const T* x, const T* w,
                      const T* b, T* out) {
  const size_t Ho = H + kh - 1 - 2 * pad;
  const size_t Wo = W + kw - 1 - 2 * pad;
  for (size_t n = 0; n < N; ++n) {
    for (size_t c = 0; c < C; ++c) {
      for (size_t y = 0; y < Ho; ++y) {
        for (size_t xx = 0; xx < Wo; ++xx) {
          T acc = b[c];
          for (size_t f = 0; f < F; ++f) {
            for (size_t ki = 0; ki < kh; ++ki) {
              const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + pad) -
                                        static_cast<std::ptrdiff_t>(ki);
              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (size_t kj = 0; kj < kw; ++kj) {
                const std::ptrdiff_t sx =
                    static_cast<std::ptrdiff_t>(xx + pad) -
                    static_cast<std::ptrdiff_t>(kj);
                if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += w[((f * C + c) * kh + ki) * kw + kj] *
                       x[((n * F + f) * H + static_cast<size_t>(sy)) * W +
                         static_cast<size_t>(sx)];
              }
            }
          }
          out[((n * C + c) * Ho + y) * Wo + xx] = acc;
        }
      }
    }
  }
}

// 2x2 stride-2 max pooling, floor semantics.
template <typename T>
void maxpool2d(size_t N, size_t C, size_t H, size_t W, const T* x, T* out) {
  const size_t Ho = H / 2, Wo = W / 2;
  for (size_t p = 0; p < N * C; ++p) {
    for (size_t oy = 0; oy < Ho; ++oy) {
      for (size_t ox = 0; ox < Wo; ++ox) {
        T best = x[p * H * W + (2 * oy) * W + 2 * ox];
        for (size_t dy = 0; dy < 2; ++dy)
          for (size_t dx = 0; dx < 2; ++dx) {
            const T v = x[p * H * W + (2 * oy + dy) * W + (2 * ox + dx)];
            if (v > best) best = v;
          }
        out[p * Ho * Wo + oy * Wo + ox] = best;
      }
    }
  }
}

template <typename T>
void interpolate_nearest(size_t N, size_t C, size_t h, size_t w, size_t H,
                         size_t W, const T* x, T* out) {
  for (size_t p = 0; p < N * C; ++p)
    for (size_t y = 0; y < H; ++y)
      for (size_t xx = 0; xx < W; ++xx)
        out[p * H * W + y * W + xx] =
            x[p * h * w + (y * h / H) * w + (xx * w / W)];
}

// Batch-normalized forward given explicit statistics.
template <typename T>
void batchnorm2d(size_t N, size_t C, size_t H, size_t W, const T* x,
                 const T* gamma, const T* beta, const T* mean, const T* var,
                 T eps, T* out) {
  const size_t HW = H * W;
  for (size_t n = 0; n < N; ++n)
    for (size_t c = 0; c < C; ++c) {
      const T is = T(1) / std::sqrt(var[c] + eps);
      for (size_t i = 0; i < HW; ++i) {
        const size_t idx = (n * C + c) * HW + i;
        out[idx] = gamma[c] * (x[idx] - mean[c]) * is + beta[c];
      }
    }
}

// Mean cross entropy of logits against integer labels, accumulated in long
// double with an explicit log-sum-exp per row.
inline long double cross_entropy(const float* logits, const int* labels,
                                 size_t N, size_t K) {
  long double total = 0.0L;
  for (size_t n = 0; n < N; ++n) {
    const float* z = logits + n * K;
    long double mx = z[0];
    for (size_t k = 1; k < K; ++k) mx = std::max<long double>(mx, z[k]);
    long double lse = 0.0L;
    for (size_t k = 0; k < K; ++k) lse += std::exp(static_cast<long double>(z[k]) - mx);
    lse = mx + std::log(lse);
    total += lse - static_cast<long double>(z[labels[n]]);
  }
  return total / static_cast<long double>(N);
}

// Mean squared error in long double.
inline long double mse(const float* a, const float* b, size_t n) {
  long double acc = 0.0L;
  for (size_t i = 0; i < n; ++i) {
    const long double d =
        static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<long double>(n);
}

// O(P*N) pairwise AUC with half credit for ties.
inline double auc_pairwise(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  ADVREP_CHECK(scores.size() == labels.size(), "auc input size mismatch");
  double num = 0.0;
  size_t pos = 0, neg = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    ++pos;
    for (size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  for (int y : labels)
    if (y != 1) ++neg;
  ADVREP_REQUIRE(pos > 0 && neg > 0, DataError,
                 "auc needs both classes present; got ", pos, " positive and ",
                 neg, " negative");
  return num / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace advrep::ref
