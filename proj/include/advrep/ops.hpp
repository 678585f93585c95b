#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "advrep/common.hpp"
#include "advrep/gemm.hpp"
#include "advrep/rng.hpp"
#include "advrep/tensor.hpp"

// Differentiable ops. Every op pushes at most one closure onto the tape; the
// closure reads the output gradient and accumulates into the inputs that
// require grad. Convolutions are im2col + GEMM; their backward recomputes the
// column buffer instead of caching it across the whole batch.

namespace advrep {

namespace detail {

// cols is [C*kh*kw, Ho*Wo]; row index = (c*kh + ki)*kw + kj.
template <typename T>
void im2col(const T* x, size_t C, size_t H, size_t W, size_t kh, size_t kw,
            size_t pad, T* cols) {
  const size_t Ho = H + 2 * pad - kh + 1;
  const size_t Wo = W + 2 * pad - kw + 1;
  for (size_t c = 0; c < C; ++c) {
    for (size_t ki = 0; ki < kh; ++ki) {
      for (size_t kj = 0; kj < kw; ++kj) {
        T* row = cols + ((c * kh + ki) * kw + kj) * (Ho * Wo);
        for (size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy + ki) -
              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            for (size_t ox = 0; ox < Wo; ++ox) row[oy * Wo + ox] = T(0);
            continue;
          }
          for (size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox + kj) -
                static_cast<std::ptrdiff_t>(pad);
            row[oy * Wo + ox] =
                (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W))
                    ? T(0)
                    : x[(c * H + static_cast<size_t>(iy)) * W +
                        static_cast<size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds column entries back into the image.
template <typename T>
void col2im(const T* cols, size_t C, size_t H, size_t W, size_t kh, size_t kw,
            size_t pad, T* x) {
  const size_t Ho = H + 2 * pad - kh + 1;
  const size_t Wo = W + 2 * pad - kw + 1;
  for (size_t c = 0; c < C; ++c) {
    for (size_t ki = 0; ki < kh; ++ki) {
      for (size_t kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((c * kh + ki) * kw + kj) * (Ho * Wo);
        for (size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy + ki) -
              static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox + kj) -
                static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
            x[(c * H + static_cast<size_t>(iy)) * W +
              static_cast<size_t>(ix)] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

inline size_t conv_out(size_t in, size_t k, size_t pad) {
  return in + 2 * pad - k + 1;
}

}  // namespace detail

// x [N,C,H,W], w [F,C,kh,kw], b [F] -> [N,F,Ho,Wo], stride 1.
template <typename T>
TensorT<T> conv2d(Tape<T>& tape, TensorT<T> x, TensorT<T> w, TensorT<T> b,
                  size_t pad) {
  ADVREP_REQUIRE(x.ndim() == 4 && w.ndim() == 4 && b.ndim() == 1, ShapeError,
                 "conv2d expects x[N,C,H,W], w[F,C,kh,kw], b[F]");
  const size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const size_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  ADVREP_REQUIRE(w.dim(1) == C, ShapeError, "conv2d channel mismatch: x has ",
                 C, ", w has ", w.dim(1));
  ADVREP_REQUIRE(b.dim(0) == F, ShapeError, "conv2d bias size mismatch");
  const size_t Ho = detail::conv_out(H, kh, pad);
  const size_t Wo = detail::conv_out(W, kw, pad);
  const size_t K = C * kh * kw;
  const size_t HW = Ho * Wo;

  TensorT<T> out(std::vector<size_t>{N, F, Ho, Wo},
                 x.requires_grad() || w.requires_grad() || b.requires_grad());
  std::vector<T> cols(K * HW);
  for (size_t n = 0; n < N; ++n) {
    detail::im2col(x.data() + n * C * H * W, C, H, W, kh, kw, pad,
                   cols.data());
    gemm_nn(F, HW, K, w.data(), cols.data(), out.data() + n * F * HW, false);
    T* o = out.data() + n * F * HW;
    for (size_t f = 0; f < F; ++f) {
      const T bv = b.data()[f];
      for (size_t i = 0; i < HW; ++i) o[f * HW + i] += bv;
    }
  }

  if (out.requires_grad()) {
    tape.record([x, w, b, out, pad, N, C, H, W, F, kh, kw, Ho, Wo, K,
                 HW]() mutable {
      const T* go = out.grad();
      std::vector<T> cols(K * HW);
      std::vector<T> dcols(K * HW);
      for (size_t n = 0; n < N; ++n) {
        const T* gon = go + n * F * HW;
        if (w.requires_grad()) {
          detail::im2col(x.data() + n * C * H * W, C, H, W, kh, kw, pad,
                         cols.data());
          gemm_nt(F, K, HW, gon, cols.data(), w.grad(), true);
        }
        if (b.requires_grad()) {
          T* gb = b.grad();
          for (size_t f = 0; f < F; ++f) {
            T acc = T(0);
            for (size_t i = 0; i < HW; ++i) acc += gon[f * HW + i];
            gb[f] += acc;
          }
        }
        if (x.requires_grad()) {
          gemm_tn(K, HW, F, w.data(), gon, dcols.data(), false);
          detail::col2im(dcols.data(), C, H, W, kh, kw, pad,
                         x.grad() + n * C * H * W);
        }
      }
    });
  }
  return out;
}

// Adjoint of conv2d with the same weight layout. x [N,F,H,W], w [F,C,kh,kw],
// b [C] -> [N,C,Ho,Wo] with Ho = H - 2*pad + kh - 1 (spatial-preserving for
// 3x3 pad 1).
template <typename T>
TensorT<T> conv_transpose2d(Tape<T>& tape, TensorT<T> x, TensorT<T> w,
                            TensorT<T> b, size_t pad) {
  ADVREP_REQUIRE(x.ndim() == 4 && w.ndim() == 4 && b.ndim() == 1, ShapeError,
                 "conv_transpose2d expects x[N,F,H,W], w[F,C,kh,kw], b[C]");
  const size_t N = x.dim(0), F = x.dim(1), H = x.dim(2), W = x.dim(3);
  const size_t C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  ADVREP_REQUIRE(w.dim(0) == F, ShapeError,
                 "conv_transpose2d filter mismatch: x has ", F, ", w has ",
                 w.dim(0));
  ADVREP_REQUIRE(b.dim(0) == C, ShapeError, "conv_transpose2d bias mismatch");
  ADVREP_REQUIRE(H + kh >= 1 + 2 * pad && W + kw >= 1 + 2 * pad, ShapeError,
                 "conv_transpose2d output would be empty");
  const size_t Ho = H + kh - 1 - 2 * pad;
  const size_t Wo = W + kw - 1 - 2 * pad;
  ADVREP_CHECK(detail::conv_out(Ho, kh, pad) == H &&
                   detail::conv_out(Wo, kw, pad) == W,
               "conv_transpose2d shape inversion failed");
  const size_t K = C * kh * kw;
  const size_t HW = H * W;

  TensorT<T> out(std::vector<size_t>{N, C, Ho, Wo},
                 x.requires_grad() || w.requires_grad() || b.requires_grad());
  std::vector<T> cols(K * HW);
  for (size_t n = 0; n < N; ++n) {
    gemm_tn(K, HW, F, w.data(), x.data() + n * F * HW, cols.data(), false);
    T* o = out.data() + n * C * Ho * Wo;
    detail::col2im(cols.data(), C, Ho, Wo, kh, kw, pad, o);
    for (size_t c = 0; c < C; ++c) {
      const T bv = b.data()[c];
      for (size_t i = 0; i < Ho * Wo; ++i) o[c * Ho * Wo + i] += bv;
    }
  }

  if (out.requires_grad()) {
    tape.record([x, w, b, out, pad, N, C, F, kh, kw, H, W, Ho, Wo, K,
                 HW]() mutable {
      const T* go = out.grad();
      std::vector<T> gcols(K * HW);
      for (size_t n = 0; n < N; ++n) {
        const T* gon = go + n * C * Ho * Wo;
        detail::im2col(gon, C, Ho, Wo, kh, kw, pad, gcols.data());
        if (x.requires_grad()) {
          gemm_nn(F, HW, K, w.data(), gcols.data(), x.grad() + n * F * HW,
                  true);
        }
        if (w.requires_grad()) {
          gemm_nt(F, K, HW, x.data() + n * F * HW, gcols.data(), w.grad(),
                  true);
        }
        if (b.requires_grad()) {
          T* gb = b.grad();
          for (size_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (size_t i = 0; i < Ho * Wo; ++i) acc += gon[c * Ho * Wo + i];
            gb[c] += acc;
          }
        }
      }
    });
  }
  return out;
}

// 2x2 stride-2 max pooling, floor semantics on odd extents. Ties go to the
// first element in row-major window order.
template <typename T>
TensorT<T> maxpool2d(Tape<T>& tape, TensorT<T> x) {
  ADVREP_REQUIRE(x.ndim() == 4, ShapeError, "maxpool2d expects [N,C,H,W]");
  const size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const size_t Ho = H / 2, Wo = W / 2;
  ADVREP_REQUIRE(Ho > 0 && Wo > 0, ShapeError, "maxpool2d input too small: ",
                 H, "x", W);
  TensorT<T> out(std::vector<size_t>{N, C, Ho, Wo}, x.requires_grad());
  auto argmax = std::make_shared<std::vector<size_t>>(out.numel());

  const size_t planes = N * C;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes); ++pi) {
    const size_t p = static_cast<size_t>(pi);
    const T* in = x.data() + p * H * W;
    T* o = out.data() + p * Ho * Wo;
    size_t* am = argmax->data() + p * Ho * Wo;
    for (size_t oy = 0; oy < Ho; ++oy) {
      for (size_t ox = 0; ox < Wo; ++ox) {
        size_t best = (2 * oy) * W + 2 * ox;
        T bv = in[best];
        const size_t cand[3] = {(2 * oy) * W + 2 * ox + 1,
                                (2 * oy + 1) * W + 2 * ox,
                                (2 * oy + 1) * W + 2 * ox + 1};
        for (size_t idx : cand) {
          if (in[idx] > bv) {
            bv = in[idx];
            best = idx;
          }
        }
        o[oy * Wo + ox] = bv;
        am[oy * Wo + ox] = p * H * W + best;
      }
    }
  }

  if (out.requires_grad()) {
    tape.record([x, out, argmax]() mutable {
      const T* go = out.grad();
      T* gx = x.grad();
      const size_t n = out.numel();
      for (size_t i = 0; i < n; ++i) gx[(*argmax)[i]] += go[i];
    });
  }
  return out;
}

enum class BnMode { kTrain, kEval };

// Per-channel batch normalization over [N,C,H,W]. Train mode normalizes with
// biased batch statistics and (optionally) folds them into the running
// buffers; eval mode normalizes with the running buffers and treats them as
// constants in the backward pass.
template <typename T>
TensorT<T> batchnorm2d(Tape<T>& tape, TensorT<T> x, TensorT<T> gamma,
                       TensorT<T> beta, TensorT<T> running_mean,
                       TensorT<T> running_var, BnMode mode,
                       bool update_running, T momentum = T(0.1),
                       T eps = T(1e-5)) {
  ADVREP_REQUIRE(x.ndim() == 4, ShapeError, "batchnorm2d expects [N,C,H,W]");
  const size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  ADVREP_REQUIRE(gamma.dim(0) == C && beta.dim(0) == C &&
                     running_mean.dim(0) == C && running_var.dim(0) == C,
                 ShapeError, "batchnorm2d channel mismatch");
  const size_t HW = H * W;
  const size_t M = N * HW;
  ADVREP_CHECK(M > 0, "batchnorm2d empty batch");

  auto mean = std::make_shared<std::vector<T>>(C, T(0));
  auto var = std::make_shared<std::vector<T>>(C, T(0));
  if (mode == BnMode::kTrain) {
    for (size_t c = 0; c < C; ++c) {
      T s = T(0);
      for (size_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) s += p[i];
      }
      const T mu = s / static_cast<T>(M);
      T v = T(0);
      for (size_t n = 0; n < N; ++n) {
        const T* p = x.data() + (n * C + c) * HW;
        for (size_t i = 0; i < HW; ++i) {
          const T d = p[i] - mu;
          v += d * d;
        }
      }
      (*mean)[c] = mu;
      (*var)[c] = v / static_cast<T>(M);
    }
    if (update_running) {
      for (size_t c = 0; c < C; ++c) {
        running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] +
                                 momentum * (*mean)[c];
        running_var.data()[c] =
            (T(1) - momentum) * running_var.data()[c] + momentum * (*var)[c];
      }
    }
  } else {
    for (size_t c = 0; c < C; ++c) {
      (*mean)[c] = running_mean.data()[c];
      (*var)[c] = running_var.data()[c];
    }
  }

  TensorT<T> out(
      std::vector<size_t>{N, C, H, W},
      x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  auto inv_std = std::make_shared<std::vector<T>>(C);
  for (size_t c = 0; c < C; ++c)
    (*inv_std)[c] = T(1) / std::sqrt((*var)[c] + eps);
  for (size_t n = 0; n < N; ++n) {
    for (size_t c = 0; c < C; ++c) {
      const T* p = x.data() + (n * C + c) * HW;
      T* o = out.data() + (n * C + c) * HW;
      const T mu = (*mean)[c], is = (*inv_std)[c];
      const T g = gamma.data()[c], bt = beta.data()[c];
      for (size_t i = 0; i < HW; ++i) o[i] = g * (p[i] - mu) * is + bt;
    }
  }

  if (out.requires_grad()) {
    const bool train_stats = (mode == BnMode::kTrain);
    tape.record([x, gamma, beta, out, mean, inv_std, N, C, HW, M,
                 train_stats]() mutable {
      const T* go = out.grad();
      for (size_t c = 0; c < C; ++c) {
        const T mu = (*mean)[c], is = (*inv_std)[c];
        const T g = gamma.data()[c];
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (size_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * C + c) * HW;
          const T* gp = go + (n * C + c) * HW;
          for (size_t i = 0; i < HW; ++i) {
            sum_dy += gp[i];
            sum_dy_xhat += gp[i] * (p[i] - mu) * is;
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += sum_dy_xhat;
        if (beta.requires_grad()) beta.grad()[c] += sum_dy;
        if (x.requires_grad()) {
          T* gx = x.grad();
          const T inv_m = T(1) / static_cast<T>(M);
          for (size_t n = 0; n < N; ++n) {
            const T* p = x.data() + (n * C + c) * HW;
            const T* gp = go + (n * C + c) * HW;
            T* gxp = gx + (n * C + c) * HW;
            for (size_t i = 0; i < HW; ++i) {
              if (train_stats) {
                const T xhat = (p[i] - mu) * is;
                gxp[i] += g * is *
                          (gp[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
              } else {
                gxp[i] += g * is * gp[i];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> leaky_relu(Tape<T>& tape, TensorT<T> x, T slope = T(0.01)) {
  TensorT<T> out(x.shape(), x.requires_grad());
  const size_t n = x.numel();
  const T* in = x.data();
  T* o = out.data();
  for (size_t i = 0; i < n; ++i) o[i] = in[i] > T(0) ? in[i] : slope * in[i];
  if (out.requires_grad()) {
    tape.record([x, out, slope]() mutable {
      const T* go = out.grad();
      const T* in = x.data();
      T* gx = x.grad();
      const size_t n = x.numel();
      for (size_t i = 0; i < n; ++i)
        gx[i] += in[i] > T(0) ? go[i] : slope * go[i];
    });
  }
  return out;
}

// Nearest-neighbour resize to (H,W); index map floor(out*in/out_extent).
template <typename T>
TensorT<T> interpolate_nearest(Tape<T>& tape, TensorT<T> x, size_t H,
                               size_t W) {
  ADVREP_REQUIRE(x.ndim() == 4, ShapeError,
                 "interpolate_nearest expects [N,C,h,w]");
  const size_t N = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  ADVREP_REQUIRE(H > 0 && W > 0, ShapeError, "interpolate target empty");
  TensorT<T> out(std::vector<size_t>{N, C, H, W}, x.requires_grad());

  std::vector<size_t> ymap(H), xmap(W);
  for (size_t y = 0; y < H; ++y) ymap[y] = y * h / H;
  for (size_t xx = 0; xx < W; ++xx) xmap[xx] = xx * w / W;

  const size_t planes = N * C;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes); ++pi) {
    const size_t p = static_cast<size_t>(pi);
    const T* in = x.data() + p * h * w;
    T* o = out.data() + p * H * W;
    for (size_t y = 0; y < H; ++y) {
      const T* row = in + ymap[y] * w;
      for (size_t xx = 0; xx < W; ++xx) o[y * W + xx] = row[xmap[xx]];
    }
  }

  if (out.requires_grad()) {
    auto ym = std::make_shared<std::vector<size_t>>(std::move(ymap));
    auto xm = std::make_shared<std::vector<size_t>>(std::move(xmap));
    tape.record([x, out, ym, xm, N, C, h, w, H, W]() mutable {
      const size_t planes = N * C;
      const T* go = out.grad();
      T* gx = x.grad();
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes);
           ++pi) {
        const size_t p = static_cast<size_t>(pi);
        const T* gop = go + p * H * W;
        T* gxp = gx + p * h * w;
        for (size_t y = 0; y < H; ++y) {
          T* grow = gxp + (*ym)[y] * w;
          const T* gorow = gop + y * W;
          for (size_t xx = 0; xx < W; ++xx) grow[(*xm)[xx]] += gorow[xx];
        }
      }
    });
  }
  return out;
}

// x [N,In], w [Out,In], b [Out] -> [N,Out]
template <typename T>
TensorT<T> linear(Tape<T>& tape, TensorT<T> x, TensorT<T> w, TensorT<T> b) {
  ADVREP_REQUIRE(x.ndim() == 2 && w.ndim() == 2 && b.ndim() == 1, ShapeError,
                 "linear expects x[N,In], w[Out,In], b[Out]");
  const size_t N = x.dim(0), In = x.dim(1), Out = w.dim(0);
  ADVREP_REQUIRE(w.dim(1) == In, ShapeError, "linear input mismatch: x has ",
                 In, ", w has ", w.dim(1));
  ADVREP_REQUIRE(b.dim(0) == Out, ShapeError, "linear bias mismatch");
  TensorT<T> out(std::vector<size_t>{N, Out},
                 x.requires_grad() || w.requires_grad() || b.requires_grad());
  gemm_nt(N, Out, In, x.data(), w.data(), out.data(), false);
  for (size_t n = 0; n < N; ++n) {
    T* o = out.data() + n * Out;
    for (size_t j = 0; j < Out; ++j) o[j] += b.data()[j];
  }
  if (out.requires_grad()) {
    tape.record([x, w, b, out, N, In, Out]() mutable {
      const T* go = out.grad();
      if (x.requires_grad()) gemm_nn(N, In, Out, go, w.data(), x.grad(), true);
      if (w.requires_grad())
        gemm_tn(Out, In, N, go, x.data(), w.grad(), true);
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (size_t n = 0; n < N; ++n)
          for (size_t j = 0; j < Out; ++j) gb[j] += go[n * Out + j];
      }
    });
  }
  return out;
}

// Inverted dropout; the mask is drawn serially from rng so the stream
// position depends only on the element count. Inactive or p == 0 is a free
// pass-through of the same handle.
template <typename T>
TensorT<T> dropout(Tape<T>& tape, TensorT<T> x, double p, Rng& rng,
                   bool active) {
  ADVREP_REQUIRE(p >= 0.0 && p < 1.0, ConfigError, "dropout rate ", p,
                 " outside [0,1)");
  if (!active || p == 0.0) return x;
  const size_t n = x.numel();
  auto mask = std::make_shared<std::vector<T>>(n);
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (size_t i = 0; i < n; ++i)
    (*mask)[i] = rng.uniform() < p ? T(0) : scale;
  TensorT<T> out(x.shape(), x.requires_grad());
  for (size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * (*mask)[i];
  if (out.requires_grad()) {
    tape.record([x, out, mask]() mutable {
      const T* go = out.grad();
      T* gx = x.grad();
      const size_t n = x.numel();
      for (size_t i = 0; i < n; ++i) gx[i] += go[i] * (*mask)[i];
    });
  }
  return out;
}

// Copy into a new shape with the same element count; gradient passes through.
template <typename T>
TensorT<T> reshape(Tape<T>& tape, TensorT<T> x, std::vector<size_t> shape) {
  ADVREP_REQUIRE(TensorT<T>::count(shape) == x.numel(), ShapeError,
                 "reshape element count mismatch");
  TensorT<T> out(std::move(shape), x.requires_grad());
  std::copy(x.data(), x.data() + x.numel(), out.data());
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      const T* go = out.grad();
      T* gx = x.grad();
      const size_t n = x.numel();
      for (size_t i = 0; i < n; ++i) gx[i] += go[i];
    });
  }
  return out;
}

// Mean squared error over all elements.
template <typename T>
TensorT<T> mse_loss(Tape<T>& tape, TensorT<T> pred, TensorT<T> target) {
  ADVREP_REQUIRE(pred.numel() == target.numel(), ShapeError,
                 "mse_loss size mismatch: ", pred.numel(), " vs ",
                 target.numel());
  const size_t n = pred.numel();
  ADVREP_CHECK(n > 0, "mse_loss on empty tensors");
  T acc = T(0);
  for (size_t i = 0; i < n; ++i) {
    const T d = pred.data()[i] - target.data()[i];
    acc += d * d;
  }
  TensorT<T> out = TensorT<T>::scalar(
      acc / static_cast<T>(n), pred.requires_grad() || target.requires_grad());
  if (out.requires_grad()) {
    tape.record([pred, target, out, n]() mutable {
      const T g = out.grad()[0] * T(2) / static_cast<T>(n);
      if (pred.requires_grad()) {
        T* gp = pred.grad();
        for (size_t i = 0; i < n; ++i)
          gp[i] += g * (pred.data()[i] - target.data()[i]);
      }
      if (target.requires_grad()) {
        T* gt = target.grad();
        for (size_t i = 0; i < n; ++i)
          gt[i] -= g * (pred.data()[i] - target.data()[i]);
      }
    });
  }
  return out;
}

// Row-wise softmax of a plain buffer; no tape involvement.
template <typename T>
std::vector<T> softmax_rows(const T* logits, size_t N, size_t K) {
  std::vector<T> probs(N * K);
  for (size_t n = 0; n < N; ++n) {
    const T* z = logits + n * K;
    T* p = probs.data() + n * K;
    T mx = z[0];
    for (size_t k = 1; k < K; ++k) mx = std::max(mx, z[k]);
    T denom = T(0);
    for (size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - mx);
      denom += p[k];
    }
    for (size_t k = 0; k < K; ++k) p[k] /= denom;
  }
  return probs;
}

template <typename T>
struct CrossEntropyOut {
  TensorT<T> loss;             // scalar, mean over rows
  std::vector<T> probs;        // [N,K] softmax rows
};

// Fused softmax + cross entropy against integer labels.
template <typename T>
CrossEntropyOut<T> softmax_cross_entropy(Tape<T>& tape, TensorT<T> logits,
                                         const std::vector<int>& labels) {
  ADVREP_REQUIRE(logits.ndim() == 2, ShapeError,
                 "softmax_cross_entropy expects [N,K] logits");
  const size_t N = logits.dim(0), K = logits.dim(1);
  ADVREP_REQUIRE(labels.size() == N, ShapeError, "label count ", labels.size(),
                 " does not match batch ", N);
  for (int y : labels)
    ADVREP_REQUIRE(y >= 0 && static_cast<size_t>(y) < K, DataError,
                   "label ", y, " outside [0,", K, ")");
  std::vector<T> probs = softmax_rows(logits.data(), N, K);
  T acc = T(0);
  for (size_t n = 0; n < N; ++n) {
    const T p = probs[n * K + static_cast<size_t>(labels[n])];
    acc -= std::log(std::max(p, static_cast<T>(1e-30)));
  }
  TensorT<T> loss =
      TensorT<T>::scalar(acc / static_cast<T>(N), logits.requires_grad());
  if (loss.requires_grad()) {
    auto pv = std::make_shared<std::vector<T>>(probs);
    auto lv = std::make_shared<std::vector<int>>(labels);
    tape.record([logits, loss, pv, lv, N, K]() mutable {
      const T g = loss.grad()[0] / static_cast<T>(N);
      T* gz = logits.grad();
      for (size_t n = 0; n < N; ++n) {
        const size_t y = static_cast<size_t>((*lv)[n]);
        for (size_t k = 0; k < K; ++k) {
          T d = (*pv)[n * K + k];
          if (k == y) d -= T(1);
          gz[n * K + k] += g * d;
        }
      }
    });
  }
  return {loss, std::move(probs)};
}

// Sum of all elements, for adjoint tests.
template <typename T>
TensorT<T> sum_all(Tape<T>& tape, TensorT<T> x) {
  T acc = T(0);
  for (size_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  TensorT<T> out = TensorT<T>::scalar(acc, x.requires_grad());
  if (out.requires_grad()) {
    tape.record([x, out]() mutable {
      const T g = out.grad()[0];
      T* gx = x.grad();
      for (size_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
  }
  return out;
}

// out = sum_i w_i * s_i over scalar tensors; terms with weight 0 are skipped
// entirely so they contribute neither value nor tape traffic.
template <typename T>
TensorT<T> weighted_sum(Tape<T>& tape,
                        const std::vector<std::pair<T, TensorT<T>>>& terms) {
  T acc = T(0);
  bool grad = false;
  std::vector<std::pair<T, TensorT<T>>> live;
  for (const auto& [w, s] : terms) {
    if (w == T(0)) continue;
    ADVREP_CHECK(s.numel() == 1, "weighted_sum term is not scalar");
    acc += w * s.data()[0];
    grad = grad || s.requires_grad();
    live.emplace_back(w, s);
  }
  TensorT<T> out = TensorT<T>::scalar(acc, grad);
  if (grad) {
    auto terms_p =
        std::make_shared<std::vector<std::pair<T, TensorT<T>>>>(std::move(live));
    tape.record([terms_p, out]() mutable {
      const T g = out.grad()[0];
      for (auto& [w, s] : *terms_p)
        if (s.requires_grad()) s.grad()[0] += g * w;
    });
  }
  return out;
}

}  // namespace advrep
