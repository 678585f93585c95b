#include <benchmark/benchmark.h>

#include <vector>

#include "advrep/ops.hpp"
#include "advrep/ref_kernels.hpp"
#include "advrep/rng.hpp"

namespace {

using advrep::Rng;
using advrep::Tape;
using advrep::TensorT;

std::vector<float> random_vec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

// conv2d on an encoder-stage-2-sized problem: [8,16,63,62] -> [8,32,63,62].
constexpr size_t kN = 8, kC = 16, kH = 63, kW = 62, kF = 32;

void BM_conv2d_ref(benchmark::State& state) {
  const auto x = random_vec(kN * kC * kH * kW, 1);
  const auto w = random_vec(kF * kC * 9, 2);
  const auto b = random_vec(kF, 3);
  std::vector<float> out(kN * kF * kH * kW);
  for (auto _ : state) {
    advrep::ref::conv2d(kN, kC, kH, kW, kF, 3, 3, 1, x.data(), w.data(),
                        b.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * kN * kF * kC * kH *
                          kW * 9);
}
BENCHMARK(BM_conv2d_ref)->Unit(benchmark::kMillisecond);

void BM_conv2d_gemm(benchmark::State& state) {
  Rng rng(4);
  TensorT<float> x({kN, kC, kH, kW});
  TensorT<float> w({kF, kC, 3, 3});
  TensorT<float> b({kF});
  for (size_t i = 0; i < x.numel(); ++i)
    x.data()[i] = static_cast<float>(rng.normal());
  for (size_t i = 0; i < w.numel(); ++i)
    w.data()[i] = static_cast<float>(rng.normal());
  for (auto _ : state) {
    Tape<float> tape;
    auto y = advrep::conv2d(tape, x, w, b, 1);
    benchmark::DoNotOptimize(y.data());
    tape.clear();
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * kN * kF * kC * kH *
                          kW * 9);
}
BENCHMARK(BM_conv2d_gemm)->Unit(benchmark::kMillisecond);

void BM_conv_transpose2d_ref(benchmark::State& state) {
  const auto x = random_vec(kN * kF * kH * kW, 5);
  const auto w = random_vec(kF * kC * 9, 6);
  const auto b = random_vec(kC, 7);
  std::vector<float> out(kN * kC * kH * kW);
  for (auto _ : state) {
    advrep::ref::conv_transpose2d(kN, kF, kH, kW, kC, 3, 3, 1, x.data(),
                                  w.data(), b.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * kN * kF * kC * kH *
                          kW * 9);
}
BENCHMARK(BM_conv_transpose2d_ref)->Unit(benchmark::kMillisecond);

void BM_conv_transpose2d_gemm(benchmark::State& state) {
  Rng rng(8);
  TensorT<float> x({kN, kF, kH, kW});
  TensorT<float> w({kF, kC, 3, 3});
  TensorT<float> b({kC});
  for (size_t i = 0; i < x.numel(); ++i)
    x.data()[i] = static_cast<float>(rng.normal());
  for (size_t i = 0; i < w.numel(); ++i)
    w.data()[i] = static_cast<float>(rng.normal());
  for (auto _ : state) {
    Tape<float> tape;
    auto y = advrep::conv_transpose2d(tape, x, w, b, 1);
    benchmark::DoNotOptimize(y.data());
    tape.clear();
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * kN * kF * kC * kH *
                          kW * 9);
}
BENCHMARK(BM_conv_transpose2d_gemm)->Unit(benchmark::kMillisecond);

void BM_maxpool_ref(benchmark::State& state) {
  const auto x = random_vec(kN * kC * kH * kW, 9);
  std::vector<float> out(kN * kC * (kH / 2) * (kW / 2));
  for (auto _ : state) {
    advrep::ref::maxpool2d(kN, kC, kH, kW, x.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_maxpool_ref)->Unit(benchmark::kMicrosecond);

void BM_maxpool_omp(benchmark::State& state) {
  Rng rng(10);
  TensorT<float> x({kN, kC, kH, kW});
  for (size_t i = 0; i < x.numel(); ++i)
    x.data()[i] = static_cast<float>(rng.normal());
  for (auto _ : state) {
    Tape<float> tape;
    auto y = advrep::maxpool2d(tape, x);
    benchmark::DoNotOptimize(y.data());
    tape.clear();
  }
}
BENCHMARK(BM_maxpool_omp)->Unit(benchmark::kMicrosecond);

void BM_gemm_nn(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const auto a = random_vec(n * n, 11);
  const auto b = random_vec(n * n, 12);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    advrep::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n * n);
}
BENCHMARK(BM_gemm_nn)->Arg(128)->Arg(256)->Arg(512)->Unit(
    benchmark::kMillisecond);

void BM_matmul_ref(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const auto a = random_vec(n * n, 13);
  const auto b = random_vec(n * n, 14);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    advrep::ref::matmul(n, n, n, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(int64_t(state.iterations()) * n * n * n);
}
BENCHMARK(BM_matmul_ref)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
