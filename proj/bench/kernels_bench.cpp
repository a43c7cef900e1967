// Reference loop nests against the im2col/OpenMP kernels.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "cdcl/kernels.hpp"

namespace k = cdcl::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

k::ConvGeometry geometry(const benchmark::State& state) {
  k::ConvGeometry g;
  g.n = 4;
  g.cin = g.cout = state.range(0);
  g.h = g.w = state.range(1);
  g.k = 3;
  g.pad = 1;
  g.groups = state.range(2);
  return g;
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
  const auto g = geometry(state);
  const auto padded = random_values(static_cast<std::size_t>(g.n * g.cin * g.padded_h() * g.padded_w()), 1);
  const auto weight = random_values(static_cast<std::size_t>(g.cout * g.cin_per_group() * g.k * g.k), 2);
  const auto bias = random_values(static_cast<std::size_t>(g.cout), 3);
  std::vector<float> out(static_cast<std::size_t>(g.n * g.cout * g.out_h() * g.out_w()));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_forward(g, padded.data(), weight.data(), bias.data(), out.data());
    } else {
      k::reference::conv2d_forward(g, padded.data(), weight.data(), bias.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(out.size()));
}

template <bool Parallel>
void BM_Conv2dBackwardWeight(benchmark::State& state) {
  const auto g = geometry(state);
  const auto padded = random_values(static_cast<std::size_t>(g.n * g.cin * g.padded_h() * g.padded_w()), 4);
  const auto dout = random_values(static_cast<std::size_t>(g.n * g.cout * g.out_h() * g.out_w()), 5);
  std::vector<float> dweight(static_cast<std::size_t>(g.cout * g.cin_per_group() * g.k * g.k));
  std::vector<float> dbias(static_cast<std::size_t>(g.cout));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_backward_weight(g, padded.data(), dout.data(), dweight.data(), dbias.data());
    } else {
      k::reference::conv2d_backward_weight(g, padded.data(), dout.data(), dweight.data(), dbias.data());
    }
    benchmark::DoNotOptimize(dweight.data());
  }
}

template <bool Parallel>
void BM_Dense(benchmark::State& state) {
  const std::int64_t n = 64, in = state.range(0), out = state.range(0);
  const auto x = random_values(static_cast<std::size_t>(n * in), 6);
  const auto w = random_values(static_cast<std::size_t>(out * in), 7);
  const auto b = random_values(static_cast<std::size_t>(out), 8);
  std::vector<float> y(static_cast<std::size_t>(n * out));
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::dense_forward(n, in, out, x.data(), w.data(), b.data(), y.data());
    } else {
      k::reference::dense_forward(n, in, out, x.data(), w.data(), b.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

std::vector<double> gaussian(int size, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(size));
  double total = 0.0;
  for (int i = 0; i < size; ++i) total += taps[i] = std::exp(-0.5 * std::pow((i - size / 2) / sigma, 2));
  for (auto& t : taps) t /= total;
  return taps;
}

enum class Blur { Reference, Parallel, Separable };

template <Blur Mode>
void BM_BlurPlane(benchmark::State& state) {
  const std::int64_t side = state.range(0), size = 21;
  const auto src = random_values(static_cast<std::size_t>(side * side), 9);
  const auto taps = gaussian(size, 2.0);
  std::vector<double> kernel(static_cast<std::size_t>(size * size));
  for (std::int64_t i = 0; i < size; ++i)
    for (std::int64_t j = 0; j < size; ++j) kernel[i * size + j] = taps[i] * taps[j];
  std::vector<float> dst(src.size());
  for (auto _ : state) {
    if constexpr (Mode == Blur::Reference) {
      k::reference::filter_plane(side, side, src.data(), size, kernel.data(), dst.data());
    } else if constexpr (Mode == Blur::Parallel) {
      k::parallel::filter_plane(side, side, src.data(), size, kernel.data(), dst.data());
    } else {
      k::parallel::filter_plane_separable(side, side, src.data(), taps, dst.data());
    }
    benchmark::DoNotOptimize(dst.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 32, 1})->Args({64, 32, 1})->Args({64, 32, 64})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/reference")->Apply(conv_args);
BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/parallel")->Apply(conv_args);
BENCHMARK(BM_Conv2dBackwardWeight<false>)->Name("conv2d_backward_weight/reference")->Apply(conv_args);
BENCHMARK(BM_Conv2dBackwardWeight<true>)->Name("conv2d_backward_weight/parallel")->Apply(conv_args);
BENCHMARK(BM_Dense<false>)->Name("dense/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Dense<true>)->Name("dense/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_BlurPlane<Blur::Reference>)->Name("blur21/reference")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BlurPlane<Blur::Parallel>)->Name("blur21/parallel")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_BlurPlane<Blur::Separable>)->Name("blur21/separable")->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
