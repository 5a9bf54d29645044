// Copyright 2026 The NAPSE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Serial reference kernels against the OpenMP kernels, plus one
// end-to-end enhancement pass at a single thread.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "napse/kernels.hpp"
#include "napse/pipeline.hpp"

namespace {

using napse::kernels::Conv2dGeometry;
using napse::kernels::ConvTransposeGeometry;

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Encoder-sized block: 1 s of 10 ms frames over a 257-bin spectrum.
Conv2dGeometry conv_geometry() {
  Conv2dGeometry g;
  g.in_channels = 16;
  g.out_channels = 32;
  g.in_time = 100;
  g.in_freq = 129;
  g.kernel_time = 2;
  g.kernel_freq = 3;
  g.stride_freq = 2;
  g.pad_time_front = 1;
  g.pad_freq = 1;
  return g;
}

ConvTransposeGeometry tconv_geometry() {
  ConvTransposeGeometry g;
  g.in_channels = 32;
  g.out_channels = 16;
  g.time = 100;
  g.in_freq = 65;
  g.kernel_freq = 3;
  g.stride_freq = 2;
  g.pad_freq = 1;
  return g;
}

template <bool kParallel>
void BM_Conv2dForward(benchmark::State& state) {
  const auto g = conv_geometry();
  const auto in = noise(g.in_channels * g.in_time * g.in_freq, 1);
  const auto w = noise(g.weight_size(), 2);
  const auto b = noise(g.out_channels, 3);
  std::vector<double> out(g.out_channels * g.out_time() * g.out_freq());
  napse::kernels::set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    if constexpr (kParallel) {
      napse::kernels::parallel::conv2d_forward(g, in, w, b, out);
    } else {
      napse::kernels::reference::conv2d_forward(g, in, w, b, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(
      static_cast<double>(g.macs()), benchmark::Counter::kIsIterationInvariantRate);
}

template <bool kParallel>
void BM_Conv2dBackward(benchmark::State& state) {
  const auto g = conv_geometry();
  const auto in = noise(g.in_channels * g.in_time * g.in_freq, 1);
  const auto w = noise(g.weight_size(), 2);
  const auto go = noise(g.out_channels * g.out_time() * g.out_freq(), 4);
  std::vector<double> gi(in.size()), gw(w.size()), gb(g.out_channels);
  napse::kernels::set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    if constexpr (kParallel) {
      napse::kernels::parallel::conv2d_backward_input(g, go, w, gi);
      napse::kernels::parallel::conv2d_backward_weight(g, in, go, gw, gb);
    } else {
      napse::kernels::reference::conv2d_backward_input(g, go, w, gi);
      napse::kernels::reference::conv2d_backward_weight(g, in, go, gw, gb);
    }
    benchmark::DoNotOptimize(gi.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool kParallel>
void BM_ConvTransposeForward(benchmark::State& state) {
  const auto g = tconv_geometry();
  const auto in = noise(g.in_channels * g.time * g.in_freq, 5);
  const auto w = noise(g.weight_size(), 6);
  const auto b = noise(g.out_channels, 7);
  std::vector<double> out(g.out_channels * g.time * g.out_freq());
  napse::kernels::set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    if constexpr (kParallel) {
      napse::kernels::parallel::conv_transpose_forward(g, in, w, b, out);
    } else {
      napse::kernels::reference::conv_transpose_forward(g, in, w, b, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

void thread_args(benchmark::internal::Benchmark* b) {
  for (int t = 1; t <= napse::kernels::max_threads(); t *= 2) b->Arg(t);
}

BENCHMARK(BM_Conv2dForward<false>)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dForward<true>)->Apply(thread_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<false>)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dBackward<true>)->Apply(thread_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTransposeForward<false>)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvTransposeForward<true>)->Apply(thread_args)->Unit(benchmark::kMillisecond);

// Real-time factor of the toy model on 2 s of audio.
void BM_EnhanceToy(benchmark::State& state) {
  napse::model::TwoStageModel model(napse::model::ModelConfig::toy(), 1);
  for (auto _ : state) {
    const auto r = napse::pipeline::benchmark_rtf(model, 2.0, 1);
    state.counters["rtf"] = r.rtf;
  }
}
BENCHMARK(BM_EnhanceToy)->Unit(benchmark::kMillisecond)->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
