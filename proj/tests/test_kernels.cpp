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

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "napse/kernels.hpp"
#include "test_util.hpp"

namespace napse::kernels {
namespace {

using napse::testing::random_vector;

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<Conv2dGeometry> conv_cases() {
  std::vector<Conv2dGeometry> out;
  Conv2dGeometry g;
  g.in_channels = 3; g.out_channels = 5; g.in_time = 7; g.in_freq = 33;
  g.kernel_time = 2; g.kernel_freq = 3; g.stride_freq = 2; g.pad_freq = 1;
  g.pad_time_front = 1;
  out.push_back(g);
  Conv2dGeometry d;  // dilated causal temporal conv
  d.in_channels = 4; d.out_channels = 8; d.in_time = 20; d.in_freq = 1;
  d.kernel_time = 3; d.dilation_time = 5; d.pad_time_front = 10;
  out.push_back(d);
  Conv2dGeometry e = d;  // taps that never touch the input, padded both ends
  e.in_time = 4; e.pad_time_back = 3;
  out.push_back(e);
  Conv2dGeometry s;  // strided in both axes, padded at the back
  s.in_channels = 2; s.out_channels = 3; s.in_time = 13; s.in_freq = 40;
  s.kernel_time = 3; s.kernel_freq = 5; s.stride_time = 2; s.stride_freq = 3;
  s.pad_time_back = 1; s.pad_freq = 2;
  out.push_back(s);
  Conv2dGeometry p;  // pointwise
  p.in_channels = 6; p.out_channels = 2; p.in_time = 9; p.in_freq = 4;
  out.push_back(p);
  return out;
}

TEST(Conv2d, GeometryArithmetic) {
  const auto g = conv_cases()[0];
  EXPECT_EQ(g.out_time(), 7u);
  EXPECT_EQ(g.out_freq(), 17u);
  EXPECT_EQ(g.weight_size(), 5u * 3u * 2u * 3u);
  EXPECT_EQ(g.macs(), 5u * 7u * 17u * 3u * 2u * 3u);
  Conv2dGeometry bad = g;
  bad.in_freq = 1;
  bad.pad_freq = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Conv2d, ParallelMatchesReference) {
  int seed = 0;
  for (const auto& g : conv_cases()) {
    const auto x = random_vector(g.in_channels * g.in_time * g.in_freq, ++seed);
    const auto w = random_vector(g.weight_size(), ++seed);
    const auto b = random_vector(g.out_channels, ++seed);
    const std::size_t n_out = g.out_channels * g.out_time() * g.out_freq();
    std::vector<double> yr(n_out), yp(n_out);
    reference::conv2d_forward(g, x, w, b, yr);
    parallel::conv2d_forward(g, x, w, b, yp);
    EXPECT_LE(max_abs_diff(yr, yp), 1e-12);

    const auto gy = random_vector(n_out, ++seed);
    std::vector<double> gxr(x.size()), gxp(x.size());
    reference::conv2d_backward_input(g, gy, w, gxr);
    parallel::conv2d_backward_input(g, gy, w, gxp);
    EXPECT_LE(max_abs_diff(gxr, gxp), 1e-12);

    std::vector<double> gwr(w.size()), gwp(w.size()), gbr(b.size()), gbp(b.size());
    reference::conv2d_backward_weight(g, x, gy, gwr, gbr);
    parallel::conv2d_backward_weight(g, x, gy, gwp, gbp);
    EXPECT_LE(max_abs_diff(gwr, gwp), 1e-12);
    EXPECT_LE(max_abs_diff(gbr, gbp), 1e-12);
  }
}

TEST(Conv2d, BackwardIsAdjointOfForward) {
  int seed = 100;
  for (const auto& g : conv_cases()) {
    const auto x = random_vector(g.in_channels * g.in_time * g.in_freq, ++seed);
    const auto w = random_vector(g.weight_size(), ++seed);
    const std::vector<double> zero_bias(g.out_channels, 0.0);
    const std::size_t n_out = g.out_channels * g.out_time() * g.out_freq();
    std::vector<double> y(n_out);
    reference::conv2d_forward(g, x, w, zero_bias, y);
    const auto gy = random_vector(n_out, ++seed);
    std::vector<double> gx(x.size()), gw(w.size()), gb(g.out_channels);
    reference::conv2d_backward_input(g, gy, w, gx);
    reference::conv2d_backward_weight(g, x, gy, gw, gb);
    const double lhs = dot(y, gy);
    EXPECT_NEAR(lhs, dot(x, gx), 1e-9 * (1.0 + std::abs(lhs)));
    EXPECT_NEAR(lhs, dot(w, gw), 1e-9 * (1.0 + std::abs(lhs)));
  }
}

TEST(Conv2d, ThreadCountDoesNotChangeResults) {
  const auto g = conv_cases()[2];
  const auto x = random_vector(g.in_channels * g.in_time * g.in_freq, 7);
  const auto w = random_vector(g.weight_size(), 8);
  const auto b = random_vector(g.out_channels, 9);
  const std::size_t n_out = g.out_channels * g.out_time() * g.out_freq();
  const auto gy = random_vector(n_out, 10);
  const int saved = max_threads();
  std::vector<std::vector<double>> ys, gws;
  for (int threads : {1, 3}) {
    set_threads(threads);
    std::vector<double> y(n_out), gw(w.size()), gb(b.size());
    parallel::conv2d_forward(g, x, w, b, y);
    parallel::conv2d_backward_weight(g, x, gy, gw, gb);
    ys.push_back(y);
    gws.push_back(gw);
  }
  set_threads(saved);
  EXPECT_EQ(ys[0], ys[1]);
  EXPECT_EQ(gws[0], gws[1]);
}

TEST(ConvTranspose, GeometryArithmetic) {
  ConvTransposeGeometry g;
  g.in_freq = 17; g.kernel_freq = 3; g.stride_freq = 2; g.pad_freq = 1;
  EXPECT_EQ(g.out_freq(), 33u);
  g.in_freq = 65;
  EXPECT_EQ(g.out_freq(), 129u);
}

TEST(ConvTranspose, ParallelMatchesReferenceAndIsAdjoint) {
  ConvTransposeGeometry g;
  g.in_channels = 4; g.out_channels = 3; g.time = 5; g.in_freq = 9;
  g.kernel_freq = 3; g.stride_freq = 2; g.pad_freq = 1;
  const auto x = random_vector(g.in_channels * g.time * g.in_freq, 1);
  const auto w = random_vector(g.weight_size(), 2);
  const auto b = random_vector(g.out_channels, 3);
  const std::size_t n_out = g.out_channels * g.time * g.out_freq();
  std::vector<double> yr(n_out), yp(n_out);
  reference::conv_transpose_forward(g, x, w, b, yr);
  parallel::conv_transpose_forward(g, x, w, b, yp);
  EXPECT_LE(max_abs_diff(yr, yp), 1e-12);

  const auto gy = random_vector(n_out, 4);
  std::vector<double> gxr(x.size()), gxp(x.size());
  reference::conv_transpose_backward_input(g, gy, w, gxr);
  parallel::conv_transpose_backward_input(g, gy, w, gxp);
  EXPECT_LE(max_abs_diff(gxr, gxp), 1e-12);
  std::vector<double> gwr(w.size()), gwp(w.size()), gbr(3), gbp(3);
  reference::conv_transpose_backward_weight(g, x, gy, gwr, gbr);
  parallel::conv_transpose_backward_weight(g, x, gy, gwp, gbp);
  EXPECT_LE(max_abs_diff(gwr, gwp), 1e-12);
  EXPECT_LE(max_abs_diff(gbr, gbp), 1e-12);

  std::vector<double> y0(n_out);
  reference::conv_transpose_forward(g, x, w, std::vector<double>(3, 0.0), y0);
  const double lhs = dot(y0, gy);
  EXPECT_NEAR(lhs, dot(x, gxr), 1e-9 * (1.0 + std::abs(lhs)));
  EXPECT_NEAR(lhs, dot(w, gwr), 1e-9 * (1.0 + std::abs(lhs)));
}

TEST(ConvTranspose, MatchesDirectScatterDefinition) {
  // y[o, t, i*s + k - p] += x[c, t, i] * w[c, o, k]
  ConvTransposeGeometry g;
  g.in_channels = 2; g.out_channels = 2; g.time = 2; g.in_freq = 5;
  g.kernel_freq = 3; g.stride_freq = 2; g.pad_freq = 1;
  const auto x = random_vector(g.in_channels * g.time * g.in_freq, 5);
  const auto w = random_vector(g.weight_size(), 6);
  const std::size_t fo = g.out_freq();
  std::vector<double> expect(g.out_channels * g.time * fo, 0.0);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t i = 0; i < 5; ++i)
          for (std::size_t k = 0; k < 3; ++k) {
            const long f = static_cast<long>(i * 2 + k) - 1;
            if (f < 0 || f >= static_cast<long>(fo)) continue;
            expect[(o * 2 + t) * fo + f] += x[(c * 2 + t) * 5 + i] * w[(c * 2 + o) * 3 + k];
          }
  std::vector<double> y(expect.size());
  parallel::conv_transpose_forward(g, x, w, std::vector<double>(2, 0.0), y);
  EXPECT_LE(max_abs_diff(expect, y), 1e-12);
}

}  // namespace
}  // namespace napse::kernels
