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

// Convolution kernels over [channels, time, freq] feature maps.
//
// Two implementations share one interface:
//   kernels::reference  straightforward per-output-element loops, serial.
//   kernels::parallel   loop-reordered, OpenMP across channels.
// The unqualified entry points forward to `parallel`. Every parallel
// kernel keeps a fixed per-element reduction order, so results do not
// depend on the thread count.

#ifndef NAPSE_KERNELS_HPP_
#define NAPSE_KERNELS_HPP_

#include <cstddef>
#include <span>

namespace napse::kernels {

struct Conv2dGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t in_time = 1;
  std::size_t in_freq = 1;
  std::size_t kernel_time = 1;
  std::size_t kernel_freq = 1;
  std::size_t stride_time = 1;
  std::size_t stride_freq = 1;
  std::size_t dilation_time = 1;
  std::size_t pad_time_front = 0;
  std::size_t pad_time_back = 0;
  std::size_t pad_freq = 0;  // both sides

  std::size_t out_time() const {
    const std::size_t span = dilation_time * (kernel_time - 1) + 1;
    return (in_time + pad_time_front + pad_time_back - span) / stride_time + 1;
  }
  std::size_t out_freq() const {
    return (in_freq + 2 * pad_freq - kernel_freq) / stride_freq + 1;
  }
  std::size_t weight_size() const {
    return out_channels * in_channels * kernel_time * kernel_freq;
  }
  std::size_t macs() const {
    return out_channels * out_time() * out_freq() * in_channels * kernel_time *
           kernel_freq;
  }
  void validate() const;
};

// Transposed convolution along frequency only (time kernel 1).
// Weight layout [in_channels, out_channels, kernel_freq].
struct ConvTransposeGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t time = 1;
  std::size_t in_freq = 1;
  std::size_t kernel_freq = 1;
  std::size_t stride_freq = 1;
  std::size_t pad_freq = 0;

  std::size_t out_freq() const {
    return (in_freq - 1) * stride_freq + kernel_freq - 2 * pad_freq;
  }
  std::size_t weight_size() const {
    return in_channels * out_channels * kernel_freq;
  }
  std::size_t macs() const {
    return in_channels * out_channels * time * in_freq * kernel_freq;
  }
  void validate() const;
};

namespace reference {
void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in,
                    std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const Conv2dGeometry& g,
                           std::span<const double> grad_out,
                           std::span<const double> weight,
                           std::span<double> grad_in);
void conv2d_backward_weight(const Conv2dGeometry& g,
                            std::span<const double> in,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias);
void conv_transpose_forward(const ConvTransposeGeometry& g,
                            std::span<const double> in,
                            std::span<const double> weight,
                            std::span<const double> bias,
                            std::span<double> out);
void conv_transpose_backward_input(const ConvTransposeGeometry& g,
                                   std::span<const double> grad_out,
                                   std::span<const double> weight,
                                   std::span<double> grad_in);
void conv_transpose_backward_weight(const ConvTransposeGeometry& g,
                                    std::span<const double> in,
                                    std::span<const double> grad_out,
                                    std::span<double> grad_weight,
                                    std::span<double> grad_bias);
}  // namespace reference

namespace parallel {
void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in,
                    std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward_input(const Conv2dGeometry& g,
                           std::span<const double> grad_out,
                           std::span<const double> weight,
                           std::span<double> grad_in);
void conv2d_backward_weight(const Conv2dGeometry& g,
                            std::span<const double> in,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias);
void conv_transpose_forward(const ConvTransposeGeometry& g,
                            std::span<const double> in,
                            std::span<const double> weight,
                            std::span<const double> bias,
                            std::span<double> out);
void conv_transpose_backward_input(const ConvTransposeGeometry& g,
                                   std::span<const double> grad_out,
                                   std::span<const double> weight,
                                   std::span<double> grad_in);
void conv_transpose_backward_weight(const ConvTransposeGeometry& g,
                                    std::span<const double> in,
                                    std::span<const double> grad_out,
                                    std::span<double> grad_weight,
                                    std::span<double> grad_bias);
}  // namespace parallel

using parallel::conv2d_backward_input;
using parallel::conv2d_backward_weight;
using parallel::conv2d_forward;
using parallel::conv_transpose_backward_input;
using parallel::conv_transpose_backward_weight;
using parallel::conv_transpose_forward;

// Thread-count control shared by the CLI and benchmarks. No-ops without
// OpenMP.
int max_threads();
void set_threads(int n);

}  // namespace napse::kernels

#endif  // NAPSE_KERNELS_HPP_
