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

// Serial reference kernels. One output element at a time, written to be
// read rather than to be fast.

#include <stdexcept>
#include <string>

#include "napse/kernels.hpp"

namespace napse::kernels {

void Conv2dGeometry::validate() const {
  const std::size_t span = dilation_time * (kernel_time - 1) + 1;
  if (kernel_time == 0 || kernel_freq == 0 || stride_time == 0 ||
      stride_freq == 0 || dilation_time == 0) {
    throw std::invalid_argument("conv2d: zero kernel/stride/dilation");
  }
  if (in_time + pad_time_front + pad_time_back < span ||
      in_freq + 2 * pad_freq < kernel_freq) {
    throw std::invalid_argument("conv2d: input " + std::to_string(in_time) +
                                "x" + std::to_string(in_freq) +
                                " smaller than kernel");
  }
}

void ConvTransposeGeometry::validate() const {
  if (kernel_freq == 0 || stride_freq == 0 || in_freq == 0) {
    throw std::invalid_argument("conv_transpose: zero kernel/stride/input");
  }
  if ((in_freq - 1) * stride_freq + kernel_freq <= 2 * pad_freq) {
    throw std::invalid_argument("conv_transpose: padding exceeds output");
  }
}

namespace reference {
namespace {

// Input coordinate feeding output (to, fo) through tap (kt, kf), or false
// when it falls in the zero padding.
bool input_index(const Conv2dGeometry& g, std::size_t to, std::size_t fo,
                 std::size_t kt, std::size_t kf, std::size_t& ti,
                 std::size_t& fi) {
  const long t = static_cast<long>(to * g.stride_time + kt * g.dilation_time) -
                 static_cast<long>(g.pad_time_front);
  const long f = static_cast<long>(fo * g.stride_freq + kf) -
                 static_cast<long>(g.pad_freq);
  if (t < 0 || f < 0 || t >= static_cast<long>(g.in_time) ||
      f >= static_cast<long>(g.in_freq)) {
    return false;
  }
  ti = static_cast<std::size_t>(t);
  fi = static_cast<std::size_t>(f);
  return true;
}

std::size_t widx(const Conv2dGeometry& g, std::size_t co, std::size_t ci,
                 std::size_t kt, std::size_t kf) {
  return ((co * g.in_channels + ci) * g.kernel_time + kt) * g.kernel_freq + kf;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in,
                    std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t T = g.out_time(), F = g.out_freq();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t to = 0; to < T; ++to)
      for (std::size_t fo = 0; fo < F; ++fo) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
          for (std::size_t kt = 0; kt < g.kernel_time; ++kt)
            for (std::size_t kf = 0; kf < g.kernel_freq; ++kf) {
              std::size_t ti, fi;
              if (!input_index(g, to, fo, kt, kf, ti, fi)) continue;
              acc += weight[widx(g, co, ci, kt, kf)] *
                     in[(ci * g.in_time + ti) * g.in_freq + fi];
            }
        out[(co * T + to) * F + fo] = acc;
      }
}

void conv2d_backward_input(const Conv2dGeometry& g,
                           std::span<const double> grad_out,
                           std::span<const double> weight,
                           std::span<double> grad_in) {
  const std::size_t T = g.out_time(), F = g.out_freq();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t to = 0; to < T; ++to)
      for (std::size_t fo = 0; fo < F; ++fo) {
        const double go = grad_out[(co * T + to) * F + fo];
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
          for (std::size_t kt = 0; kt < g.kernel_time; ++kt)
            for (std::size_t kf = 0; kf < g.kernel_freq; ++kf) {
              std::size_t ti, fi;
              if (!input_index(g, to, fo, kt, kf, ti, fi)) continue;
              grad_in[(ci * g.in_time + ti) * g.in_freq + fi] +=
                  weight[widx(g, co, ci, kt, kf)] * go;
            }
      }
}

void conv2d_backward_weight(const Conv2dGeometry& g,
                            std::span<const double> in,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t T = g.out_time(), F = g.out_freq();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t to = 0; to < T; ++to)
      for (std::size_t fo = 0; fo < F; ++fo) {
        const double go = grad_out[(co * T + to) * F + fo];
        if (!grad_bias.empty()) grad_bias[co] += go;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
          for (std::size_t kt = 0; kt < g.kernel_time; ++kt)
            for (std::size_t kf = 0; kf < g.kernel_freq; ++kf) {
              std::size_t ti, fi;
              if (!input_index(g, to, fo, kt, kf, ti, fi)) continue;
              grad_weight[widx(g, co, ci, kt, kf)] +=
                  go * in[(ci * g.in_time + ti) * g.in_freq + fi];
            }
      }
}

void conv_transpose_forward(const ConvTransposeGeometry& g,
                            std::span<const double> in,
                            std::span<const double> weight,
                            std::span<const double> bias,
                            std::span<double> out) {
  const std::size_t Fo = g.out_freq();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t t = 0; t < g.time; ++t)
      for (std::size_t fo = 0; fo < Fo; ++fo)
        out[(co * g.time + t) * Fo + fo] = bias.empty() ? 0.0 : bias[co];
  for (std::size_t ci = 0; ci < g.in_channels; ++ci)
    for (std::size_t t = 0; t < g.time; ++t)
      for (std::size_t fi = 0; fi < g.in_freq; ++fi) {
        const double x = in[(ci * g.time + t) * g.in_freq + fi];
        for (std::size_t co = 0; co < g.out_channels; ++co)
          for (std::size_t k = 0; k < g.kernel_freq; ++k) {
            const long fo = static_cast<long>(fi * g.stride_freq + k) -
                            static_cast<long>(g.pad_freq);
            if (fo < 0 || fo >= static_cast<long>(Fo)) continue;
            out[(co * g.time + t) * Fo + static_cast<std::size_t>(fo)] +=
                x * weight[(ci * g.out_channels + co) * g.kernel_freq + k];
          }
      }
}

void conv_transpose_backward_input(const ConvTransposeGeometry& g,
                                   std::span<const double> grad_out,
                                   std::span<const double> weight,
                                   std::span<double> grad_in) {
  const std::size_t Fo = g.out_freq();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci)
    for (std::size_t t = 0; t < g.time; ++t)
      for (std::size_t fi = 0; fi < g.in_freq; ++fi) {
        double acc = 0.0;
        for (std::size_t co = 0; co < g.out_channels; ++co)
          for (std::size_t k = 0; k < g.kernel_freq; ++k) {
            const long fo = static_cast<long>(fi * g.stride_freq + k) -
                            static_cast<long>(g.pad_freq);
            if (fo < 0 || fo >= static_cast<long>(Fo)) continue;
            acc += grad_out[(co * g.time + t) * Fo + static_cast<std::size_t>(fo)] *
                   weight[(ci * g.out_channels + co) * g.kernel_freq + k];
          }
        grad_in[(ci * g.time + t) * g.in_freq + fi] += acc;
      }
}

void conv_transpose_backward_weight(const ConvTransposeGeometry& g,
                                    std::span<const double> in,
                                    std::span<const double> grad_out,
                                    std::span<double> grad_weight,
                                    std::span<double> grad_bias) {
  const std::size_t Fo = g.out_freq();
  if (!grad_bias.empty()) {
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t i = 0; i < g.time * Fo; ++i)
        grad_bias[co] += grad_out[co * g.time * Fo + i];
  }
  for (std::size_t ci = 0; ci < g.in_channels; ++ci)
    for (std::size_t t = 0; t < g.time; ++t)
      for (std::size_t fi = 0; fi < g.in_freq; ++fi) {
        const double x = in[(ci * g.time + t) * g.in_freq + fi];
        for (std::size_t co = 0; co < g.out_channels; ++co)
          for (std::size_t k = 0; k < g.kernel_freq; ++k) {
            const long fo = static_cast<long>(fi * g.stride_freq + k) -
                            static_cast<long>(g.pad_freq);
            if (fo < 0 || fo >= static_cast<long>(Fo)) continue;
            grad_weight[(ci * g.out_channels + co) * g.kernel_freq + k] +=
                x * grad_out[(co * g.time + t) * Fo + static_cast<std::size_t>(fo)];
          }
      }
}

}  // namespace reference
}  // namespace napse::kernels
