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

// Differentiable wrappers around the dsp transforms and conv kernels.

#ifndef NAPSE_OPS_HPP_
#define NAPSE_OPS_HPP_

#include <memory>

#include "napse/autograd.hpp"
#include "napse/dsp.hpp"
#include "napse/kernels.hpp"

namespace napse::ag {

// [N] -> planar [2, frames, bins].
Var stft(const Var& wave, const dsp::StftConfig& config);
// Planar [2, frames, bins] -> [num_samples].
Var istft(const Var& spec, const dsp::StftConfig& config,
          std::size_t num_samples);

// [N] -> [M, ceil(N/M)] and [M, L] -> [M*L].
Var pqmf_analysis(const Var& wave,
                  std::shared_ptr<const dsp::PqmfFilterbank> fb);
Var pqmf_synthesis(const Var& subbands,
                   std::shared_ptr<const dsp::PqmfFilterbank> fb);

// 1-D zero padding / cropping.
Var pad1d(const Var& x, std::size_t front, std::size_t back);
Var crop1d(const Var& x, std::size_t begin, std::size_t length);

struct Conv2dOptions {
  std::size_t stride_time = 1;
  std::size_t stride_freq = 1;
  std::size_t dilation_time = 1;
  std::size_t pad_time_front = 0;
  std::size_t pad_time_back = 0;
  std::size_t pad_freq = 0;
};

// x [Cin, T, F], weight [Cout, Cin, KT, KF], bias [Cout].
Var conv2d(const Var& x, const Var& weight, const Var& bias,
           const Conv2dOptions& options);

// x [Cin, T, F], weight [Cin, Cout, KF], bias [Cout]; transposed along
// frequency only.
Var conv_transpose_freq(const Var& x, const Var& weight, const Var& bias,
                        std::size_t stride, std::size_t pad);

}  // namespace napse::ag

#endif  // NAPSE_OPS_HPP_
