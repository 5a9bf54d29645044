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

// Named parameter storage and the handful of layers the networks use.

#ifndef NAPSE_NN_HPP_
#define NAPSE_NN_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "napse/autograd.hpp"
#include "napse/ops.hpp"

namespace napse::nn {

struct Parameter {
  std::string name;   // canonical, e.g. "mag_net.fd0.weight"
  std::string group;  // component, e.g. "mag_net"
  ag::Var var;
};

// Insertion-ordered parameter registry. Freezing a group clears
// requires_grad on its leaves so no gradient is ever accumulated there.
class ParameterStore {
 public:
  ag::Var add(const std::string& name, const std::string& group, Tensor init);

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  void set_trainable(const std::string& group, bool trainable);
  bool trainable(const std::string& group) const;
  std::vector<std::string> groups() const;

  std::size_t count(const std::string& group = "") const;
  void zero_grad();
  // Sum of squared gradients over a group ("" = all).
  double grad_norm_sq(const std::string& group = "") const;
  // Value snapshot of a group, for bit-exact comparisons.
  std::vector<double> snapshot(const std::string& group = "") const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Temporarily clears requires_grad on every parameter (inference or a
// generator step through a fixed discriminator); restores on destruction.
class NoGradScope {
 public:
  explicit NoGradScope(ParameterStore& store);
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  ParameterStore& store_;
  std::vector<bool> saved_;
};

using Rng = std::mt19937_64;

// Uniform(-a, a) with a = gain * sqrt(3 / fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng,
                    double gain = 1.0);

struct Linear {
  ag::Var weight, bias;
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name,
         const std::string& group, std::size_t in, std::size_t out, Rng& rng,
         double gain = 1.0);
  ag::Var operator()(const ag::Var& x) const {
    return ag::linear(x, weight, bias);
  }
};

struct Conv2d {
  ag::Var weight, bias;
  ag::Conv2dOptions options;
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name,
         const std::string& group, std::size_t in, std::size_t out,
         std::size_t kernel_time, std::size_t kernel_freq,
         ag::Conv2dOptions options, Rng& rng, double gain = 1.0);
  ag::Var operator()(const ag::Var& x) const {
    return ag::conv2d(x, weight, bias, options);
  }
};

struct ConvTransposeFreq {
  ag::Var weight, bias;
  std::size_t stride = 2, pad = 1;
  ConvTransposeFreq() = default;
  ConvTransposeFreq(ParameterStore& store, const std::string& name,
                    const std::string& group, std::size_t in, std::size_t out,
                    std::size_t kernel, std::size_t stride, std::size_t pad,
                    Rng& rng, double gain = 1.0);
  ag::Var operator()(const ag::Var& x) const {
    return ag::conv_transpose_freq(x, weight, bias, stride, pad);
  }
};

// Gated temporal convolution over [H, T, 1]:
//   y = x + W_out (tanh(D_a * x) . sigmoid(D_b * x))
// with D_a, D_b causal dilated convolutions sharing one kernel call.
struct GatedTemporalBlock {
  Conv2d dilated;  // H -> 2H, kernel (k, 1), causal
  Conv2d project;  // H -> H, 1x1
  std::size_t channels = 0;
  GatedTemporalBlock() = default;
  GatedTemporalBlock(ParameterStore& store, const std::string& name,
                     const std::string& group, std::size_t channels,
                     std::size_t kernel, std::size_t dilation, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
};

}  // namespace napse::nn

#endif  // NAPSE_NN_HPP_
