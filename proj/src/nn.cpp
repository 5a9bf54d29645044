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

#include "napse/nn.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace napse::nn {

ag::Var ParameterStore::add(const std::string& name, const std::string& group,
                            Tensor init) {
  if (index_.count(name)) {
    throw std::invalid_argument("ParameterStore: duplicate parameter " + name);
  }
  index_[name] = params_.size();
  params_.push_back({name, group, ag::leaf(std::move(init), true)});
  return params_.back().var;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw std::out_of_range("ParameterStore: no parameter " + name);
  }
  return params_[it->second];
}

void ParameterStore::set_trainable(const std::string& group, bool trainable) {
  bool found = false;
  for (auto& p : params_) {
    if (p.group == group) {
      p.var.set_requires_grad(trainable);
      found = true;
    }
  }
  if (!found) throw std::invalid_argument("ParameterStore: no group " + group);
}

bool ParameterStore::trainable(const std::string& group) const {
  for (const auto& p : params_) {
    if (p.group == group && p.var.requires_grad()) return true;
  }
  return false;
}

std::vector<std::string> ParameterStore::groups() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& p : params_) {
    if (seen.insert(p.group).second) out.push_back(p.group);
  }
  return out;
}

std::size_t ParameterStore::count(const std::string& group) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (group.empty() || p.group == group) n += p.var.numel();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

double ParameterStore::grad_norm_sq(const std::string& group) const {
  double acc = 0.0;
  for (const auto& p : params_) {
    if (!group.empty() && p.group != group) continue;
    if (!p.var.node()->has_grad()) continue;
    for (double g : p.var.node()->grad.vec()) acc += g * g;
  }
  return acc;
}

std::vector<double> ParameterStore::snapshot(const std::string& group) const {
  std::vector<double> out;
  for (const auto& p : params_) {
    if (!group.empty() && p.group != group) continue;
    const auto& v = p.var.value().vec();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

NoGradScope::NoGradScope(ParameterStore& store) : store_(store) {
  for (auto& p : store_.parameters()) {
    saved_.push_back(p.var.requires_grad());
    p.var.set_requires_grad(false);
  }
}

NoGradScope::~NoGradScope() {
  auto& params = store_.parameters();
  for (std::size_t i = 0; i < params.size() && i < saved_.size(); ++i) {
    params[i].var.set_requires_grad(saved_[i]);
  }
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  const double a = gain * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(1, fan_in)));
  std::uniform_real_distribution<double> dist(-a, a);
  for (auto& v : t.vec()) v = dist(rng);
  return t;
}

Linear::Linear(ParameterStore& store, const std::string& name,
               const std::string& group, std::size_t in, std::size_t out,
               Rng& rng, double gain) {
  weight = store.add(name + ".weight", group, init_uniform({out, in}, in, rng, gain));
  bias = store.add(name + ".bias", group, Tensor({out}));
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name,
               const std::string& group, std::size_t in, std::size_t out,
               std::size_t kernel_time, std::size_t kernel_freq,
               ag::Conv2dOptions opts, Rng& rng, double gain)
    : options(opts) {
  const std::size_t fan_in = in * kernel_time * kernel_freq;
  weight = store.add(name + ".weight", group,
                     init_uniform({out, in, kernel_time, kernel_freq}, fan_in, rng, gain));
  bias = store.add(name + ".bias", group, Tensor({out}));
}

ConvTransposeFreq::ConvTransposeFreq(ParameterStore& store,
                                     const std::string& name,
                                     const std::string& group, std::size_t in,
                                     std::size_t out, std::size_t kernel,
                                     std::size_t stride_, std::size_t pad_,
                                     Rng& rng, double gain)
    : stride(stride_), pad(pad_) {
  // Each output bin receives about kernel/stride taps per input channel.
  const std::size_t fan_in = std::max<std::size_t>(1, in * kernel / stride_);
  weight = store.add(name + ".weight", group,
                     init_uniform({in, out, kernel}, fan_in, rng, gain));
  bias = store.add(name + ".bias", group, Tensor({out}));
}

GatedTemporalBlock::GatedTemporalBlock(ParameterStore& store,
                                       const std::string& name,
                                       const std::string& group,
                                       std::size_t channels_,
                                       std::size_t kernel, std::size_t dilation,
                                       Rng& rng)
    : channels(channels_) {
  ag::Conv2dOptions causal;
  causal.dilation_time = dilation;
  causal.pad_time_front = dilation * (kernel - 1);
  dilated = Conv2d(store, name + ".dilated", group, channels, 2 * channels,
                   kernel, 1, causal, rng);
  project = Conv2d(store, name + ".project", group, channels, channels, 1, 1,
                   {}, rng, 0.5);
}

ag::Var GatedTemporalBlock::operator()(const ag::Var& x) const {
  const ag::Var h = dilated(x);
  const ag::Var filter = ag::tanh(ag::slice0(h, 0, channels));
  const ag::Var gate = ag::sigmoid(ag::slice0(h, channels, 2 * channels));
  return ag::add(x, project(ag::mul(filter, gate)));
}

}  // namespace napse::nn
