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

#include "napse/optim.hpp"

#include <cmath>

namespace napse::optim {

void Adam::step(nn::ParameterStore& store) {
  ++steps_;
  double scale = 1.0;
  if (clip_norm_ > 0.0) {
    double norm_sq = 0.0;
    for (const auto& p : store.parameters()) {
      if (!p.var.requires_grad() || !p.var.node()->has_grad()) continue;
      for (double g : p.var.node()->grad.vec()) norm_sq += g * g;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > clip_norm_) scale = clip_norm_ / norm;
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto& p : store.parameters()) {
    if (!p.var.requires_grad()) continue;
    auto& st = state_[p.name];
    const std::size_t n = p.var.numel();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    Tensor& value = p.var.mutable_value();
    const Tensor& grad = p.var.grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = grad[i] * scale;
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

bool PlateauHalver::report(double loss, Adam& optimizer) {
  if (loss < best_ - 1e-12) {
    best_ = loss;
    bad_ = 0;
    return false;
  }
  if (++bad_ < patience_) return false;
  bad_ = 0;
  const double next = std::max(min_lr_, optimizer.lr() * 0.5);
  const bool changed = next < optimizer.lr();
  optimizer.set_lr(next);
  return changed;
}

}  // namespace napse::optim
