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

#ifndef NAPSE_OPTIM_HPP_
#define NAPSE_OPTIM_HPP_

#include <map>
#include <string>
#include <vector>

#include "napse/nn.hpp"

namespace napse::optim {

struct AdamState {
  std::vector<double> m, v;
};

// Adam with optional global-norm gradient clipping. Parameters whose
// requires_grad is false are skipped entirely, so frozen groups keep
// their exact values.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8, double clip_norm = 0.0)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), clip_norm_(clip_norm) {}

  void step(nn::ParameterStore& store);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return steps_; }

  std::map<std::string, AdamState>& state() { return state_; }
  const std::map<std::string, AdamState>& state() const { return state_; }
  void set_steps(long steps) { steps_ = steps; }

 private:
  double lr_, beta1_, beta2_, eps_, clip_norm_;
  long steps_ = 0;
  std::map<std::string, AdamState> state_;
};

// Halves the learning rate when the monitored loss has not improved for
// `patience` consecutive reports.
class PlateauHalver {
 public:
  explicit PlateauHalver(std::size_t patience = 3, double min_lr = 1e-6)
      : patience_(patience), min_lr_(min_lr) {}
  // Returns true when the rate was halved.
  bool report(double loss, Adam& optimizer);
  double best() const { return best_; }
  std::size_t bad_reports() const { return bad_; }
  void restore(double best, std::size_t bad) { best_ = best; bad_ = bad; }

 private:
  std::size_t patience_;
  double min_lr_;
  double best_ = 1e300;
  std::size_t bad_ = 0;
};

}  // namespace napse::optim

#endif  // NAPSE_OPTIM_HPP_
