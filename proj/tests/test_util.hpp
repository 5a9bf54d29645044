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

#ifndef NAPSE_TESTS_TEST_UTIL_HPP_
#define NAPSE_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "napse/autograd.hpp"

namespace napse::testing {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed,
                                         double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), random_vector(n, seed, scale));
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares d loss / d leaf[i] against central differences at `count`
// random indices. `loss` must rebuild the graph from the leaf's current
// value on every call.
inline GradCheckResult grad_check(ag::Var leaf, const std::function<ag::Var()>& loss,
                                  std::size_t count, std::uint64_t seed,
                                  double h = 1e-6, double abs_floor = 1e-7) {
  leaf.zero_grad();
  ag::backward(loss());
  const Tensor analytic = leaf.grad();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, leaf.numel() - 1);
  GradCheckResult r;
  for (std::size_t c = 0; c < count; ++c) {
    const std::size_t i = pick(rng);
    const double saved = leaf.value()[i];
    leaf.mutable_value()[i] = saved + h;
    const double up = loss().item();
    leaf.mutable_value()[i] = saved - h;
    const double down = loss().item();
    leaf.mutable_value()[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), abs_floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(numeric - analytic[i]) / denom);
    ++r.checked;
  }
  return r;
}

}  // namespace napse::testing

#endif  // NAPSE_TESTS_TEST_UTIL_HPP_
