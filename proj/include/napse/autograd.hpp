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

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a handle to a graph node. Operations whose inputs all have
// requires_grad == false produce plain constants and record nothing, so a
// frozen sub-network costs no backward work and can never receive gradient.

#ifndef NAPSE_AUTOGRAD_HPP_
#define NAPSE_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "napse/tensor.hpp"

namespace napse::ag {

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  // Gradient buffer, zero-initialised on first use.
  Tensor& grad_buffer() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.numel() == value.numel(); }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Gradient accumulated by backward(); zeros if nothing flowed here.
  const Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad() {
    if (node_->has_grad()) node_->grad.fill(0.0);
  }

  double item() const { return node_->value[0]; }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var leaf(Tensor value, bool requires_grad = true);

// Builds an op node. `backward` is skipped (and inputs are not retained)
// when no input requires grad.
Var make_op(Tensor value, const std::vector<Var>& inputs,
            std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf.
// Leaf gradients accumulate across calls.
void backward(const Var& root);

// Elementwise arithmetic; shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_const(const Var& a, const Tensor& c);
Var mul_const(const Var& a, const Tensor& c);
Var add_scalar(const Var& a, double s);

Var sum(const Var& a);
Var mean(const Var& a);
Var square(const Var& a);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var elu(const Var& a);
Var leaky_relu(const Var& a, double slope);

// x [C, ...] scaled per leading channel by g [C].
Var mul_channel(const Var& x, const Var& g);

Var reshape(const Var& x, Shape shape);
Var concat0(std::span<const Var> parts);
Var slice0(const Var& x, std::size_t begin, std::size_t end);

// [C, T, F] <-> [C*F, T, 1], feature index c*F + f.
Var fold_freq(const Var& x);
Var unfold_freq(const Var& x, std::size_t channels, std::size_t freq);

// y = W x + b with x [n], W [m, n], b [m].
Var linear(const Var& x, const Var& weight, const Var& bias);

// Mean over every axis but the first: [C, ...] -> [C].
Var channel_mean(const Var& x);

// Scalar softmax cross-entropy of logits [n] against a class index.
Var softmax_cross_entropy(const Var& logits, std::size_t label);

}  // namespace napse::ag

#endif  // NAPSE_AUTOGRAD_HPP_
