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

#include "napse/autograd.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace napse {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace ag {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

void require_same_shape(const Var& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// Input i of `self`, or nullptr when it does not take gradient.
Node* grad_input(Node& self, std::size_t i) {
  Node* in = self.inputs[i].get();
  return in->requires_grad ? in : nullptr;
}

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  Tensor out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(x[i]);
  return make_op(std::move(out), {a}, [deriv](Node& self) {
    Node* in = grad_input(self, 0);
    if (!in) return;
    auto& g = in->grad_buffer();
    const auto& x = in->value;
    const auto& y = self.value;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      g[i] += self.grad[i] * deriv(x[i], y[i]);
    }
  });
}

}  // namespace

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Var make_op(Tensor value, const std::vector<Var>& inputs,
            std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.ptr());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.numel() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got " +
                                shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && node->has_grad()) node->backward(*node);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = a.value()[i] + b.value()[i];
  }
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Node* in = grad_input(self, k)) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = a.value()[i] - b.value()[i];
  }
  return make_op(std::move(out), {a, b}, [](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (Node* in = grad_input(self, 1)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = a.value()[i] * b.value()[i];
  }
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (Node* in = grad_input(self, 1)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(
      a, [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var add_const(const Var& a, const Tensor& c) {
  require_same_shape(a, c, "add_const");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + c[i];
  return make_op(std::move(out), {a}, [](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var mul_const(const Var& a, const Tensor& c) {
  require_same_shape(a, c, "mul_const");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * c[i];
  return make_op(std::move(out), {a}, [c](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * c[i];
    }
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().vec()) total += v;
  return make_op(Tensor({1}, total), {a}, [](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      const double s = self.grad[0];
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s;
    }
  });
}

Var mean(const Var& a) {
  if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var elu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var mul_channel(const Var& x, const Var& g) {
  if (x.shape().empty() || g.shape() != Shape{x.shape()[0]}) {
    throw std::invalid_argument("mul_channel: gate " + shape_str(g.shape()) +
                                " does not match " + shape_str(x.shape()));
  }
  const std::size_t channels = x.shape()[0];
  const std::size_t inner = x.numel() / channels;
  Tensor out(x.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const double gc = g.value()[c];
    for (std::size_t i = 0; i < inner; ++i) {
      out[c * inner + i] = x.value()[c * inner + i] * gc;
    }
  }
  return make_op(std::move(out), {x, g}, [channels, inner](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& gv = self.inputs[1]->value;
    if (Node* in = grad_input(self, 0)) {
      auto& gx = in->grad_buffer();
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < inner; ++i) {
          gx[c * inner + i] += self.grad[c * inner + i] * gv[c];
        }
      }
    }
    if (Node* in = grad_input(self, 1)) {
      auto& gg = in->grad_buffer();
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          acc += self.grad[c * inner + i] * xv[c * inner + i];
        }
        gg[c] += acc;
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " +
                                shape_str(shape));
  }
  return make_op(x.value().reshaped(std::move(shape)), {x}, [](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var concat0(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) {
      throw std::invalid_argument("concat0: trailing shape mismatch " +
                                  shape_str(p.shape()));
    }
    lead += p.shape()[0];
  }
  Shape out_shape = tail;
  out_shape.insert(out_shape.begin(), lead);
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().vec().begin(), p.value().vec().end(),
              out.vec().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.numel();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op(std::move(out), inputs, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (Node* in = grad_input(self, k)) {
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
          g[i] += self.grad[offsets[k] + i];
        }
      }
    }
  });
}

Var slice0(const Var& x, std::size_t begin, std::size_t end) {
  if (x.shape().empty() || begin >= end || end > x.shape()[0]) {
    throw std::invalid_argument("slice0: bad range on " +
                                shape_str(x.shape()));
  }
  const std::size_t inner = x.numel() / x.shape()[0];
  Shape shape = x.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy_n(x.value().data() + begin * inner, out.numel(), out.data());
  const std::size_t offset = begin * inner;
  return make_op(std::move(out), {x}, [offset](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) {
        g[offset + i] += self.grad[i];
      }
    }
  });
}

Var fold_freq(const Var& x) {
  if (x.shape().size() != 3) {
    throw std::invalid_argument("fold_freq: expected [C, T, F], got " +
                                shape_str(x.shape()));
  }
  const std::size_t C = x.shape()[0], T = x.shape()[1], F = x.shape()[2];
  Tensor out({C * F, T, 1});
  const auto& v = x.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f)
        out[(c * F + f) * T + t] = v[(c * T + t) * F + f];
  return make_op(std::move(out), {x}, [C, T, F](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f)
            g[(c * T + t) * F + f] += self.grad[(c * F + f) * T + t];
    }
  });
}

Var unfold_freq(const Var& x, std::size_t C, std::size_t F) {
  if (x.shape().size() != 3 || x.shape()[0] != C * F || x.shape()[2] != 1) {
    throw std::invalid_argument("unfold_freq: bad shape " +
                                shape_str(x.shape()));
  }
  const std::size_t T = x.shape()[1];
  Tensor out({C, T, F});
  const auto& v = x.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f)
        out[(c * T + t) * F + f] = v[(c * F + f) * T + t];
  return make_op(std::move(out), {x}, [C, T, F](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t f = 0; f < F; ++f)
            g[(c * F + f) * T + t] += self.grad[(c * T + t) * F + f];
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const auto& ws = weight.shape();
  if (ws.size() != 2 || x.shape() != Shape{ws[1]} ||
      bias.shape() != Shape{ws[0]}) {
    throw std::invalid_argument("linear: x " + shape_str(x.shape()) + ", W " +
                                shape_str(ws) + ", b " +
                                shape_str(bias.shape()));
  }
  const std::size_t m = ws[0], n = ws[1];
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = bias.value()[i];
    const double* row = weight.value().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x.value()[j];
    out[i] = acc;
  }
  return make_op(std::move(out), {x, weight, bias}, [m, n](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    const auto& gy = self.grad;
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += wv[i * n + j] * gy[i];
    }
    if (Node* in = grad_input(self, 1)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gy[i] * xv[j];
    }
    if (Node* in = grad_input(self, 2)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) g[i] += gy[i];
    }
  });
}

Var channel_mean(const Var& x) {
  if (x.shape().empty() || x.numel() == 0) {
    throw std::invalid_argument("channel_mean: empty input");
  }
  const std::size_t C = x.shape()[0];
  const std::size_t inner = x.numel() / C;
  Tensor out({C});
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < inner; ++i) acc += x.value()[c * inner + i];
    out[c] = acc / static_cast<double>(inner);
  }
  return make_op(std::move(out), {x}, [C, inner](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t c = 0; c < C; ++c) {
        const double gc = self.grad[c] / static_cast<double>(inner);
        for (std::size_t i = 0; i < inner; ++i) g[c * inner + i] += gc;
      }
    }
  });
}

Var softmax_cross_entropy(const Var& logits, std::size_t label) {
  const std::size_t n = logits.numel();
  if (label >= n) throw std::invalid_argument("softmax_cross_entropy: label");
  const auto& z = logits.value();
  double zmax = z[0];
  for (std::size_t i = 1; i < n; ++i) zmax = std::max(zmax, z[i]);
  std::vector<double> p(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += p[i] = std::exp(z[i] - zmax);
  for (auto& v : p) v /= total;
  const double loss = -std::log(std::max(p[label], 1e-300));
  return make_op(Tensor({1}, loss), {logits}, [p, label](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < p.size(); ++i) {
        g[i] += self.grad[0] * (p[i] - (i == label ? 1.0 : 0.0));
      }
    }
  });
}

}  // namespace ag
}  // namespace napse
