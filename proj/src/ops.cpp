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

#include "napse/ops.hpp"

#include <stdexcept>

namespace napse::ag {
namespace {

Node* grad_input(Node& self, std::size_t i) {
  Node* in = self.inputs[i].get();
  return in->requires_grad ? in : nullptr;
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw std::invalid_argument(std::string(op) + ": expected rank " +
                                std::to_string(rank) + ", got " +
                                shape_str(x.shape()));
  }
}

}  // namespace

Var stft(const Var& wave, const dsp::StftConfig& config) {
  require_rank(wave, 1, "stft");
  if (wave.numel() == 0) throw std::invalid_argument("stft: empty waveform");
  const std::size_t n = wave.numel();
  Tensor out = dsp::stft_forward(wave.value().span(), config);
  return make_op(std::move(out), {wave}, [config, n](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      const auto g = dsp::stft_adjoint(self.grad, config, n);
      auto& gx = in->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
    }
  });
}

Var istft(const Var& spec, const dsp::StftConfig& config,
          std::size_t num_samples) {
  require_rank(spec, 3, "istft");
  const std::size_t frames = spec.shape()[1];
  Tensor out({num_samples}, dsp::istft_forward(spec.value(), config, num_samples));
  return make_op(std::move(out), {spec}, [config, frames](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      const Tensor g = dsp::istft_adjoint(self.grad.span(), config, frames);
      auto& gs = in->grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) gs[i] += g[i];
    }
  });
}

Var pqmf_analysis(const Var& wave,
                  std::shared_ptr<const dsp::PqmfFilterbank> fb) {
  require_rank(wave, 1, "pqmf_analysis");
  const std::size_t n = wave.numel();
  Tensor out = dsp::pqmf_analysis(wave.value().span(), *fb);
  return make_op(std::move(out), {wave}, [fb, n](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      const auto g = dsp::pqmf_analysis_adjoint(self.grad, *fb, n);
      auto& gx = in->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
    }
  });
}

Var pqmf_synthesis(const Var& subbands,
                   std::shared_ptr<const dsp::PqmfFilterbank> fb) {
  require_rank(subbands, 2, "pqmf_synthesis");
  const std::size_t length = subbands.shape()[1];
  auto wave = dsp::pqmf_synthesis(subbands.value(), *fb);
  const std::size_t n = wave.size();
  return make_op(Tensor({n}, std::move(wave)), {subbands},
                 [fb, length](Node& self) {
                   if (Node* in = grad_input(self, 0)) {
                     const Tensor g =
                         dsp::pqmf_synthesis_adjoint(self.grad.span(), *fb, length);
                     auto& gs = in->grad_buffer();
                     for (std::size_t i = 0; i < g.numel(); ++i) gs[i] += g[i];
                   }
                 });
}

Var pad1d(const Var& x, std::size_t front, std::size_t back) {
  require_rank(x, 1, "pad1d");
  const std::size_t n = x.numel();
  Tensor out({front + n + back});
  std::copy_n(x.value().data(), n, out.data() + front);
  return make_op(std::move(out), {x}, [front, n](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[front + i];
    }
  });
}

Var crop1d(const Var& x, std::size_t begin, std::size_t length) {
  require_rank(x, 1, "crop1d");
  if (begin + length > x.numel()) {
    throw std::invalid_argument("crop1d: range exceeds input");
  }
  Tensor out({length});
  std::copy_n(x.value().data() + begin, length, out.data());
  return make_op(std::move(out), {x}, [begin, length](Node& self) {
    if (Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < length; ++i) g[begin + i] += self.grad[i];
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias,
           const Conv2dOptions& o) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  const auto& ws = weight.shape();
  if (ws[1] != x.shape()[0] || bias.shape() != Shape{ws[0]}) {
    throw std::invalid_argument("conv2d: input " + shape_str(x.shape()) +
                                " weight " + shape_str(ws) + " bias " +
                                shape_str(bias.shape()));
  }
  kernels::Conv2dGeometry g;
  g.in_channels = ws[1];
  g.out_channels = ws[0];
  g.in_time = x.shape()[1];
  g.in_freq = x.shape()[2];
  g.kernel_time = ws[2];
  g.kernel_freq = ws[3];
  g.stride_time = o.stride_time;
  g.stride_freq = o.stride_freq;
  g.dilation_time = o.dilation_time;
  g.pad_time_front = o.pad_time_front;
  g.pad_time_back = o.pad_time_back;
  g.pad_freq = o.pad_freq;
  g.validate();
  Tensor out({g.out_channels, g.out_time(), g.out_freq()});
  kernels::conv2d_forward(g, x.value().span(), weight.value().span(),
                          bias.value().span(), out.span());
  return make_op(std::move(out), {x, weight, bias}, [g](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    if (Node* in = grad_input(self, 0)) {
      kernels::conv2d_backward_input(g, self.grad.span(), wv.span(),
                                     in->grad_buffer().span());
    }
    Node* gw = grad_input(self, 1);
    Node* gb = grad_input(self, 2);
    if (gw || gb) {
      // The weight kernel produces both; route into scratch when one side
      // is frozen.
      Tensor wscratch, bscratch;
      std::span<double> wspan = gw ? gw->grad_buffer().span()
                                   : (wscratch = Tensor(wv.shape())).span();
      std::span<double> bspan =
          gb ? gb->grad_buffer().span()
             : (bscratch = Tensor({g.out_channels})).span();
      kernels::conv2d_backward_weight(g, xv.span(), self.grad.span(), wspan, bspan);
    }
  });
}

Var conv_transpose_freq(const Var& x, const Var& weight, const Var& bias,
                        std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv_transpose_freq");
  require_rank(weight, 3, "conv_transpose_freq weight");
  const auto& ws = weight.shape();
  if (ws[0] != x.shape()[0] || bias.shape() != Shape{ws[1]}) {
    throw std::invalid_argument("conv_transpose_freq: input " +
                                shape_str(x.shape()) + " weight " +
                                shape_str(ws));
  }
  kernels::ConvTransposeGeometry g;
  g.in_channels = ws[0];
  g.out_channels = ws[1];
  g.kernel_freq = ws[2];
  g.time = x.shape()[1];
  g.in_freq = x.shape()[2];
  g.stride_freq = stride;
  g.pad_freq = pad;
  g.validate();
  Tensor out({g.out_channels, g.time, g.out_freq()});
  kernels::conv_transpose_forward(g, x.value().span(), weight.value().span(),
                                  bias.value().span(), out.span());
  return make_op(std::move(out), {x, weight, bias}, [g](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    if (Node* in = grad_input(self, 0)) {
      kernels::conv_transpose_backward_input(g, self.grad.span(), wv.span(),
                                             in->grad_buffer().span());
    }
    Node* gw = grad_input(self, 1);
    Node* gb = grad_input(self, 2);
    if (gw || gb) {
      Tensor wscratch, bscratch;
      std::span<double> wspan = gw ? gw->grad_buffer().span()
                                   : (wscratch = Tensor(wv.shape())).span();
      std::span<double> bspan =
          gb ? gb->grad_buffer().span()
             : (bscratch = Tensor({g.out_channels})).span();
      kernels::conv_transpose_backward_weight(g, xv.span(), self.grad.span(),
                                              wspan, bspan);
    }
  });
}

}  // namespace napse::ag
