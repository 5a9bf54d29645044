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

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "napse/dsp.hpp"
#include "napse/fft.hpp"

namespace napse::dsp {
namespace {

constexpr double kNormFloor = 1e-10;

// Sum over frames of analysis * synthesis window, per padded sample. The
// least-squares inverse divides the overlap-added frames by this.
std::vector<double> overlap_norm(const StftConfig& c, std::size_t frames) {
  const auto w = make_window(c.window, c.win_length);
  std::vector<double> norm((frames - 1) * c.hop + c.win_length, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t n = 0; n < c.win_length; ++n)
      norm[t * c.hop + n] += w[n] * w[n];
  return norm;
}

void require_planar(const Tensor& spec, const StftConfig& c) {
  if (spec.rank() != 3 || spec.dim(0) != 2 || spec.dim(2) != c.num_bins()) {
    throw std::invalid_argument("istft: spectrogram shape " +
                                shape_str(spec.shape()) + " inconsistent with n_fft " +
                                std::to_string(c.n_fft));
  }
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("Waveform: sample_rate <= 0");
  for (double v : samples) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("Waveform: non-finite sample");
    }
  }
}

std::string to_string(WindowKind kind) {
  return kind == WindowKind::kHann ? "hann" : "sqrt_hann";
}

WindowKind window_kind_from_string(const std::string& name) {
  if (name == "hann") return WindowKind::kHann;
  if (name == "sqrt_hann") return WindowKind::kSqrtHann;
  throw std::invalid_argument("unknown window: " + name);
}

std::vector<double> make_window(WindowKind kind, std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    const double h =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                             static_cast<double>(length));
    w[n] = kind == WindowKind::kHann ? h : std::sqrt(h);
  }
  return w;
}

std::size_t StftConfig::num_frames(std::size_t num_samples) const {
  const std::size_t padded = num_samples + front_padding();
  return std::max<std::size_t>(1, (padded + hop - 1) / hop);
}

void StftConfig::validate() const {
  if (n_fft == 0 || hop == 0 || win_length == 0) {
    throw std::invalid_argument("StftConfig: zero size");
  }
  if (win_length > n_fft) {
    throw std::invalid_argument("StftConfig: win_length > n_fft");
  }
  if (hop > win_length) {
    throw std::invalid_argument("StftConfig: hop > win_length");
  }
  // Constant overlap-add of the effective (analysis x synthesis) window,
  // which is plain Hann for sqrt-Hann and the window itself for Hann.
  const auto w = make_window(WindowKind::kHann, win_length);
  std::vector<double> acc(hop, 0.0);
  for (std::size_t n = 0; n < win_length; ++n) acc[n % hop] += w[n];
  const double ref = acc[0];
  for (double v : acc) {
    if (ref <= 0.0 || std::abs(v - ref) > 1e-9 * ref) {
      throw std::invalid_argument(
          "StftConfig: window violates constant overlap-add at hop " +
          std::to_string(hop));
    }
  }
}

StftConfig enhancement_stft(int sample_rate) {
  StftConfig c;
  c.win_length = static_cast<std::size_t>(sample_rate / 50);
  c.hop = c.win_length / 2;
  c.n_fft = 1;
  while (c.n_fft < c.win_length) c.n_fft <<= 1;
  c.window = WindowKind::kSqrtHann;
  c.center = false;
  return c;
}

std::array<StftConfig, 3> multi_scale_presets() {
  std::array<StftConfig, 3> out;
  const std::size_t sizes[3][3] = {{512, 240, 480}, {1024, 480, 960},
                                   {2048, 960, 1920}};
  for (std::size_t i = 0; i < 3; ++i) {
    out[i].n_fft = sizes[i][0];
    out[i].hop = sizes[i][1];
    out[i].win_length = sizes[i][2];
    out[i].window = WindowKind::kHann;
    out[i].center = true;
  }
  return out;
}

Tensor stft_forward(std::span<const double> x, const StftConfig& c) {
  const std::size_t frames = c.num_frames(x.size());
  const std::size_t bins = c.num_bins();
  const std::size_t front = c.front_padding();
  const auto w = make_window(c.window, c.win_length);
  Tensor out({2, frames, bins});
  std::vector<double> frame(c.n_fft, 0.0);
  std::vector<std::complex<double>> spec(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t n = 0; n < c.win_length; ++n) {
      const long idx = static_cast<long>(t * c.hop + n) - static_cast<long>(front);
      if (idx >= 0 && idx < static_cast<long>(x.size())) {
        frame[n] = w[n] * x[static_cast<std::size_t>(idx)];
      }
    }
    fft::rfft(frame, spec);
    for (std::size_t k = 0; k < bins; ++k) {
      out.at(0, t, k) = spec[k].real();
      out.at(1, t, k) = spec[k].imag();
    }
  }
  return out;
}

std::vector<double> stft_adjoint(const Tensor& grad_spec, const StftConfig& c,
                                 std::size_t num_samples) {
  require_planar(grad_spec, c);
  const std::size_t frames = grad_spec.dim(1);
  const std::size_t bins = c.num_bins();
  const std::size_t front = c.front_padding();
  const auto w = make_window(c.window, c.win_length);
  std::vector<double> grad(num_samples, 0.0);
  std::vector<std::complex<double>> g(bins);
  std::vector<double> frame(c.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    // d/dx_n of (Re X_k, Im X_k) is (cos, -sin); summing over the half
    // spectrum equals a Hermitian inverse with interior bins halved.
    for (std::size_t k = 0; k < bins; ++k) {
      const double scale = (k == 0 || 2 * k == c.n_fft) ? 1.0 : 0.5;
      g[k] = {scale * grad_spec.at(0, t, k), scale * grad_spec.at(1, t, k)};
    }
    fft::irfft(g, frame);
    for (std::size_t n = 0; n < c.win_length; ++n) {
      const long idx = static_cast<long>(t * c.hop + n) - static_cast<long>(front);
      if (idx >= 0 && idx < static_cast<long>(num_samples)) {
        grad[static_cast<std::size_t>(idx)] += w[n] * frame[n];
      }
    }
  }
  return grad;
}

std::vector<double> istft_forward(const Tensor& spec, const StftConfig& c,
                                  std::size_t num_samples) {
  require_planar(spec, c);
  const std::size_t frames = spec.dim(1);
  const std::size_t bins = c.num_bins();
  const std::size_t front = c.front_padding();
  if (frames != c.num_frames(num_samples)) {
    throw std::invalid_argument("istft: " + std::to_string(frames) +
                                " frames inconsistent with length " +
                                std::to_string(num_samples));
  }
  const auto w = make_window(c.window, c.win_length);
  const auto norm = overlap_norm(c, frames);
  std::vector<double> padded(norm.size(), 0.0);
  std::vector<std::complex<double>> s(bins);
  std::vector<double> frame(c.n_fft);
  const double inv_n = 1.0 / static_cast<double>(c.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < bins; ++k) s[k] = {spec.at(0, t, k), spec.at(1, t, k)};
    fft::irfft(s, frame);
    for (std::size_t n = 0; n < c.win_length; ++n) {
      padded[t * c.hop + n] += w[n] * frame[n] * inv_n;
    }
  }
  std::vector<double> out(num_samples, 0.0);
  for (std::size_t i = 0; i < num_samples; ++i) {
    const std::size_t p = i + front;
    if (p < padded.size()) out[i] = padded[p] / std::max(norm[p], kNormFloor);
  }
  return out;
}

Tensor istft_adjoint(std::span<const double> grad_wave, const StftConfig& c,
                     std::size_t frames) {
  const std::size_t bins = c.num_bins();
  const std::size_t front = c.front_padding();
  const auto w = make_window(c.window, c.win_length);
  const auto norm = overlap_norm(c, frames);
  std::vector<double> gpad(norm.size(), 0.0);
  for (std::size_t i = 0; i < grad_wave.size(); ++i) {
    const std::size_t p = i + front;
    if (p < gpad.size()) gpad[p] = grad_wave[i] / std::max(norm[p], kNormFloor);
  }
  Tensor out({2, frames, bins});
  std::vector<double> frame(c.n_fft, 0.0);
  std::vector<std::complex<double>> g(bins);
  const double inv_n = 1.0 / static_cast<double>(c.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (std::size_t n = 0; n < c.win_length; ++n) {
      frame[n] = w[n] * gpad[t * c.hop + n] * inv_n;
    }
    fft::rfft(frame, g);
    // Adjoint of the Hermitian inverse: interior bins count twice, the
    // ignored imaginary parts of DC and Nyquist get no gradient.
    for (std::size_t k = 0; k < bins; ++k) {
      const bool edge = (k == 0 || 2 * k == c.n_fft);
      const double scale = edge ? 1.0 : 2.0;
      out.at(0, t, k) = scale * g[k].real();
      out.at(1, t, k) = edge ? 0.0 : scale * g[k].imag();
    }
  }
  return out;
}

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& config) {
  config.validate();
  if (wave.empty()) throw std::invalid_argument("stft: empty waveform");
  ComplexSpectrogram out;
  out.data = stft_forward(wave.samples, config);
  out.config = config;
  out.num_samples = wave.size();
  return out;
}

Waveform istft(const ComplexSpectrogram& spec, int sample_rate) {
  spec.config.validate();
  return Waveform(istft_forward(spec.data, spec.config, spec.num_samples),
                  sample_rate);
}

double snr_db(std::span<const double> reference,
              std::span<const double> estimate) {
  if (reference.size() != estimate.size()) {
    throw std::invalid_argument("snr_db: length mismatch");
  }
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    sig += reference[i] * reference[i];
    const double d = reference[i] - estimate[i];
    err += d * d;
  }
  return 10.0 * std::log10(std::max(sig, 1e-300) / std::max(err, 1e-300));
}

}  // namespace napse::dsp
