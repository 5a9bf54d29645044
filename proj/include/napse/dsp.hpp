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

// Signal-processing kernels: STFT/iSTFT, PQMF subband split/merge and
// log-mel filterbank features. All functions are pure.

#ifndef NAPSE_DSP_HPP_
#define NAPSE_DSP_HPP_

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "napse/tensor.hpp"

namespace napse::dsp {

inline constexpr int kSampleRate = 48000;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<double> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // Throws on non-finite samples or a non-positive rate.
  void validate() const;
};

enum class WindowKind { kHann, kSqrtHann };

std::string to_string(WindowKind kind);
WindowKind window_kind_from_string(const std::string& name);

// Periodic window of the given length.
std::vector<double> make_window(WindowKind kind, std::size_t length);

// Frames cover [k*hop, k*hop + win_length) of the padded signal; each is
// windowed and zero-extended to n_fft. Padding puts `front_padding()` zeros
// before the first sample: win_length/2 when `center`, otherwise
// win_length - hop (causal framing).
struct StftConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 480;
  std::size_t win_length = 960;
  WindowKind window = WindowKind::kSqrtHann;
  bool center = false;

  std::size_t num_bins() const { return n_fft / 2 + 1; }
  std::size_t front_padding() const {
    return center ? win_length / 2 : win_length - hop;
  }
  std::size_t num_frames(std::size_t num_samples) const;

  // Throws std::invalid_argument unless win_length <= n_fft,
  // hop <= win_length and the window satisfies constant overlap-add.
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

// 20 ms window / 10 ms hop at `sample_rate`, sqrt-Hann, causal framing.
StftConfig enhancement_stft(int sample_rate = kSampleRate);

// The three loss resolutions (n_fft, hop, win) = (512, 240, 480),
// (1024, 480, 960), (2048, 960, 1920), plain Hann.
std::array<StftConfig, 3> multi_scale_presets();

// Planar complex spectrogram: data is [2, frames, bins] holding the real
// plane then the imaginary plane.
struct ComplexSpectrogram {
  Tensor data;
  StftConfig config;
  std::size_t num_samples = 0;  // length of the analysed waveform

  std::size_t frames() const { return data.dim(1); }
  std::size_t bins() const { return data.dim(2); }
  double re(std::size_t t, std::size_t k) const { return data.at(0, t, k); }
  double im(std::size_t t, std::size_t k) const { return data.at(1, t, k); }
  std::complex<double> at(std::size_t t, std::size_t k) const {
    return {re(t, k), im(t, k)};
  }
};

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& config);
Waveform istft(const ComplexSpectrogram& spec, int sample_rate = kSampleRate);

// Linear-operator forms used by the differentiable wrappers. `spec` is
// planar [2, frames, bins].
Tensor stft_forward(std::span<const double> x, const StftConfig& config);
std::vector<double> stft_adjoint(const Tensor& grad_spec,
                                 const StftConfig& config,
                                 std::size_t num_samples);
std::vector<double> istft_forward(const Tensor& spec, const StftConfig& config,
                                  std::size_t num_samples);
Tensor istft_adjoint(std::span<const double> grad_wave,
                     const StftConfig& config, std::size_t num_frames);

struct PqmfFilterbank {
  std::size_t num_bands = 4;
  double cutoff = 0.0;        // normalised to Nyquist
  double kaiser_beta = 9.0;
  std::vector<double> prototype;
  std::vector<std::vector<double>> analysis;   // [band][tap]
  std::vector<std::vector<double>> synthesis;  // [band][tap]

  std::size_t taps() const { return prototype.size(); }
  // Analysis followed by synthesis delays the signal by this many samples.
  std::size_t delay() const { return prototype.size() - 1; }
  std::size_t subband_length(std::size_t num_samples) const {
    return (num_samples + num_bands - 1) / num_bands;
  }
};

// Kaiser-windowed sinc prototype, cosine modulated. With cutoff <= 0 the
// cutoff is chosen by golden-section search to minimise the deviation of
// the prototype's autocorrelation from a 2M-th band filter.
PqmfFilterbank design_pqmf(std::size_t num_bands = 4, std::size_t taps = 64,
                           double cutoff = 0.0);

// Returns [num_bands, ceil(N / num_bands)]. Input shorter than the
// prototype is rejected.
Tensor pqmf_analysis(std::span<const double> x, const PqmfFilterbank& fb);
// Inverse of pqmf_analysis up to delay(); returns num_bands * L samples.
std::vector<double> pqmf_synthesis(const Tensor& subbands,
                                   const PqmfFilterbank& fb);
// Adjoints of the two linear maps above.
std::vector<double> pqmf_analysis_adjoint(const Tensor& grad_subbands,
                                          const PqmfFilterbank& fb,
                                          std::size_t num_samples);
Tensor pqmf_synthesis_adjoint(std::span<const double> grad_wave,
                              const PqmfFilterbank& fb,
                              std::size_t subband_length);

inline constexpr double kLogFloor = 1e-10;

struct FbankConfig {
  std::size_t n_mels = 80;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  double low_hz = 20.0;
};

// Log-mel energies [frames, n_mels] from the power spectrum, floored at
// kLogFloor before the log. Frames without padding; at least one frame
// must fit.
Tensor fbank(const Waveform& wave, const FbankConfig& config = {});

double snr_db(std::span<const double> reference,
              std::span<const double> estimate);

}  // namespace napse::dsp

#endif  // NAPSE_DSP_HPP_
