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
#include <complex>
#include <stdexcept>

#include "napse/dsp.hpp"
#include "napse/fft.hpp"

namespace napse::dsp {
namespace {

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

// Triangular HTK-style filters, [n_mels][bins].
std::vector<std::vector<double>> mel_filters(std::size_t n_mels,
                                             std::size_t n_fft, int rate,
                                             double low_hz) {
  const std::size_t bins = n_fft / 2 + 1;
  const double lo = hz_to_mel(low_hz), hi = hz_to_mel(rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / (n_mels + 1);
  }
  std::vector<std::vector<double>> filters(n_mels, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < n_mels; ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * rate / n_fft);
      const double up = (mel - edges[m]) / (edges[m + 1] - edges[m]);
      const double down = (edges[m + 2] - mel) / (edges[m + 2] - edges[m + 1]);
      filters[m][k] = std::max(0.0, std::min(up, down));
    }
  }
  return filters;
}

}  // namespace

Tensor fbank(const Waveform& wave, const FbankConfig& config) {
  if (wave.empty()) throw std::invalid_argument("fbank: empty waveform");
  const auto win = static_cast<std::size_t>(
      std::lround(config.frame_ms * wave.sample_rate / 1000.0));
  const auto hop = static_cast<std::size_t>(
      std::lround(config.hop_ms * wave.sample_rate / 1000.0));
  if (wave.size() < win) {
    throw std::invalid_argument("fbank: waveform shorter than one frame");
  }
  std::size_t n_fft = 1;
  while (n_fft < win) n_fft <<= 1;
  const std::size_t frames = 1 + (wave.size() - win) / hop;
  const std::size_t bins = n_fft / 2 + 1;
  const auto window = make_window(WindowKind::kHann, win);
  const auto filters = mel_filters(config.n_mels, n_fft, wave.sample_rate, config.low_hz);

  Tensor out({frames, config.n_mels});
  std::vector<double> frame(n_fft, 0.0);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t n = 0; n < win; ++n) {
      frame[n] = window[n] * wave.samples[t * hop + n];
    }
    fft::rfft(frame, spec);
    for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(spec[k]);
    for (std::size_t m = 0; m < config.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += filters[m][k] * power[k];
      out.at(t, m) = std::log(std::max(e, kLogFloor));
    }
  }
  return out;
}

}  // namespace napse::dsp
