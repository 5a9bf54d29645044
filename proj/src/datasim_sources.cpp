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

// Synthetic speech, noise and impulse-response generators.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include "napse/datasim.hpp"
#include "napse/fft.hpp"

namespace napse::datasim {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// F1..F4 in Hz for five cardinal vowels.
constexpr std::array<std::array<double, 4>, 5> kVowels = {{
    {730, 1090, 2440, 3400},  // a
    {270, 2290, 3010, 3700},  // i
    {300, 870, 2240, 3300},   // u
    {530, 1840, 2480, 3500},  // e
    {570, 840, 2410, 3400},   // o
}};
constexpr std::array<double, 4> kBandwidths = {60, 90, 120, 180};

// Two-pole resonator with unit DC gain.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double step(double x, double freq, double bw, double rate) {
    const double r = std::exp(-std::numbers::pi * bw / rate);
    const double b = 2.0 * r * std::cos(kTwoPi * freq / rate);
    const double c = -r * r;
    const double a = 1.0 - b - c;
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

void normalize_rms(std::vector<double>& x, double target_rms) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / std::max<std::size_t>(1, x.size()));
  if (rms > 0.0) {
    for (auto& v : x) v *= target_rms / rms;
  }
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Shapes white noise with |H(f)| = f^(-exponent/2) above 20 Hz.
std::vector<double> coloured(std::size_t n, double exponent, std::mt19937_64& rng,
                             int rate) {
  const std::size_t nfft = next_pow2(n);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(nfft);
  for (auto& v : x) v = g(rng);
  std::vector<std::complex<double>> spec(nfft / 2 + 1);
  fft::rfft(x, spec);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = std::max(20.0, static_cast<double>(k) * rate / nfft);
    spec[k] *= std::pow(f, -0.5 * exponent);
  }
  spec[0] = 0.0;
  fft::irfft(spec, x);
  x.resize(n);
  return x;
}

}  // namespace

std::uint64_t record_seed(std::uint64_t global_seed, std::uint64_t index) {
  // splitmix64 over the combined key
  std::uint64_t z = global_seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SyntheticSpeaker make_speaker(std::size_t id, std::uint64_t seed) {
  std::mt19937_64 rng(record_seed(seed, 1000003ULL * (id + 1)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SyntheticSpeaker s;
  s.id = id;
  s.f0 = 90.0 + 160.0 * u(rng);
  s.formant_scale = 0.82 + 0.4 * u(rng);
  s.bandwidth_scale = 0.7 + 0.8 * u(rng);
  s.tilt = 0.2 + 0.6 * u(rng);
  s.breathiness = 0.01 + 0.08 * u(rng);
  s.vowel_weights.resize(kVowels.size());
  for (auto& w : s.vowel_weights) w = 0.2 + u(rng) * u(rng) * 3.0;
  return s;
}

dsp::Waveform synth_utterance(const SyntheticSpeaker& spk, double seconds,
                              std::uint64_t seed, int rate) {
  if (seconds <= 0.0) throw std::invalid_argument("synth_utterance: duration <= 0");
  std::mt19937_64 rng(record_seed(seed, spk.id));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::discrete_distribution<std::size_t> vowel(spk.vowel_weights.begin(),
                                                spk.vowel_weights.end());
  const std::size_t n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::vector<double> out(n, 0.0);
  std::array<Resonator, 4> res{};
  std::array<double, 4> formant{};
  for (std::size_t k = 0; k < 4; ++k) formant[k] = kVowels[0][k] * spk.formant_scale;
  const double smooth = std::exp(-1.0 / (0.015 * rate));  // 15 ms formant glide
  double phase = 0.0, pulse_lp = 0.0;
  std::size_t i = 0;
  while (i < n) {
    // A pause, or a syllable with its own vowel and pitch glide.
    if (u(rng) < 0.15) {
      i += static_cast<std::size_t>((0.04 + 0.15 * u(rng)) * rate);
      continue;
    }
    const std::size_t len = static_cast<std::size_t>((0.12 + 0.18 * u(rng)) * rate);
    const auto& target = kVowels[vowel(rng)];
    const double f_start = spk.f0 * (1.0 + 0.08 * std::clamp(g(rng), -2.0, 2.0));
    const double f_end = spk.f0 * (1.0 + 0.08 * std::clamp(g(rng), -2.0, 2.0));
    const double amp = 0.6 + 0.4 * u(rng);
    const std::size_t ramp = static_cast<std::size_t>(0.02 * rate);
    for (std::size_t j = 0; j < len && i < n; ++j, ++i) {
      const double frac = static_cast<double>(j) / len;
      const double f0 = f_start + (f_end - f_start) * frac;
      phase += f0 / rate;
      double excitation = 0.0;
      if (phase >= 1.0) {
        phase -= 1.0;
        excitation = 1.0;
      }
      pulse_lp = spk.tilt * pulse_lp + (1.0 - spk.tilt) * excitation;
      double x = pulse_lp + spk.breathiness * g(rng);
      for (std::size_t k = 0; k < 4; ++k) {
        formant[k] = smooth * formant[k] + (1.0 - smooth) * target[k] * spk.formant_scale;
        x = res[k].step(x, formant[k], kBandwidths[k] * spk.bandwidth_scale, rate);
      }
      double env = 1.0;
      if (j < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * j / ramp);
      if (len - j < ramp) env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * (len - j) / ramp));
      out[i] = amp * env * x;
    }
  }
  normalize_rms(out, std::pow(10.0, -25.0 / 20.0));
  return dsp::Waveform(std::move(out), rate);
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kBrown: return "brown";
    case NoiseKind::kTonal: return "tonal";
    case NoiseKind::kBabble: return "babble";
  }
  return "?";
}

NoiseKind noise_kind_from_string(const std::string& name) {
  for (NoiseKind k : {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBrown,
                      NoiseKind::kTonal, NoiseKind::kBabble}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown noise kind: " + name);
}

dsp::Waveform synth_noise(NoiseKind kind, double seconds, std::uint64_t seed, int rate) {
  if (seconds <= 0.0) throw std::invalid_argument("synth_noise: duration <= 0");
  const std::size_t n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::mt19937_64 rng(record_seed(seed, static_cast<std::uint64_t>(kind) + 77));
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n, 0.0);
  switch (kind) {
    case NoiseKind::kWhite:
      for (auto& v : x) v = g(rng);
      break;
    case NoiseKind::kPink:
      x = coloured(n, 1.0, rng, rate);
      break;
    case NoiseKind::kBrown:
      x = coloured(n, 2.0, rng, rate);
      break;
    case NoiseKind::kTonal: {
      const double hum = u(rng) < 0.5 ? 50.0 : 60.0;
      std::vector<std::pair<double, double>> tones;
      for (int h = 1; h <= 8; ++h) tones.emplace_back(hum * h, 1.0 / h);
      for (int t = 0; t < 3; ++t) tones.emplace_back(200.0 + 3800.0 * u(rng), 0.5 * u(rng));
      for (auto& [f, a] : tones) {
        const double ph = kTwoPi * u(rng);
        for (std::size_t i = 0; i < n; ++i) x[i] += a * std::sin(kTwoPi * f * i / rate + ph);
      }
      for (auto& v : x) v += 0.05 * g(rng);
      break;
    }
    case NoiseKind::kBabble: {
      for (std::size_t s = 0; s < 5; ++s) {
        const auto spk = make_speaker(100000 + s, seed);
        const auto utt = synth_utterance(spk, seconds, seed + s, rate);
        for (std::size_t i = 0; i < n; ++i) x[i] += utt.samples[i];
      }
      break;
    }
  }
  normalize_rms(x, std::pow(10.0, -25.0 / 20.0));
  return dsp::Waveform(std::move(x), rate);
}

double rir_envelope(double t, double rt60) {
  return std::exp(-kDecayConstant * t / rt60);
}

std::vector<double> synth_rir(double rt60, std::uint64_t seed, int rate) {
  if (!(rt60 >= kRt60Min - 1e-12 && rt60 <= kRt60Max + 1e-12)) {
    throw std::invalid_argument("synth_rir: rt60 " + std::to_string(rt60) +
                                " outside [0.1, 1.2] s");
  }
  const std::size_t n = static_cast<std::size_t>(std::llround((1.2 * rt60 + 0.01) * rate));
  std::mt19937_64 rng(record_seed(seed, 0x41f));
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> h(n);
  h[0] = 1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double v = 0.05 * g(rng) * rir_envelope(static_cast<double>(i) / rate, rt60);
    h[i] = std::clamp(v, -0.9, 0.9);
  }
  return h;
}

std::vector<double> convolve(std::span<const double> x, std::span<const double> h,
                             std::size_t out_len) {
  if (x.empty() || h.empty()) return std::vector<double>(out_len, 0.0);
  const std::size_t full = x.size() + h.size() - 1;
  const std::size_t nfft = next_pow2(full);
  std::vector<double> a(nfft, 0.0), b(nfft, 0.0);
  std::copy(x.begin(), x.end(), a.begin());
  std::copy(h.begin(), h.end(), b.begin());
  std::vector<std::complex<double>> fa(nfft / 2 + 1), fb(nfft / 2 + 1);
  fft::rfft(a, fa);
  fft::rfft(b, fb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k] / static_cast<double>(nfft);
  fft::irfft(fa, a);
  std::vector<double> out(out_len, 0.0);
  std::copy_n(a.begin(), std::min(out_len, full), out.begin());
  return out;
}

}  // namespace napse::datasim
