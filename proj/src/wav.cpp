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

#include "napse/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace napse::wav {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace

dsp::Waveform read(const std::filesystem::path& path, int target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw std::runtime_error("wav: not a RIFF/WAVE file: " + path.string());
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_le<std::uint32_t>(&bytes[pos + 4]);
    const std::uint8_t* body = &bytes[pos + 8];
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - pos - 8);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0 && avail >= 16) {
      format = read_le<std::uint16_t>(body);
      channels = read_le<std::uint16_t>(body + 2);
      rate = read_le<std::uint32_t>(body + 4);
      bits = read_le<std::uint16_t>(body + 14);
      if (format == kFormatExtensible && avail >= 26) {
        format = read_le<std::uint16_t>(body + 24);
      }
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_size = avail;
    }
    pos += 8 + size + (size & 1);
  }
  if (!data || rate == 0) {
    throw std::runtime_error("wav: missing fmt or data chunk in " + path.string());
  }
  if (channels != 1) {
    throw std::runtime_error("wav: only mono is supported, got " +
                             std::to_string(channels) + " channels");
  }
  dsp::Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    wave.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < wave.samples.size(); ++i) {
      wave.samples[i] = read_le<std::int16_t>(data + 2 * i) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    wave.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < wave.samples.size(); ++i) {
      wave.samples[i] = read_le<float>(data + 4 * i);
    }
  } else {
    throw std::runtime_error("wav: unsupported format " + std::to_string(format) +
                             "/" + std::to_string(bits) + " bit");
  }
  if (target_rate > 0 && wave.sample_rate != target_rate) {
    return resample(wave, target_rate);
  }
  return wave;
}

void write(const std::filesystem::path& path, const dsp::Waveform& wave,
           SampleFormat format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path.string());
  const std::uint16_t bits = format == SampleFormat::kPcm16 ? 16 : 32;
  const std::uint16_t tag = format == SampleFormat::kPcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(wave.samples.size() * bits / 8);
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, tag);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate) * bits / 8);
  write_le<std::uint16_t>(out, bits / 8);
  write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_bytes);
  for (double v : wave.samples) {
    if (format == SampleFormat::kPcm16) {
      const double c = std::clamp(v, -1.0, 32767.0 / 32768.0);
      write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32768.0)));
    } else {
      write_le<float>(out, static_cast<float>(v));
    }
  }
}

dsp::Waveform resample(const dsp::Waveform& wave, int target_rate) {
  if (target_rate <= 0) throw std::invalid_argument("resample: bad rate");
  if (wave.sample_rate == target_rate || wave.empty()) {
    return dsp::Waveform(wave.samples, target_rate);
  }
  constexpr int kHalfZeros = 32;
  constexpr double kBeta = 8.6;
  const double ratio = static_cast<double>(target_rate) / wave.sample_rate;
  const double bandwidth = std::min(1.0, ratio) * 0.97;
  // Kernel half-width measured in input samples.
  const double half = kHalfZeros / bandwidth;
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(wave.size()) * ratio));
  const double norm = bessel_i0(kBeta);
  std::vector<double> out(out_len, 0.0);
  const long n_in = static_cast<long>(wave.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(t - half)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(t + half)));
    double acc = 0.0;
    for (long n = lo; n <= hi; ++n) {
      const double d = t - static_cast<double>(n);
      const double x = bandwidth * d;
      const double sinc = std::abs(x) < 1e-12
                              ? 1.0
                              : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double r = d / half;
      const double win = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
      acc += wave.samples[static_cast<std::size_t>(n)] * bandwidth * sinc * win;
    }
    out[m] = acc;
  }
  return dsp::Waveform(std::move(out), target_rate);
}

}  // namespace napse::wav
