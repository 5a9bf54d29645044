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

#ifndef NAPSE_WAV_HPP_
#define NAPSE_WAV_HPP_

#include <filesystem>

#include "napse/dsp.hpp"

namespace napse::wav {

enum class SampleFormat { kPcm16, kFloat32 };

// Reads a mono PCM16 or IEEE float32 RIFF/WAVE file. Unless
// `target_rate` is 0 the result is resampled to it.
dsp::Waveform read(const std::filesystem::path& path,
                   int target_rate = dsp::kSampleRate);

void write(const std::filesystem::path& path, const dsp::Waveform& wave,
           SampleFormat format = SampleFormat::kFloat32);

// Band-limited (Kaiser-windowed sinc) resampling to `target_rate`.
dsp::Waveform resample(const dsp::Waveform& wave, int target_rate);

}  // namespace napse::wav

#endif  // NAPSE_WAV_HPP_
