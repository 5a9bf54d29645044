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

// Mixture simulation: synthetic sources, decay-model room impulse
// responses, target/interferer/noise mixing and JSONL manifests.
//
// Source directory layout:
//   clean/<speaker>/<utterance>.wav
//   noise/<name>.wav
//   rir/<name>.wav          (optional; synthesized when absent)
// Simulated set layout:
//   manifest.jsonl, mixture/<id>.wav, label/<id>.wav, enroll/<id>.wav

#ifndef NAPSE_DATASIM_HPP_
#define NAPSE_DATASIM_HPP_

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "napse/dsp.hpp"

namespace napse::datasim {

inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kToySubsetCount = 170;

// Deterministic per-record seed.
std::uint64_t record_seed(std::uint64_t global_seed, std::uint64_t index);

// ---- synthetic sources ------------------------------------------------

struct SyntheticSpeaker {
  std::size_t id = 0;
  double f0 = 120.0;              // Hz, in [90, 250]
  double formant_scale = 1.0;     // vocal-tract length factor
  double bandwidth_scale = 1.0;
  double tilt = 0.5;              // glottal pulse smoothing in [0, 1)
  double breathiness = 0.03;
  std::vector<double> vowel_weights;  // preference over the vowel table
};

SyntheticSpeaker make_speaker(std::size_t id, std::uint64_t seed);
dsp::Waveform synth_utterance(const SyntheticSpeaker& speaker, double seconds,
                              std::uint64_t seed,
                              int sample_rate = dsp::kSampleRate);

enum class NoiseKind { kWhite, kPink, kBrown, kTonal, kBabble };
std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& name);
dsp::Waveform synth_noise(NoiseKind kind, double seconds, std::uint64_t seed,
                          int sample_rate = dsp::kSampleRate);

// ---- room impulse responses ------------------------------------------

inline constexpr double kRt60Min = 0.1;
inline constexpr double kRt60Max = 1.2;
inline constexpr double kDecayConstant = 6.9;  // ln(1000)

// exp(-6.9 t / rt60): 60 dB of decay at t = rt60.
double rir_envelope(double t, double rt60);
// Unit direct path at t = 0 followed by an exponentially decaying noise
// tail. Length 1.2 * rt60 + 10 ms.
std::vector<double> synth_rir(double rt60, std::uint64_t seed,
                              int sample_rate = dsp::kSampleRate);

// Linear convolution truncated to `out_len` samples (FFT based).
std::vector<double> convolve(std::span<const double> x, std::span<const double> h,
                             std::size_t out_len);

// ---- mixing ----------------------------------------------------------

struct Range {
  double lo = 0.0, hi = 0.0;
  double sample(std::mt19937_64& rng) const;
};

enum class LabelKind { kDry, kEarly, kFull };
std::string to_string(LabelKind kind);
LabelKind label_kind_from_string(const std::string& name);

struct SimSpec {
  Range snr_db{-5.0, 20.0};
  Range sir_db{-5.0, 20.0};
  Range rt60{kRt60Min, kRt60Max};
  double p_interferer = 0.5;
  double p_reverb = 0.5;
  Range level_dbfs{-35.0, -15.0};
  LabelKind label = LabelKind::kEarly;
  double early_ms = 50.0;
  double min_target_seconds = 3.0;

  void validate() const;
  nlohmann::json to_json() const;
  static SimSpec from_json(const nlohmann::json& j);
};

struct SourceSignal {
  std::string id;
  dsp::Waveform wave;
};

struct SimSources {
  SourceSignal target;
  SourceSignal enrollment;  // another utterance of the target speaker
  std::optional<SourceSignal> interferer;
  std::optional<SourceSignal> noise;
  std::optional<SourceSignal> rir;  // imported RIR; synthesized if absent
};

struct SimMetadata {
  std::optional<double> snr_db;  // empty: no noise
  std::optional<double> sir_db;  // empty: no interferer
  std::optional<double> rt60;    // empty: dry
  double level_dbfs = 0.0;
  double scale = 1.0;            // common gain applied after mixing
  bool clipped = false;          // peak-normalised after scaling
  std::string target_id, enrollment_id, interferer_id, noise_id, rir_id;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SimMetadata from_json(const nlohmann::json& j);
};

struct MixtureExample {
  std::string id;
  dsp::Waveform mixture, label, enrollment;
  // Scaled components with mixture = target + interferer + noise.
  std::vector<double> target_component, interferer_component, noise_component;
  SimMetadata meta;
};

MixtureExample simulate_example(const SimSources& sources, const SimSpec& spec,
                                std::uint64_t seed);

// ---- source pools and manifests --------------------------------------

struct SourcePool {
  std::vector<std::vector<SourceSignal>> speakers;  // utterances per speaker
  std::vector<SourceSignal> noises;
  std::vector<SourceSignal> rirs;
};

struct SyntheticPoolSpec {
  std::size_t num_speakers = 8;
  std::size_t utterances_per_speaker = 3;
  double utterance_seconds = 3.0;
  std::size_t num_noises = 5;
  double noise_seconds = 4.0;
};

SourcePool synthetic_pool(const SyntheticPoolSpec& spec, std::uint64_t seed);
SourcePool load_source_pool(const std::filesystem::path& root);
void write_source_pool(const SourcePool& pool, const std::filesystem::path& root);

struct ManifestRecord {
  std::string example_id;
  std::string mixture, label, enrollment;  // paths relative to the manifest
  SimMetadata meta;
  nlohmann::json to_json() const;
  static ManifestRecord from_json(const nlohmann::json& j);
};

// Source choices for one record, resolved against a pool.
struct PlannedExample {
  std::string example_id;
  std::size_t speaker = 0, target_utt = 0, enroll_utt = 0;
  std::optional<std::size_t> interferer_speaker, interferer_utt, noise, rir;
  std::uint64_t seed = 0;
};

std::vector<PlannedExample> plan_examples(const SourcePool& pool, std::size_t count,
                                          std::uint64_t seed);
SimSources resolve(const SourcePool& pool, const PlannedExample& plan);

// Simulates `count` examples in memory.
std::vector<MixtureExample> generate_examples(const SourcePool& pool, const SimSpec& spec,
                                              std::size_t count, std::uint64_t seed);

// Writes audio and manifest.jsonl under `out_dir`; returns the records.
std::vector<ManifestRecord> build_manifest(const SourcePool& pool, const SimSpec& spec,
                                           std::size_t count, std::uint64_t seed,
                                           const std::filesystem::path& out_dir);
// Validates ids and file existence.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
MixtureExample load_example(const ManifestRecord& record,
                            const std::filesystem::path& base_dir);
std::vector<MixtureExample> load_manifest(const std::filesystem::path& path);

}  // namespace napse::datasim

#endif  // NAPSE_DATASIM_HPP_
