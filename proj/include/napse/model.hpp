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

// Two-stage subband enhancement network.
//
//   wave -> PQMF (4 bands) -> per-band STFT -> MAG-Net mask -> stage 1
//        -> COM-Net (mixture || stage 1) -> re/im deltas   -> stage 2
//        -> per-band iSTFT -> PQMF merge
//
// Both networks are encoder / S-GTCM / decoder stacks over [C, T, F]
// feature maps. After every FD layer the fused speaker vector gates the
// channels through a sigmoid.

#ifndef NAPSE_MODEL_HPP_
#define NAPSE_MODEL_HPP_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "napse/dsp.hpp"
#include "napse/nn.hpp"
#include "napse/speaker.hpp"

namespace napse::model {

inline constexpr const char* kMagNet = "mag_net";
inline constexpr const char* kComNet = "com_net";
inline constexpr const char* kFusion = "fusion";

struct ModelConfig {
  int sample_rate = dsp::kSampleRate;
  std::size_t num_subbands = 4;
  std::size_t pqmf_taps = 64;
  std::vector<std::size_t> fd_channels = {64, 128, 256};
  std::size_t fd_kernel_time = 2;
  std::size_t fd_kernel_freq = 3;
  std::size_t bottleneck_channels = 256;
  std::size_t gtcm_blocks = 4;
  std::size_t gtcm_kernel = 3;
  std::vector<std::size_t> dilations = {1, 2, 5, 9};
  std::size_t embedding_dim = speaker::kEmbeddingDim;
  bool use_fbank = true;
  double mask_ceiling = 2.0;
  double compression = 0.5;
  bool stage2_only = false;  // COM-Net refines the mixture directly

  static ModelConfig toy();
  dsp::StftConfig subband_stft() const;
  // Bins after each FD layer, starting with the STFT bins.
  std::vector<std::size_t> freq_sizes() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

// Fixed (non-trainable) analysis of a mixture.
struct SubbandSpectra {
  std::size_t num_samples = 0;     // original length
  std::size_t padded_samples = 0;  // multiple of num_subbands
  Tensor spec;                     // [2B, T, K], band b at planes 2b, 2b+1
  Tensor magnitude;                // [B, T, K], |X|^c
  Tensor compressed;               // [2B, T, K], |X|^(c-1) X
};

struct ForwardOptions {
  bool run_stage2 = true;
  std::optional<double> force_mask;  // replaces the MAG-Net mask
  bool zero_refinement = false;      // drops the COM-Net deltas
};

struct StageOutput {
  ag::Var mask;         // [B, T, K]
  ag::Var stage1_spec;  // [2B, T, K]
  ag::Var stage1_wave;  // [N]
  ag::Var stage2_spec;  // empty unless stage 2 ran
  ag::Var stage2_wave;
};

struct UNetStage {
  std::vector<nn::Conv2d> fd;
  std::vector<nn::Linear> gates;
  nn::Conv2d squeeze, expand;
  std::vector<nn::GatedTemporalBlock> gtcm;
  std::vector<std::vector<nn::ConvTransposeFreq>> decoders;  // one or two heads
};

class TwoStageModel {
 public:
  TwoStageModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const dsp::PqmfFilterbank& filterbank() const { return *pqmf_; }
  std::shared_ptr<const dsp::PqmfFilterbank> filterbank_ptr() const { return pqmf_; }

  ag::Var fuse(const std::vector<double>& embedding, const speaker::FbankStats& stats) const;

  SubbandSpectra analyse(std::span<const double> mixture) const;
  // Returns {mask, stage-1 spectrum}.
  std::pair<ag::Var, ag::Var> mag_net_forward(const SubbandSpectra& mix, const ag::Var& fused,
                                              const ForwardOptions& opts = {}) const;
  // Stage-2 spectrum = reference spectrum + (re, im) deltas.
  ag::Var com_net_forward(const SubbandSpectra& mix, const ag::Var& stage1_spec,
                          const ag::Var& fused, const ForwardOptions& opts = {}) const;
  ag::Var synthesize(const ag::Var& spec, const SubbandSpectra& mix) const;
  // S-GTCM stack of a stage on [H, T, 1].
  ag::Var s_gtcm_forward(const std::string& stage, const ag::Var& x) const;

  StageOutput forward(std::span<const double> mixture, const ag::Var& fused,
                      const ForwardOptions& opts = {}) const;

  // Per component and "total".
  std::map<std::string, std::size_t> count_params() const;
  // Multiply-accumulates of one forward pass over `seconds` of audio.
  std::size_t count_macs(double seconds) const;

 private:
  ag::Var unet(const UNetStage& stage, const ag::Var& input, const ag::Var& fused,
               std::size_t head) const;

  ModelConfig config_;
  nn::ParameterStore store_;
  std::shared_ptr<const dsp::PqmfFilterbank> pqmf_;
  speaker::FusionLayer fusion_;
  UNetStage mag_, com_;
};

// Embedding + enrollment statistics, computed once per enrollment.
struct Conditioning {
  std::vector<double> embedding;
  speaker::FbankStats stats;
};
Conditioning condition(const dsp::Waveform& enrollment, const speaker::EmbeddingProvider& provider,
                       const std::string& utterance_id = "");

struct Enhanced {
  dsp::Waveform stage1, stage2;
};
// Inference; records no graph.
Enhanced enhance(const dsp::Waveform& mixture, const dsp::Waveform& enrollment,
                 TwoStageModel& model, const speaker::EmbeddingProvider& provider,
                 const std::string& utterance_id = "");
Enhanced enhance(const dsp::Waveform& mixture, const Conditioning& cond, TwoStageModel& model);

}  // namespace napse::model

#endif  // NAPSE_MODEL_HPP_
