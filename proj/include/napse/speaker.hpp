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

// Speaker conditioning: embedding providers, enrollment Fbank statistics
// and the fusion layer that combines them.

#ifndef NAPSE_SPEAKER_HPP_
#define NAPSE_SPEAKER_HPP_

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "napse/dsp.hpp"
#include "napse/nn.hpp"

namespace napse::speaker {

inline constexpr std::size_t kEmbeddingDim = 256;
inline constexpr std::size_t kStatsDim = 160;  // 80 means + 80 stds
inline constexpr double kMinEnrollSeconds = 1.0;

struct FbankStats {
  std::vector<double> mean;
  std::vector<double> std;  // population std
  // [mean || std]
  std::vector<double> concat() const;
};

// Per-dimension mean and population std over the rows of `frames`
// ([T, D], T >= 2).
FbankStats frame_stats(const Tensor& frames);
FbankStats enrollment_stats(const dsp::Waveform& enrollment,
                            const dsp::FbankConfig& config = {});

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string kind() const = 0;
  std::size_t output_dim() const { return kEmbeddingDim; }
  // Unit-norm embedding. `utterance_id` is only consulted by providers
  // that look embeddings up rather than compute them.
  std::vector<double> embed(const dsp::Waveform& enrollment,
                            const std::string& utterance_id = "") const;

 protected:
  virtual std::vector<double> compute(const dsp::Waveform& enrollment,
                                      const std::string& utterance_id) const = 0;
};

// Fixed random projection of the enrollment Fbank statistics.
class StubProvider : public EmbeddingProvider {
 public:
  explicit StubProvider(std::uint64_t seed = 0);
  std::string kind() const override { return "stub"; }

 protected:
  std::vector<double> compute(const dsp::Waveform& enrollment,
                              const std::string& utterance_id) const override;

 private:
  std::vector<double> projection_;  // [256, 160]
};

// Small convolutional encoder over log-mel frames, pretrained with a
// speaker-classification loss. Its parameters live in a private store so
// enhancement training can never update them.
struct ToyProviderOptions {
  std::size_t channels1 = 8;
  std::size_t channels2 = 16;
};

class ToyProvider : public EmbeddingProvider {
 public:
  using Options = ToyProviderOptions;
  explicit ToyProvider(std::uint64_t seed = 0, Options options = {});
  std::string kind() const override { return "toy"; }

  struct TrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t steps = 0;
  };
  // clips[s] holds utterances of speaker s.
  TrainReport pretrain(const std::vector<std::vector<dsp::Waveform>>& clips,
                       std::size_t steps, std::uint64_t seed, double lr = 3e-3);

  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 protected:
  std::vector<double> compute(const dsp::Waveform& enrollment,
                              const std::string& utterance_id) const override;

 private:
  ag::Var encode(const Tensor& fbank_frames) const;  // un-normalised [256]

  Options options_;
  nn::ParameterStore store_;
  nn::Conv2d conv1_, conv2_;
  nn::Linear project_;
};

// Line-delimited records {"utterance_id": ..., "embedding": [256 floats]}.
class ExternalFileProvider : public EmbeddingProvider {
 public:
  explicit ExternalFileProvider(const std::filesystem::path& path);
  std::string kind() const override { return "external"; }
  std::size_t size() const { return table_.size(); }

 protected:
  std::vector<double> compute(const dsp::Waveform& enrollment,
                              const std::string& utterance_id) const override;

 private:
  std::map<std::string, std::vector<double>> table_;
};

// {"kind": "stub"|"toy"|"external", "seed": n, "path": file}
std::unique_ptr<EmbeddingProvider> make_provider(const nlohmann::json& config);

// Affine map of [embedding || mean || std] (416) to 256 dims, no
// activation. With `use_fbank` false the input is the embedding alone.
class FusionLayer {
 public:
  FusionLayer() = default;
  FusionLayer(nn::ParameterStore& store, const std::string& group,
              bool use_fbank, nn::Rng& rng);

  ag::Var operator()(const std::vector<double>& embedding,
                     const FbankStats& stats) const;
  std::size_t input_dim() const { return use_fbank_ ? kEmbeddingDim + kStatsDim : kEmbeddingDim; }
  bool use_fbank() const { return use_fbank_; }
  const nn::Linear& linear() const { return linear_; }

 private:
  bool use_fbank_ = true;
  nn::Linear linear_;
};

// Stateless form: weight [256, 416], bias [256].
std::vector<double> fuse(const std::vector<double>& embedding,
                         const FbankStats& stats, const Tensor& weight,
                         const Tensor& bias);

std::size_t fusion_param_count(bool use_fbank = true);

}  // namespace napse::speaker

#endif  // NAPSE_SPEAKER_HPP_
