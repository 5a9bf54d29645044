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


// Metric-predicting discriminators (MetricGAN+ / MetricGAN-U style).
//
//   L_D = |D(s_hat) - m(s_hat, s)|^2      L_G = |D(s_hat) - 1|^2
//   m_PESQ   = (PESQ + 0.5) / 5           m_DNSMOS = (DNSMOS - 1) / 4
//
// Metrics come from a MetricProvider: analytic surrogates by default, or
// an external executable that prints a raw score.

#ifndef NAPSE_METRICGAN_HPP_
#define NAPSE_METRICGAN_HPP_

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "napse/dsp.hpp"
#include "napse/nn.hpp"
#include "napse/optim.hpp"

namespace napse::metricgan {

// ---- normalisation ---------------------------------------------------

inline constexpr double kPesqMin = -0.5, kPesqMax = 4.5;
inline constexpr double kMosMin = 1.0, kMosMax = 5.0;

using WarningHandler = std::function<void(const std::string&)>;
// Default handler writes to stderr. Returns the previous handler.
WarningHandler set_warning_handler(WarningHandler handler);

// Out-of-range inputs are clamped and reported through the handler.
double normalize_pesq(double pesq);
double normalize_dnsmos(double mos);

// ---- metric providers ------------------------------------------------

enum class Metric { kPesq, kOvrl, kSig, kBak };
std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
bool is_intrusive(Metric m);  // only the PESQ-like metric needs a reference
// Declared raw range of a metric.
std::pair<double, double> raw_range(Metric m);
// Maps a raw score to [0, 1] with the matching Eq. 1 normalisation.
double normalize(Metric m, double raw);

class MetricProvider {
 public:
  virtual ~MetricProvider() = default;
  virtual Metric metric() const = 0;
  virtual std::string name() const = 0;
  // Raw score clamped into raw_range(metric()). `ref` is ignored by
  // non-intrusive metrics and required by intrusive ones.
  double score(const dsp::Waveform& est, const dsp::Waveform* ref) const;
  double normalized(const dsp::Waveform& est, const dsp::Waveform* ref) const {
    return normalize(metric(), score(est, ref));
  }

 protected:
  virtual double raw(const dsp::Waveform& est, const dsp::Waveform* ref) const = 0;
};

// Segmental SNR over 20 ms frames, each clamped to [-5, 30] dB.
double segmental_snr_db(std::span<const double> est, std::span<const double> ref);

struct SurrogateDetail {
  double sig = 1.0, bak = 1.0, ovrl = 1.0;
  double flatness = 0.0;       // mean spectral flatness of active frames
  double dynamic_range = 0.0;  // p95 - p5 frame level, dB
};
// Non-intrusive stand-ins computed from the estimate alone.
SurrogateDetail non_intrusive_surrogate(std::span<const double> est, int sample_rate);

class SurrogateProvider : public MetricProvider {
 public:
  explicit SurrogateProvider(Metric m) : metric_(m) {}
  Metric metric() const override { return metric_; }
  std::string name() const override { return "surrogate-" + to_string(metric_); }

 protected:
  double raw(const dsp::Waveform& est, const dsp::Waveform* ref) const override;

 private:
  Metric metric_;
};

// Runs `command <est.wav> <ref.wav|none>` and reads the first line of
// stdout that parses as a number.
class ExternalProvider : public MetricProvider {
 public:
  ExternalProvider(Metric m, std::string command);
  Metric metric() const override { return metric_; }
  std::string name() const override { return "external-" + to_string(metric_); }

 protected:
  double raw(const dsp::Waveform& est, const dsp::Waveform* ref) const override;

 private:
  Metric metric_;
  std::string command_;
};

// {"metric": "pesq", "kind": "surrogate"|"external", "command": "..."}
std::unique_ptr<MetricProvider> make_metric_provider(const nlohmann::json& config);

// ---- discriminator ---------------------------------------------------

struct DiscriminatorConfig {
  std::vector<std::size_t> channels{8, 16, 16, 16};  // four conv blocks
  double compression = 0.5;
  double leaky_slope = 0.3;
};

// The input STFT: 512-point, 240 hop, 480 Hann window.
dsp::StftConfig discriminator_stft();

class Discriminator {
 public:
  Discriminator(std::string name, bool intrusive, std::uint64_t seed,
                DiscriminatorConfig config = {});

  const std::string& name() const { return name_; }
  bool intrusive() const { return intrusive_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  // Input feature map: [1 or 2, T, 257] compressed magnitudes.
  Tensor features(std::span<const double> est, std::span<const double> ref) const;
  ag::Var features(const ag::Var& est, std::span<const double> ref) const;
  // Scalar prediction in [0, 1] (shape [1]).
  ag::Var predict(const ag::Var& features) const;
  double predict(const Tensor& features) const;
  // Same output, but with D's weights detached from the graph.
  ag::Var predict_frozen(const ag::Var& features) const;

 private:
  ag::Var run(const ag::Var& x, bool frozen) const;

  std::string name_;
  bool intrusive_;
  DiscriminatorConfig config_;
  nn::ParameterStore store_;
  std::vector<nn::Conv2d> blocks_;
  nn::Linear head_;
};

struct DSample {
  Tensor features;
  double target = 0.0;  // normalised metric
};

// Mean over the batch of (D(x) - target)^2.
ag::Var discriminator_loss(const Discriminator& d, const std::vector<DSample>& batch);
// (D(est) - 1)^2. D's parameters receive no gradient.
ag::Var generator_loss(const Discriminator& d, const ag::Var& est,
                       std::span<const double> ref);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 200) : capacity_(capacity) {}
  void push(DSample s);
  std::vector<DSample> sample(std::size_t k, std::mt19937_64& rng) const;
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  void clear() { items_.clear(); }
  // Oldest first.
  const std::deque<DSample>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::deque<DSample> items_;
};

// ---- discriminator ensemble ------------------------------------------

// Table-2 style switches. `sig_bak` trains two separate non-intrusive
// discriminators whose generator terms are averaged.
struct GanConfig {
  bool pesq = false;
  bool ovrl = false;
  bool sig_bak = false;
  bool replay = true;
  std::size_t replay_capacity = 200;
  double lr = 5e-4;
  nlohmann::json providers = nlohmann::json::object();  // per-metric overrides
  DiscriminatorConfig discriminator;

  bool any() const { return pesq || ovrl || sig_bak; }
  nlohmann::json to_json() const;
  static GanConfig from_json(const nlohmann::json& j);
};

struct GanMember {
  Metric metric;
  std::unique_ptr<MetricProvider> provider;
  std::unique_ptr<Discriminator> disc;
  std::unique_ptr<optim::Adam> opt;
  ReplayBuffer replay;
  bool enabled = true;
};

class GanEnsemble {
 public:
  GanEnsemble() = default;
  GanEnsemble(const GanConfig& config, std::uint64_t seed);

  const GanConfig& config() const { return config_; }
  std::vector<GanMember>& members() { return members_; }
  const std::vector<GanMember>& members() const { return members_; }
  GanMember* find(Metric m);
  std::size_t active() const;

  // Builds the D batch for one member: current estimates with their
  // metric targets, the (ref, ref) anchor for intrusive members, and as
  // many replayed samples. New samples are pushed to the replay buffer.
  std::vector<DSample> build_batch(GanMember& m, const std::vector<std::vector<double>>& est,
                                   const std::vector<std::vector<double>>& ref,
                                   int sample_rate, std::mt19937_64& rng);
  // One optimiser step per enabled member. Returns L_D per metric name.
  std::map<std::string, double> discriminator_step(const std::vector<std::vector<double>>& est,
                                                   const std::vector<std::vector<double>>& ref,
                                                   int sample_rate, std::mt19937_64& rng);
  // Mean of the enabled members' L_G; an empty Var when none is enabled.
  ag::Var generator_loss(const ag::Var& est, std::span<const double> ref) const;
  std::map<std::string, double> generator_terms(const ag::Var& est,
                                                std::span<const double> ref) const;

 private:
  GanConfig config_;
  std::vector<GanMember> members_;
};

}  // namespace napse::metricgan

#endif  // NAPSE_METRICGAN_HPP_
