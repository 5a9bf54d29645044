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


// Training schedule, evaluation, ablation ladder and RTF benchmark.
//
//   stage1          L1 on the stage-1 output, COM-Net idle
//   stage2_frozen1  L2 on the stage-2 output, MAG-Net frozen
//   joint           L1 + L2 (or L2 alone), everything trainable
//
// Each step runs one update per active discriminator on the current
// estimates before the generator update.

#ifndef NAPSE_PIPELINE_HPP_
#define NAPSE_PIPELINE_HPP_

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "napse/checkpoint.hpp"
#include "napse/datasim.hpp"
#include "napse/losses.hpp"
#include "napse/metricgan.hpp"
#include "napse/model.hpp"
#include "napse/optim.hpp"
#include "napse/speaker.hpp"

namespace napse::pipeline {

using checkpoint::Phase;

enum class JointLoss { kSum, kStage2Only };
std::string to_string(JointLoss j);
JointLoss joint_loss_from_string(const std::string& s);

struct TrainConfig {
  model::ModelConfig model = model::ModelConfig::toy();
  nlohmann::json speaker = {{"kind", "stub"}, {"seed", 0}};
  bool multi_scale = true;  // M = 3 resolutions, else the single 20/10 ms one
  double compression = 0.5;
  metricgan::GanConfig gan;
  bool gan_in_stage1 = false;
  double gan_weight = 1.0;
  double lr = 1e-3;        // stage1 and stage2_frozen1
  double lr_joint = 1e-4;  // joint
  double clip_norm = 0.0;
  std::size_t plateau_patience = 3;
  double min_lr = 1e-6;
  std::size_t batch_size = 1;
  long steps_stage1 = 500;
  long steps_stage2 = 500;
  long steps_joint = 200;
  long eval_every = 50;    // dev evaluation / plateau check period, 0 = never
  JointLoss joint_loss = JointLoss::kSum;
  double segment_seconds = 0.5;  // random crop per step, 0 = whole example
  // Supervised terms averaged over PQMF subbands of estimate and label
  // instead of the full-band waveform. L_G stays full band.
  bool subband_loss = false;
  std::uint64_t seed = 0;

  void validate() const;
  long steps_for(Phase p) const;
  double lr_for(Phase p) const;
  losses::LossConfig loss_config() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// ---- run ledger --------------------------------------------------------

// Append-only JSONL log. Every record carries a "step" that never
// decreases. Wall-clock timings go to a separate sink so the main log is
// reproducible bit for bit.
class RunLedger {
 public:
  RunLedger() = default;
  explicit RunLedger(const std::filesystem::path& path,
                     const std::filesystem::path& timing_path = {});

  void append(nlohmann::json record);
  void timing(const std::string& what, long step, double seconds);
  const std::vector<nlohmann::json>& records() const { return records_; }
  long last_step() const { return last_step_; }
  // The JSONL text of all records.
  std::string dump() const;

 private:
  std::vector<nlohmann::json> records_;
  long last_step_ = -1;
  std::ofstream out_, timing_out_;
};

std::vector<nlohmann::json> read_ledger(const std::filesystem::path& path);

// ---- data ----------------------------------------------------------------

struct Dataset {
  std::vector<datasim::MixtureExample> examples;
  std::vector<model::Conditioning> conditioning;
  std::size_t size() const { return examples.size(); }
};

Dataset make_dataset(std::vector<datasim::MixtureExample> examples,
                     const speaker::EmbeddingProvider& provider);

// [offset, offset + length) of mixture, label and components.
datasim::MixtureExample crop_example(const datasim::MixtureExample& ex, std::size_t offset,
                                     std::size_t length);
// The crop of `length` samples with the most label energy (hop = length / 4).
datasim::MixtureExample loudest_crop(const datasim::MixtureExample& ex, std::size_t length);

// ---- trainer ---------------------------------------------------------------

struct StepResult {
  long step = 0;
  Phase phase = Phase::kStage1;
  losses::LossBreakdown loss;            // phase objective (L1, L2 or L1 + L2)
  std::map<std::string, double> d_loss;  // per discriminator
  std::map<std::string, double> g_terms;
  double lr = 0.0;
  double mag_grad_norm_sq = 0.0;  // over mag_net after backward
};

// Phase order check: stage1 starts fresh; stage2_frozen1 needs a finished
// stage1 (or a stage-2-only model); joint needs a finished stage2_frozen1.
// `from` is the phase of the state being continued and `finished` whether
// it completed its budget.
void check_transition(std::optional<Phase> from, bool finished, Phase to,
                      const model::ModelConfig& config);

class Trainer {
 public:
  Trainer(TrainConfig config, const Dataset* train, const Dataset* dev,
          RunLedger* ledger = nullptr);

  // Restores model, optimizer, discriminators, replay buffers and counters.
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint,
                                         TrainConfig config, const Dataset* train,
                                         const Dataset* dev, RunLedger* ledger = nullptr);

  // Validates the transition, sets trainable groups, learning rate and
  // resets the plateau tracker (unless resuming mid-phase).
  void begin_phase(Phase p);
  // One D-then-G step on the next deterministic batch.
  StepResult step();
  // Steps until the phase budget is used; returns the last result.
  std::optional<StepResult> run_phase(Phase p);
  // stage1 -> stage2_frozen1 -> joint (stage-2-only models skip stage1 and
  // joint). Saves "<dir>/<tag>.ckpt" after each phase when `dir` is set.
  void run_schedule(const std::filesystem::path& dir = {});

  // Phase objective on fixed examples, no parameter update.
  double batch_loss(const std::vector<std::size_t>& indices) const;
  // Mean SI-SNR (dB) of the phase output over the dev set.
  double dev_si_snr(std::optional<Phase> phase = std::nullopt) const;

  void save(const std::filesystem::path& path) const;

  model::TwoStageModel& model() { return *model_; }
  const model::TwoStageModel& model() const { return *model_; }
  metricgan::GanEnsemble& gan() { return gan_; }
  optim::Adam& optimizer() { return adam_; }
  const TrainConfig& config() const { return config_; }
  const checkpoint::TrainState& state() const { return state_; }
  bool phase_active() const { return active_; }

 private:
  struct Sample {
    datasim::MixtureExample ex;
    const model::Conditioning* cond;
  };
  std::vector<Sample> batch_for(long step) const;
  // Phase objective for one example; adds L_G if `gan` is set.
  losses::StageLoss objective(const Sample& s, const model::StageOutput& out, bool gan) const;
  // L1 (stage 1) or L2 (stage 2) for one output, full band or per subband.
  losses::StageLoss stage_loss(int stage, const ag::Var& est, const Sample& s, bool gan) const;
  model::StageOutput run_model(const Sample& s, Phase p) const;
  bool gan_active() const;
  void evaluate_dev();

  TrainConfig config_;
  const Dataset* train_;
  const Dataset* dev_;
  RunLedger* ledger_;
  std::unique_ptr<model::TwoStageModel> model_;
  optim::Adam adam_;
  optim::PlateauHalver plateau_;
  metricgan::GanEnsemble gan_;
  checkpoint::TrainState state_;
  bool active_ = false;
};

// ---- evaluation ------------------------------------------------------------

using Enhancer = std::function<dsp::Waveform(std::size_t index)>;

struct ExampleScores {
  std::string id;
  double si_snr = 0.0, si_snr_noisy = 0.0;
  std::map<std::string, double> metrics;  // raw provider scores
};

struct EvalRow {
  std::string name;
  std::vector<ExampleScores> examples;
  std::map<std::string, double> mean;  // "si_snr", "si_snr_i" and metric names
};

struct EvalTable {
  std::vector<std::string> metrics;  // metric column order
  std::vector<EvalRow> rows;         // "Noisy" first
  std::string render_text() const;
  std::string render_csv() const;
  nlohmann::json to_json() const;
};

// Providers: metric name -> provider. Empty means the four surrogates.
using ProviderSet = std::vector<std::shared_ptr<metricgan::MetricProvider>>;
ProviderSet default_providers();
ProviderSet make_providers(const nlohmann::json& config);

EvalRow evaluate(const std::string& name, const Enhancer& enhance,
                 const std::vector<datasim::MixtureExample>& examples,
                 const ProviderSet& providers);
EvalRow evaluate_noisy(const std::vector<datasim::MixtureExample>& examples,
                       const ProviderSet& providers);
EvalRow evaluate_model(const std::string& name, model::TwoStageModel& model, const Dataset& data,
                       const ProviderSet& providers, bool stage2 = true);
EvalTable make_table(const ProviderSet& providers, std::vector<EvalRow> rows);

// ---- real-time factor --------------------------------------------------------

struct RtfReport {
  double duration = 0.0;  // seconds of audio
  std::vector<double> times;
  double median_time = 0.0;
  double rtf = 0.0;
  double per_frame_ms = 0.0;  // median time per 10 ms hop
  int threads = 1;
  nlohmann::json hardware;
  nlohmann::json to_json() const;
};

double median(std::vector<double> v);
// processing time / audio duration.
double rtf(double processing_seconds, double audio_seconds);
nlohmann::json hardware_descriptor();
// Times `repetitions` single-threaded enhancements of a synthetic clip.
RtfReport benchmark_rtf(model::TwoStageModel& model, double duration, std::size_t repetitions,
                        std::uint64_t seed = 0);

// ---- ablation ladder ---------------------------------------------------------

struct Variant {
  std::string name;
  TrainConfig config;
};

// Stage-2 only, +Fbank, +Multi-loss, +PESQ, +OVRL, +SIG&BAK; each rung
// toggles one switch relative to the previous one.
std::vector<Variant> ablation_ladder(const TrainConfig& base);
// JSON-pointer paths whose values differ.
std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b);

struct AblationResult {
  EvalTable table;
  std::vector<nlohmann::json> ledgers;  // one per variant
};

// Trains every variant from the same seed (stage2_frozen1 only for
// stage-2-only models, else the full schedule) and evaluates it on `dev`.
// The base row is always present; `variants` are appended after it.
AblationResult ablation_suite(const Variant& base, const std::vector<Variant>& variants,
                              const Dataset& train, const Dataset& dev,
                              const ProviderSet& providers,
                              const std::filesystem::path& out_dir = {});

// ---- plots -------------------------------------------------------------------

// Loss curve per phase from ledger step records.
std::string loss_curve_svg(const std::vector<nlohmann::json>& ledger,
                           const std::string& title = "training loss");
// Grouped bars, one group per metric column, one bar per row.
std::string table_svg(const EvalTable& table, const std::string& title = "evaluation");

}  // namespace napse::pipeline

#endif  // NAPSE_PIPELINE_HPP_
