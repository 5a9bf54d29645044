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


#include "napse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <omp.h>

#include "napse/ops.hpp"
#include "napse/wav.hpp"

namespace napse::pipeline {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kBatchStream = 0x62617463680aULL;
constexpr std::uint64_t kGanStream = 0x67616e0aULL;
constexpr double kSilentLabel = 1e-8;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

// Zero-mean energy, as seen by SI-SNR.
double centred_energy(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(std::max<std::size_t>(1, x.size()));
  double e = 0.0;
  for (double v : x) e += (v - m) * (v - m);
  return e;
}

void accumulate(losses::LossBreakdown& into, const losses::LossBreakdown& b) {
  auto add_vec = [](std::vector<double>& a, const std::vector<double>& v) {
    if (a.size() < v.size()) a.resize(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) a[i] += v[i];
  };
  into.si_snr += b.si_snr;
  add_vec(into.asym, b.asym);
  add_vec(into.mag, b.mag);
  add_vec(into.ri, b.ri);
  into.gan += b.gan;
  into.total += b.total;
}

void scale_breakdown(losses::LossBreakdown& b, double s) {
  b.si_snr *= s;
  for (auto* v : {&b.asym, &b.mag, &b.ri}) for (double& x : *v) x *= s;
  b.gan *= s;
  b.total *= s;
}

std::vector<double> slice(const std::vector<double>& v, std::size_t offset, std::size_t length) {
  if (v.empty()) return {};
  return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(offset),
                             v.begin() + static_cast<std::ptrdiff_t>(offset + length));
}

}  // namespace

std::string to_string(JointLoss j) { return j == JointLoss::kSum ? "l1+l2" : "l2"; }

JointLoss joint_loss_from_string(const std::string& s) {
  if (s == "l1+l2" || s == "sum") return JointLoss::kSum;
  if (s == "l2") return JointLoss::kStage2Only;
  throw std::invalid_argument("unknown joint loss: " + s);
}

// ---- TrainConfig ---------------------------------------------------------

void TrainConfig::validate() const {
  model.validate();
  if (lr <= 0.0 || lr_joint <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (steps_stage1 < 0 || steps_stage2 < 0 || steps_joint < 0 || eval_every < 0) {
    throw std::invalid_argument("TrainConfig: negative step budget");
  }
  if (segment_seconds < 0.0) throw std::invalid_argument("TrainConfig: negative segment");
  if (compression <= 0.0 || compression > 1.0) {
    throw std::invalid_argument("TrainConfig: compression must be in (0, 1]");
  }
  if (gan_weight < 0.0) throw std::invalid_argument("TrainConfig: gan_weight must be >= 0");
}

long TrainConfig::steps_for(Phase p) const {
  switch (p) {
    case Phase::kStage1: return steps_stage1;
    case Phase::kStage2Frozen1: return steps_stage2;
    case Phase::kJoint: return steps_joint;
  }
  return 0;
}

double TrainConfig::lr_for(Phase p) const { return p == Phase::kJoint ? lr_joint : lr; }

losses::LossConfig TrainConfig::loss_config() const {
  losses::LossConfig c;
  c.scales = multi_scale ? losses::default_scales() : losses::single_scale();
  c.compression = compression;
  c.w_gan = gan_weight;
  return c;
}

json TrainConfig::to_json() const {
  return {{"model", model.to_json()},
          {"speaker", speaker},
          {"multi_scale", multi_scale},
          {"compression", compression},
          {"gan", gan.to_json()},
          {"gan_in_stage1", gan_in_stage1},
          {"gan_weight", gan_weight},
          {"lr", lr},
          {"lr_joint", lr_joint},
          {"clip_norm", clip_norm},
          {"plateau_patience", plateau_patience},
          {"min_lr", min_lr},
          {"batch_size", batch_size},
          {"steps_stage1", steps_stage1},
          {"steps_stage2", steps_stage2},
          {"steps_joint", steps_joint},
          {"eval_every", eval_every},
          {"joint_loss", to_string(joint_loss)},
          {"segment_seconds", segment_seconds},
          {"subband_loss", subband_loss},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
  if (j.contains("speaker")) c.speaker = j.at("speaker");
  if (j.contains("gan")) c.gan = metricgan::GanConfig::from_json(j.at("gan"));
  c.multi_scale = j.value("multi_scale", c.multi_scale);
  c.compression = j.value("compression", c.compression);
  c.gan_in_stage1 = j.value("gan_in_stage1", c.gan_in_stage1);
  c.gan_weight = j.value("gan_weight", c.gan_weight);
  c.lr = j.value("lr", c.lr);
  c.lr_joint = j.value("lr_joint", c.lr_joint);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.min_lr = j.value("min_lr", c.min_lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps_stage1 = j.value("steps_stage1", c.steps_stage1);
  c.steps_stage2 = j.value("steps_stage2", c.steps_stage2);
  c.steps_joint = j.value("steps_joint", c.steps_joint);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.joint_loss = joint_loss_from_string(j.value("joint_loss", to_string(c.joint_loss)));
  c.segment_seconds = j.value("segment_seconds", c.segment_seconds);
  c.subband_loss = j.value("subband_loss", c.subband_loss);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// ---- RunLedger -------------------------------------------------------------

RunLedger::RunLedger(const std::filesystem::path& path,
                     const std::filesystem::path& timing_path) {
  out_.open(path, std::ios::app);
  if (!out_) throw std::runtime_error("cannot open ledger " + path.string());
  if (!timing_path.empty()) {
    timing_out_.open(timing_path, std::ios::app);
    if (!timing_out_) throw std::runtime_error("cannot open " + timing_path.string());
  }
}

void RunLedger::append(json record) {
  if (!record.contains("step") || !record["step"].is_number_integer()) {
    throw std::invalid_argument("RunLedger: record without an integer step");
  }
  const long step = record["step"].get<long>();
  if (step < last_step_) {
    throw std::invalid_argument("RunLedger: step " + std::to_string(step) + " after " +
                                std::to_string(last_step_));
  }
  last_step_ = step;
  if (out_.is_open()) out_ << record.dump() << '\n' << std::flush;
  records_.push_back(std::move(record));
}

void RunLedger::timing(const std::string& what, long step, double seconds) {
  if (timing_out_.is_open()) {
    timing_out_ << json{{"what", what}, {"step", step}, {"seconds", seconds}}.dump() << '\n';
  }
}

std::string RunLedger::dump() const {
  std::string s;
  for (const auto& r : records_) s += r.dump() + "\n";
  return s;
}

std::vector<json> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read ledger " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

// ---- data --------------------------------------------------------------------

Dataset make_dataset(std::vector<datasim::MixtureExample> examples,
                     const speaker::EmbeddingProvider& provider) {
  Dataset d;
  d.examples = std::move(examples);
  for (const auto& ex : d.examples) {
    d.conditioning.push_back(model::condition(ex.enrollment, provider, ex.meta.enrollment_id));
  }
  return d;
}

datasim::MixtureExample crop_example(const datasim::MixtureExample& ex, std::size_t offset,
                                     std::size_t length) {
  if (offset + length > ex.mixture.size() || ex.label.size() != ex.mixture.size()) {
    throw std::invalid_argument("crop_example: crop outside the example");
  }
  datasim::MixtureExample c;
  c.id = ex.id;
  c.meta = ex.meta;
  c.enrollment = ex.enrollment;
  c.mixture = dsp::Waveform(slice(ex.mixture.samples, offset, length), ex.mixture.sample_rate);
  c.label = dsp::Waveform(slice(ex.label.samples, offset, length), ex.label.sample_rate);
  c.target_component = slice(ex.target_component, offset, length);
  c.interferer_component = slice(ex.interferer_component, offset, length);
  c.noise_component = slice(ex.noise_component, offset, length);
  return c;
}

datasim::MixtureExample loudest_crop(const datasim::MixtureExample& ex, std::size_t length) {
  if (length == 0 || length >= ex.mixture.size()) return ex;
  const std::size_t hop = std::max<std::size_t>(1, length / 4);
  std::size_t best = 0;
  double best_e = -1.0;
  for (std::size_t off = 0; off + length <= ex.label.size(); off += hop) {
    const double e = energy(std::span(ex.label.samples).subspan(off, length));
    if (e > best_e) {
      best_e = e;
      best = off;
    }
  }
  return crop_example(ex, best, length);
}

// ---- phase order -------------------------------------------------------------

void check_transition(std::optional<Phase> from, bool finished, Phase to,
                      const model::ModelConfig& config) {
  auto fail = [&](const std::string& why) {
    throw std::runtime_error("phase " + checkpoint::to_string(to) + ": " + why);
  };
  const bool resume = from && *from == to && !finished;
  switch (to) {
    case Phase::kStage1:
      if (config.stage2_only) fail("a stage-2-only model has no stage 1");
      if (from && !resume) fail("phase-order violation, stage1 must come first");
      return;
    case Phase::kStage2Frozen1:
      if (resume) return;
      if (!from) {
        if (config.stage2_only) return;
        fail("missing prerequisite stage1 checkpoint");
      }
      if (*from != Phase::kStage1) fail("phase-order violation after " + checkpoint::to_string(*from));
      if (!finished) fail("stage1 has not finished its step budget");
      return;
    case Phase::kJoint:
      if (config.stage2_only) fail("a stage-2-only model has no stage 1");
      if (resume) return;
      if (!from) fail("missing prerequisite stage1 and stage2_frozen1 checkpoints");
      if (*from == Phase::kStage1) fail("missing prerequisite stage2_frozen1 checkpoint");
      if (*from != Phase::kStage2Frozen1 || !finished) {
        fail("phase-order violation, stage2_frozen1 must finish first");
      }
      return;
  }
}

// ---- Trainer -----------------------------------------------------------------

Trainer::Trainer(TrainConfig config, const Dataset* train, const Dataset* dev, RunLedger* ledger)
    : config_(std::move(config)),
      train_(train),
      dev_(dev),
      ledger_(ledger),
      model_(std::make_unique<model::TwoStageModel>(config_.model, config_.seed)),
      adam_(config_.lr, 0.9, 0.999, 1e-8, config_.clip_norm),
      plateau_(config_.plateau_patience, config_.min_lr),
      gan_(config_.gan, config_.seed ^ kGanStream) {
  config_.validate();
  if (!train_ || train_->size() == 0) throw std::invalid_argument("Trainer: empty training set");
  state_.extra = {{"started", false}, {"finished", false}, {"lr", config_.lr}};
}

bool Trainer::gan_active() const {
  if (gan_.active() == 0) return false;
  return state_.phase != Phase::kStage1 || config_.gan_in_stage1;
}

void Trainer::begin_phase(Phase p) {
  const bool started = state_.extra.value("started", false);
  const bool finished = state_.extra.value("finished", false);
  const std::optional<Phase> from = started ? std::optional(state_.phase) : std::nullopt;
  check_transition(from, finished, p, config_.model);
  const bool resume = from && *from == p && !finished;
  auto& store = model_->parameters();
  if (!config_.model.stage2_only) {
    store.set_trainable(model::kMagNet, p != Phase::kStage2Frozen1);
  }
  store.set_trainable(model::kComNet, p != Phase::kStage1);
  // The fused vector also drives stage 1, so it is frozen with it.
  store.set_trainable(model::kFusion,
                      p != Phase::kStage2Frozen1 || config_.model.stage2_only);
  if (resume) {
    adam_.set_lr(state_.extra.value("lr", config_.lr_for(p)));
  } else {
    if (ledger_) {
      json r = {{"type", "phase"}, {"phase", checkpoint::to_string(p)}, {"step", state_.step}};
      r["from"] = from ? json(checkpoint::to_string(*from)) : json(nullptr);
      ledger_->append(r);
    }
    state_.phase = p;
    state_.phase_step = 0;
    adam_ = optim::Adam(config_.lr_for(p), 0.9, 0.999, 1e-8, config_.clip_norm);
    plateau_ = optim::PlateauHalver(config_.plateau_patience, config_.min_lr);
    state_.extra["started"] = true;
    state_.extra["finished"] = false;
    state_.extra["lr"] = adam_.lr();
  }
  active_ = true;
}

std::vector<Trainer::Sample> Trainer::batch_for(long step) const {
  std::vector<Sample> out;
  const int rate = config_.model.sample_rate;
  const auto seg = static_cast<std::size_t>(std::llround(config_.segment_seconds * rate));
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    std::mt19937_64 rng(datasim::record_seed(
        config_.seed ^ kBatchStream, static_cast<std::uint64_t>(step) * config_.batch_size + b));
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, train_->size() - 1)(rng);
    const auto& ex = train_->examples[i];
    Sample s{ex, &train_->conditioning[i]};
    if (seg > 0 && seg < ex.mixture.size()) {
      std::uniform_int_distribution<std::size_t> pick(0, ex.mixture.size() - seg);
      bool found = false;
      for (int attempt = 0; attempt < 16 && !found; ++attempt) {
        const std::size_t off = pick(rng);
        const auto lab = std::span(ex.label.samples).subspan(off, seg);
        if (centred_energy(lab) > kSilentLabel) {
          s.ex = crop_example(ex, off, seg);
          found = true;
        }
      }
      if (!found) s.ex = loudest_crop(ex, seg);
    }
    out.push_back(std::move(s));
  }
  return out;
}

model::StageOutput Trainer::run_model(const Sample& s, Phase p) const {
  const ag::Var fused = model_->fuse(s.cond->embedding, s.cond->stats);
  model::ForwardOptions opts;
  opts.run_stage2 = p != Phase::kStage1;
  return model_->forward(s.ex.mixture.samples, fused, opts);
}

losses::StageLoss Trainer::stage_loss(int stage, const ag::Var& est, const Sample& s,
                                      bool gan) const {
  const auto cfg = config_.loss_config();
  const ag::Var g = gan ? gan_.generator_loss(est, s.ex.label.samples) : ag::Var{};
  auto total = [&](const ag::Var& e, const Tensor& r, const ag::Var& gv) {
    return stage == 1 ? losses::stage1_total(e, r, gv, cfg) : losses::stage2_total(e, r, gv, cfg);
  };
  if (!config_.subband_loss) return total(est, Tensor::from(s.ex.label.samples), g);
  const auto& fb = model_->filterbank();
  const ag::Var bands = ag::pqmf_analysis(est, model_->filterbank_ptr());
  const Tensor ref = dsp::pqmf_analysis(s.ex.label.samples, fb);
  const std::size_t len = ref.dim(1);
  losses::StageLoss out;
  std::size_t used = 0;
  for (std::size_t b = 0; b < ref.dim(0); ++b) {
    Tensor rb({len});
    std::copy_n(ref.vec().begin() + static_cast<std::ptrdiff_t>(b * len), len, rb.vec().begin());
    // A band with no label energy has no SI-SNR; skip it.
    double mean = 0.0, e = 0.0;
    for (double v : rb.vec()) mean += v;
    mean /= static_cast<double>(len);
    for (double v : rb.vec()) e += (v - mean) * (v - mean);
    if (e <= losses::kSilentEnergy) continue;
    auto l = total(ag::reshape(ag::slice0(bands, b, b + 1), {len}), rb, ag::Var{});
    out.total = out.total ? ag::add(out.total, l.total) : l.total;
    accumulate(out.breakdown, l.breakdown);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("subband loss: silent label");
  out.total = ag::scale(out.total, 1.0 / static_cast<double>(used));
  scale_breakdown(out.breakdown, 1.0 / static_cast<double>(used));
  if (g) {
    out.total = ag::add(out.total, ag::scale(g, cfg.w_gan));
    out.breakdown.gan = g.item();
    out.breakdown.total += cfg.w_gan * g.item();
  }
  return out;
}

losses::StageLoss Trainer::objective(const Sample& s, const model::StageOutput& out,
                                     bool gan) const {
  switch (state_.phase) {
    case Phase::kStage1:
      return stage_loss(1, out.stage1_wave, s, gan);
    case Phase::kStage2Frozen1:
      return stage_loss(2, out.stage2_wave, s, gan);
    case Phase::kJoint: {
      auto l2 = stage_loss(2, out.stage2_wave, s, gan);
      if (config_.joint_loss == JointLoss::kStage2Only) return l2;
      auto l1 = stage_loss(1, out.stage1_wave, s, gan);
      losses::StageLoss sum;
      sum.total = ag::add(l1.total, l2.total);
      sum.breakdown = l1.breakdown;
      accumulate(sum.breakdown, l2.breakdown);
      return sum;
    }
  }
  throw std::logic_error("unreachable");
}

StepResult Trainer::step() {
  if (!active_) throw std::logic_error("Trainer::step: no active phase");
  const auto t0 = Clock::now();
  const auto batch = batch_for(state_.step);
  std::vector<model::StageOutput> outs;
  for (const auto& s : batch) outs.push_back(run_model(s, state_.phase));

  StepResult r;
  r.step = state_.step;
  r.phase = state_.phase;
  const bool gan = gan_active();
  if (gan) {
    // Discriminators first, on the estimates that carry an L_G term.
    std::vector<std::vector<double>> est, ref;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const bool with_s1 = state_.phase == Phase::kStage1 ||
                           (state_.phase == Phase::kJoint && config_.joint_loss == JointLoss::kSum);
      if (with_s1) {
        est.push_back(outs[i].stage1_wave.value().vec());
        ref.push_back(batch[i].ex.label.samples);
      }
      if (state_.phase != Phase::kStage1) {
        est.push_back(outs[i].stage2_wave.value().vec());
        ref.push_back(batch[i].ex.label.samples);
      }
    }
    std::mt19937_64 rng(datasim::record_seed(config_.seed ^ kGanStream,
                                             static_cast<std::uint64_t>(state_.step)));
    r.d_loss = gan_.discriminator_step(est, ref, config_.model.sample_rate, rng);
  }

  ag::Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto l = objective(batch[i], outs[i], gan);
    total = total ? ag::add(total, l.total) : l.total;
    accumulate(r.loss, l.breakdown);
    if (gan) {
      const auto& est = state_.phase == Phase::kStage1 ? outs[i].stage1_wave : outs[i].stage2_wave;
      for (const auto& [k, v] : gan_.generator_terms(est, batch[i].ex.label.samples)) {
        r.g_terms[k] += v / static_cast<double>(batch.size());
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  scale_breakdown(r.loss, inv);
  total = ag::scale(total, inv);

  model_->parameters().zero_grad();
  ag::backward(total);
  r.mag_grad_norm_sq = model_->parameters().grad_norm_sq(model::kMagNet);
  adam_.step(model_->parameters());
  r.lr = adam_.lr();

  if (ledger_) {
    json rec = {{"type", "step"},
                {"phase", checkpoint::to_string(state_.phase)},
                {"step", state_.step},
                {"phase_step", state_.phase_step},
                {"lr", r.lr},
                {"loss", r.loss.to_json()},
                {"mag_grad_norm_sq", r.mag_grad_norm_sq}};
    if (gan) {
      rec["d_loss"] = r.d_loss;
      rec["g_terms"] = r.g_terms;
    }
    ledger_->append(rec);
    ledger_->timing("step", state_.step, seconds_since(t0));
  }
  ++state_.step;
  ++state_.phase_step;
  if (config_.eval_every > 0 && state_.phase_step % config_.eval_every == 0) evaluate_dev();
  return r;
}

double Trainer::batch_loss(const std::vector<std::size_t>& indices) const {
  nn::NoGradScope frozen(const_cast<nn::ParameterStore&>(model_->parameters()));
  double sum = 0.0;
  for (std::size_t i : indices) {
    const Sample s{train_->examples.at(i), &train_->conditioning.at(i)};
    sum += objective(s, run_model(s, state_.phase), gan_active()).breakdown.total;
  }
  return sum / static_cast<double>(std::max<std::size_t>(1, indices.size()));
}

double Trainer::dev_si_snr(std::optional<Phase> phase) const {
  const Dataset* d = dev_ ? dev_ : train_;
  const Phase p = phase.value_or(state_.phase);
  nn::NoGradScope frozen(const_cast<nn::ParameterStore&>(model_->parameters()));
  double sum = 0.0;
  for (std::size_t i = 0; i < d->size(); ++i) {
    const Sample s{d->examples[i], &d->conditioning[i]};
    const auto out = run_model(s, p);
    const auto& w = p == Phase::kStage1 ? out.stage1_wave : out.stage2_wave;
    sum += losses::si_snr_db(w.value().span(), s.ex.label.samples);
  }
  return sum / static_cast<double>(d->size());
}

void Trainer::evaluate_dev() {
  const auto t0 = Clock::now();
  const Dataset* d = dev_ ? dev_ : train_;
  double loss = 0.0;
  {
    nn::NoGradScope frozen(model_->parameters());
    for (std::size_t i = 0; i < d->size(); ++i) {
      const Sample s{d->examples[i], &d->conditioning[i]};
      loss += objective(s, run_model(s, state_.phase), false).breakdown.total;
    }
  }
  loss /= static_cast<double>(d->size());
  const double si = dev_si_snr();
  const bool halved = plateau_.report(loss, adam_);
  state_.plateau_best = plateau_.best();
  state_.plateau_bad = plateau_.bad_reports();
  state_.extra["lr"] = adam_.lr();
  if (ledger_) {
    ledger_->append({{"type", "eval"},
                     {"phase", checkpoint::to_string(state_.phase)},
                     {"step", state_.step},
                     {"dev_loss", loss},
                     {"dev_si_snr", si},
                     {"lr", adam_.lr()},
                     {"lr_halved", halved}});
    ledger_->timing("eval", state_.step, seconds_since(t0));
  }
}

std::optional<StepResult> Trainer::run_phase(Phase p) {
  begin_phase(p);
  std::optional<StepResult> last;
  while (state_.phase_step < config_.steps_for(p)) last = step();
  state_.extra["finished"] = true;
  state_.extra["lr"] = adam_.lr();
  if (ledger_) {
    ledger_->append({{"type", "phase_end"},
                     {"phase", checkpoint::to_string(p)},
                     {"step", state_.step},
                     {"dev_si_snr", dev_si_snr(p)}});
  }
  return last;
}

void Trainer::run_schedule(const std::filesystem::path& dir) {
  std::vector<Phase> phases;
  if (config_.model.stage2_only) {
    phases = {Phase::kStage2Frozen1};
  } else {
    phases = {Phase::kStage1, Phase::kStage2Frozen1, Phase::kJoint};
  }
  const bool started = state_.extra.value("started", false);
  const bool finished = state_.extra.value("finished", false);
  for (Phase p : phases) {
    if (started && (static_cast<int>(p) < static_cast<int>(state_.phase) ||
                    (p == state_.phase && finished))) {
      continue;  // already done in the run being resumed
    }
    run_phase(p);
    if (!dir.empty()) {
      std::filesystem::create_directories(dir);
      save(dir / (checkpoint::file_tag(p) + ".ckpt"));
    }
  }
}

void Trainer::save(const std::filesystem::path& path) const {
  checkpoint::TrainState st = state_;
  st.plateau_best = plateau_.best();
  st.plateau_bad = plateau_.bad_reports();
  st.extra["lr"] = adam_.lr();
  st.extra["train_config"] = config_.to_json();
  std::vector<checkpoint::Slot> aux;
  std::vector<checkpoint::Blob> blobs;
  json replay = json::object();
  auto& ens = const_cast<metricgan::GanEnsemble&>(gan_);
  for (auto& m : ens.members()) {
    const std::string key = metricgan::to_string(m.metric);
    aux.push_back({"disc." + key, &m.disc->parameters(), m.opt.get()});
    json targets = json::array();
    const auto& items = m.replay.items();
    for (std::size_t i = 0; i < items.size(); ++i) {
      blobs.push_back({"replay." + key + "/" + std::to_string(i), items[i].features.shape(),
                       items[i].features.vec()});
      targets.push_back(items[i].target);
    }
    replay[key] = {{"targets", targets}, {"enabled", m.enabled}};
  }
  st.extra["gan"] = replay;
  checkpoint::save(path, *model_, st, &adam_, aux, blobs);
}

std::unique_ptr<Trainer> Trainer::resume(const std::filesystem::path& path, TrainConfig config,
                                         const Dataset* train, const Dataset* dev,
                                         RunLedger* ledger) {
  const auto loaded = checkpoint::load(path);
  config.model = loaded.config;
  auto t = std::make_unique<Trainer>(std::move(config), train, dev, ledger);
  t->model_ = checkpoint::load_model(loaded, &t->adam_);
  t->state_ = loaded.state;
  t->plateau_.restore(loaded.state.plateau_best, loaded.state.plateau_bad);
  t->adam_.set_lr(loaded.state.extra.value("lr", t->config_.lr_for(loaded.state.phase)));
  const json gan = loaded.state.extra.value("gan", json::object());
  for (auto& m : t->gan_.members()) {
    const std::string key = metricgan::to_string(m.metric);
    if (!gan.contains(key)) {
      throw std::runtime_error("checkpoint " + path.string() + " has no discriminator " + key);
    }
    checkpoint::unpack(loaded.container, {"disc." + key, &m.disc->parameters(), m.opt.get()});
    m.enabled = gan[key].value("enabled", true);
    m.replay.clear();
    const auto& targets = gan[key].at("targets");
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& b = loaded.container.blob("replay." + key + "/" + std::to_string(i));
      m.replay.push({Tensor(b.shape, b.data), targets[i].get<double>()});
    }
  }
  t->state_.extra.erase("train_config");
  t->state_.extra.erase("gan");
  return t;
}

// ---- evaluation --------------------------------------------------------------

ProviderSet default_providers() {
  ProviderSet p;
  for (auto m : {metricgan::Metric::kPesq, metricgan::Metric::kSig, metricgan::Metric::kBak,
                 metricgan::Metric::kOvrl}) {
    p.push_back(std::make_shared<metricgan::SurrogateProvider>(m));
  }
  return p;
}

ProviderSet make_providers(const json& config) {
  if (config.is_null() || config.empty()) return default_providers();
  ProviderSet p;
  for (const auto& c : config) p.push_back(metricgan::make_metric_provider(c));
  return p;
}

EvalRow evaluate(const std::string& name, const Enhancer& enhance,
                 const std::vector<datasim::MixtureExample>& examples,
                 const ProviderSet& providers) {
  if (examples.empty()) throw std::invalid_argument("evaluate: no examples");
  EvalRow row;
  row.name = name;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const dsp::Waveform est = enhance(i);
    if (est.size() != ex.label.size()) {
      throw std::runtime_error("evaluate: output length differs for " + ex.id);
    }
    ExampleScores s;
    s.id = ex.id;
    s.si_snr = losses::si_snr_db(est.samples, ex.label.samples);
    s.si_snr_noisy = losses::si_snr_db(ex.mixture.samples, ex.label.samples);
    for (const auto& p : providers) {
      s.metrics[metricgan::to_string(p->metric())] = p->score(est, &ex.label);
    }
    row.examples.push_back(std::move(s));
  }
  const double n = static_cast<double>(row.examples.size());
  for (const auto& s : row.examples) {
    row.mean["si_snr"] += s.si_snr / n;
    row.mean["si_snr_i"] += (s.si_snr - s.si_snr_noisy) / n;
    for (const auto& [k, v] : s.metrics) row.mean[k] += v / n;
  }
  return row;
}

EvalRow evaluate_noisy(const std::vector<datasim::MixtureExample>& examples,
                       const ProviderSet& providers) {
  return evaluate("Noisy", [&](std::size_t i) { return examples[i].mixture; }, examples,
                  providers);
}

EvalRow evaluate_model(const std::string& name, model::TwoStageModel& model, const Dataset& data,
                       const ProviderSet& providers, bool stage2) {
  return evaluate(
      name,
      [&](std::size_t i) {
        const auto e = model::enhance(data.examples[i].mixture, data.conditioning[i], model);
        return stage2 ? e.stage2 : e.stage1;
      },
      data.examples, providers);
}

EvalTable make_table(const ProviderSet& providers, std::vector<EvalRow> rows) {
  EvalTable t;
  for (const auto& p : providers) t.metrics.push_back(metricgan::to_string(p->metric()));
  std::stable_partition(rows.begin(), rows.end(),
                        [](const EvalRow& r) { return r.name == "Noisy"; });
  t.rows = std::move(rows);
  return t;
}

namespace {

std::vector<std::string> columns(const EvalTable& t) {
  std::vector<std::string> c{"si_snr", "si_snr_i"};
  c.insert(c.end(), t.metrics.begin(), t.metrics.end());
  return c;
}

std::string heading(const std::string& key) {
  if (key == "si_snr") return "SI-SNR";
  if (key == "si_snr_i") return "SI-SNRi";
  std::string s = key;
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace

std::string EvalTable::render_text() const {
  const auto cols = columns(*this);
  std::size_t w0 = 6;
  for (const auto& r : rows) w0 = std::max(w0, r.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w0)) << "System";
  for (const auto& c : cols) os << "  " << std::right << std::setw(8) << heading(c);
  os << "\n" << std::string(w0 + cols.size() * 10, '-') << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(w0)) << r.name;
    for (const auto& c : cols) {
      os << "  " << std::right << std::setw(8) << std::fixed << std::setprecision(2)
         << (r.mean.count(c) ? r.mean.at(c) : std::nan(""));
    }
    os << "\n";
  }
  return os.str();
}

std::string EvalTable::render_csv() const {
  const auto cols = columns(*this);
  std::ostringstream os;
  os << "system";
  for (const auto& c : cols) os << "," << c;
  os << "\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.name;
    for (const auto& c : cols) os << "," << (r.mean.count(c) ? r.mean.at(c) : std::nan(""));
    os << "\n";
  }
  return os.str();
}

json EvalTable::to_json() const {
  json rs = json::array();
  for (const auto& r : rows) {
    json ex = json::array();
    for (const auto& s : r.examples) {
      ex.push_back({{"id", s.id},
                    {"si_snr", s.si_snr},
                    {"si_snr_noisy", s.si_snr_noisy},
                    {"metrics", s.metrics}});
    }
    rs.push_back({{"name", r.name}, {"mean", r.mean}, {"examples", ex}});
  }
  return {{"metrics", metrics}, {"rows", rs}};
}

// ---- RTF ---------------------------------------------------------------------

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rtf(double processing_seconds, double audio_seconds) {
  if (audio_seconds <= 0.0) throw std::invalid_argument("rtf: audio duration must be > 0");
  return processing_seconds / audio_seconds;
}

json hardware_descriptor() {
  json h;
  std::ifstream in("/proc/cpuinfo");
  std::string line, model_name;
  int processors = 0;
  while (std::getline(in, line)) {
    if (line.rfind("processor", 0) == 0) ++processors;
    if (model_name.empty() && line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model_name = line.substr(colon + 2);
    }
  }
  h["cpu"] = model_name.empty() ? "unknown" : model_name;
  h["logical_cpus"] = processors;
  h["hardware_concurrency"] = std::thread::hardware_concurrency();
  h["compiler"] = __VERSION__;
  return h;
}

json RtfReport::to_json() const {
  return {{"duration_s", duration}, {"times_s", times},         {"median_time_s", median_time},
          {"rtf", rtf},             {"per_frame_ms", per_frame_ms}, {"threads", threads},
          {"hardware", hardware}};
}

RtfReport benchmark_rtf(model::TwoStageModel& model, double duration, std::size_t repetitions,
                        std::uint64_t seed) {
  if (duration <= 0.0 || repetitions == 0) {
    throw std::invalid_argument("benchmark_rtf: need a positive duration and repetitions");
  }
  const int rate = model.config().sample_rate;
  const auto spk = datasim::make_speaker(0, seed);
  auto mix = datasim::synth_utterance(spk, duration, seed + 1, rate);
  const auto noise = datasim::synth_noise(datasim::NoiseKind::kPink, duration, seed + 2, rate);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.samples[i] += 0.1 * noise.samples[i];
  const auto enroll = datasim::synth_utterance(spk, 2.0, seed + 3, rate);
  const speaker::StubProvider provider(seed);
  const auto cond = model::condition(enroll, provider);

  RtfReport r;
  r.duration = static_cast<double>(mix.size()) / rate;
  r.hardware = hardware_descriptor();
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  r.threads = 1;
  model::enhance(mix, cond, model);  // warm-up (FFT plans)
  for (std::size_t k = 0; k < repetitions; ++k) {
    const auto t0 = Clock::now();
    model::enhance(mix, cond, model);
    r.times.push_back(seconds_since(t0));
  }
  omp_set_num_threads(saved);
  r.median_time = median(r.times);
  r.rtf = rtf(r.median_time, r.duration);
  r.per_frame_ms = 1000.0 * r.median_time / (r.duration / 0.01);
  return r;
}

// ---- ablation ----------------------------------------------------------------

std::vector<Variant> ablation_ladder(const TrainConfig& base) {
  std::vector<Variant> v;
  TrainConfig c = base;
  c.model.stage2_only = true;
  c.model.use_fbank = false;
  c.multi_scale = false;
  c.gan.pesq = c.gan.ovrl = c.gan.sig_bak = false;
  v.push_back({"Stage-2 only", c});
  c.model.use_fbank = true;
  v.push_back({"+Fbank", c});
  c.multi_scale = true;
  v.push_back({"+Multi-loss", c});
  c.gan.pesq = true;
  v.push_back({"+PESQ", c});
  c.gan.ovrl = true;
  v.push_back({"+OVRL", c});
  // SIG and BAK discriminators take the place of the PESQ/OVRL pair.
  c.gan.pesq = c.gan.ovrl = false;
  c.gan.sig_bak = true;
  v.push_back({"+SIG&BAK", c});
  return v;
}

std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b) {
  std::vector<std::string> out;
  for (const auto& op : json::diff(a.to_json(), b.to_json())) {
    out.push_back(op.at("path").get<std::string>());
  }
  return out;
}

AblationResult ablation_suite(const Variant& base, const std::vector<Variant>& variants,
                              const Dataset& train, const Dataset& dev,
                              const ProviderSet& providers,
                              const std::filesystem::path& out_dir) {
  std::vector<Variant> all{base};
  all.insert(all.end(), variants.begin(), variants.end());
  std::vector<EvalRow> rows{evaluate_noisy(dev.examples, providers)};
  AblationResult result;
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::unique_ptr<RunLedger> ledger;
    if (!out_dir.empty()) {
      const auto d = out_dir / ("variant" + std::to_string(i));
      std::filesystem::create_directories(d);
      std::filesystem::remove(d / "metrics.jsonl");
      std::filesystem::remove(d / "timings.jsonl");
      ledger = std::make_unique<RunLedger>(d / "metrics.jsonl", d / "timings.jsonl");
    } else {
      ledger = std::make_unique<RunLedger>();
    }
    ledger->append({{"type", "variant"}, {"name", all[i].name}, {"step", 0},
                    {"config", all[i].config.to_json()}});
    Trainer t(all[i].config, &train, &dev, ledger.get());
    t.run_schedule(out_dir.empty() ? std::filesystem::path{}
                                   : out_dir / ("variant" + std::to_string(i)));
    rows.push_back(evaluate_model(all[i].name, t.model(), dev, providers));
    result.ledgers.push_back(ledger->records());
  }
  result.table = make_table(providers, std::move(rows));
  return result;
}

// ---- plots -------------------------------------------------------------------

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '&') o += "&amp;";
    else if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else o += c;
  }
  return o;
}

}  // namespace

std::string loss_curve_svg(const std::vector<json>& ledger, const std::string& title) {
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::vector<std::string> order;
  for (const auto& r : ledger) {
    if (r.value("type", "") != "step") continue;
    const std::string ph = r.at("phase");
    if (!series.count(ph)) order.push_back(ph);
    series[ph].emplace_back(r.at("step").get<double>(), r.at("loss").at("total").get<double>());
  }
  const double W = 640, H = 360, L = 60, R = 20, T = 40, B = 40;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& [k, pts] : series) {
    for (const auto& [x, y] : pts) {
      if (first) {
        x0 = x1 = x;
        y0 = y1 = y;
        first = false;
      }
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << esc(title) << "</text>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L
     << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << L - 6 << "\" y=\"" << py(y1) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
     << y1 << "</text>\n<text x=\"" << L - 6 << "\" y=\"" << py(y0) + 4
     << "\" text-anchor=\"end\" font-size=\"11\">" << y0 << "</text>\n"
     << "<text x=\"" << W - R << "\" y=\"" << H - 12 << "\" text-anchor=\"end\" font-size=\"11\">step "
     << x1 << "</text>\n";
  for (std::size_t i = 0; i < order.size(); ++i) {
    const char* col = kPalette[i % 8];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.2\" points=\"";
    for (const auto& [x, y] : series[order[i]]) os << px(x) << "," << py(y) << " ";
    os << "\"/>\n<text x=\"" << L + 10 << "\" y=\"" << T + 14 * (i + 1) << "\" fill=\"" << col
       << "\" font-size=\"12\">" << esc(order[i]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string table_svg(const EvalTable& table, const std::string& title) {
  const auto cols = columns(table);
  const double W = 120.0 * static_cast<double>(cols.size()) + 80, H = 360, T = 40, B = 60;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << esc(title) << "</text>\n";
  const std::size_t n = std::max<std::size_t>(1, table.rows.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    double lo = 0.0, hi = 0.0;
    for (const auto& r : table.rows) {
      if (!r.mean.count(cols[c])) continue;
      lo = std::min(lo, r.mean.at(cols[c]));
      hi = std::max(hi, r.mean.at(cols[c]));
    }
    if (hi == lo) hi = lo + 1;
    const double gx = 40 + 120.0 * static_cast<double>(c), bw = 100.0 / static_cast<double>(n);
    auto py = [&](double v) { return T + (hi - v) / (hi - lo) * (H - T - B); };
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (!table.rows[r].mean.count(cols[c])) continue;
      const double v = table.rows[r].mean.at(cols[c]);
      const double y = std::min(py(v), py(0.0)), h = std::abs(py(v) - py(0.0));
      os << "<rect x=\"" << gx + bw * static_cast<double>(r) << "\" y=\"" << y << "\" width=\""
         << bw * 0.9 << "\" height=\"" << h << "\" fill=\"" << kPalette[r % 8] << "\"><title>"
         << esc(table.rows[r].name) << ": " << v << "</title></rect>\n";
    }
    os << "<text x=\"" << gx + 50 << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" "
       << "font-size=\"12\">" << esc(heading(cols[c])) << "</text>\n";
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    os << "<text x=\"" << 40 + 110.0 * static_cast<double>(r % 6) << "\" y=\""
       << H - 20 + 12 * static_cast<double>(r / 6) << "\" fill=\"" << kPalette[r % 8]
       << "\" font-size=\"11\">" << esc(table.rows[r].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace napse::pipeline
