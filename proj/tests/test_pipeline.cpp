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


#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "napse/pipeline.hpp"

namespace napse::pipeline {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kClip = 0.15;

// A handful of short simulated examples shared by the tests.
const std::vector<datasim::MixtureExample>& examples() {
  static const auto ex = [] {
    datasim::SyntheticPoolSpec ps;
    ps.num_speakers = 3;
    ps.utterances_per_speaker = 2;
    ps.utterance_seconds = 1.2;
    ps.noise_seconds = 1.5;
    const auto pool = datasim::synthetic_pool(ps, 3);
    datasim::SimSpec spec;
    spec.min_target_seconds = 1.0;
    std::vector<datasim::MixtureExample> out;
    for (auto& e : datasim::generate_examples(pool, spec, 5, 11)) {
      out.push_back(loudest_crop(e, static_cast<std::size_t>(kClip * 48000)));
    }
    return out;
  }();
  return ex;
}

const Dataset& train_set() {
  static const speaker::StubProvider provider(0);
  static const Dataset d = make_dataset({examples().begin(), examples().begin() + 3}, provider);
  return d;
}

const Dataset& dev_set() {
  static const speaker::StubProvider provider(0);
  static const Dataset d = make_dataset({examples().begin() + 3, examples().end()}, provider);
  return d;
}

TrainConfig tiny() {
  TrainConfig c;
  c.steps_stage1 = 2;
  c.steps_stage2 = 2;
  c.steps_joint = 2;
  c.eval_every = 0;
  c.segment_seconds = 0.0;
  c.seed = 4;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("napse_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = tiny();
  c.gan.sig_bak = true;
  c.joint_loss = JointLoss::kStage2Only;
  c.multi_scale = false;
  c.subband_loss = true;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(c.loss_config().scales.size(), 1u);
  EXPECT_EQ(tiny().loss_config().scales.size(), 3u);
  EXPECT_DOUBLE_EQ(TrainConfig{}.lr_for(Phase::kStage1), 1e-3);
  EXPECT_DOUBLE_EQ(TrainConfig{}.lr_for(Phase::kStage2Frozen1), 1e-3);
  EXPECT_DOUBLE_EQ(TrainConfig{}.lr_for(Phase::kJoint), 1e-4);
  json bad = c.to_json();
  bad["batch_size"] = 0;
  EXPECT_THROW(TrainConfig::from_json(bad), std::invalid_argument);
  bad = c.to_json();
  bad["joint_loss"] = "l3";
  EXPECT_THROW(TrainConfig::from_json(bad), std::invalid_argument);
}

TEST(PhaseOrder, TransitionMatrix) {
  const auto full = model::ModelConfig::toy();
  auto s2 = full;
  s2.stage2_only = true;
  const std::optional<Phase> none, p1 = Phase::kStage1, p2 = Phase::kStage2Frozen1,
                                    pj = Phase::kJoint;
  EXPECT_NO_THROW(check_transition(none, false, Phase::kStage1, full));
  EXPECT_NO_THROW(check_transition(p1, false, Phase::kStage1, full));  // resume
  EXPECT_NO_THROW(check_transition(p1, true, Phase::kStage2Frozen1, full));
  EXPECT_NO_THROW(check_transition(p2, true, Phase::kJoint, full));
  EXPECT_NO_THROW(check_transition(none, false, Phase::kStage2Frozen1, s2));

  EXPECT_THROW(check_transition(none, false, Phase::kStage2Frozen1, full), std::runtime_error);
  EXPECT_THROW(check_transition(p1, false, Phase::kStage2Frozen1, full), std::runtime_error);
  EXPECT_THROW(check_transition(none, false, Phase::kJoint, full), std::runtime_error);
  EXPECT_THROW(check_transition(p1, true, Phase::kJoint, full), std::runtime_error);
  EXPECT_THROW(check_transition(p2, true, Phase::kStage1, full), std::runtime_error);
  EXPECT_THROW(check_transition(pj, true, Phase::kStage2Frozen1, full), std::runtime_error);
  EXPECT_THROW(check_transition(p1, true, Phase::kStage1, full), std::runtime_error);
  EXPECT_THROW(check_transition(none, false, Phase::kStage1, s2), std::runtime_error);
  EXPECT_THROW(check_transition(p2, true, Phase::kJoint, s2), std::runtime_error);
}

TEST(RunLedger, AppendOnlyAndMonotone) {
  const auto dir = scratch("ledger");
  {
    RunLedger l(dir / "m.jsonl", dir / "t.jsonl");
    l.append({{"type", "a"}, {"step", 0}});
    l.append({{"type", "b"}, {"step", 0}});
    l.append({{"type", "c"}, {"step", 3}});
    l.timing("x", 3, 0.5);
    EXPECT_THROW(l.append({{"type", "d"}, {"step", 2}}), std::invalid_argument);
    EXPECT_THROW(l.append({{"type", "e"}}), std::invalid_argument);
    EXPECT_EQ(l.records().size(), 3u);
    EXPECT_EQ(l.last_step(), 3);
    const auto back = read_ledger(dir / "m.jsonl");
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back[2], l.records()[2]);
    std::ifstream in(dir / "m.jsonl");
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    EXPECT_EQ(text, l.dump());
  }
  EXPECT_EQ(read_ledger(dir / "t.jsonl").size(), 1u);
  fs::remove_all(dir);
}

TEST(Data, Cropping) {
  const auto& ex = examples()[0];
  const auto c = crop_example(ex, 100, 500);
  EXPECT_EQ(c.mixture.size(), 500u);
  EXPECT_EQ(c.label.samples[0], ex.label.samples[100]);
  EXPECT_EQ(c.mixture.samples[499], ex.mixture.samples[599]);
  EXPECT_EQ(c.enrollment.size(), ex.enrollment.size());
  EXPECT_THROW(crop_example(ex, ex.mixture.size() - 10, 20), std::invalid_argument);
  // The loudest crop is at least as loud as any hop-aligned window.
  const auto l = loudest_crop(ex, 1000);
  double el = 0.0;
  for (double v : l.label.samples) el += v * v;
  for (std::size_t off = 0; off + 1000 <= ex.label.size(); off += 250) {
    double e = 0.0;
    for (std::size_t i = off; i < off + 1000; ++i) e += ex.label.samples[i] * ex.label.samples[i];
    EXPECT_LE(e, el);
  }
  EXPECT_EQ(loudest_crop(ex, 0).mixture.size(), ex.mixture.size());
}

TEST(Trainer, OutOfOrderPhasesAreRejected) {
  Trainer t(tiny(), &train_set(), &dev_set());
  EXPECT_THROW(t.begin_phase(Phase::kStage2Frozen1), std::runtime_error);
  EXPECT_THROW(t.begin_phase(Phase::kJoint), std::runtime_error);
  EXPECT_THROW(t.step(), std::logic_error);
  t.run_phase(Phase::kStage1);
  EXPECT_THROW(t.begin_phase(Phase::kJoint), std::runtime_error);
  EXPECT_THROW(t.begin_phase(Phase::kStage1), std::runtime_error);
  EXPECT_NO_THROW(t.begin_phase(Phase::kStage2Frozen1));
}

TEST(Trainer, FreezeContract) {
  TrainConfig c = tiny();
  c.steps_stage2 = 6;
  Trainer t(c, &train_set(), &dev_set());
  t.run_phase(Phase::kStage1);
  const auto& store = t.model().parameters();
  const auto mag = store.snapshot(model::kMagNet);
  const auto fusion = store.snapshot(model::kFusion);
  const auto com = store.snapshot(model::kComNet);
  t.begin_phase(Phase::kStage2Frozen1);
  for (int i = 0; i < 6; ++i) {
    const auto r = t.step();
    EXPECT_EQ(r.mag_grad_norm_sq, 0.0);
    EXPECT_GT(r.loss.total, -1e9);
  }
  EXPECT_EQ(store.snapshot(model::kMagNet), mag);
  EXPECT_EQ(store.snapshot(model::kFusion), fusion);
  EXPECT_NE(store.snapshot(model::kComNet), com);
}

TEST(Trainer, StageOneLeavesComNetAlone) {
  Trainer t(tiny(), &train_set(), &dev_set());
  const auto com = t.model().parameters().snapshot(model::kComNet);
  const auto mag = t.model().parameters().snapshot(model::kMagNet);
  t.run_phase(Phase::kStage1);
  EXPECT_EQ(t.model().parameters().snapshot(model::kComNet), com);
  EXPECT_NE(t.model().parameters().snapshot(model::kMagNet), mag);
}

TEST(Trainer, JointUpdatesEveryGroup) {
  Trainer t(tiny(), &train_set(), &dev_set());
  t.run_phase(Phase::kStage1);
  t.run_phase(Phase::kStage2Frozen1);
  t.begin_phase(Phase::kJoint);
  std::map<std::string, std::vector<double>> before;
  for (const auto* g : {model::kMagNet, model::kComNet, model::kFusion}) {
    before[g] = t.model().parameters().snapshot(g);
  }
  const auto r = t.step();
  EXPECT_GT(std::abs(r.loss.total), 0.0);
  EXPECT_GT(r.mag_grad_norm_sq, 0.0);
  EXPECT_DOUBLE_EQ(r.lr, 1e-4);
  for (const auto& [g, snap] : before) {
    const auto now = t.model().parameters().snapshot(g);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < snap.size(); ++i) changed += now[i] != snap[i];
    EXPECT_GT(changed, 0u) << g;
  }
}

TEST(Trainer, JointLossIsSumOfStageLosses) {
  for (JointLoss mode : {JointLoss::kSum, JointLoss::kStage2Only}) {
    TrainConfig c = tiny();
    c.joint_loss = mode;
    Trainer t(c, &train_set(), &dev_set());
    t.run_phase(Phase::kStage1);
    const double l1 = t.batch_loss({0});
    t.run_phase(Phase::kStage2Frozen1);
    const double l2 = t.batch_loss({0});
    t.begin_phase(Phase::kJoint);
    const double lj = t.batch_loss({0});
    EXPECT_NEAR(lj, mode == JointLoss::kSum ? l1 + l2 : l2, 1e-9) << to_string(mode);
  }
}

TEST(Trainer, SubbandLossIsMeanOverBands) {
  TrainConfig c = tiny();
  c.subband_loss = true;
  Trainer t(c, &train_set(), &dev_set());
  t.begin_phase(Phase::kStage1);
  const auto& ex = train_set().examples[0];
  const auto& cond = train_set().conditioning[0];
  const auto& m = t.model();
  const auto out = m.forward(ex.mixture.samples, m.fuse(cond.embedding, cond.stats), {});
  const Tensor est = dsp::pqmf_analysis(out.stage1_wave.value().span(), m.filterbank());
  const Tensor ref = dsp::pqmf_analysis(ex.label.samples, m.filterbank());
  const std::size_t len = ref.dim(1);
  double want = 0.0;
  for (std::size_t b = 0; b < ref.dim(0); ++b) {
    std::vector<double> e(est.vec().begin() + b * len, est.vec().begin() + (b + 1) * len);
    std::vector<double> r(ref.vec().begin() + b * len, ref.vec().begin() + (b + 1) * len);
    want += losses::stage1_total(ag::constant(Tensor::from(e)), Tensor::from(r), {},
                                 c.loss_config()).breakdown.total;
  }
  want /= static_cast<double>(ref.dim(0));
  EXPECT_NEAR(t.batch_loss({0}), want, 1e-9);
  Trainer full(tiny(), &train_set(), &dev_set());
  full.begin_phase(Phase::kStage1);
  EXPECT_GT(std::abs(full.batch_loss({0}) - want), 1e-3);
  // Training through the subband path runs.
  EXPECT_TRUE(std::isfinite(t.step().loss.total));
}

TEST(Trainer, GanOffMeansPureSupervision) {
  Trainer t(tiny(), &train_set(), &dev_set());
  t.run_phase(Phase::kStage1);
  t.begin_phase(Phase::kStage2Frozen1);
  const auto r = t.step();
  EXPECT_EQ(r.loss.gan, 0.0);
  EXPECT_TRUE(r.d_loss.empty());
  EXPECT_TRUE(r.g_terms.empty());
}

TEST(Trainer, GanStepUpdatesDiscriminatorsOnly) {
  TrainConfig c = tiny();
  c.gan.pesq = true;
  c.gan.ovrl = true;
  Trainer t(c, &train_set(), &dev_set());
  t.run_phase(Phase::kStage1);
  t.begin_phase(Phase::kStage2Frozen1);
  auto& pesq = *t.gan().find(metricgan::Metric::kPesq);
  const auto d0 = pesq.disc->parameters().snapshot();
  const auto r = t.step();
  EXPECT_EQ(r.d_loss.size(), 2u);
  EXPECT_EQ(r.g_terms.size(), 2u);
  EXPECT_GT(r.loss.gan, 0.0);
  EXPECT_NE(pesq.disc->parameters().snapshot(), d0);
  // Batch of one: the estimate, the (ref, ref) anchor, then replay.
  EXPECT_EQ(pesq.replay.size(), 2u);
  EXPECT_EQ(t.gan().find(metricgan::Metric::kOvrl)->replay.size(), 1u);
}

TEST(Trainer, GeneratorSubStepLeavesDiscriminatorsUntouched) {
  TrainConfig c = tiny();
  c.gan.sig_bak = true;
  Trainer t(c, &train_set(), &dev_set());
  auto& ens = t.gan();
  const auto& ex = train_set().examples[0];
  std::mt19937_64 rng(1);
  ens.discriminator_step({ex.mixture.samples}, {ex.label.samples}, 48000, rng);
  std::vector<std::vector<double>> snaps;
  for (auto& m : ens.members()) snaps.push_back(m.disc->parameters().snapshot());
  const ag::Var fused = t.model().fuse(train_set().conditioning[0].embedding,
                                       train_set().conditioning[0].stats);
  const auto out = t.model().forward(ex.mixture.samples, fused);
  t.model().parameters().zero_grad();
  ag::backward(ens.generator_loss(out.stage2_wave, ex.label.samples));
  EXPECT_GT(t.model().parameters().grad_norm_sq(model::kComNet), 0.0);
  t.optimizer().step(t.model().parameters());
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    EXPECT_EQ(ens.members()[i].disc->parameters().snapshot(), snaps[i]);
  }
}

TEST(Trainer, FixedSeedGivesIdenticalLedgers) {
  TrainConfig c = tiny();
  c.gan.pesq = true;
  c.eval_every = 1;
  c.segment_seconds = 0.1;
  std::string dumps[2];
  for (auto& d : dumps) {
    RunLedger l;
    Trainer t(c, &train_set(), &dev_set(), &l);
    t.run_schedule();
    d = l.dump();
  }
  EXPECT_EQ(dumps[0], dumps[1]);
  EXPECT_NE(dumps[0].find("\"type\":\"eval\""), std::string::npos);
  EXPECT_NE(dumps[0].find("\"type\":\"phase_end\""), std::string::npos);
  c.seed = 5;
  RunLedger other;
  Trainer t(c, &train_set(), &dev_set(), &other);
  t.run_schedule();
  EXPECT_NE(other.dump(), dumps[0]);
}

TEST(Trainer, ResumeReproducesTraining) {
  const auto dir = scratch("resume");
  TrainConfig c = tiny();
  c.gan.pesq = true;
  c.steps_stage2 = 4;
  c.segment_seconds = 0.1;
  c.eval_every = 1;
  RunLedger full;
  Trainer a(c, &train_set(), &dev_set(), &full);
  a.run_phase(Phase::kStage1);
  a.begin_phase(Phase::kStage2Frozen1);
  a.step();
  a.step();
  a.save(dir / "mid.ckpt");
  const std::size_t cut = full.records().size();
  const double before = a.batch_loss({0, 1, 2});
  a.step();
  a.step();

  RunLedger rest;
  auto b = Trainer::resume(dir / "mid.ckpt", c, &train_set(), &dev_set(), &rest);
  EXPECT_EQ(b->state().phase, Phase::kStage2Frozen1);
  EXPECT_EQ(b->state().step, 4);
  EXPECT_EQ(b->state().phase_step, 2);
  b->begin_phase(Phase::kStage2Frozen1);
  EXPECT_NEAR(b->batch_loss({0, 1, 2}), before, 1e-6);
  b->step();
  b->step();
  ASSERT_EQ(rest.records().size(), full.records().size() - cut);
  for (std::size_t i = 0; i < rest.records().size(); ++i) {
    EXPECT_EQ(rest.records()[i], full.records()[cut + i]) << i;
  }
  EXPECT_EQ(b->model().parameters().snapshot(), a.model().parameters().snapshot());
  EXPECT_DOUBLE_EQ(b->batch_loss({0, 1, 2}), a.batch_loss({0, 1, 2}));
  fs::remove_all(dir);
}

TEST(Trainer, ScheduleWritesPhaseCheckpoints) {
  const auto dir = scratch("schedule");
  Trainer t(tiny(), &train_set(), &dev_set());
  t.run_schedule(dir);
  for (const char* tag : {"stage1", "stage2", "joint"}) {
    EXPECT_TRUE(fs::exists(dir / (std::string(tag) + ".ckpt"))) << tag;
  }
  EXPECT_EQ(checkpoint::load(dir / "joint.ckpt").state.step, 6);
  // Resuming a finished stage1 checkpoint continues with stage 2.
  auto r = Trainer::resume(dir / "stage1.ckpt", tiny(), &train_set(), &dev_set());
  r->run_schedule();
  EXPECT_EQ(r->state().phase, Phase::kJoint);
  EXPECT_EQ(r->model().parameters().snapshot(), t.model().parameters().snapshot());
  fs::remove_all(dir);
}

TEST(Trainer, StageTwoOnlyModel) {
  TrainConfig c = tiny();
  c.model.stage2_only = true;
  Trainer t(c, &train_set(), &dev_set());
  EXPECT_THROW(t.begin_phase(Phase::kStage1), std::runtime_error);
  const auto fusion = t.model().parameters().snapshot(model::kFusion);
  t.run_schedule();
  EXPECT_EQ(t.state().step, 2);
  EXPECT_NE(t.model().parameters().snapshot(model::kFusion), fusion);
}

TEST(Evaluate, IdentityHasZeroGain) {
  const auto& ex = examples();
  const auto row = evaluate("Identity", [&](std::size_t i) { return ex[i].mixture; }, ex,
                            default_providers());
  ASSERT_EQ(row.examples.size(), ex.size());
  for (const auto& s : row.examples) EXPECT_EQ(s.si_snr - s.si_snr_noisy, 0.0);
  EXPECT_EQ(row.mean.at("si_snr_i"), 0.0);
}

TEST(Evaluate, AggregateIsMeanOfExamples) {
  const auto& ex = examples();
  const auto row = evaluate("Half", [&](std::size_t i) {
    auto w = ex[i].mixture;
    for (std::size_t k = 0; k < w.size(); ++k) w.samples[k] = 0.5 * (w.samples[k] + ex[i].label.samples[k]);
    return w;
  }, ex, default_providers());
  double si = 0.0, pesq = 0.0;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    std::vector<double> w(ex[i].mixture.samples);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = 0.5 * (w[k] + ex[i].label.samples[k]);
    si += losses::si_snr_db(w, ex[i].label.samples);
    const dsp::Waveform e(w), r(ex[i].label.samples);
    pesq += metricgan::SurrogateProvider(metricgan::Metric::kPesq).score(e, &r);
  }
  EXPECT_NEAR(row.mean.at("si_snr"), si / ex.size(), 1e-9);
  EXPECT_NEAR(row.mean.at("pesq"), pesq / ex.size(), 1e-9);
  EXPECT_GT(row.mean.at("si_snr_i"), 0.0);
  EXPECT_THROW(evaluate("x", [&](std::size_t i) { return ex[i].mixture; }, {}, {}),
               std::invalid_argument);
}

TEST(Evaluate, TableLayout) {
  const auto& ex = examples();
  const auto providers = default_providers();
  auto model_row = evaluate("Model", [&](std::size_t i) { return ex[i].label; }, ex, providers);
  const auto t = make_table(providers, {model_row, evaluate_noisy(ex, providers)});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].name, "Noisy");
  EXPECT_EQ(t.metrics, (std::vector<std::string>{"pesq", "sig", "bak", "ovrl"}));
  const auto text = t.render_text();
  EXPECT_LT(text.find("Noisy"), text.find("Model"));
  EXPECT_NE(text.find("SI-SNRi"), std::string::npos);
  EXPECT_NE(text.find("OVRL"), std::string::npos);
  const auto csv = t.render_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "system,si_snr,si_snr_i,pesq,sig,bak,ovrl");
  EXPECT_EQ(t.to_json()["rows"][1]["examples"].size(), ex.size());
  // Clean output scores the top of the PESQ-like scale.
  EXPECT_DOUBLE_EQ(t.rows[1].mean.at("pesq"), 4.5);
}

TEST(Evaluate, ModelRowUsesStageTwo) {
  model::TwoStageModel m(model::ModelConfig::toy(), 1);
  const auto row = evaluate_model("toy", m, dev_set(), default_providers());
  EXPECT_EQ(row.examples.size(), dev_set().size());
  for (const auto& s : row.examples) EXPECT_TRUE(std::isfinite(s.si_snr));
}

TEST(Rtf, DefinitionAndMedian) {
  EXPECT_DOUBLE_EQ(rtf(5.0, 10.0), 0.5);
  EXPECT_THROW(rtf(1.0, 0.0), std::invalid_argument);
  EXPECT_DOUBLE_EQ(median({3.0}), 3.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 3.0, 2.0}), 2.5);
  std::vector<double> eleven;
  for (int i = 11; i >= 1; --i) eleven.push_back(i);
  EXPECT_DOUBLE_EQ(median(eleven), 6.0);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Rtf, BenchmarkReport) {
  model::TwoStageModel m(model::ModelConfig::toy(), 1);
  for (std::size_t reps : {1u, 3u}) {
    const auto r = benchmark_rtf(m, 0.2, reps);
    EXPECT_EQ(r.times.size(), reps);
    EXPECT_EQ(r.threads, 1);
    EXPECT_DOUBLE_EQ(r.median_time, median(r.times));
    EXPECT_DOUBLE_EQ(r.rtf, r.median_time / r.duration);
    EXPECT_NEAR(r.per_frame_ms, r.rtf * 10.0, 1e-9);
    EXPECT_TRUE(r.hardware.contains("cpu"));
    EXPECT_TRUE(r.to_json().contains("rtf"));
  }
  EXPECT_THROW(benchmark_rtf(m, 0.0, 1), std::invalid_argument);
}

TEST(Ablation, LadderTogglesOneSwitchPerRung) {
  const auto v = ablation_ladder(tiny());
  ASSERT_EQ(v.size(), 6u);
  const std::vector<std::string> names{"Stage-2 only", "+Fbank", "+Multi-loss",
                                       "+PESQ",        "+OVRL",  "+SIG&BAK"};
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i].name, names[i]);
  EXPECT_TRUE(v[0].config.model.stage2_only);
  EXPECT_EQ(config_diff(v[0].config, v[1].config), std::vector<std::string>{"/model/use_fbank"});
  EXPECT_EQ(config_diff(v[1].config, v[2].config), std::vector<std::string>{"/multi_scale"});
  EXPECT_EQ(config_diff(v[2].config, v[3].config), std::vector<std::string>{"/gan/pesq"});
  EXPECT_EQ(config_diff(v[3].config, v[4].config), std::vector<std::string>{"/gan/ovrl"});
  const auto last = config_diff(v[4].config, v[5].config);
  EXPECT_EQ(last.size(), 3u);  // pesq, ovrl off; sig_bak on
  EXPECT_TRUE(config_diff(v[2].config, v[2].config).empty());
}

TEST(Ablation, EmptyVariantListGivesBaseRow) {
  auto base = ablation_ladder(tiny())[0];
  base.config.steps_stage2 = 1;
  const auto r = ablation_suite(base, {}, train_set(), dev_set(), default_providers());
  ASSERT_EQ(r.table.rows.size(), 2u);
  EXPECT_EQ(r.table.rows[0].name, "Noisy");
  EXPECT_EQ(r.table.rows[1].name, "Stage-2 only");
  ASSERT_EQ(r.ledgers.size(), 1u);
  EXPECT_EQ(r.ledgers[0][0]["name"], "Stage-2 only");
}

TEST(Ablation, FixedSeedsAcrossVariants) {
  const auto dir = scratch("ablation");
  auto v = ablation_ladder(tiny());
  for (auto& x : v) x.config.steps_stage2 = 1;
  const auto r = ablation_suite(v[0], {v[1], v[3]}, train_set(), dev_set(),
                                default_providers(), dir);
  ASSERT_EQ(r.table.rows.size(), 4u);
  EXPECT_EQ(r.table.rows[3].name, "+PESQ");
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(fs::exists(dir / ("variant" + std::to_string(i)) / "metrics.jsonl"));
    EXPECT_EQ(r.ledgers[i][0]["config"]["seed"], 4);
  }
  fs::remove_all(dir);
}

TEST(Plots, SvgOutputs) {
  RunLedger l;
  Trainer t(tiny(), &train_set(), &dev_set(), &l);
  t.run_schedule();
  const auto svg = loss_curve_svg(l.records());
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 3, true);
  std::size_t lines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 3u);  // one per phase
  const auto providers = default_providers();
  const auto table = make_table(providers, {evaluate_noisy(examples(), providers)});
  const auto bars = table_svg(table);
  EXPECT_NE(bars.find("<rect x="), std::string::npos);
  EXPECT_NE(bars.find("</svg>"), std::string::npos);
}

}  // namespace
}  // namespace napse::pipeline
