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


#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "napse/datasim.hpp"
#include "napse/losses.hpp"
#include "napse/metricgan.hpp"
#include "test_util.hpp"

namespace napse::metricgan {
namespace {

using napse::testing::grad_check;
using napse::testing::random_vector;

constexpr int kRate = 48000;

struct CaptureWarnings {
  std::vector<std::string> seen;
  WarningHandler old;
  CaptureWarnings() {
    old = set_warning_handler([this](const std::string& m) { seen.push_back(m); });
  }
  ~CaptureWarnings() { set_warning_handler(old); }
};

std::vector<double> speech(double seconds, std::uint64_t seed = 5) {
  return datasim::synth_utterance(datasim::make_speaker(0, 1), seconds, seed).samples;
}

std::vector<double> add_noise(const std::vector<double>& s, double snr_db, std::uint64_t seed) {
  const auto n = datasim::synth_noise(datasim::NoiseKind::kWhite,
                                      static_cast<double>(s.size()) / kRate, seed).samples;
  double es = 0, en = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    es += s[i] * s[i];
    en += n[i] * n[i];
  }
  const double g = std::sqrt(es / en / std::pow(10.0, snr_db / 10.0));
  std::vector<double> x(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) x[i] = s[i] + g * n[i];
  return x;
}

void zero_params(Discriminator& d) {
  for (auto& p : d.parameters().parameters()) p.var.mutable_value().fill(0.0);
}

TEST(Normalize, KnownPoints) {
  CaptureWarnings w;
  EXPECT_DOUBLE_EQ(normalize_pesq(4.5), 1.0);
  EXPECT_DOUBLE_EQ(normalize_pesq(-0.5), 0.0);
  EXPECT_DOUBLE_EQ(normalize_pesq(2.0), 0.5);
  EXPECT_DOUBLE_EQ(normalize_dnsmos(5.0), 1.0);
  EXPECT_DOUBLE_EQ(normalize_dnsmos(1.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_dnsmos(3.0), 0.5);
  EXPECT_TRUE(w.seen.empty());
}

TEST(Normalize, OutOfRangeClampsAndWarns) {
  CaptureWarnings w;
  EXPECT_DOUBLE_EQ(normalize_pesq(5.2), 1.0);
  EXPECT_DOUBLE_EQ(normalize_pesq(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(normalize_dnsmos(0.3), 0.0);
  EXPECT_DOUBLE_EQ(normalize_dnsmos(7.0), 1.0);
  EXPECT_EQ(w.seen.size(), 4u);
  EXPECT_THROW(normalize_pesq(std::nan("")), std::invalid_argument);
}

TEST(Metric, Names) {
  for (Metric m : {Metric::kPesq, Metric::kOvrl, Metric::kSig, Metric::kBak}) {
    EXPECT_EQ(metric_from_string(to_string(m)), m);
    EXPECT_DOUBLE_EQ(normalize(m, raw_range(m).second), 1.0);
    EXPECT_DOUBLE_EQ(normalize(m, raw_range(m).first), 0.0);
  }
  EXPECT_TRUE(is_intrusive(Metric::kPesq));
  EXPECT_FALSE(is_intrusive(Metric::kOvrl));
  EXPECT_THROW(metric_from_string("stoi"), std::invalid_argument);
}

TEST(SegSnr, Oracle) {
  const auto s = speech(0.5);
  EXPECT_DOUBLE_EQ(segmental_snr_db(s, s), 30.0);
  std::vector<double> half(s), zero(s.size(), 0.0);
  for (auto& v : half) v *= 0.5;
  // Error is half the reference in every frame: 20 log10(2), except
  // frames where the reference is silent (clamped to -5).
  const double db = segmental_snr_db(half, s);
  EXPECT_LE(db, 20.0 * std::log10(2.0) + 1e-9);
  EXPECT_GT(db, 5.0);
  const std::vector<double> tone = [] {
    std::vector<double> t(4800);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::sin(0.01 * i) + 1.5;
    return t;
  }();
  std::vector<double> tone_half(tone);
  for (auto& v : tone_half) v *= 0.5;
  EXPECT_NEAR(segmental_snr_db(tone_half, tone), 20.0 * std::log10(2.0), 1e-9);
  EXPECT_NEAR(segmental_snr_db(std::vector<double>(tone.size(), 0.0), tone), 0.0, 1e-9);
  EXPECT_THROW(segmental_snr_db(half, std::vector<double>(3)), std::invalid_argument);
}

TEST(Surrogate, PesqExtremes) {
  const auto s = speech(1.0);
  SurrogateProvider p(Metric::kPesq);
  const dsp::Waveform ref(s), est(s);
  EXPECT_DOUBLE_EQ(p.score(est, &ref), kPesqMax);
  EXPECT_DOUBLE_EQ(p.normalized(est, &ref), 1.0);
  const dsp::Waveform noise(
      datasim::synth_noise(datasim::NoiseKind::kWhite, 1.0, 3).samples);
  EXPECT_LT(p.score(noise, &ref), kPesqMin + 0.3);
  EXPECT_THROW(p.score(est, nullptr), std::invalid_argument);
  const dsp::Waveform shorter(std::vector<double>(10, 0.0));
  EXPECT_THROW(p.score(shorter, &ref), std::invalid_argument);
}

TEST(Surrogate, MonotoneInNoise) {
  const auto s = speech(1.0);
  const dsp::Waveform ref(s);
  std::map<Metric, double> prev;
  for (Metric m : {Metric::kPesq, Metric::kOvrl, Metric::kSig, Metric::kBak}) {
    prev[m] = SurrogateProvider(m).score(ref, &ref);
    EXPECT_GE(prev[m], 4.5) << to_string(m);
  }
  for (double snr : {20.0, 10.0, 5.0, 0.0, -5.0}) {
    const dsp::Waveform x(add_noise(s, snr, 11));
    for (auto& [m, last] : prev) {
      const double v = SurrogateProvider(m).score(x, &ref);
      EXPECT_LT(v, last) << to_string(m) << " at " << snr << " dB";
      last = v;
    }
  }
  // Pure noise lands near the bottom of every scale.
  const auto noise = datasim::synth_noise(datasim::NoiseKind::kWhite, 1.0, 4).samples;
  const auto d = non_intrusive_surrogate(noise, kRate);
  EXPECT_LT(d.sig, 1.5);
  EXPECT_LT(d.bak, 1.5);
  EXPECT_LT(d.ovrl, 1.1);
}

TEST(Surrogate, OverallCombinesSigAndBak) {
  const auto d = non_intrusive_surrogate(add_noise(speech(1.0), 5.0, 2), kRate);
  EXPECT_NEAR(d.ovrl, 1.0 + (d.sig - 1.0) * (d.bak - 1.0) / 4.0, 1e-12);
  EXPECT_THROW(non_intrusive_surrogate({}, kRate), std::invalid_argument);
}

class External : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("napse_ext_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::string script(const std::string& body) {
    const auto p = dir_ / ("m" + std::to_string(n_++) + ".sh");
    std::ofstream(p) << "#!/bin/sh\n" << body << "\n";
    std::filesystem::permissions(p, std::filesystem::perms::owner_all);
    return p.string();
  }
  std::filesystem::path dir_;
  int n_ = 0;
};

TEST_F(External, ReadsScoreAndPassesFiles) {
  // Prints a header line, then 2 + (1 if a reference file was given).
  const auto cmd = script(
      "test -f \"$1\" || exit 3\n"
      "echo 'model v1'\n"
      "if [ \"$2\" = none ]; then echo 2.0; else test -f \"$2\" && echo 3.0; fi");
  const dsp::Waveform w(speech(0.2));
  EXPECT_DOUBLE_EQ(ExternalProvider(Metric::kPesq, cmd).score(w, &w), 3.0);
  EXPECT_DOUBLE_EQ(ExternalProvider(Metric::kSig, cmd).score(w, &w), 2.0);
  EXPECT_DOUBLE_EQ(ExternalProvider(Metric::kSig, cmd).normalized(w, nullptr), 0.25);
}

TEST_F(External, ClampsAndFails) {
  CaptureWarnings warn;
  const dsp::Waveform w(speech(0.2));
  EXPECT_DOUBLE_EQ(ExternalProvider(Metric::kOvrl, script("echo 9")).score(w, nullptr), 5.0);
  EXPECT_EQ(warn.seen.size(), 1u);
  EXPECT_THROW(ExternalProvider(Metric::kOvrl, script("exit 2")).score(w, nullptr),
               std::runtime_error);
  EXPECT_THROW(ExternalProvider(Metric::kOvrl, script("echo nope")).score(w, nullptr),
               std::runtime_error);
  EXPECT_THROW(ExternalProvider(Metric::kOvrl, ""), std::invalid_argument);
}

TEST(Factory, Providers) {
  auto p = make_metric_provider({{"metric", "bak"}});
  EXPECT_EQ(p->name(), "surrogate-bak");
  p = make_metric_provider({{"metric", "pesq"}, {"kind", "external"}, {"command", "true"}});
  EXPECT_EQ(p->name(), "external-pesq");
  EXPECT_THROW(make_metric_provider({{"metric", "pesq"}, {"kind", "oracle"}}),
               std::invalid_argument);
}

TEST(Discriminator, FeatureShapesAndRange) {
  const auto s = speech(0.25);
  const auto x = add_noise(s, 0.0, 3);
  Discriminator intr("d.pesq", true, 1), blind("d.ovrl", false, 2);
  const Tensor fi = intr.features(x, s), fb = blind.features(x, {});
  const std::size_t frames = discriminator_stft().num_frames(s.size());
  EXPECT_EQ(fi.shape(), (Shape{2, frames, 257}));
  EXPECT_EQ(fb.shape(), (Shape{1, frames, 257}));
  // Second plane is the reference.
  const Tensor fr = blind.features(s, {});
  for (std::size_t i = 0; i < fr.numel(); ++i) ASSERT_EQ(fi[fb.numel() + i], fr[i]);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Discriminator d("d", false, seed);
    const double y = d.predict(napse::testing::random_tensor({1, 9, 257}, seed, 5.0));
    EXPECT_GE(y, 0.0);
    EXPECT_LE(y, 1.0);
  }
  EXPECT_THROW(intr.predict(fb), std::invalid_argument);
  EXPECT_THROW(intr.features(x, std::vector<double>(5)), std::invalid_argument);
  // Tensor and Var feature paths agree.
  const ag::Var fv = intr.features(ag::constant(Tensor::from(x)), s);
  for (std::size_t i = 0; i < fi.numel(); ++i) ASSERT_NEAR(fv.value()[i], fi[i], 1e-12);
}

TEST(Losses, ZeroDiscriminatorExamples) {
  Discriminator d("d", false, 1);
  zero_params(d);
  const Tensor f({1, 5, 257}, 0.3);
  EXPECT_DOUBLE_EQ(d.predict(f), 0.5);
  const std::vector<DSample> batch{{f, 0.2}, {f, 0.9}};
  // (0.5-0.2)^2 = 0.09, (0.5-0.9)^2 = 0.16
  EXPECT_NEAR(discriminator_loss(d, batch).item(), 0.125, 1e-15);
  const ag::Var est = ag::leaf(Tensor::from(speech(0.1)));
  EXPECT_NEAR(generator_loss(d, est, {}).item(), 0.25, 1e-15);
  EXPECT_THROW(discriminator_loss(d, {}), std::invalid_argument);
}

TEST(Losses, GradientIsolation) {
  const auto s = speech(0.25);
  Discriminator d("d", true, 4);
  const ag::Var est = ag::leaf(Tensor::from(add_noise(s, 5.0, 1)));
  d.parameters().zero_grad();
  ag::backward(generator_loss(d, est, s));
  EXPECT_EQ(d.parameters().grad_norm_sq(), 0.0);
  double g = 0;
  for (double v : est.grad().vec()) g += v * v;
  EXPECT_GT(g, 0.0);
  for (const auto& p : d.parameters().parameters()) EXPECT_TRUE(p.var.requires_grad());

  const ag::Var est2 = ag::leaf(Tensor::from(add_noise(s, 5.0, 1)));
  const std::vector<DSample> batch{{d.features(est2.value().span(), s), 0.4}};
  ag::backward(discriminator_loss(d, batch));
  EXPECT_GT(d.parameters().grad_norm_sq(), 0.0);
  for (double v : est2.grad().vec()) EXPECT_EQ(v, 0.0);
}

TEST(Losses, GeneratorGradientCheck) {
  const auto s = speech(0.1);
  for (bool intrusive : {true, false}) {
    Discriminator d("d", intrusive, 9);
    ag::Var est = ag::leaf(Tensor::from(add_noise(s, 0.0, 2)));
    const auto r = grad_check(est, [&] { return generator_loss(d, est, s); }, 12, 3, 1e-6, 1e-9);
    EXPECT_LT(r.max_rel_error, 1e-4) << "intrusive=" << intrusive;
  }
}

TEST(Losses, DiscriminatorGradientCheck) {
  Discriminator d("d", true, 2);
  // Zero biases put silent regions exactly on the leaky-ReLU kink.
  for (auto& p : d.parameters().parameters()) {
    if (p.name.ends_with(".bias")) {
      p.var.mutable_value() = napse::testing::random_tensor(p.var.shape(), 17, 0.1);
    }
  }
  const auto s = speech(0.1);
  const std::vector<DSample> batch{{d.features(add_noise(s, 0.0, 1), s), 0.3},
                                   {d.features(s, s), 1.0}};
  for (auto& p : d.parameters().parameters()) {
    const auto r = grad_check(p.var, [&] { return discriminator_loss(d, batch); }, 6, 1, 1e-6,
                              1e-9);
    EXPECT_LT(r.max_rel_error, 1e-4) << p.name;
  }
}

TEST(Replay, Capacity) {
  ReplayBuffer buf(200);
  for (int i = 0; i < 250; ++i) buf.push({Tensor({1}, i), static_cast<double>(i)});
  EXPECT_EQ(buf.size(), 200u);
  std::mt19937_64 rng(1);
  for (const auto& s : buf.sample(500, rng)) {
    EXPECT_GE(s.target, 50.0);  // the oldest 50 were evicted
    EXPECT_EQ(s.features[0], s.target);
  }
  ReplayBuffer off(0);
  off.push({Tensor({1}), 1.0});
  EXPECT_EQ(off.size(), 0u);
  EXPECT_TRUE(off.sample(3, rng).empty());
}

TEST(Ensemble, Members) {
  GanConfig c;
  EXPECT_FALSE(c.any());
  EXPECT_EQ(GanEnsemble(c, 1).members().size(), 0u);
  c.pesq = c.ovrl = true;
  GanEnsemble a(c, 1);
  ASSERT_EQ(a.members().size(), 2u);
  EXPECT_TRUE(a.find(Metric::kPesq)->disc->intrusive());
  EXPECT_FALSE(a.find(Metric::kOvrl)->disc->intrusive());
  EXPECT_EQ(a.find(Metric::kSig), nullptr);
  c.ovrl = false;
  c.sig_bak = true;
  GanEnsemble b(c, 1);
  EXPECT_EQ(b.members().size(), 3u);
  EXPECT_NE(b.find(Metric::kSig), nullptr);
  EXPECT_NE(b.find(Metric::kBak), nullptr);
  const auto j = GanConfig::from_json(c.to_json());
  EXPECT_EQ(j.to_json(), c.to_json());
}

TEST(Ensemble, BatchAndReplay) {
  GanConfig c;
  c.pesq = c.ovrl = true;
  GanEnsemble g(c, 3);
  const auto s = speech(0.25);
  const std::vector<std::vector<double>> ref{s, s}, est{add_noise(s, 0, 1), add_noise(s, 5, 2)};
  std::mt19937_64 rng(1);
  auto& pesq = *g.find(Metric::kPesq);
  auto first = g.build_batch(pesq, est, ref, kRate, rng);
  ASSERT_EQ(first.size(), 4u);  // two estimates, two anchors, empty replay
  EXPECT_DOUBLE_EQ(first[1].target, 1.0);
  const dsp::Waveform e0(est[0]), r0(s);
  EXPECT_DOUBLE_EQ(first[0].target, SurrogateProvider(Metric::kPesq).normalized(e0, &r0));
  EXPECT_EQ(pesq.replay.size(), 4u);
  const auto second = g.build_batch(pesq, est, ref, kRate, rng);
  EXPECT_EQ(second.size(), 8u);  // plus as many replayed samples
  EXPECT_EQ(pesq.replay.size(), 8u);
  auto& ovrl = *g.find(Metric::kOvrl);
  EXPECT_EQ(g.build_batch(ovrl, est, ref, kRate, rng).size(), 2u);  // no anchor

  c.replay = false;
  GanEnsemble plain(c, 3);
  auto& p2 = *plain.find(Metric::kPesq);
  plain.build_batch(p2, est, ref, kRate, rng);
  EXPECT_EQ(plain.build_batch(p2, est, ref, kRate, rng).size(), 4u);
  EXPECT_THROW(g.build_batch(pesq, est, {s}, kRate, rng), std::invalid_argument);
}

TEST(Ensemble, GeneratorLossIsMemberMean) {
  GanConfig c;
  c.pesq = true;
  c.sig_bak = true;
  GanEnsemble g(c, 5);
  const auto s = speech(0.25);
  const ag::Var est = ag::leaf(Tensor::from(add_noise(s, 5.0, 8)));
  double sum = 0.0;
  for (const auto& m : g.members()) sum += generator_loss(*m.disc, est, s).item();
  EXPECT_NEAR(g.generator_loss(est, s).item(), sum / 3.0, 1e-14);
  const auto terms = g.generator_terms(est, s);
  EXPECT_EQ(terms.size(), 3u);
  EXPECT_TRUE(terms.count("sig") && terms.count("bak") && terms.count("pesq"));
  g.find(Metric::kPesq)->enabled = false;
  EXPECT_EQ(g.active(), 2u);
  EXPECT_NEAR(g.generator_loss(est, s).item(),
              (terms.at("sig") + terms.at("bak")) / 2.0, 1e-14);
  for (auto& m : g.members()) m.enabled = false;
  EXPECT_FALSE(g.generator_loss(est, s));
}

TEST(Ensemble, DiscriminatorLearnsTargets) {
  GanConfig c;
  c.pesq = true;
  c.replay = false;
  c.lr = 2e-3;
  GanEnsemble g(c, 7);
  const auto s = speech(0.25);
  const std::vector<std::vector<double>> ref{s}, est{add_noise(s, -5, 4)};
  std::mt19937_64 rng(2);
  const double first = g.discriminator_step(est, ref, kRate, rng).at("pesq");
  double last = first;
  for (int i = 0; i < 60; ++i) last = g.discriminator_step(est, ref, kRate, rng).at("pesq");
  EXPECT_LT(last, 0.25 * first);
  auto& d = *g.find(Metric::kPesq)->disc;
  EXPECT_GT(d.predict(d.features(s, s)), d.predict(d.features(est[0], s)));
}

}  // namespace
}  // namespace napse::metricgan
