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


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "napse/checkpoint.hpp"
#include "napse/losses.hpp"
#include "test_util.hpp"

namespace napse::checkpoint {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "napse_ckpt_test";
  fs::create_directories(dir);
  return dir / name;
}

// A few optimizer steps so Adam carries non-trivial moments.
void train_a_little(model::TwoStageModel& m, optim::Adam& opt, int steps) {
  const auto x = testing::random_vector(2400, 1, 0.2);
  const Tensor ref({x.size()}, testing::random_vector(x.size(), 2, 0.2));
  const auto emb = testing::random_vector(256, 3);
  speaker::FbankStats st{testing::random_vector(80, 4), std::vector<double>(80, 1.0)};
  losses::LossConfig lc;
  lc.scales = losses::single_scale();
  for (int i = 0; i < steps; ++i) {
    m.parameters().zero_grad();
    const auto out = m.forward(x, m.fuse(emb, st));
    ag::backward(losses::stage2_total(out.stage2_wave, ref, {}, lc).total);
    opt.step(m.parameters());
  }
}

TEST(Checkpoint, PhaseTags) {
  EXPECT_EQ(file_tag(Phase::kStage1), "stage1");
  EXPECT_EQ(file_tag(Phase::kStage2Frozen1), "stage2");
  EXPECT_EQ(file_tag(Phase::kJoint), "joint");
  for (auto p : {Phase::kStage1, Phase::kStage2Frozen1, Phase::kJoint}) {
    EXPECT_EQ(parse_phase(file_tag(p)), p);
    EXPECT_EQ(parse_phase(to_string(p)), p);
  }
  EXPECT_THROW(parse_phase("stage3"), std::invalid_argument);
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  model::TwoStageModel m(model::ModelConfig::toy(), 5);
  optim::Adam opt(1e-3);
  train_a_little(m, opt, 2);
  opt.set_lr(2.5e-4);
  TrainState st;
  st.phase = Phase::kStage2Frozen1;
  st.step = 42;
  st.phase_step = 7;
  st.plateau_best = -3.25;
  st.plateau_bad = 2;
  st.extra = {{"rng", "12345"}};
  const auto path = temp_path("round_trip.ckpt");
  save(path, m, st, &opt);

  const Loaded l = load(path);
  EXPECT_EQ(l.config, m.config());
  EXPECT_EQ(l.state.phase, Phase::kStage2Frozen1);
  EXPECT_EQ(l.state.step, 42);
  EXPECT_EQ(l.state.phase_step, 7);
  EXPECT_EQ(l.state.plateau_best, -3.25);
  EXPECT_EQ(l.state.plateau_bad, 2u);
  EXPECT_EQ(l.state.extra, st.extra);
  EXPECT_EQ(l.container.header.at("state").at("phase"), "stage2");
  EXPECT_TRUE(l.container.header.at("config").at("shared_fusion").get<bool>());

  optim::Adam opt2;
  auto m2 = load_model(l, &opt2);
  EXPECT_EQ(m2->parameters().snapshot(), m.parameters().snapshot());
  EXPECT_EQ(m2->count_params(), m.count_params());
  EXPECT_EQ(opt2.lr(), 2.5e-4);
  EXPECT_EQ(opt2.steps(), opt.steps());
  ASSERT_EQ(opt2.state().size(), opt.state().size());
  for (const auto& [name, s] : opt.state()) {
    EXPECT_EQ(opt2.state().at(name).m, s.m) << name;
    EXPECT_EQ(opt2.state().at(name).v, s.v) << name;
  }
  // Identical continuation.
  train_a_little(m, opt, 1);
  train_a_little(*m2, opt2, 1);
  EXPECT_EQ(m2->parameters().snapshot(), m.parameters().snapshot());
}

TEST(Checkpoint, AuxiliarySlots) {
  model::TwoStageModel m(model::ModelConfig::toy(), 6);
  nn::ParameterStore disc;
  nn::Rng rng(1);
  nn::Linear lin(disc, "d.lin", "disc", 4, 3, rng);
  const auto path = temp_path("aux.ckpt");
  save(path, m, {}, nullptr, {{"disc.sig", &disc, nullptr}});
  nn::ParameterStore other;
  nn::Rng rng2(2);
  nn::Linear lin2(other, "d.lin", "disc", 4, 3, rng2);
  EXPECT_NE(other.snapshot(), disc.snapshot());
  unpack(load(path).container, {"disc.sig", &other, nullptr});
  EXPECT_EQ(other.snapshot(), disc.snapshot());
  EXPECT_THROW(unpack(load(path).container, {"disc.bak", &other, nullptr}), std::runtime_error);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  model::TwoStageModel m(model::ModelConfig::toy(), 7);
  const auto path = temp_path("corrupt.ckpt");
  save(path, m, {});
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 8);
  EXPECT_THROW(load(path), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load(path), std::runtime_error);
  EXPECT_THROW(load(temp_path("missing.ckpt")), std::runtime_error);
}

TEST(Checkpoint, ShapeMismatchIsAnError) {
  model::TwoStageModel toy(model::ModelConfig::toy(), 8);
  const auto path = temp_path("shape.ckpt");
  save(path, toy, {});
  model::ModelConfig wider = model::ModelConfig::toy();
  wider.bottleneck_channels = 32;
  model::TwoStageModel other(wider, 8);
  EXPECT_THROW(unpack(load(path).container, {"model", &other.parameters(), nullptr}),
               std::runtime_error);
}

}  // namespace
}  // namespace napse::checkpoint
