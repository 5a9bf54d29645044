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


// Versioned checkpoint container.
//
//   bytes 0..7   "NAPSECKP"
//   u32          format version
//   u64          header length
//   header       UTF-8 JSON: caller fields plus a blob index
//   payload      little-endian float64 blobs in index order
//
// Blob names are canonical parameter names, prefixed by the slot they
// belong to ("model/", "disc.sig/", ...). Optimizer moments ride along as
// "<slot>/adam.m/<param>" and "<slot>/adam.v/<param>".

#ifndef NAPSE_CHECKPOINT_HPP_
#define NAPSE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "napse/model.hpp"
#include "napse/optim.hpp"

namespace napse::checkpoint {

inline constexpr char kMagic[9] = "NAPSECKP";
inline constexpr std::uint32_t kVersion = 1;

enum class Phase { kStage1, kStage2Frozen1, kJoint };
std::string to_string(Phase phase);
// Phase tag stored in the file: stage1 | stage2 | joint.
std::string file_tag(Phase phase);
// Accepts both spellings.
Phase parse_phase(const std::string& s);

struct Blob {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Container {
  nlohmann::json header = nlohmann::json::object();
  std::vector<Blob> blobs;

  const Blob& blob(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write(const std::filesystem::path& path, const Container& c);
Container read(const std::filesystem::path& path);

// A parameter store plus its optional optimizer.
struct Slot {
  std::string prefix;
  nn::ParameterStore* store = nullptr;
  optim::Adam* adam = nullptr;
};

void pack(Container& c, const Slot& slot);
// Overwrites values (and optimizer state) in place. Every parameter of the
// store must be present with a matching shape.
void unpack(const Container& c, const Slot& slot);

struct TrainState {
  Phase phase = Phase::kStage1;
  long step = 0;        // global, monotone across phases
  long phase_step = 0;  // within the current phase
  double plateau_best = 1e300;
  std::size_t plateau_bad = 0;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static TrainState from_json(const nlohmann::json& j);
};

// Model checkpoint: config echo, train state, parameter count, optional
// optimizer, auxiliary slots (discriminators) and free-form blobs.
void save(const std::filesystem::path& path, const model::TwoStageModel& model,
          const TrainState& state, const optim::Adam* adam = nullptr,
          const std::vector<Slot>& aux = {}, const std::vector<Blob>& extra = {});

struct Loaded {
  model::ModelConfig config;
  TrainState state;
  Container container;
};
Loaded load(const std::filesystem::path& path);

// Builds a model from the stored config and restores its parameters.
std::unique_ptr<model::TwoStageModel> load_model(const Loaded& loaded,
                                                 optim::Adam* adam = nullptr);

}  // namespace napse::checkpoint

#endif  // NAPSE_CHECKPOINT_HPP_
