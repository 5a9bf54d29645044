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


#include "napse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace napse::checkpoint {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written as native little-endian doubles");

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + what);
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail(path, "truncated");
  return v;
}

}  // namespace

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::kStage1: return "stage1";
    case Phase::kStage2Frozen1: return "stage2_frozen1";
    case Phase::kJoint: return "joint";
  }
  return "?";
}

std::string file_tag(Phase phase) {
  return phase == Phase::kStage2Frozen1 ? "stage2" : to_string(phase);
}

Phase parse_phase(const std::string& s) {
  if (s == "stage1") return Phase::kStage1;
  if (s == "stage2" || s == "stage2_frozen1") return Phase::kStage2Frozen1;
  if (s == "joint") return Phase::kJoint;
  throw std::invalid_argument("unknown phase: " + s);
}

const Blob& Container::blob(const std::string& name) const {
  for (const auto& b : blobs) if (b.name == name) return b;
  throw std::out_of_range("checkpoint: no blob " + name);
}

bool Container::has(const std::string& name) const {
  for (const auto& b : blobs) if (b.name == name) return true;
  return false;
}

void write(const std::filesystem::path& path, const Container& c) {
  json header = c.header;
  json index = json::array();
  std::size_t offset = 0;
  for (const auto& b : c.blobs) {
    if (shape_numel(b.shape) != b.data.size()) {
      throw std::invalid_argument("checkpoint: blob " + b.name + " shape/data mismatch");
    }
    index.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", offset}});
    offset += b.data.size();
  }
  header["blobs"] = index;
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write-then-rename so a crash never leaves a half-written checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(tmp, "cannot open for writing");
    out.write(kMagic, 8);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : c.blobs) {
      out.write(reinterpret_cast<const char*>(b.data.data()),
                static_cast<std::streamsize>(b.data.size() * sizeof(double)));
    }
    if (!out) fail(tmp, "write failed");
  }
  std::filesystem::rename(tmp, path);
}

Container read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) fail(path, "bad magic");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) fail(path, "unsupported version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, path);
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) fail(path, "truncated header");
  Container c;
  try {
    c.header = json::parse(text);
  } catch (const json::exception& e) {
    fail(path, std::string("bad header: ") + e.what());
  }
  std::size_t expected = 0;
  for (const auto& e : c.header.at("blobs")) {
    Blob b;
    b.name = e.at("name").get<std::string>();
    b.shape = e.at("shape").get<Shape>();
    if (e.at("offset").get<std::size_t>() != expected) fail(path, "blob offsets out of order");
    b.data.resize(shape_numel(b.shape));
    if (!in.read(reinterpret_cast<char*>(b.data.data()),
                 static_cast<std::streamsize>(b.data.size() * sizeof(double)))) {
      fail(path, "truncated payload at " + b.name);
    }
    expected += b.data.size();
    c.blobs.push_back(std::move(b));
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(path, "trailing bytes");
  c.header.erase("blobs");
  return c;
}

void pack(Container& c, const Slot& slot) {
  json info = {{"parameters", slot.store->count()}};
  for (const auto& p : slot.store->parameters()) {
    c.blobs.push_back({slot.prefix + "/" + p.name, p.var.shape(), p.var.value().vec()});
  }
  if (slot.adam) {
    info["adam"] = {{"lr", slot.adam->lr()}, {"steps", slot.adam->steps()}};
    for (const auto& [name, st] : slot.adam->state()) {
      c.blobs.push_back({slot.prefix + "/adam.m/" + name, {st.m.size()}, st.m});
      c.blobs.push_back({slot.prefix + "/adam.v/" + name, {st.v.size()}, st.v});
    }
  }
  c.header["slots"][slot.prefix] = info;
}

void unpack(const Container& c, const Slot& slot) {
  if (!c.header.contains("slots") || !c.header["slots"].contains(slot.prefix)) {
    throw std::runtime_error("checkpoint: missing slot " + slot.prefix);
  }
  for (auto& p : slot.store->parameters()) {
    const Blob& b = c.blob(slot.prefix + "/" + p.name);
    if (b.shape != p.var.shape()) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name + ": " +
                               shape_str(b.shape) + " vs " + shape_str(p.var.shape()));
    }
    p.var.mutable_value().vec() = b.data;
  }
  const json& info = c.header["slots"][slot.prefix];
  if (slot.adam) {
    if (!info.contains("adam")) throw std::runtime_error("checkpoint: no optimizer state");
    slot.adam->set_lr(info["adam"].at("lr").get<double>());
    slot.adam->set_steps(info["adam"].at("steps").get<long>());
    auto& state = slot.adam->state();
    state.clear();
    const std::string m_prefix = slot.prefix + "/adam.m/";
    for (const auto& b : c.blobs) {
      if (b.name.rfind(m_prefix, 0) != 0) continue;
      const std::string name = b.name.substr(m_prefix.size());
      state[name].m = b.data;
      state[name].v = c.blob(slot.prefix + "/adam.v/" + name).data;
    }
  }
}

json TrainState::to_json() const {
  return {{"phase", file_tag(phase)},
          {"phase_name", checkpoint::to_string(phase)},
          {"step", step},
          {"phase_step", phase_step},
          {"plateau_best", plateau_best},
          {"plateau_bad", plateau_bad},
          {"extra", extra}};
}

TrainState TrainState::from_json(const json& j) {
  TrainState s;
  s.phase = parse_phase(j.at("phase").get<std::string>());
  s.step = j.at("step").get<long>();
  s.phase_step = j.value("phase_step", 0L);
  s.plateau_best = j.value("plateau_best", 1e300);
  s.plateau_bad = j.value("plateau_bad", std::size_t{0});
  s.extra = j.value("extra", json::object());
  return s;
}

void save(const std::filesystem::path& path, const model::TwoStageModel& model,
          const TrainState& state, const optim::Adam* adam, const std::vector<Slot>& aux,
          const std::vector<Blob>& extra) {
  Container c;
  c.header["format"] = "napse-checkpoint";
  c.header["config"] = model.config().to_json();
  c.header["state"] = state.to_json();
  json counts = json::object();
  for (const auto& [k, v] : model.count_params()) counts[k] = v;
  c.header["param_counts"] = counts;
  // pack() never mutates; the casts only satisfy the shared Slot type.
  pack(c, {"model", const_cast<nn::ParameterStore*>(&model.parameters()),
           const_cast<optim::Adam*>(adam)});
  for (const auto& s : aux) pack(c, s);
  for (const auto& b : extra) {
    if (c.has(b.name)) throw std::invalid_argument("checkpoint: duplicate blob " + b.name);
    c.blobs.push_back(b);
  }
  write(path, c);
}

Loaded load(const std::filesystem::path& path) {
  Loaded l;
  l.container = read(path);
  const json& h = l.container.header;
  if (h.value("format", "") != "napse-checkpoint") fail(path, "not a model checkpoint");
  l.config = model::ModelConfig::from_json(h.at("config"));
  l.state = TrainState::from_json(h.at("state"));
  return l;
}

std::unique_ptr<model::TwoStageModel> load_model(const Loaded& loaded, optim::Adam* adam) {
  auto m = std::make_unique<model::TwoStageModel>(loaded.config, 0);
  unpack(loaded.container, {"model", &m->parameters(), adam});
  return m;
}

}  // namespace napse::checkpoint
