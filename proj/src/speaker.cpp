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

#include "napse/speaker.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "napse/optim.hpp"

namespace napse::speaker {
namespace {

std::vector<double> l2_normalize(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::runtime_error("embedding has zero or non-finite norm");
  }
  for (auto& x : v) x /= n;
  return v;
}

void require_dims(const std::vector<double>& embedding, const FbankStats& stats,
                  bool use_fbank) {
  if (embedding.size() != kEmbeddingDim) {
    throw std::invalid_argument("fuse: embedding has " + std::to_string(embedding.size()) +
                                " dims, expected 256");
  }
  if (use_fbank && (stats.mean.size() + stats.std.size() != kStatsDim ||
                    stats.mean.size() != stats.std.size())) {
    throw std::invalid_argument("fuse: stats have " +
                                std::to_string(stats.mean.size() + stats.std.size()) +
                                " dims, expected 160");
  }
}

std::vector<double> fusion_input(const std::vector<double>& embedding,
                                 const FbankStats& stats, bool use_fbank) {
  require_dims(embedding, stats, use_fbank);
  std::vector<double> x(embedding);
  if (use_fbank) {
    const auto s = stats.concat();
    x.insert(x.end(), s.begin(), s.end());
  }
  return x;
}

// Removes the utterance's overall log level so the encoder sees the
// spectral shape rather than loudness.
Tensor level_normalized_fbank(const dsp::Waveform& wave) {
  Tensor f = dsp::fbank(wave);
  double m = 0.0;
  for (double v : f.vec()) m += v;
  m /= static_cast<double>(f.numel());
  for (auto& v : f.vec()) v -= m;
  return f;
}

}  // namespace

std::vector<double> FbankStats::concat() const {
  std::vector<double> out(mean);
  out.insert(out.end(), std.begin(), std.end());
  return out;
}

FbankStats frame_stats(const Tensor& frames) {
  if (frames.rank() != 2 || frames.dim(0) < 2) {
    throw std::invalid_argument("enrollment_stats: need at least 2 frames, got " +
                                shape_str(frames.shape()));
  }
  const std::size_t T = frames.dim(0), D = frames.dim(1);
  // Two passes over data shifted by the first frame: a constant column
  // gives its value back exactly and a std of exactly zero.
  FbankStats s{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
  std::vector<double> shift(D);
  for (std::size_t d = 0; d < D; ++d) shift[d] = frames.at(0, d);
  std::vector<double> offset(D, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) offset[d] += frames.at(t, d) - shift[d];
  for (std::size_t d = 0; d < D; ++d) {
    offset[d] /= static_cast<double>(T);
    s.mean[d] = shift[d] + offset[d];
  }
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      const double dev = (frames.at(t, d) - shift[d]) - offset[d];
      s.std[d] += dev * dev;
    }
  for (auto& v : s.std) v = std::sqrt(v / static_cast<double>(T));
  return s;
}

FbankStats enrollment_stats(const dsp::Waveform& enrollment,
                            const dsp::FbankConfig& config) {
  return frame_stats(dsp::fbank(enrollment, config));
}

std::vector<double> EmbeddingProvider::embed(const dsp::Waveform& enrollment,
                                             const std::string& utterance_id) const {
  if (enrollment.duration_seconds() < kMinEnrollSeconds) {
    throw std::invalid_argument("embed: enrollment shorter than 1 s (" +
                                std::to_string(enrollment.duration_seconds()) + " s)");
  }
  auto v = compute(enrollment, utterance_id);
  if (v.size() != kEmbeddingDim) {
    throw std::runtime_error("embed: provider returned " + std::to_string(v.size()) +
                             " dims, expected 256");
  }
  return l2_normalize(std::move(v));
}

StubProvider::StubProvider(std::uint64_t seed) {
  nn::Rng rng(seed ^ 0x5157ab1eULL);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(double(kStatsDim)));
  projection_.resize(kEmbeddingDim * kStatsDim);
  for (auto& v : projection_) v = dist(rng);
}

std::vector<double> StubProvider::compute(const dsp::Waveform& enrollment,
                                          const std::string&) const {
  auto stats = enrollment_stats(enrollment).concat();
  // Centre the log-mel means so the projection is not dominated by level.
  double m = 0.0;
  for (std::size_t i = 0; i < 80; ++i) m += stats[i];
  for (std::size_t i = 0; i < 80; ++i) stats[i] -= m / 80.0;
  std::vector<double> out(kEmbeddingDim, 0.0);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i)
    for (std::size_t j = 0; j < kStatsDim; ++j)
      out[i] += projection_[i * kStatsDim + j] * stats[j];
  return out;
}

ToyProvider::ToyProvider(std::uint64_t seed, Options options) : options_(options) {
  nn::Rng rng(seed ^ 0x70f0ULL);
  ag::Conv2dOptions down;
  down.stride_time = 2;
  down.stride_freq = 2;
  down.pad_freq = 2;
  conv1_ = nn::Conv2d(store_, "toy.conv1", "speaker", 1, options.channels1, 3, 5, down, rng);
  conv2_ = nn::Conv2d(store_, "toy.conv2", "speaker", options.channels1, options.channels2,
                      3, 5, down, rng);
  // Time pooling keeps the frequency layout: [C2, T', F'] -> [C2 * F'].
  std::size_t f = dsp::FbankConfig{}.n_mels;
  for (int i = 0; i < 2; ++i) f = (f + 2 * down.pad_freq - 5) / down.stride_freq + 1;
  project_ = nn::Linear(store_, "toy.project", "speaker", options.channels2 * f,
                        kEmbeddingDim, rng);
}

ag::Var ToyProvider::encode(const Tensor& frames) const {
  const Tensor x = frames.reshaped({1, frames.dim(0), frames.dim(1)});
  ag::Var h = ag::elu(conv1_(ag::constant(x)));
  h = ag::elu(conv2_(h));
  return project_(ag::channel_mean(ag::fold_freq(h)));
}

std::vector<double> ToyProvider::compute(const dsp::Waveform& enrollment,
                                         const std::string&) const {
  return encode(level_normalized_fbank(enrollment)).value().vec();
}

ToyProvider::TrainReport ToyProvider::pretrain(
    const std::vector<std::vector<dsp::Waveform>>& clips, std::size_t steps,
    std::uint64_t seed, double lr) {
  if (clips.size() < 2) throw std::invalid_argument("pretrain: need at least 2 speakers");
  std::vector<std::vector<Tensor>> feats(clips.size());
  for (std::size_t s = 0; s < clips.size(); ++s) {
    if (clips[s].empty()) throw std::invalid_argument("pretrain: speaker without clips");
    for (const auto& c : clips[s]) feats[s].push_back(level_normalized_fbank(c));
  }
  nn::ParameterStore head_store;
  nn::Rng rng(seed);
  nn::Linear head(head_store, "toy.head", "head", kEmbeddingDim, clips.size(), rng);
  optim::Adam opt(lr), head_opt(lr);
  const std::size_t crop = 98;  // about 1 s of frames
  auto full_set_loss = [&]() {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < feats.size(); ++s)
      for (const auto& f : feats[s]) {
        acc += ag::softmax_cross_entropy(head(encode(f)), s).item();
        ++n;
      }
    return acc / static_cast<double>(n);
  };
  TrainReport report;
  {
    nn::NoGradScope a(store_), b(head_store);
    report.initial_loss = full_set_loss();
  }
  // One random crop per speaker per step.
  for (std::size_t step = 0; step < steps; ++step) {
    store_.zero_grad();
    head_store.zero_grad();
    ag::Var total;
    for (std::size_t s = 0; s < feats.size(); ++s) {
      std::uniform_int_distribution<std::size_t> pick_clip(0, feats[s].size() - 1);
      const Tensor& f = feats[s][pick_clip(rng)];
      const std::size_t T = f.dim(0), len = std::min(crop, T);
      std::uniform_int_distribution<std::size_t> pick_start(0, T - len);
      const std::size_t start = pick_start(rng);
      Tensor window({len, f.dim(1)});
      std::copy(f.data() + start * f.dim(1), f.data() + (start + len) * f.dim(1),
                window.data());
      const ag::Var l = ag::softmax_cross_entropy(head(encode(window)), s);
      total = total ? ag::add(total, l) : l;
    }
    ag::backward(ag::scale(total, 1.0 / static_cast<double>(feats.size())));
    opt.step(store_);
    head_opt.step(head_store);
  }
  {
    nn::NoGradScope a(store_), b(head_store);
    report.final_loss = full_set_loss();
  }
  report.steps = steps;
  return report;
}

void ToyProvider::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["kind"] = "toy";
  j["channels"] = {options_.channels1, options_.channels2};
  for (const auto& p : store_.parameters()) j["params"][p.name] = p.var.value().vec();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump() << "\n";
}

void ToyProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("toy provider weights not found: " + path.string());
  const auto j = nlohmann::json::parse(in);
  for (auto& p : store_.parameters()) {
    const auto v = j.at("params").at(p.name).get<std::vector<double>>();
    if (v.size() != p.var.numel()) {
      throw std::runtime_error("toy provider: size mismatch for " + p.name);
    }
    p.var.mutable_value().vec() = v;
  }
}

ExternalFileProvider::ExternalFileProvider(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("embedding file not found: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line);
    auto v = j.at("embedding").get<std::vector<double>>();
    if (v.size() != kEmbeddingDim) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": embedding has " + std::to_string(v.size()) +
                               " dims, expected 256");
    }
    table_[j.at("utterance_id").get<std::string>()] = std::move(v);
  }
}

std::vector<double> ExternalFileProvider::compute(const dsp::Waveform&,
                                                  const std::string& utterance_id) const {
  auto it = table_.find(utterance_id);
  if (it == table_.end()) {
    throw std::runtime_error("no embedding for utterance '" + utterance_id + "'");
  }
  return it->second;
}

std::unique_ptr<EmbeddingProvider> make_provider(const nlohmann::json& config) {
  const std::string kind = config.value("kind", "stub");
  const auto seed = config.value("seed", std::uint64_t{0});
  if (kind == "stub") return std::make_unique<StubProvider>(seed);
  if (kind == "toy") {
    auto p = std::make_unique<ToyProvider>(seed);
    if (config.contains("path")) p->load(config.at("path").get<std::string>());
    return p;
  }
  if (kind == "external") {
    return std::make_unique<ExternalFileProvider>(config.at("path").get<std::string>());
  }
  throw std::invalid_argument("unknown embedding provider: " + kind);
}

FusionLayer::FusionLayer(nn::ParameterStore& store, const std::string& group,
                         bool use_fbank, nn::Rng& rng)
    : use_fbank_(use_fbank),
      linear_(store, group + ".linear", group, use_fbank ? kEmbeddingDim + kStatsDim : kEmbeddingDim,
              kEmbeddingDim, rng) {}

ag::Var FusionLayer::operator()(const std::vector<double>& embedding,
                                const FbankStats& stats) const {
  return linear_(ag::constant(Tensor::from(fusion_input(embedding, stats, use_fbank_))));
}

std::vector<double> fuse(const std::vector<double>& embedding, const FbankStats& stats,
                         const Tensor& weight, const Tensor& bias) {
  const auto x = fusion_input(embedding, stats, true);
  if (weight.shape() != Shape{kEmbeddingDim, x.size()} || bias.shape() != Shape{kEmbeddingDim}) {
    throw std::invalid_argument("fuse: parameter shapes " + shape_str(weight.shape()) + ", " +
                                shape_str(bias.shape()));
  }
  std::vector<double> out(kEmbeddingDim);
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    double acc = bias[i];
    for (std::size_t j = 0; j < x.size(); ++j) acc += weight.at(i, j) * x[j];
    out[i] = acc;
  }
  return out;
}

std::size_t fusion_param_count(bool use_fbank) {
  const std::size_t in = use_fbank ? kEmbeddingDim + kStatsDim : kEmbeddingDim;
  return in * kEmbeddingDim + kEmbeddingDim;
}

}  // namespace napse::speaker
