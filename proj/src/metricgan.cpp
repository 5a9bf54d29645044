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


#include "napse/metricgan.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "napse/losses.hpp"
#include "napse/ops.hpp"
#include "napse/tensor.hpp"
#include "napse/wav.hpp"

namespace napse::metricgan {
namespace {

using nlohmann::json;

WarningHandler& handler() {
  static WarningHandler h = [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };
  return h;
}

double clamp_warn(double v, double lo, double hi, const char* what) {
  if (std::isnan(v)) throw std::invalid_argument(std::string(what) + ": NaN score");
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << what << ": " << v << " outside [" << lo << ", " << hi << "], clamped";
    handler()(os.str());
    return std::clamp(v, lo, hi);
  }
  return v;
}

constexpr double kSegFloorDb = -5.0, kSegCeilDb = 30.0;
constexpr double kEnergyFloor = 1e-20;

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler h) {
  WarningHandler old = handler();
  handler() = std::move(h);
  return old;
}

double normalize_pesq(double pesq) {
  return (clamp_warn(pesq, kPesqMin, kPesqMax, "normalize_pesq") + 0.5) / 5.0;
}

double normalize_dnsmos(double mos) {
  return (clamp_warn(mos, kMosMin, kMosMax, "normalize_dnsmos") - 1.0) / 4.0;
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kPesq: return "pesq";
    case Metric::kOvrl: return "ovrl";
    case Metric::kSig: return "sig";
    case Metric::kBak: return "bak";
  }
  return "?";
}

Metric metric_from_string(const std::string& s) {
  if (s == "pesq") return Metric::kPesq;
  if (s == "ovrl") return Metric::kOvrl;
  if (s == "sig") return Metric::kSig;
  if (s == "bak") return Metric::kBak;
  throw std::invalid_argument("unknown metric: " + s);
}

bool is_intrusive(Metric m) { return m == Metric::kPesq; }

std::pair<double, double> raw_range(Metric m) {
  return is_intrusive(m) ? std::pair{kPesqMin, kPesqMax} : std::pair{kMosMin, kMosMax};
}

double normalize(Metric m, double raw) {
  return is_intrusive(m) ? normalize_pesq(raw) : normalize_dnsmos(raw);
}

double MetricProvider::score(const dsp::Waveform& est, const dsp::Waveform* ref) const {
  if (is_intrusive(metric())) {
    if (!ref) throw std::invalid_argument(name() + ": intrusive metric needs a reference");
    if (ref->size() != est.size()) throw std::invalid_argument(name() + ": length mismatch");
  }
  const auto [lo, hi] = raw_range(metric());
  return clamp_warn(raw(est, ref), lo, hi, name().c_str());
}

double segmental_snr_db(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size() || est.empty()) {
    throw std::invalid_argument("segmental_snr_db: length mismatch or empty input");
  }
  const std::size_t frame = 960, hop = 480;
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t start = 0; n == 0 || start + frame <= ref.size(); start += hop) {
    const std::size_t end = std::min(ref.size(), start + frame);
    double s = 0.0, e = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      s += ref[i] * ref[i];
      e += (ref[i] - est[i]) * (ref[i] - est[i]);
    }
    double db;
    if (e <= 0.0) db = kSegCeilDb;
    else if (s <= 0.0) db = kSegFloorDb;
    else db = std::clamp(10.0 * std::log10(s / e), kSegFloorDb, kSegCeilDb);
    acc += db;
    ++n;
    if (end == ref.size()) break;
  }
  return acc / static_cast<double>(n);
}

SurrogateDetail non_intrusive_surrogate(std::span<const double> est, int sample_rate) {
  if (est.empty()) throw std::invalid_argument("non_intrusive_surrogate: empty input");
  const auto cfg = losses::default_scales()[0];
  const Tensor spec = dsp::stft_forward(est, cfg);
  const std::size_t T = spec.dim(1), K = spec.dim(2);
  // Bins 1..kTop cover roughly 90 Hz to 8 kHz at 48 kHz.
  const std::size_t top = std::min<std::size_t>(K - 1, (8000 * (K - 1) * 2) / sample_rate);
  std::vector<double> power(T * top);
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 1; k <= top; ++k) {
      const double re = spec[t * K + k], im = spec[T * K + t * K + k];
      power[t * top + k - 1] = re * re + im * im;
      total += re * re + im * im;
    }
  }
  // A floor relative to the clip energy keeps silent bins from zeroing the
  // geometric mean.
  const double floor = 1e-9 * total / static_cast<double>(power.size()) + kEnergyFloor;
  std::vector<double> level(T), flat(T);
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0, logsum = 0.0;
    for (std::size_t k = 0; k < top; ++k) {
      const double p = power[t * top + k] + floor;
      sum += p;
      logsum += std::log(p);
    }
    const double mean = sum / static_cast<double>(top);
    level[t] = 10.0 * std::log10(mean);
    flat[t] = std::exp(logsum / static_cast<double>(top)) / mean;
  }
  SurrogateDetail d;
  const double hi = percentile(level, 0.95), lo = percentile(level, 0.05);
  d.dynamic_range = hi - lo;
  double fsum = 0.0;
  std::size_t active = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (level[t] >= hi - 15.0) {
      fsum += flat[t];
      ++active;
    }
  }
  d.flatness = fsum / static_cast<double>(std::max<std::size_t>(1, active));
  // Harmonic speech has low flatness; broadband noise approaches 0.56.
  d.sig = 1.0 + 4.0 * std::clamp(1.0 - d.flatness / 0.5, 0.0, 1.0);
  // A clean background leaves deep gaps between speech frames.
  d.bak = 1.0 + 4.0 * std::clamp(d.dynamic_range / 60.0, 0.0, 1.0);
  d.ovrl = 1.0 + (d.sig - 1.0) * (d.bak - 1.0) / 4.0;
  return d;
}

double SurrogateProvider::raw(const dsp::Waveform& est, const dsp::Waveform* ref) const {
  if (metric_ == Metric::kPesq) {
    const double seg = segmental_snr_db(est.samples, ref->samples);
    return kPesqMin + (kPesqMax - kPesqMin) * (seg - kSegFloorDb) / (kSegCeilDb - kSegFloorDb);
  }
  const auto d = non_intrusive_surrogate(est.samples, est.sample_rate);
  switch (metric_) {
    case Metric::kSig: return d.sig;
    case Metric::kBak: return d.bak;
    default: return d.ovrl;
  }
}

ExternalProvider::ExternalProvider(Metric m, std::string command)
    : metric_(m), command_(std::move(command)) {
  if (command_.empty()) throw std::invalid_argument("ExternalProvider: empty command");
}

double ExternalProvider::raw(const dsp::Waveform& est, const dsp::Waveform* ref) const {
  namespace fs = std::filesystem;
  static std::atomic<unsigned long> counter{0};
  const auto dir = fs::temp_directory_path() /
                   ("napse_metric_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter++));
  fs::create_directories(dir);
  const auto est_path = dir / "est.wav";
  wav::write(est_path, est);
  std::string ref_arg = "none";
  if (ref && is_intrusive(metric_)) {
    wav::write(dir / "ref.wav", *ref);
    ref_arg = "'" + (dir / "ref.wav").string() + "'";
  }
  const std::string cmd = command_ + " '" + est_path.string() + "' " + ref_arg;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    fs::remove_all(dir);
    throw std::runtime_error("cannot run metric command: " + command_);
  }
  std::string out;
  std::array<char, 256> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = ::pclose(pipe);
  fs::remove_all(dir);
  if (status != 0) {
    throw std::runtime_error("metric command failed (status " + std::to_string(status) +
                             "): " + command_);
  }
  std::istringstream lines(out);
  std::string line;
  while (std::getline(lines, line)) {
    try {
      std::size_t used = 0;
      const double v = std::stod(line, &used);
      if (line.find_first_not_of(" \t\r", used) == std::string::npos) return v;
    } catch (const std::exception&) {
    }
  }
  throw std::runtime_error("metric command printed no score: " + command_);
}

std::unique_ptr<MetricProvider> make_metric_provider(const json& config) {
  const Metric m = metric_from_string(config.at("metric").get<std::string>());
  const std::string kind = config.value("kind", "surrogate");
  if (kind == "surrogate") return std::make_unique<SurrogateProvider>(m);
  if (kind == "external") {
    return std::make_unique<ExternalProvider>(m, config.at("command").get<std::string>());
  }
  throw std::invalid_argument("unknown metric provider kind: " + kind);
}

dsp::StftConfig discriminator_stft() { return losses::default_scales()[0]; }

Discriminator::Discriminator(std::string name, bool intrusive, std::uint64_t seed,
                             DiscriminatorConfig config)
    : name_(std::move(name)), intrusive_(intrusive), config_(std::move(config)) {
  if (config_.channels.size() != 4) throw std::invalid_argument("Discriminator: four conv blocks");
  nn::Rng rng(seed);
  std::size_t in = intrusive_ ? 2 : 1;
  for (std::size_t b = 0; b < config_.channels.size(); ++b) {
    ag::Conv2dOptions o;
    o.stride_freq = 2;
    o.stride_time = b == 0 ? 1 : 2;
    o.pad_freq = 1;
    o.pad_time_front = 1;
    o.pad_time_back = 1;
    blocks_.emplace_back(store_, name_ + ".block" + std::to_string(b), name_, in,
                         config_.channels[b], 3, 3, o, rng);
    in = config_.channels[b];
  }
  head_ = nn::Linear(store_, name_ + ".head", name_, in, 1, rng);
}

Tensor Discriminator::features(std::span<const double> est, std::span<const double> ref) const {
  const auto cfg = discriminator_stft();
  Tensor mag = losses::compressed_magnitude(dsp::stft_forward(est, cfg), config_.compression);
  if (!intrusive_) return mag;
  if (ref.size() != est.size()) throw std::invalid_argument("Discriminator: reference length");
  const Tensor r = losses::compressed_magnitude(dsp::stft_forward(ref, cfg), config_.compression);
  Tensor out({2, mag.dim(1), mag.dim(2)});
  std::copy(mag.vec().begin(), mag.vec().end(), out.data());
  std::copy(r.vec().begin(), r.vec().end(), out.data() + mag.numel());
  return out;
}

ag::Var Discriminator::features(const ag::Var& est, std::span<const double> ref) const {
  const ag::Var mag =
      losses::compressed_magnitude(ag::stft(est, discriminator_stft()), config_.compression);
  if (!intrusive_) return mag;
  if (ref.size() != est.numel()) throw std::invalid_argument("Discriminator: reference length");
  const Tensor r = losses::compressed_magnitude(dsp::stft_forward(ref, discriminator_stft()),
                                                config_.compression);
  std::vector<ag::Var> parts{mag, ag::constant(r)};
  return ag::concat0(parts);
}

ag::Var Discriminator::predict(const ag::Var& x) const { return run(x, false); }

ag::Var Discriminator::predict_frozen(const ag::Var& x) const { return run(x, true); }

ag::Var Discriminator::run(const ag::Var& x, bool frozen) const {
  const std::size_t want = intrusive_ ? 2 : 1;
  if (x.shape().size() != 3 || x.shape()[0] != want) {
    throw std::invalid_argument("Discriminator " + name_ + ": bad input " + shape_str(x.shape()));
  }
  // Frozen runs read detached copies so backward can never reach D.
  auto w = [frozen](const ag::Var& p) { return frozen ? ag::constant(p.value()) : p; };
  ag::Var h = x;
  for (const auto& b : blocks_) {
    h = ag::leaky_relu(ag::conv2d(h, w(b.weight), w(b.bias), b.options), config_.leaky_slope);
  }
  return ag::sigmoid(ag::linear(ag::channel_mean(h), w(head_.weight), w(head_.bias)));
}

double Discriminator::predict(const Tensor& x) const {
  return predict(ag::constant(x)).item();
}

ag::Var discriminator_loss(const Discriminator& d, const std::vector<DSample>& batch) {
  if (batch.empty()) throw std::invalid_argument("discriminator_loss: empty batch");
  ag::Var total;
  for (const auto& s : batch) {
    const ag::Var err = ag::square(ag::add_scalar(d.predict(ag::constant(s.features)), -s.target));
    total = total ? ag::add(total, err) : err;
  }
  return ag::scale(ag::sum(total), 1.0 / static_cast<double>(batch.size()));
}

ag::Var generator_loss(const Discriminator& d, const ag::Var& est, std::span<const double> ref) {
  return ag::sum(ag::square(ag::add_scalar(d.predict_frozen(d.features(est, ref)), -1.0)));
}

void ReplayBuffer::push(DSample s) {
  if (capacity_ == 0) return;
  items_.push_back(std::move(s));
  while (items_.size() > capacity_) items_.pop_front();
}

std::vector<DSample> ReplayBuffer::sample(std::size_t k, std::mt19937_64& rng) const {
  std::vector<DSample> out;
  if (items_.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  for (std::size_t i = 0; i < k; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

json GanConfig::to_json() const {
  return {{"pesq", pesq},     {"ovrl", ovrl},       {"sig_bak", sig_bak},
          {"replay", replay}, {"replay_capacity", replay_capacity},
          {"lr", lr},         {"providers", providers}};
}

GanConfig GanConfig::from_json(const json& j) {
  GanConfig c;
  c.pesq = j.value("pesq", c.pesq);
  c.ovrl = j.value("ovrl", c.ovrl);
  c.sig_bak = j.value("sig_bak", c.sig_bak);
  c.replay = j.value("replay", c.replay);
  c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
  c.lr = j.value("lr", c.lr);
  c.providers = j.value("providers", json::object());
  return c;
}

GanEnsemble::GanEnsemble(const GanConfig& config, std::uint64_t seed) : config_(config) {
  std::vector<Metric> metrics;
  if (config.pesq) metrics.push_back(Metric::kPesq);
  if (config.ovrl) metrics.push_back(Metric::kOvrl);
  if (config.sig_bak) {
    metrics.push_back(Metric::kSig);
    metrics.push_back(Metric::kBak);
  }
  std::uint64_t k = 0;
  for (Metric m : metrics) {
    GanMember mem;
    mem.metric = m;
    const std::string key = to_string(m);
    json pc = config.providers.contains(key) ? config.providers[key] : json::object();
    pc["metric"] = key;
    mem.provider = make_metric_provider(pc);
    mem.disc = std::make_unique<Discriminator>("disc." + key, is_intrusive(m),
                                               seed + 7919 * (++k), config.discriminator);
    mem.opt = std::make_unique<optim::Adam>(config.lr);
    mem.replay = ReplayBuffer(config.replay ? config.replay_capacity : 0);
    members_.push_back(std::move(mem));
  }
}

GanMember* GanEnsemble::find(Metric m) {
  for (auto& mem : members_) if (mem.metric == m) return &mem;
  return nullptr;
}

std::size_t GanEnsemble::active() const {
  std::size_t n = 0;
  for (const auto& m : members_) n += m.enabled ? 1 : 0;
  return n;
}

std::vector<DSample> GanEnsemble::build_batch(GanMember& m,
                                              const std::vector<std::vector<double>>& est,
                                              const std::vector<std::vector<double>>& ref,
                                              int sample_rate, std::mt19937_64& rng) {
  if (est.size() != ref.size()) throw std::invalid_argument("build_batch: batch size mismatch");
  std::vector<DSample> batch;
  const bool intrusive = m.disc->intrusive();
  for (std::size_t i = 0; i < est.size(); ++i) {
    const dsp::Waveform e(est[i], sample_rate), r(ref[i], sample_rate);
    batch.push_back({m.disc->features(est[i], ref[i]), m.provider->normalized(e, &r)});
    if (intrusive) batch.push_back({m.disc->features(ref[i], ref[i]), 1.0});
  }
  const std::size_t fresh = batch.size();
  auto replayed = m.replay.sample(fresh, rng);
  for (std::size_t i = 0; i < fresh; ++i) m.replay.push(batch[i]);
  for (auto& s : replayed) batch.push_back(std::move(s));
  return batch;
}

std::map<std::string, double> GanEnsemble::discriminator_step(
    const std::vector<std::vector<double>>& est, const std::vector<std::vector<double>>& ref,
    int sample_rate, std::mt19937_64& rng) {
  std::map<std::string, double> out;
  for (auto& m : members_) {
    if (!m.enabled) continue;
    const auto batch = build_batch(m, est, ref, sample_rate, rng);
    m.disc->parameters().zero_grad();
    const ag::Var loss = discriminator_loss(*m.disc, batch);
    ag::backward(loss);
    m.opt->step(m.disc->parameters());
    out[to_string(m.metric)] = loss.item();
  }
  return out;
}

ag::Var GanEnsemble::generator_loss(const ag::Var& est, std::span<const double> ref) const {
  ag::Var total;
  std::size_t n = 0;
  for (const auto& m : members_) {
    if (!m.enabled) continue;
    const ag::Var g = metricgan::generator_loss(*m.disc, est, ref);
    total = total ? ag::add(total, g) : g;
    ++n;
  }
  return n == 0 ? ag::Var{} : ag::scale(total, 1.0 / static_cast<double>(n));
}

std::map<std::string, double> GanEnsemble::generator_terms(const ag::Var& est,
                                                           std::span<const double> ref) const {
  std::map<std::string, double> out;
  for (const auto& m : members_) {
    if (m.enabled) out[to_string(m.metric)] = metricgan::generator_loss(*m.disc, est, ref).item();
  }
  return out;
}

}  // namespace napse::metricgan
