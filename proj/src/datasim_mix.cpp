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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "napse/datasim.hpp"
#include "napse/wav.hpp"

namespace napse::datasim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

// Crops (random offset) or tiles `src` to exactly n samples.
std::vector<double> fit_length(const std::vector<double>& src, std::size_t n,
                               std::mt19937_64& rng) {
  if (src.empty()) throw std::invalid_argument("fit_length: empty source");
  std::vector<double> out(n);
  if (src.size() >= n) {
    std::uniform_int_distribution<std::size_t> off(0, src.size() - n);
    const std::size_t o = off(rng);
    std::copy_n(src.begin() + o, n, out.begin());
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = src[i % src.size()];
  }
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json range_json(const Range& r) {
  if (std::isinf(r.lo) && std::isinf(r.hi)) return nullptr;
  return json::array({r.lo, r.hi});
}
Range range_from(const json& j, const char* key, Range fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return {kInfiniteSnr, kInfiniteSnr};
  return {j.at(key).at(0).get<double>(), j.at(key).at(1).get<double>()};
}

std::vector<fs::path> sorted_wavs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double Range::sample(std::mt19937_64& rng) const {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::string to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::kDry: return "dry";
    case LabelKind::kEarly: return "early";
    case LabelKind::kFull: return "full";
  }
  return "?";
}

LabelKind label_kind_from_string(const std::string& name) {
  if (name == "dry") return LabelKind::kDry;
  if (name == "early") return LabelKind::kEarly;
  if (name == "full") return LabelKind::kFull;
  throw std::invalid_argument("unknown label kind: " + name);
}

void SimSpec::validate() const {
  auto ordered = [](const Range& r, const char* name) {
    if (!(r.lo <= r.hi)) throw std::invalid_argument(std::string("SimSpec: unordered ") + name);
  };
  ordered(snr_db, "snr_db");
  ordered(sir_db, "sir_db");
  ordered(rt60, "rt60");
  ordered(level_dbfs, "level_dbfs");
  if (rt60.lo < kRt60Min - 1e-12 || rt60.hi > kRt60Max + 1e-12) {
    throw std::invalid_argument("SimSpec: rt60 range outside [0.1, 1.2] s");
  }
  for (double p : {p_interferer, p_reverb}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("SimSpec: probability outside [0, 1]");
  }
  if (std::isinf(snr_db.lo) != std::isinf(snr_db.hi)) {
    throw std::invalid_argument("SimSpec: SNR range mixes finite and infinite bounds");
  }
  if (level_dbfs.hi > 0.0) throw std::invalid_argument("SimSpec: level above 0 dBFS");
  if (early_ms < 0.0) throw std::invalid_argument("SimSpec: negative early_ms");
}

json SimSpec::to_json() const {
  return {{"snr_db", range_json(snr_db)},
          {"sir_db", json::array({sir_db.lo, sir_db.hi})},
          {"rt60", json::array({rt60.lo, rt60.hi})},
          {"p_interferer", p_interferer},
          {"p_reverb", p_reverb},
          {"level_dbfs", json::array({level_dbfs.lo, level_dbfs.hi})},
          {"label", to_string(label)},
          {"early_ms", early_ms},
          {"min_target_seconds", min_target_seconds}};
}

SimSpec SimSpec::from_json(const json& j) {
  SimSpec s;
  s.snr_db = range_from(j, "snr_db", s.snr_db);
  s.sir_db = range_from(j, "sir_db", s.sir_db);
  s.rt60 = range_from(j, "rt60", s.rt60);
  s.level_dbfs = range_from(j, "level_dbfs", s.level_dbfs);
  s.p_interferer = j.value("p_interferer", s.p_interferer);
  s.p_reverb = j.value("p_reverb", s.p_reverb);
  if (j.contains("label")) s.label = label_kind_from_string(j.at("label").get<std::string>());
  s.early_ms = j.value("early_ms", s.early_ms);
  s.min_target_seconds = j.value("min_target_seconds", s.min_target_seconds);
  s.validate();
  return s;
}

json SimMetadata::to_json() const {
  return {{"snr_db", optional_json(snr_db)},
          {"sir_db", optional_json(sir_db)},
          {"rt60", optional_json(rt60)},
          {"level_dbfs", level_dbfs},
          {"scale", scale},
          {"clipped", clipped},
          {"target_id", target_id},
          {"enrollment_id", enrollment_id},
          {"interferer_id", interferer_id},
          {"noise_id", noise_id},
          {"rir_id", rir_id},
          {"seed", seed}};
}

SimMetadata SimMetadata::from_json(const json& j) {
  SimMetadata m;
  m.snr_db = optional_from(j, "snr_db");
  m.sir_db = optional_from(j, "sir_db");
  m.rt60 = optional_from(j, "rt60");
  m.level_dbfs = j.value("level_dbfs", 0.0);
  m.scale = j.value("scale", 1.0);
  m.clipped = j.value("clipped", false);
  m.target_id = j.value("target_id", "");
  m.enrollment_id = j.value("enrollment_id", "");
  m.interferer_id = j.value("interferer_id", "");
  m.noise_id = j.value("noise_id", "");
  m.rir_id = j.value("rir_id", "");
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

MixtureExample simulate_example(const SimSources& src, const SimSpec& spec,
                                std::uint64_t seed) {
  spec.validate();
  const auto& target = src.target.wave;
  const int rate = target.sample_rate;
  if (target.duration_seconds() < spec.min_target_seconds - 1e-9) {
    throw std::invalid_argument("simulate_example: target shorter than " +
                                std::to_string(spec.min_target_seconds) + " s");
  }
  if (src.enrollment.wave.empty()) throw std::invalid_argument("simulate_example: no enrollment");
  const std::size_t n = target.size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  MixtureExample ex;
  ex.meta.seed = seed;
  ex.meta.target_id = src.target.id;
  ex.meta.enrollment_id = src.enrollment.id;

  const bool with_interferer = coin(rng) < spec.p_interferer;
  const bool with_reverb = coin(rng) < spec.p_reverb;
  if (with_interferer && !src.interferer) {
    throw std::invalid_argument("simulate_example: spec requires an interferer but none given");
  }
  const double snr = spec.snr_db.sample(rng);
  const bool with_noise = std::isfinite(snr);
  if (with_noise && !src.noise) {
    throw std::invalid_argument("simulate_example: finite SNR requested but no noise given");
  }
  const double level = spec.level_dbfs.sample(rng);
  ex.meta.level_dbfs = level;

  std::vector<double> h_target, h_interf;
  if (with_reverb) {
    if (src.rir) {
      h_target = h_interf = src.rir->wave.samples;
      ex.meta.rir_id = src.rir->id;
    } else {
      const double rt60 = spec.rt60.sample(rng);
      ex.meta.rt60 = rt60;
      h_target = synth_rir(rt60, record_seed(seed, 1), rate);
      h_interf = synth_rir(rt60, record_seed(seed, 2), rate);
      ex.meta.rir_id = "synthetic";
    }
  }

  std::vector<double> tgt = with_reverb ? convolve(target.samples, h_target, n) : target.samples;
  std::vector<double> label;
  if (!with_reverb || spec.label == LabelKind::kDry) {
    label = target.samples;
  } else if (spec.label == LabelKind::kFull) {
    label = tgt;
  } else {
    const std::size_t early = std::min(
        h_target.size(), static_cast<std::size_t>(std::llround(spec.early_ms * 1e-3 * rate)) + 1);
    label = convolve(target.samples, std::span<const double>(h_target).first(early), n);
  }
  const double e_target = energy(tgt);
  if (!(e_target > 0.0)) throw std::invalid_argument("simulate_example: silent target");

  std::vector<double> interf(n, 0.0), noise(n, 0.0);
  if (with_interferer) {
    const double sir = spec.sir_db.sample(rng);
    ex.meta.sir_db = sir;
    ex.meta.interferer_id = src.interferer->id;
    auto raw = fit_length(src.interferer->wave.samples, n, rng);
    if (with_reverb) raw = convolve(raw, h_interf, n);
    const double g = std::sqrt(e_target / (energy(raw) * std::pow(10.0, sir / 10.0)));
    for (std::size_t i = 0; i < n; ++i) interf[i] = g * raw[i];
  }
  if (with_noise) {
    ex.meta.snr_db = snr;
    ex.meta.noise_id = src.noise->id;
    auto raw = fit_length(src.noise->wave.samples, n, rng);
    const double g = std::sqrt(e_target / (energy(raw) * std::pow(10.0, snr / 10.0)));
    for (std::size_t i = 0; i < n; ++i) noise[i] = g * raw[i];
  }

  std::vector<double> mix(n);
  for (std::size_t i = 0; i < n; ++i) mix[i] = tgt[i] + interf[i] + noise[i];
  const double rms = std::sqrt(energy(mix) / static_cast<double>(n));
  double scale = std::pow(10.0, level / 20.0) / rms;
  double peak = 0.0;
  for (double v : mix) peak = std::max(peak, std::abs(v) * scale);
  if (peak > 0.999) {
    scale *= 0.999 / peak;
    ex.meta.clipped = true;
  }
  ex.meta.scale = scale;
  for (auto* v : {&mix, &label, &tgt, &interf, &noise})
    for (auto& x : *v) x *= scale;

  ex.mixture = dsp::Waveform(std::move(mix), rate);
  ex.label = dsp::Waveform(std::move(label), rate);
  ex.enrollment = src.enrollment.wave;
  ex.target_component = std::move(tgt);
  ex.interferer_component = std::move(interf);
  ex.noise_component = std::move(noise);
  return ex;
}

SourcePool synthetic_pool(const SyntheticPoolSpec& spec, std::uint64_t seed) {
  SourcePool pool;
  for (std::size_t s = 0; s < spec.num_speakers; ++s) {
    const auto spk = make_speaker(s, seed);
    std::vector<SourceSignal> utts;
    for (std::size_t u = 0; u < spec.utterances_per_speaker; ++u) {
      char id[64];
      std::snprintf(id, sizeof(id), "spk%03zu/utt%02zu", s, u);
      utts.push_back({id, synth_utterance(spk, spec.utterance_seconds, record_seed(seed, s * 1000 + u))});
    }
    pool.speakers.push_back(std::move(utts));
  }
  const NoiseKind kinds[] = {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBrown,
                             NoiseKind::kTonal, NoiseKind::kBabble};
  for (std::size_t i = 0; i < spec.num_noises; ++i) {
    const NoiseKind k = kinds[i % 5];
    char id[64];
    std::snprintf(id, sizeof(id), "%s%02zu", to_string(k).c_str(), i);
    pool.noises.push_back({id, synth_noise(k, spec.noise_seconds, record_seed(seed, 500000 + i))});
  }
  return pool;
}

SourcePool load_source_pool(const fs::path& root) {
  SourcePool pool;
  const fs::path clean = root / "clean";
  if (!fs::is_directory(clean)) throw std::runtime_error("no clean/ directory under " + root.string());
  std::vector<fs::path> speakers;
  for (const auto& e : fs::directory_iterator(clean))
    if (e.is_directory()) speakers.push_back(e.path());
  std::sort(speakers.begin(), speakers.end());
  for (const auto& dir : speakers) {
    std::vector<SourceSignal> utts;
    for (const auto& f : sorted_wavs(dir)) {
      utts.push_back({dir.filename().string() + "/" + f.stem().string(), wav::read(f)});
    }
    if (!utts.empty()) pool.speakers.push_back(std::move(utts));
  }
  for (const auto& f : sorted_wavs(root / "noise")) pool.noises.push_back({f.stem().string(), wav::read(f)});
  for (const auto& f : sorted_wavs(root / "rir")) pool.rirs.push_back({f.stem().string(), wav::read(f)});
  return pool;
}

void write_source_pool(const SourcePool& pool, const fs::path& root) {
  for (const auto& spk : pool.speakers) {
    for (const auto& u : spk) {
      const fs::path p = root / "clean" / (u.id + ".wav");
      fs::create_directories(p.parent_path());
      wav::write(p, u.wave);
    }
  }
  fs::create_directories(root / "noise");
  for (const auto& nz : pool.noises) wav::write(root / "noise" / (nz.id + ".wav"), nz.wave);
  if (!pool.rirs.empty()) {
    fs::create_directories(root / "rir");
    for (const auto& r : pool.rirs) wav::write(root / "rir" / (r.id + ".wav"), r.wave);
  }
}

std::vector<PlannedExample> plan_examples(const SourcePool& pool, std::size_t count,
                                          std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t s = 0; s < pool.speakers.size(); ++s)
    if (pool.speakers[s].size() >= 2) eligible.push_back(s);
  std::vector<PlannedExample> out;
  if (count == 0) return out;
  if (eligible.empty()) {
    throw std::invalid_argument("plan_examples: need a speaker with at least two utterances");
  }
  for (std::size_t i = 0; i < count; ++i) {
    PlannedExample p;
    p.seed = record_seed(seed, i);
    std::mt19937_64 rng(p.seed ^ 0xabcdefULL);
    char id[32];
    std::snprintf(id, sizeof(id), "ex%06zu", i);
    p.example_id = id;
    p.speaker = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
    const std::size_t nu = pool.speakers[p.speaker].size();
    p.target_utt = std::uniform_int_distribution<std::size_t>(0, nu - 1)(rng);
    p.enroll_utt = (p.target_utt + 1 + std::uniform_int_distribution<std::size_t>(0, nu - 2)(rng)) % nu;
    if (pool.speakers.size() >= 2) {
      std::size_t other = std::uniform_int_distribution<std::size_t>(0, pool.speakers.size() - 2)(rng);
      if (other >= p.speaker) ++other;
      p.interferer_speaker = other;
      p.interferer_utt = std::uniform_int_distribution<std::size_t>(0, pool.speakers[other].size() - 1)(rng);
    }
    if (!pool.noises.empty())
      p.noise = std::uniform_int_distribution<std::size_t>(0, pool.noises.size() - 1)(rng);
    if (!pool.rirs.empty())
      p.rir = std::uniform_int_distribution<std::size_t>(0, pool.rirs.size() - 1)(rng);
    out.push_back(std::move(p));
  }
  return out;
}

SimSources resolve(const SourcePool& pool, const PlannedExample& p) {
  SimSources s;
  s.target = pool.speakers.at(p.speaker).at(p.target_utt);
  s.enrollment = pool.speakers.at(p.speaker).at(p.enroll_utt);
  if (p.interferer_speaker) s.interferer = pool.speakers.at(*p.interferer_speaker).at(*p.interferer_utt);
  if (p.noise) s.noise = pool.noises.at(*p.noise);
  if (p.rir) s.rir = pool.rirs.at(*p.rir);
  return s;
}

std::vector<MixtureExample> generate_examples(const SourcePool& pool, const SimSpec& spec,
                                              std::size_t count, std::uint64_t seed) {
  std::vector<MixtureExample> out;
  for (const auto& p : plan_examples(pool, count, seed)) {
    out.push_back(simulate_example(resolve(pool, p), spec, p.seed));
    out.back().id = p.example_id;
  }
  return out;
}

json ManifestRecord::to_json() const {
  return {{"example_id", example_id},
          {"mixture", mixture},
          {"label", label},
          {"enrollment", enrollment},
          {"metadata", meta.to_json()}};
}

ManifestRecord ManifestRecord::from_json(const json& j) {
  ManifestRecord r;
  r.example_id = j.at("example_id").get<std::string>();
  r.mixture = j.at("mixture").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.enrollment = j.at("enrollment").get<std::string>();
  if (j.contains("metadata")) r.meta = SimMetadata::from_json(j.at("metadata"));
  return r;
}

std::vector<ManifestRecord> build_manifest(const SourcePool& pool, const SimSpec& spec,
                                           std::size_t count, std::uint64_t seed,
                                           const fs::path& out_dir) {
  spec.validate();
  for (const char* sub : {"mixture", "label", "enroll"}) fs::create_directories(out_dir / sub);
  std::ofstream manifest(out_dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write manifest under " + out_dir.string());
  std::vector<ManifestRecord> records;
  for (const auto& p : plan_examples(pool, count, seed)) {
    const auto ex = simulate_example(resolve(pool, p), spec, p.seed);
    ManifestRecord r;
    r.example_id = p.example_id;
    r.mixture = "mixture/" + p.example_id + ".wav";
    r.label = "label/" + p.example_id + ".wav";
    r.enrollment = "enroll/" + p.example_id + ".wav";
    r.meta = ex.meta;
    wav::write(out_dir / r.mixture, ex.mixture);
    wav::write(out_dir / r.label, ex.label);
    wav::write(out_dir / r.enrollment, ex.enrollment);
    manifest << r.to_json().dump() << "\n";
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest not found: " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto r = ManifestRecord::from_json(json::parse(line));
    if (!ids.insert(r.example_id).second) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": duplicate example id " + r.example_id);
    }
    for (const auto* f : {&r.mixture, &r.label, &r.enrollment}) {
      if (!fs::exists(base / *f)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": missing file " + *f);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

MixtureExample load_example(const ManifestRecord& r, const fs::path& base) {
  MixtureExample ex;
  ex.id = r.example_id;
  ex.mixture = wav::read(base / r.mixture);
  ex.label = wav::read(base / r.label);
  ex.enrollment = wav::read(base / r.enrollment);
  ex.meta = r.meta;
  if (ex.mixture.size() != ex.label.size()) {
    throw std::runtime_error("example " + r.example_id + ": mixture/label length mismatch");
  }
  return ex;
}

std::vector<MixtureExample> load_manifest(const fs::path& path) {
  std::vector<MixtureExample> out;
  for (const auto& r : read_manifest(path)) out.push_back(load_example(r, path.parent_path()));
  return out;
}

}  // namespace napse::datasim
