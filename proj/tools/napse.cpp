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


// napse: simulate | train | enhance | evaluate | ablate | bench-rtf

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "napse/checkpoint.hpp"
#include "napse/datasim.hpp"
#include "napse/pipeline.hpp"
#include "napse/wav.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace napse;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = "out";
  bool plot = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "global seed");
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--plot", c.plot, "write SVG plots");
}

json load_config(const Common& c) {
  if (c.config.empty()) return json::object();
  std::ifstream in(c.config);
  return json::parse(in, nullptr, true, true);
}

// Paths in a config are relative to the config file.
fs::path resolve(const Common& c, const std::string& p) {
  const fs::path path(p);
  if (path.is_absolute() || c.config.empty()) return path;
  return fs::path(c.config).parent_path() / path;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

pipeline::TrainConfig train_config(const json& cfg, std::uint64_t seed) {
  auto t = pipeline::TrainConfig::from_json(cfg.value("train", json::object()));
  t.seed = seed;
  return t;
}

pipeline::Dataset dataset(const Common& c, const json& cfg, const std::string& which,
                          const speaker::EmbeddingProvider& provider) {
  const json data = cfg.value("data", json::object());
  if (!data.contains(which)) throw std::runtime_error("config has no data." + which + " manifest");
  return pipeline::make_dataset(datasim::load_manifest(resolve(c, data.at(which))), provider);
}

json speaker_config(const json& cfg, const std::optional<checkpoint::Loaded>& ck) {
  if (cfg.contains("train") && cfg["train"].contains("speaker")) return cfg["train"]["speaker"];
  if (ck && ck->state.extra.contains("train_config")) {
    return ck->state.extra["train_config"].value("speaker", json{{"kind", "stub"}});
  }
  return {{"kind", "stub"}, {"seed", 0}};
}

int cmd_simulate(const Common& c) {
  const json cfg = load_config(c);
  datasim::SourcePool pool;
  const json pc = cfg.value("pool", json::object());
  if (pc.contains("dir")) {
    pool = datasim::load_source_pool(resolve(c, pc.at("dir")));
  } else {
    datasim::SyntheticPoolSpec ps;
    ps.num_speakers = pc.value("num_speakers", ps.num_speakers);
    ps.utterances_per_speaker = pc.value("utterances_per_speaker", ps.utterances_per_speaker);
    ps.utterance_seconds = pc.value("utterance_seconds", ps.utterance_seconds);
    ps.num_noises = pc.value("num_noises", ps.num_noises);
    ps.noise_seconds = pc.value("noise_seconds", ps.noise_seconds);
    pool = datasim::synthetic_pool(ps, c.seed);
    if (pc.value("write_sources", false)) datasim::write_source_pool(pool, fs::path(c.out) / "sources");
  }
  const auto spec = datasim::SimSpec::from_json(cfg.value("sim", json::object()));
  const fs::path out(c.out);
  std::size_t offset = 0;
  for (const char* split : {"train", "dev"}) {
    const std::size_t n = cfg.value(std::string(split) + "_count", split[0] == 't' ? 8 : 4);
    if (n == 0) continue;
    // Distinct record seeds per split.
    const auto recs = datasim::build_manifest(pool, spec, n, c.seed + 1000003 * ++offset,
                                              out / split);
    std::cout << split << ": " << recs.size() << " examples -> "
              << (out / split / "manifest.jsonl").string() << "\n";
  }
  return 0;
}

void write_eval(const fs::path& out, const pipeline::EvalTable& table, bool plot,
                const std::string& title) {
  write_text(out / "table.txt", table.render_text());
  write_text(out / "table.csv", table.render_csv());
  write_text(out / "table.json", table.to_json().dump(2));
  if (plot) write_text(out / "table.svg", pipeline::table_svg(table, title));
  std::cout << table.render_text();
}

int cmd_train(const Common& c, const std::string& resume) {
  const json cfg = load_config(c);
  auto tc = train_config(cfg, c.seed);
  const auto provider = speaker::make_provider(tc.speaker);
  const auto train = dataset(c, cfg, "train", *provider);
  std::optional<pipeline::Dataset> dev;
  if (cfg.value("data", json::object()).contains("dev")) dev = dataset(c, cfg, "dev", *provider);
  const fs::path out(c.out);
  fs::create_directories(out);
  write_text(out / "config.json", tc.to_json().dump(2));
  pipeline::RunLedger ledger(out / "metrics.jsonl", out / "timings.jsonl");
  std::unique_ptr<pipeline::Trainer> t;
  if (!resume.empty()) {
    t = pipeline::Trainer::resume(resume, tc, &train, dev ? &*dev : nullptr, &ledger);
  } else {
    t = std::make_unique<pipeline::Trainer>(tc, &train, dev ? &*dev : nullptr, &ledger);
  }
  const auto phases = cfg.value("phases", json::array());
  if (phases.empty()) {
    t->run_schedule(out);
  } else {
    for (const auto& p : phases) {
      const auto phase = checkpoint::parse_phase(p.get<std::string>());
      t->run_phase(phase);
      t->save(out / (checkpoint::file_tag(phase) + ".ckpt"));
    }
  }
  const auto& eval_set = dev ? *dev : train;
  const auto providers = pipeline::make_providers(cfg.value("providers", json::array()));
  auto table = pipeline::make_table(
      providers, {pipeline::evaluate_noisy(eval_set.examples, providers),
                  pipeline::evaluate_model("NAPSE (toy)", t->model(), eval_set, providers)});
  write_eval(out, table, c.plot, "dev set");
  if (c.plot) write_text(out / "loss.svg", pipeline::loss_curve_svg(ledger.records()));
  return 0;
}

int cmd_enhance(const Common& c, const std::string& mixture, const std::string& enroll,
                const std::string& ckpt, int stage) {
  const json cfg = load_config(c);
  const auto loaded = checkpoint::load(ckpt);
  auto model = checkpoint::load_model(loaded);
  const auto provider = speaker::make_provider(speaker_config(cfg, loaded));
  const int rate = model->config().sample_rate;
  const auto mix = wav::read(mixture, rate);
  const auto enr = wav::read(enroll, rate);
  const auto e = model::enhance(mix, enr, *model, *provider, fs::path(enroll).stem().string());
  fs::path out(c.out);
  if (out.extension() != ".wav") {
    fs::create_directories(out);
    out /= fs::path(mixture).stem().string() + "_enhanced.wav";
  } else if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  wav::write(out, stage == 1 ? e.stage1 : e.stage2);
  std::cout << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& ckpt, const std::string& manifest) {
  const json cfg = load_config(c);
  const auto loaded = checkpoint::load(ckpt);
  auto model = checkpoint::load_model(loaded);
  const auto provider = speaker::make_provider(speaker_config(cfg, loaded));
  pipeline::Dataset data =
      manifest.empty() ? dataset(c, cfg, "dev", *provider)
                       : pipeline::make_dataset(datasim::load_manifest(manifest), *provider);
  const auto providers = pipeline::make_providers(cfg.value("providers", json::array()));
  auto rows = std::vector<pipeline::EvalRow>{pipeline::evaluate_noisy(data.examples, providers)};
  if (!model->config().stage2_only) {
    rows.push_back(pipeline::evaluate_model("Stage-1", *model, data, providers, false));
  }
  rows.push_back(pipeline::evaluate_model("Stage-2", *model, data, providers, true));
  const auto table = pipeline::make_table(providers, rows);
  const fs::path out(c.out);
  fs::create_directories(out);
  pipeline::RunLedger ledger(out / "metrics.jsonl");
  for (const auto& r : table.rows) {
    for (const auto& s : r.examples) {
      ledger.append({{"type", "example"}, {"step", 0}, {"system", r.name}, {"id", s.id},
                     {"si_snr", s.si_snr}, {"si_snr_noisy", s.si_snr_noisy},
                     {"metrics", s.metrics}});
    }
    ledger.append({{"type", "aggregate"}, {"step", 0}, {"system", r.name}, {"mean", r.mean}});
  }
  write_eval(out, table, c.plot, "evaluation");
  return 0;
}

int cmd_ablate(const Common& c) {
  const json cfg = load_config(c);
  const auto base = train_config(cfg, c.seed);
  const auto provider = speaker::make_provider(base.speaker);
  const auto train = dataset(c, cfg, "train", *provider);
  const auto dev = dataset(c, cfg, "dev", *provider);
  auto ladder = pipeline::ablation_ladder(base);
  std::vector<pipeline::Variant> variants(ladder.begin() + 1, ladder.end());
  if (cfg.contains("variants")) {
    std::vector<pipeline::Variant> keep;
    for (const auto& name : cfg["variants"]) {
      if (name == ladder[0].name) continue;  // always run
      const auto it = std::find_if(variants.begin(), variants.end(),
                                   [&](const auto& v) { return v.name == name; });
      if (it == variants.end()) throw std::runtime_error("unknown variant " + name.dump());
      keep.push_back(*it);
    }
    variants = keep;
  }
  const fs::path out(c.out);
  fs::create_directories(out);
  const auto providers = pipeline::make_providers(cfg.value("providers", json::array()));
  const auto r = pipeline::ablation_suite(ladder[0], variants, train, dev, providers, out);
  write_eval(out, r.table, c.plot, "ablation");
  if (c.plot) {
    for (std::size_t i = 0; i < r.ledgers.size(); ++i) {
      write_text(out / ("variant" + std::to_string(i)) / "loss.svg",
                 pipeline::loss_curve_svg(r.ledgers[i], r.ledgers[i][0].value("name", "")));
    }
  }
  return 0;
}

int cmd_bench(const Common& c, const std::string& ckpt, double duration, std::size_t reps) {
  const json cfg = load_config(c);
  std::unique_ptr<model::TwoStageModel> model;
  if (!ckpt.empty()) {
    model = checkpoint::load_model(checkpoint::load(ckpt));
  } else {
    model = std::make_unique<model::TwoStageModel>(train_config(cfg, c.seed).model, c.seed);
  }
  const auto r = pipeline::benchmark_rtf(*model, duration, reps, c.seed);
  json j = r.to_json();
  j["params"] = model->count_params();
  j["macs_per_second"] = model->count_macs(1.0);
  const fs::path out(c.out);
  fs::create_directories(out);
  write_text(out / "rtf.json", j.dump(2));
  std::printf("RTF %.4f (median %.4f s for %.2f s of audio, %zu reps, 1 thread, %s)\n", r.rtf,
              r.median_time, r.duration, reps, r.hardware.value("cpu", "?").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NAPSE personalized speech enhancement"};
  app.require_subcommand(1);
  Common common;

  auto* sim = app.add_subcommand("simulate", "simulate train/dev mixtures and manifests");
  add_common(sim, common);

  auto* train = app.add_subcommand("train", "run the three-phase training schedule");
  add_common(train, common);
  std::string resume;
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* enh = app.add_subcommand("enhance", "enhance one mixture");
  add_common(enh, common);
  std::string mixture, enroll, ckpt;
  int stage = 2;
  enh->add_option("--mixture", mixture, "mixture WAV")->required()->check(CLI::ExistingFile);
  enh->add_option("--enroll", enroll, "enrollment WAV")->required()->check(CLI::ExistingFile);
  enh->add_option("--checkpoint", ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  enh->add_option("--stage", stage, "output stage (1 or 2)")->check(CLI::IsMember({1, 2}));

  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a manifest");
  add_common(ev, common);
  std::string manifest;
  ev->add_option("--checkpoint", ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", manifest, "manifest (default: data.dev)")->check(CLI::ExistingFile);

  auto* abl = app.add_subcommand("ablate", "run the ablation ladder");
  add_common(abl, common);

  auto* bench = app.add_subcommand("bench-rtf", "single-thread real-time factor");
  add_common(bench, common);
  double duration = 10.0;
  std::size_t reps = 5;
  bench->add_option("--checkpoint", ckpt, "model checkpoint (default: fresh model)")
      ->check(CLI::ExistingFile);
  bench->add_option("--duration", duration, "seconds of audio");
  bench->add_option("--repetitions", reps, "timed runs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(common);
    if (*train) return cmd_train(common, resume);
    if (*enh) return cmd_enhance(common, mixture, enroll, ckpt, stage);
    if (*ev) return cmd_evaluate(common, ckpt, manifest);
    if (*abl) return cmd_ablate(common);
    if (*bench) return cmd_bench(common, ckpt, duration, reps);
  } catch (const std::exception& e) {
    std::cerr << "napse: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
