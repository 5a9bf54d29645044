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

#include "napse/model.hpp"

#include <cmath>
#include <stdexcept>

#include "napse/losses.hpp"
#include "napse/ops.hpp"

namespace napse::model {
namespace {

using nlohmann::json;

ag::Node* grad_input(ag::Node& self, std::size_t i) {
  ag::Node* in = self.inputs[i].get();
  return in->requires_grad ? in : nullptr;
}

// mask [B, T, K] times the complex planes of spec [2B, T, K].
ag::Var apply_mask(const ag::Var& mask, const Tensor& spec) {
  const std::size_t B = mask.shape()[0];
  const std::size_t plane = mask.numel() / B;
  if (spec.numel() != 2 * mask.numel()) {
    throw std::invalid_argument("apply_mask: mask " + shape_str(mask.shape()) +
                                " vs spectrum " + shape_str(spec.shape()));
  }
  Tensor out(spec.shape());
  const auto& m = mask.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      out[(2 * b) * plane + i] = m[b * plane + i] * spec[(2 * b) * plane + i];
      out[(2 * b + 1) * plane + i] = m[b * plane + i] * spec[(2 * b + 1) * plane + i];
    }
  return ag::make_op(std::move(out), {mask}, [spec, B, plane](ag::Node& self) {
    if (ag::Node* in = grad_input(self, 0)) {
      auto& g = in->grad_buffer();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t r = (2 * b) * plane + i, q = (2 * b + 1) * plane + i;
          g[b * plane + i] += self.grad[r] * spec[r] + self.grad[q] * spec[q];
        }
    }
  });
}

// re [B, T, K], im [B, T, K] -> planar [2B, T, K].
ag::Var interleave(const ag::Var& re, const ag::Var& im) {
  const std::size_t B = re.shape()[0];
  std::vector<ag::Var> parts;
  for (std::size_t b = 0; b < B; ++b) {
    parts.push_back(ag::slice0(re, b, b + 1));
    parts.push_back(ag::slice0(im, b, b + 1));
  }
  return ag::concat0(parts);
}

std::size_t conv_out(std::size_t f, std::size_t k) { return (f + 2 * ((k - 1) / 2) - k) / 2 + 1; }

}  // namespace

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.fd_channels = {16, 32, 64};
  c.bottleneck_channels = 64;
  return c;
}

dsp::StftConfig ModelConfig::subband_stft() const {
  return dsp::enhancement_stft(sample_rate / static_cast<int>(num_subbands));
}

std::vector<std::size_t> ModelConfig::freq_sizes() const {
  std::vector<std::size_t> f{subband_stft().num_bins()};
  for (std::size_t i = 0; i < fd_channels.size(); ++i) f.push_back(conv_out(f.back(), fd_kernel_freq));
  return f;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (num_subbands < 2) fail("num_subbands < 2");
  if (sample_rate % static_cast<int>(num_subbands) != 0) fail("sample_rate not divisible by bands");
  if (pqmf_taps % num_subbands != 0 || pqmf_taps < 8 * num_subbands) fail("bad pqmf_taps");
  if (fd_channels.size() != 3) fail("expected three FD layers");
  if (gtcm_blocks != 4) fail("expected four S-GTCM blocks");
  if (dilations.size() != gtcm_blocks) fail("one dilation per S-GTCM block");
  if (fd_kernel_freq % 2 == 0 || fd_kernel_time == 0) fail("FD kernel must be odd in frequency");
  if (embedding_dim != speaker::kEmbeddingDim) fail("embedding_dim must be 256");
  if (!(mask_ceiling > 0.0)) fail("mask_ceiling must be positive");
  if (!(compression > 0.0 && compression <= 1.0)) fail("compression outside (0, 1]");
  for (auto c : fd_channels) if (c == 0) fail("zero channels");
  if (bottleneck_channels == 0 || gtcm_kernel == 0) fail("zero bottleneck");
  subband_stft().validate();
  // FU layers must land back on the FD sizes.
  const auto f = freq_sizes();
  for (std::size_t i = f.size() - 1; i > 0; --i) {
    if ((f[i] - 1) * 2 + fd_kernel_freq - 2 * ((fd_kernel_freq - 1) / 2) != f[i - 1]) {
      fail("frequency sizes do not invert under stride-2 up-sampling");
    }
  }
}

json ModelConfig::to_json() const {
  return {{"sample_rate", sample_rate},
          {"num_subbands", num_subbands},
          {"pqmf_taps", pqmf_taps},
          {"fd_channels", fd_channels},
          {"fd_kernel_time", fd_kernel_time},
          {"fd_kernel_freq", fd_kernel_freq},
          {"bottleneck_channels", bottleneck_channels},
          {"gtcm_blocks", gtcm_blocks},
          {"gtcm_kernel", gtcm_kernel},
          {"dilations", dilations},
          {"embedding_dim", embedding_dim},
          {"use_fbank", use_fbank},
          {"mask_ceiling", mask_ceiling},
          {"compression", compression},
          {"stage2_only", stage2_only},
          {"shared_fusion", true}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  if (j.contains("preset")) {
    const auto p = j.at("preset").get<std::string>();
    if (p == "toy") c = toy();
    else if (p != "full") throw std::invalid_argument("unknown model preset: " + p);
  }
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.num_subbands = j.value("num_subbands", c.num_subbands);
  c.pqmf_taps = j.value("pqmf_taps", c.pqmf_taps);
  c.fd_channels = j.value("fd_channels", c.fd_channels);
  c.fd_kernel_time = j.value("fd_kernel_time", c.fd_kernel_time);
  c.fd_kernel_freq = j.value("fd_kernel_freq", c.fd_kernel_freq);
  c.bottleneck_channels = j.value("bottleneck_channels", c.bottleneck_channels);
  c.gtcm_blocks = j.value("gtcm_blocks", c.gtcm_blocks);
  c.gtcm_kernel = j.value("gtcm_kernel", c.gtcm_kernel);
  c.dilations = j.value("dilations", c.dilations);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.use_fbank = j.value("use_fbank", c.use_fbank);
  c.mask_ceiling = j.value("mask_ceiling", c.mask_ceiling);
  c.compression = j.value("compression", c.compression);
  c.stage2_only = j.value("stage2_only", c.stage2_only);
  c.validate();
  return c;
}

TwoStageModel::TwoStageModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  pqmf_ = std::make_shared<const dsp::PqmfFilterbank>(
      dsp::design_pqmf(config_.num_subbands, config_.pqmf_taps));
  nn::Rng rng(seed);
  const std::size_t B = config_.num_subbands;
  const auto freqs = config_.freq_sizes();
  const auto& ch = config_.fd_channels;

  auto build = [&](UNetStage& s, const std::string& group, std::size_t in_channels,
                   std::size_t heads, std::size_t out_channels, bool zero_last) {
    ag::Conv2dOptions fd_opts;
    fd_opts.stride_freq = 2;
    fd_opts.pad_freq = (config_.fd_kernel_freq - 1) / 2;
    fd_opts.pad_time_front = config_.fd_kernel_time - 1;  // causal
    std::size_t prev = in_channels;
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string n = group + ".fd" + std::to_string(i);
      s.fd.emplace_back(store_, n, group, prev, ch[i], config_.fd_kernel_time,
                        config_.fd_kernel_freq, fd_opts, rng);
      s.gates.emplace_back(store_, n + ".gate", group, config_.embedding_dim, ch[i], rng, 0.5);
      prev = ch[i];
    }
    const std::size_t folded = ch[2] * freqs[3];
    const std::size_t H = config_.bottleneck_channels;
    s.squeeze = nn::Conv2d(store_, group + ".squeeze", group, folded, H, 1, 1, {}, rng);
    for (std::size_t b = 0; b < config_.gtcm_blocks; ++b) {
      s.gtcm.emplace_back(store_, group + ".gtcm" + std::to_string(b), group, H,
                          config_.gtcm_kernel, config_.dilations[b], rng);
    }
    s.expand = nn::Conv2d(store_, group + ".expand", group, H, folded, 1, 1, {}, rng);
    const std::size_t pad = (config_.fd_kernel_freq - 1) / 2;
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<nn::ConvTransposeFreq> dec;
      for (std::size_t j = 0; j < 3; ++j) {
        const std::size_t level = 2 - j;  // deepest first
        const std::size_t out = level == 0 ? out_channels : ch[level - 1];
        const std::string n = group + ".head" + std::to_string(h) + ".fu" + std::to_string(level);
        dec.emplace_back(store_, n, group, 2 * ch[level], out, config_.fd_kernel_freq, 2, pad, rng);
      }
      if (zero_last) {
        dec.back().weight.mutable_value().fill(0.0);
        dec.back().bias.mutable_value().fill(0.0);
      }
      s.decoders.push_back(std::move(dec));
    }
  };

  if (!config_.stage2_only) build(mag_, kMagNet, B, 1, B, false);
  build(com_, kComNet, 4 * B, 2, B, true);
  fusion_ = speaker::FusionLayer(store_, kFusion, config_.use_fbank, rng);
}

ag::Var TwoStageModel::fuse(const std::vector<double>& embedding,
                            const speaker::FbankStats& stats) const {
  return fusion_(embedding, stats);
}

SubbandSpectra TwoStageModel::analyse(std::span<const double> mixture) const {
  if (mixture.empty()) throw std::invalid_argument("analyse: empty mixture");
  const std::size_t M = config_.num_subbands;
  const std::size_t delay = pqmf_->delay();
  SubbandSpectra out;
  out.num_samples = mixture.size();
  out.padded_samples = (mixture.size() + delay + M - 1) / M * M;
  std::vector<double> padded(out.padded_samples, 0.0);
  std::copy(mixture.begin(), mixture.end(), padded.begin());
  const Tensor bands = dsp::pqmf_analysis(padded, *pqmf_);
  const std::size_t L = bands.dim(1);
  const auto cfg = config_.subband_stft();
  const std::size_t T = cfg.num_frames(L), K = cfg.num_bins();
  out.spec = Tensor({2 * M, T, K});
  for (std::size_t b = 0; b < M; ++b) {
    const Tensor s = dsp::stft_forward(bands.span().subspan(b * L, L), cfg);
    std::copy(s.vec().begin(), s.vec().end(), out.spec.data() + 2 * b * T * K);
  }
  out.magnitude = losses::compressed_magnitude(out.spec, config_.compression);
  out.compressed = losses::compress_complex(out.spec, config_.compression);
  return out;
}

ag::Var TwoStageModel::unet(const UNetStage& s, const ag::Var& input, const ag::Var& fused,
                            std::size_t heads) const {
  // Returns the heads concatenated on the channel axis.
  std::vector<ag::Var> skips;
  ag::Var h = input;
  for (std::size_t i = 0; i < 3; ++i) {
    h = ag::elu(s.fd[i](h));
    h = ag::mul_channel(h, ag::sigmoid(s.gates[i](fused)));
    skips.push_back(h);
  }
  const std::size_t C3 = h.shape()[0], F3 = h.shape()[2];
  ag::Var b = s.squeeze(ag::fold_freq(h));
  for (const auto& blk : s.gtcm) b = blk(b);
  const ag::Var bottom = ag::unfold_freq(s.expand(b), C3, F3);
  std::vector<ag::Var> outs;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    ag::Var d = bottom;
    for (std::size_t j = 0; j < 3; ++j) {
      std::vector<ag::Var> cat{d, skips[2 - j]};
      d = s.decoders[hd][j](ag::concat0(cat));
      if (j < 2) d = ag::elu(d);
    }
    outs.push_back(d);
  }
  return outs.size() == 1 ? outs[0] : ag::concat0(outs);
}

std::pair<ag::Var, ag::Var> TwoStageModel::mag_net_forward(const SubbandSpectra& mix,
                                                           const ag::Var& fused,
                                                           const ForwardOptions& opts) const {
  if (config_.stage2_only) throw std::logic_error("mag_net_forward: model has no MAG-Net");
  ag::Var mask;
  if (opts.force_mask) {
    mask = ag::constant(Tensor(mix.magnitude.shape(), *opts.force_mask));
  } else {
    const ag::Var logits = unet(mag_, ag::constant(mix.magnitude), fused, 1);
    mask = ag::scale(ag::sigmoid(logits), config_.mask_ceiling);
  }
  return {mask, apply_mask(mask, mix.spec)};
}

ag::Var TwoStageModel::com_net_forward(const SubbandSpectra& mix, const ag::Var& stage1_spec,
                                       const ag::Var& fused, const ForwardOptions& opts) const {
  const ag::Var base = stage1_spec ? stage1_spec : ag::constant(mix.spec);
  if (opts.zero_refinement) return base;
  const ag::Var base_c = stage1_spec ? losses::compress_complex(stage1_spec, config_.compression)
                                     : ag::constant(mix.compressed);
  std::vector<ag::Var> in{ag::constant(mix.compressed), base_c};
  const ag::Var heads = unet(com_, ag::concat0(in), fused, 2);
  const std::size_t B = config_.num_subbands;
  const ag::Var delta = interleave(ag::slice0(heads, 0, B), ag::slice0(heads, B, 2 * B));
  return ag::add(base, delta);
}

ag::Var TwoStageModel::synthesize(const ag::Var& spec, const SubbandSpectra& mix) const {
  const std::size_t M = config_.num_subbands;
  const std::size_t L = mix.padded_samples / M;
  const auto cfg = config_.subband_stft();
  std::vector<ag::Var> bands;
  for (std::size_t b = 0; b < M; ++b) {
    const ag::Var w = ag::istft(ag::slice0(spec, 2 * b, 2 * b + 2), cfg, L);
    bands.push_back(ag::reshape(w, {1, L}));
  }
  const ag::Var merged = ag::pqmf_synthesis(ag::concat0(bands), pqmf_);
  return ag::crop1d(merged, pqmf_->delay(), mix.num_samples);
}

ag::Var TwoStageModel::s_gtcm_forward(const std::string& stage, const ag::Var& x) const {
  const UNetStage& s = stage == kMagNet ? mag_ : com_;
  if (s.gtcm.empty()) throw std::invalid_argument("s_gtcm_forward: no stage " + stage);
  ag::Var h = x;
  for (const auto& blk : s.gtcm) h = blk(h);
  return h;
}

StageOutput TwoStageModel::forward(std::span<const double> mixture, const ag::Var& fused,
                                   const ForwardOptions& opts) const {
  const SubbandSpectra mix = analyse(mixture);
  StageOutput out;
  if (!config_.stage2_only) {
    std::tie(out.mask, out.stage1_spec) = mag_net_forward(mix, fused, opts);
    out.stage1_wave = synthesize(out.stage1_spec, mix);
  }
  if (opts.run_stage2) {
    out.stage2_spec = com_net_forward(mix, out.stage1_spec, fused, opts);
    out.stage2_wave = synthesize(out.stage2_spec, mix);
  }
  return out;
}

std::map<std::string, std::size_t> TwoStageModel::count_params() const {
  std::map<std::string, std::size_t> out;
  for (const auto& g : {kMagNet, kComNet, kFusion}) out[g] = store_.count(g);
  out["total"] = store_.count();
  return out;
}

std::size_t TwoStageModel::count_macs(double seconds) const {
  const std::size_t M = config_.num_subbands;
  const auto n = static_cast<std::size_t>(seconds * config_.sample_rate);
  const std::size_t L = (n + pqmf_->delay() + M - 1) / M;
  const std::size_t T = config_.subband_stft().num_frames(L);
  const auto f = config_.freq_sizes();
  const auto& ch = config_.fd_channels;
  const std::size_t H = config_.bottleneck_channels;
  const std::size_t kt = config_.fd_kernel_time, kf = config_.fd_kernel_freq;
  auto stage = [&](std::size_t in, std::size_t heads, std::size_t out) {
    std::size_t macs = 0, prev = in;
    for (std::size_t i = 0; i < 3; ++i) {
      macs += ch[i] * prev * kt * kf * f[i + 1] * T + config_.embedding_dim * ch[i];
      prev = ch[i];
    }
    const std::size_t folded = ch[2] * f[3];
    macs += 2 * folded * H * T;
    macs += config_.gtcm_blocks * (2 * H * H * config_.gtcm_kernel + H * H) * T;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t level = 0; level < 3; ++level) {
        const std::size_t o = level == 0 ? out : ch[level - 1];
        macs += 2 * ch[level] * o * kf * f[level + 1] * T;
      }
    }
    return macs;
  };
  std::size_t total = stage(4 * M, 2, M);
  if (!config_.stage2_only) total += stage(M, 1, M);
  total += speaker::fusion_param_count(config_.use_fbank);
  return total;
}

Conditioning condition(const dsp::Waveform& enrollment, const speaker::EmbeddingProvider& provider,
                       const std::string& utterance_id) {
  return {provider.embed(enrollment, utterance_id), speaker::enrollment_stats(enrollment)};
}

Enhanced enhance(const dsp::Waveform& mixture, const Conditioning& cond, TwoStageModel& model) {
  mixture.validate();
  if (mixture.sample_rate != model.config().sample_rate) {
    throw std::invalid_argument("enhance: mixture at " + std::to_string(mixture.sample_rate) +
                                " Hz, model expects " + std::to_string(model.config().sample_rate));
  }
  nn::NoGradScope no_grad(model.parameters());
  const ag::Var fused = model.fuse(cond.embedding, cond.stats);
  const auto out = model.forward(mixture.samples, fused);
  Enhanced e;
  const int rate = mixture.sample_rate;
  if (out.stage1_wave) e.stage1 = dsp::Waveform(out.stage1_wave.value().vec(), rate);
  e.stage2 = dsp::Waveform(out.stage2_wave.value().vec(), rate);
  if (!out.stage1_wave) e.stage1 = e.stage2;
  return e;
}

Enhanced enhance(const dsp::Waveform& mixture, const dsp::Waveform& enrollment,
                 TwoStageModel& model, const speaker::EmbeddingProvider& provider,
                 const std::string& utterance_id) {
  if (enrollment.sample_rate != model.config().sample_rate) {
    throw std::invalid_argument("enhance: enrollment sample rate mismatch");
  }
  return enhance(mixture, condition(enrollment, provider, utterance_id), model);
}

}  // namespace napse::model
