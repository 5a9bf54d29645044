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

// Supervised enhancement losses.
//
//   L1 = L_sisnr + 1/M sum_m (L_asym + L_mag)          + L_G
//   L2 = L_sisnr + 1/M sum_m (L_asym + L_mag + L_RI)   + L_G
//
// where m runs over STFT resolutions. Spectral terms compare power-law
// compressed spectra |S|^c (c = 0.5 by default).

#ifndef NAPSE_LOSSES_HPP_
#define NAPSE_LOSSES_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "napse/autograd.hpp"
#include "napse/dsp.hpp"

namespace napse::losses {

inline constexpr double kSiSnrFloor = 1e-10;
inline constexpr double kSilentEnergy = 1e-8;

// Negative SI-SNR in dB of `est` against `ref` (both zero-meaned).
// Throws std::invalid_argument for a silent reference.
ag::Var si_snr_loss(const ag::Var& est, const Tensor& ref);
double si_snr_db(std::span<const double> est, std::span<const double> ref);

// Planar spectra [2P, T, K] (re/im plane pairs). Means run over the
// P*T*K complex bins.
ag::Var mag_loss(const ag::Var& est, const Tensor& ref, double compression = 0.5);
ag::Var asym_loss(const ag::Var& est, const Tensor& ref, double compression = 0.5);
ag::Var ri_loss(const ag::Var& est, const Tensor& ref, double compression = 0.5);

// |S|^(c-1) S per complex bin, zero where S = 0.
ag::Var compress_complex(const ag::Var& spec, double compression);
Tensor compress_complex(const Tensor& spec, double compression);
// |S|^c per complex bin: [2P, T, K] -> [P, T, K].
Tensor compressed_magnitude(const Tensor& spec, double compression);
ag::Var compressed_magnitude(const ag::Var& spec, double compression);

enum class Term { kAsym, kMag, kRi };
std::string to_string(Term term);

using ScaleSet = std::vector<dsp::StftConfig>;
ScaleSet default_scales();
// The single 20 ms / 10 ms resolution used when multi-scale is disabled.
ScaleSet single_scale();

// Arithmetic mean over `scales` of `term` between the STFTs of the two
// waveforms.
ag::Var multi_scale(Term term, const ag::Var& est_wave, const Tensor& ref_wave,
                    const ScaleSet& scales, double compression = 0.5);

struct LossConfig {
  ScaleSet scales = default_scales();
  double compression = 0.5;
  double w_si_snr = 1.0;
  double w_asym = 1.0;
  double w_mag = 1.0;
  double w_ri = 1.0;
  double w_gan = 1.0;
};

struct LossBreakdown {
  double si_snr = 0.0;
  std::vector<double> asym, mag, ri;  // one entry per scale
  double gan = 0.0;
  double total = 0.0;
  nlohmann::json to_json() const;
};

struct StageLoss {
  ag::Var total;
  LossBreakdown breakdown;
};

// `gan_term` may be an empty Var (no adversarial term).
StageLoss stage1_total(const ag::Var& est, const Tensor& ref,
                       const ag::Var& gan_term, const LossConfig& config = {});
StageLoss stage2_total(const ag::Var& est, const Tensor& ref,
                       const ag::Var& gan_term, const LossConfig& config = {});

}  // namespace napse::losses

#endif  // NAPSE_LOSSES_HPP_
