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

#include "napse/losses.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "napse/ops.hpp"

namespace napse::losses {
namespace {

constexpr double kMagEps = 1e-12;
constexpr double kTiny = 1e-30;

ag::Node* grad_input(ag::Node& self, std::size_t i) {
  ag::Node* in = self.inputs[i].get();
  return in->requires_grad ? in : nullptr;
}

struct SpecGeometry {
  std::size_t planes;  // number of complex planes P
  std::size_t plane_size;  // T * K
  std::size_t bins() const { return planes * plane_size; }
};

SpecGeometry check_spectra(const Shape& est, const Shape& ref, const char* op) {
  if (est != ref) {
    throw std::invalid_argument(std::string(op) + ": geometry mismatch " +
                                shape_str(est) + " vs " + shape_str(ref));
  }
  if (est.size() < 2 || est[0] % 2 != 0 || shape_numel(est) == 0) {
    throw std::invalid_argument(std::string(op) + ": expected planar complex [2P, ...], got " +
                                shape_str(est));
  }
  const std::size_t total = shape_numel(est);
  return {est[0] / 2, total / est[0]};
}

// Visits complex bin (re index, im index) pairs of a planar tensor.
template <typename F>
void for_each_bin(const SpecGeometry& g, F&& f) {
  for (std::size_t p = 0; p < g.planes; ++p) {
    const std::size_t re0 = 2 * p * g.plane_size;
    const std::size_t im0 = re0 + g.plane_size;
    for (std::size_t i = 0; i < g.plane_size; ++i) f(re0 + i, im0 + i);
  }
}

double powc(double mag, double c) { return mag > 0.0 ? std::pow(mag, c) : 0.0; }

// d|S|^c / d(re, im) = c |S|^(c-2) (re, im); zero at the origin.
void dmag_pow(double re, double im, double c, double& dre, double& dim) {
  const double m2 = re * re + im * im;
  if (m2 <= 0.0) {
    dre = dim = 0.0;
    return;
  }
  const double k = c * std::pow(std::max(m2, kMagEps * kMagEps), 0.5 * c - 1.0);
  dre = k * re;
  dim = k * im;
}

// Magnitude-domain loss with elementwise residual rule.
template <typename Residual>
ag::Var magnitude_loss(const ag::Var& est, const Tensor& ref, double c,
                       const char* name, Residual residual) {
  const SpecGeometry g = check_spectra(est.shape(), ref.shape(), name);
  const auto& e = est.value();
  double acc = 0.0;
  for_each_bin(g, [&](std::size_t r, std::size_t i) {
    const double d = residual(powc(std::hypot(ref[r], ref[i]), c) -
                              powc(std::hypot(e[r], e[i]), c));
    acc += d * d;
  });
  const double n = static_cast<double>(g.bins());
  return ag::make_op(Tensor({1}, acc / n), {est}, [ref, c, g, n, residual](ag::Node& self) {
    if (ag::Node* in = grad_input(self, 0)) {
      auto& gx = in->grad_buffer();
      const auto& e = in->value;
      const double s = self.grad[0] / n;
      for_each_bin(g, [&](std::size_t r, std::size_t i) {
        const double d = residual(powc(std::hypot(ref[r], ref[i]), c) -
                                  powc(std::hypot(e[r], e[i]), c));
        if (d == 0.0) return;
        double dre, dim;
        dmag_pow(e[r], e[i], c, dre, dim);
        // d/dE of (ref - est)^2 = -2 d * d|E|^c/dE
        gx[r] += -2.0 * d * dre * s;
        gx[i] += -2.0 * d * dim * s;
      });
    }
  });
}

}  // namespace

ag::Var si_snr_loss(const ag::Var& est, const Tensor& ref) {
  if (est.shape().size() != 1 || est.shape() != ref.shape()) {
    throw std::invalid_argument("si_snr_loss: length mismatch " +
                                shape_str(est.shape()) + " vs " +
                                shape_str(ref.shape()));
  }
  const std::size_t n = ref.numel();
  double me = 0.0, mr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    me += est.value()[i];
    mr += ref[i];
  }
  me /= static_cast<double>(n);
  mr /= static_cast<double>(n);
  std::vector<double> e(n), r(n);
  double dot = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = est.value()[i] - me;
    r[i] = ref[i] - mr;
    dot += e[i] * r[i];
    rr += r[i] * r[i];
  }
  if (rr <= kSilentEnergy) {
    throw std::invalid_argument("si_snr_loss: silent reference (energy " +
                                std::to_string(rr) + ")");
  }
  const double alpha = dot / rr;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = alpha * r[i];
    target += t * t;
    noise += (e[i] - t) * (e[i] - t);
  }
  // The residual is floored relative to the target energy, which keeps the
  // clipped value scale invariant.
  const double kdb = 10.0 / std::numbers::ln10;
  const double num = target + kTiny;
  const double den = noise + kSiSnrFloor * target + kTiny;
  const double loss = -kdb * (std::log(num) - std::log(den));
  return ag::make_op(
      Tensor({1}, loss), {est},
      [e = std::move(e), r = std::move(r), alpha, num, den, kdb](ag::Node& self) {
        ag::Node* in = grad_input(self, 0);
        if (!in) return;
        // target = (e.r)^2 / |r|^2, noise = |e - alpha r|^2; derivatives
        // with respect to the zero-meaned estimate, then projected back.
        const std::size_t n = e.size();
        const double gt = -kdb / num + kdb * kSiSnrFloor / den;
        const double gn = kdb / den;
        std::vector<double> g(n);
        double mean_g = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dtarget = 2.0 * alpha * r[i];
          const double dnoise = 2.0 * (e[i] - alpha * r[i]);
          g[i] = self.grad[0] * (gt * dtarget + gn * dnoise);
          mean_g += g[i];
        }
        mean_g /= static_cast<double>(n);
        auto& gx = in->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] - mean_g;
      });
}

double si_snr_db(std::span<const double> est, std::span<const double> ref) {
  Tensor r({ref.size()}, std::vector<double>(ref.begin(), ref.end()));
  Tensor e({est.size()}, std::vector<double>(est.begin(), est.end()));
  return -si_snr_loss(ag::constant(std::move(e)), r).item();
}

ag::Var mag_loss(const ag::Var& est, const Tensor& ref, double c) {
  return magnitude_loss(est, ref, c, "mag_loss", [](double d) { return d; });
}

ag::Var asym_loss(const ag::Var& est, const Tensor& ref, double c) {
  return magnitude_loss(est, ref, c, "asym_loss",
                        [](double d) { return d > 0.0 ? d : 0.0; });
}

Tensor compress_complex(const Tensor& spec, double c) {
  const SpecGeometry g = check_spectra(spec.shape(), spec.shape(), "compress_complex");
  Tensor out(spec.shape());
  for_each_bin(g, [&](std::size_t r, std::size_t i) {
    const double m = std::hypot(spec[r], spec[i]);
    const double k = m > 0.0 ? std::pow(m, c - 1.0) : 0.0;
    out[r] = k * spec[r];
    out[i] = k * spec[i];
  });
  return out;
}

Tensor compressed_magnitude(const Tensor& spec, double c) {
  const SpecGeometry g = check_spectra(spec.shape(), spec.shape(), "compressed_magnitude");
  Shape shape = spec.shape();
  shape[0] /= 2;
  Tensor out(shape);
  std::size_t k = 0;
  for_each_bin(g, [&](std::size_t r, std::size_t i) {
    out[k++] = powc(std::hypot(spec[r], spec[i]), c);
  });
  return out;
}

ag::Var compressed_magnitude(const ag::Var& spec, double c) {
  const SpecGeometry g = check_spectra(spec.shape(), spec.shape(), "compressed_magnitude");
  Tensor out = compressed_magnitude(spec.value(), c);
  return ag::make_op(std::move(out), {spec}, [g, c](ag::Node& self) {
    ag::Node* in = grad_input(self, 0);
    if (!in) return;
    auto& gx = in->grad_buffer();
    const Tensor& x = in->value;
    std::size_t k = 0;
    for_each_bin(g, [&](std::size_t r, std::size_t i) {
      double dre, dim;
      dmag_pow(x[r], x[i], c, dre, dim);
      gx[r] += self.grad[k] * dre;
      gx[i] += self.grad[k] * dim;
      ++k;
    });
  });
}

ag::Var compress_complex(const ag::Var& spec, double c) {
  const SpecGeometry g = check_spectra(spec.shape(), spec.shape(), "compress_complex");
  Tensor out = compress_complex(spec.value(), c);
  return ag::make_op(std::move(out), {spec}, [g, c](ag::Node& self) {
    ag::Node* in = grad_input(self, 0);
    if (!in) return;
    const auto& s = in->value;
    auto& gx = in->grad_buffer();
    for_each_bin(g, [&](std::size_t r, std::size_t i) {
      const double x = s[r], y = s[i];
      const double m2 = x * x + y * y;
      if (m2 <= 0.0) return;
      const double m2c = std::max(m2, kMagEps * kMagEps);
      const double a = std::pow(m2c, 0.5 * (c - 1.0));        // r^(c-1)
      const double b = (c - 1.0) * std::pow(m2c, 0.5 * (c - 3.0));  // (c-1) r^(c-3)
      const double gr = self.grad[r], gi = self.grad[i];
      gx[r] += gr * (a + b * x * x) + gi * (b * x * y);
      gx[i] += gr * (b * x * y) + gi * (a + b * y * y);
    });
  });
}

ag::Var ri_loss(const ag::Var& est, const Tensor& ref, double c) {
  const SpecGeometry g = check_spectra(est.shape(), ref.shape(), "ri_loss");
  const Tensor ref_c = compress_complex(ref, c);
  const ag::Var diff = ag::add_const(compress_complex(est, c), [&] {
    Tensor neg(ref_c.shape());
    for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -ref_c[i];
    return neg;
  }());
  // Squared error summed over both parts, averaged over complex bins.
  return ag::scale(ag::sum(ag::square(diff)), 1.0 / static_cast<double>(g.bins()));
}

std::string to_string(Term term) {
  switch (term) {
    case Term::kAsym: return "asym";
    case Term::kMag: return "mag";
    case Term::kRi: return "ri";
  }
  return "?";
}

ScaleSet default_scales() {
  const auto presets = dsp::multi_scale_presets();
  return ScaleSet(presets.begin(), presets.end());
}

ScaleSet single_scale() { return {dsp::multi_scale_presets()[1]}; }

namespace {

ag::Var term_on_spectra(Term term, const ag::Var& est, const Tensor& ref, double c) {
  switch (term) {
    case Term::kAsym: return asym_loss(est, ref, c);
    case Term::kMag: return mag_loss(est, ref, c);
    case Term::kRi: return ri_loss(est, ref, c);
  }
  throw std::invalid_argument("unknown loss term");
}

struct Spectra {
  ag::Var est;
  Tensor ref;
};

std::vector<Spectra> analyse(const ag::Var& est_wave, const Tensor& ref_wave,
                             const ScaleSet& scales) {
  if (est_wave.shape() != ref_wave.shape()) {
    throw std::invalid_argument("multi_scale: waveform length mismatch");
  }
  std::vector<Spectra> out;
  for (const auto& cfg : scales) {
    cfg.validate();
    out.push_back({ag::stft(est_wave, cfg), dsp::stft_forward(ref_wave.span(), cfg)});
  }
  return out;
}

StageLoss stage_total(const ag::Var& est, const Tensor& ref, const ag::Var& gan,
                      const LossConfig& cfg, bool with_ri) {
  if (cfg.scales.empty()) throw std::invalid_argument("stage loss: empty scale set");
  StageLoss out;
  const ag::Var sisnr = si_snr_loss(est, ref);
  out.breakdown.si_snr = sisnr.item();
  const auto spectra = analyse(est, ref, cfg.scales);
  const double inv_m = 1.0 / static_cast<double>(spectra.size());
  ag::Var total = ag::scale(sisnr, cfg.w_si_snr);
  for (const auto& s : spectra) {
    ag::Var per_scale = ag::add(ag::scale(asym_loss(s.est, s.ref, cfg.compression), cfg.w_asym),
                                ag::scale(mag_loss(s.est, s.ref, cfg.compression), cfg.w_mag));
    out.breakdown.asym.push_back(asym_loss(s.est, s.ref, cfg.compression).item());
    out.breakdown.mag.push_back(mag_loss(s.est, s.ref, cfg.compression).item());
    if (with_ri) {
      const ag::Var ri = ri_loss(s.est, s.ref, cfg.compression);
      out.breakdown.ri.push_back(ri.item());
      per_scale = ag::add(per_scale, ag::scale(ri, cfg.w_ri));
    }
    total = ag::add(total, ag::scale(per_scale, inv_m));
  }
  if (gan) {
    out.breakdown.gan = gan.item();
    total = ag::add(total, ag::scale(gan, cfg.w_gan));
  }
  out.breakdown.total = total.item();
  out.total = total;
  return out;
}

}  // namespace

ag::Var multi_scale(Term term, const ag::Var& est_wave, const Tensor& ref_wave,
                    const ScaleSet& scales, double c) {
  if (scales.empty()) throw std::invalid_argument("multi_scale: empty scale set");
  const auto spectra = analyse(est_wave, ref_wave, scales);
  ag::Var acc;
  for (const auto& s : spectra) {
    const ag::Var t = term_on_spectra(term, s.est, s.ref, c);
    acc = acc ? ag::add(acc, t) : t;
  }
  return ag::scale(acc, 1.0 / static_cast<double>(spectra.size()));
}

StageLoss stage1_total(const ag::Var& est, const Tensor& ref, const ag::Var& gan,
                       const LossConfig& config) {
  return stage_total(est, ref, gan, config, false);
}

StageLoss stage2_total(const ag::Var& est, const Tensor& ref, const ag::Var& gan,
                       const LossConfig& config) {
  return stage_total(est, ref, gan, config, true);
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"si_snr", si_snr}, {"asym", asym}, {"mag", mag},
          {"ri", ri},         {"gan", gan},   {"total", total}};
}

}  // namespace napse::losses
