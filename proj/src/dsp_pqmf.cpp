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

// Pseudo-QMF cosine-modulated filterbank.
//
//   analysis:  y_k[m] = sqrt(M) * sum_j h_k[j] x[M m - j]
//   synthesis: x'[n]  = sqrt(M) * sum_k sum_m y_k[m] g_k[n - M m]
//
// h_k[n] = 2 p[n] cos((2k+1) pi/(2M) (n - (N-1)/2) + (-1)^k pi/4) and g_k
// uses the opposite phase sign, so x' is x delayed by N - 1 samples up to
// the prototype's aliasing residue. The sqrt(M) gains make the split
// approximately energy preserving.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "napse/dsp.hpp"

namespace napse::dsp {
namespace {

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

std::vector<double> kaiser_sinc(std::size_t taps, double cutoff, double beta) {
  std::vector<double> h(taps);
  const double centre = (static_cast<double>(taps) - 1.0) / 2.0;
  const double wc = std::numbers::pi * cutoff;
  const double norm = bessel_i0(beta);
  for (std::size_t n = 0; n < taps; ++n) {
    const double m = static_cast<double>(n) - centre;
    const double sinc = std::abs(m) < 1e-12 ? wc / std::numbers::pi
                                            : std::sin(wc * m) / (std::numbers::pi * m);
    const double r = m / (centre + 0.5);
    const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    h[n] = sinc * win;
  }
  return h;
}

// Deviation of the prototype autocorrelation from a 2M-th band (Nyquist)
// filter: max |r[N-1 + 2 M l]| over l != 0. Zero means the cosine
// modulated bank is free of the dominant aliasing/distortion terms.
double nyquist_deviation(const std::vector<double>& h, std::size_t bands) {
  const long n = static_cast<long>(h.size());
  double worst = 0.0;
  const long step = 2 * static_cast<long>(bands);
  for (long lag = step; lag < n; lag += step) {
    double r = 0.0;
    for (long i = 0; i + lag < n; ++i) r += h[static_cast<std::size_t>(i)] *
                                            h[static_cast<std::size_t>(i + lag)];
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

}  // namespace

PqmfFilterbank design_pqmf(std::size_t num_bands, std::size_t taps,
                           double cutoff) {
  if (num_bands < 2) throw std::invalid_argument("design_pqmf: num_bands < 2");
  if (taps % num_bands != 0) {
    throw std::invalid_argument("design_pqmf: taps must be a multiple of num_bands");
  }
  if (taps < 8 * num_bands) {
    throw std::invalid_argument("design_pqmf: " + std::to_string(taps) +
                                " taps is infeasible for " +
                                std::to_string(num_bands) + " bands");
  }
  PqmfFilterbank fb;
  fb.num_bands = num_bands;
  if (cutoff <= 0.0) {
    // Golden-section search around the ideal 1/(2M) band edge.
    const double ideal = 1.0 / (2.0 * static_cast<double>(num_bands));
    double a = 0.5 * ideal, b = 1.5 * ideal;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto cost = [&](double c) {
      return nyquist_deviation(kaiser_sinc(taps, c, fb.kaiser_beta), num_bands);
    };
    double c1 = b - phi * (b - a), c2 = a + phi * (b - a);
    double f1 = cost(c1), f2 = cost(c2);
    for (int it = 0; it < 80; ++it) {
      if (f1 < f2) {
        b = c2; c2 = c1; f2 = f1;
        c1 = b - phi * (b - a); f1 = cost(c1);
      } else {
        a = c1; c1 = c2; f1 = f2;
        c2 = a + phi * (b - a); f2 = cost(c2);
      }
    }
    cutoff = 0.5 * (a + b);
  }
  fb.cutoff = cutoff;
  fb.prototype = kaiser_sinc(taps, cutoff, fb.kaiser_beta);
  // Unit DC gain of the prototype, so each band has unit passband gain.
  double dc = 0.0;
  for (double v : fb.prototype) dc += v;
  for (double& v : fb.prototype) v /= dc;

  const double centre = (static_cast<double>(taps) - 1.0) / 2.0;
  const double M = static_cast<double>(num_bands);
  fb.analysis.assign(num_bands, std::vector<double>(taps));
  fb.synthesis.assign(num_bands, std::vector<double>(taps));
  for (std::size_t k = 0; k < num_bands; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t n = 0; n < taps; ++n) {
      const double arg = (2.0 * static_cast<double>(k) + 1.0) *
                         std::numbers::pi / (2.0 * M) *
                         (static_cast<double>(n) - centre);
      fb.analysis[k][n] =
          2.0 * fb.prototype[n] * std::cos(arg + sign * std::numbers::pi / 4.0);
      fb.synthesis[k][n] =
          2.0 * fb.prototype[n] * std::cos(arg - sign * std::numbers::pi / 4.0);
    }
  }
  return fb;
}

Tensor pqmf_analysis(std::span<const double> x, const PqmfFilterbank& fb) {
  if (x.size() < fb.taps()) {
    throw std::invalid_argument("pqmf_analysis: input shorter than prototype");
  }
  const std::size_t M = fb.num_bands;
  const std::size_t L = fb.subband_length(x.size());
  const double gain = std::sqrt(static_cast<double>(M));
  Tensor out({M, L});
  for (std::size_t k = 0; k < M; ++k) {
    const auto& h = fb.analysis[k];
    for (std::size_t m = 0; m < L; ++m) {
      const std::size_t n = m * M;
      double acc = 0.0;
      const std::size_t jmax = std::min(h.size(), n + 1);
      for (std::size_t j = 0; j < jmax; ++j) {
        if (n - j < x.size()) acc += h[j] * x[n - j];
      }
      out.at(k, m) = gain * acc;
    }
  }
  return out;
}

std::vector<double> pqmf_analysis_adjoint(const Tensor& grad_subbands,
                                          const PqmfFilterbank& fb,
                                          std::size_t num_samples) {
  const std::size_t M = fb.num_bands;
  const std::size_t L = grad_subbands.dim(1);
  const double gain = std::sqrt(static_cast<double>(M));
  std::vector<double> grad(num_samples, 0.0);
  for (std::size_t k = 0; k < M; ++k) {
    const auto& h = fb.analysis[k];
    for (std::size_t m = 0; m < L; ++m) {
      const std::size_t n = m * M;
      const double g = gain * grad_subbands.at(k, m);
      const std::size_t jmax = std::min(h.size(), n + 1);
      for (std::size_t j = 0; j < jmax; ++j) {
        if (n - j < num_samples) grad[n - j] += h[j] * g;
      }
    }
  }
  return grad;
}

std::vector<double> pqmf_synthesis(const Tensor& subbands,
                                   const PqmfFilterbank& fb) {
  if (subbands.rank() != 2 || subbands.dim(0) != fb.num_bands) {
    throw std::invalid_argument("pqmf_synthesis: expected " +
                                std::to_string(fb.num_bands) + " bands, got " +
                                shape_str(subbands.shape()));
  }
  const std::size_t M = fb.num_bands;
  const std::size_t L = subbands.dim(1);
  const std::size_t N = M * L;
  const double gain = std::sqrt(static_cast<double>(M));
  std::vector<double> out(N, 0.0);
  for (std::size_t k = 0; k < M; ++k) {
    const auto& g = fb.synthesis[k];
    for (std::size_t m = 0; m < L; ++m) {
      const double y = gain * subbands.at(k, m);
      const std::size_t base = m * M;
      const std::size_t jmax = std::min(g.size(), N - base);
      for (std::size_t j = 0; j < jmax; ++j) out[base + j] += g[j] * y;
    }
  }
  return out;
}

Tensor pqmf_synthesis_adjoint(std::span<const double> grad_wave,
                              const PqmfFilterbank& fb,
                              std::size_t subband_length) {
  const std::size_t M = fb.num_bands;
  const std::size_t N = M * subband_length;
  if (grad_wave.size() != N) {
    throw std::invalid_argument("pqmf_synthesis_adjoint: length mismatch");
  }
  const double gain = std::sqrt(static_cast<double>(M));
  Tensor out({M, subband_length});
  for (std::size_t k = 0; k < M; ++k) {
    const auto& g = fb.synthesis[k];
    for (std::size_t m = 0; m < subband_length; ++m) {
      const std::size_t base = m * M;
      const std::size_t jmax = std::min(g.size(), N - base);
      double acc = 0.0;
      for (std::size_t j = 0; j < jmax; ++j) acc += g[j] * grad_wave[base + j];
      out.at(k, m) = gain * acc;
    }
  }
  return out;
}

}  // namespace napse::dsp
