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

#include "napse/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace napse::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace parallel {
namespace {

using Index = long;

// Output frequency range [lo, hi) whose input index fo*stride + k - pad lies
// inside [0, in_freq).
void valid_freq_range(Index in_freq, Index out_freq, Index stride, Index k,
                      Index pad, Index& lo, Index& hi) {
  lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  hi = (in_freq - 1 + pad - k);
  hi = hi < 0 ? 0 : hi / stride + 1;
  hi = std::min(hi, out_freq);
}

// Input frequency range [lo, hi) whose output index fi*stride + k - pad lies
// inside [0, out_freq).
void transposed_range(Index in_freq, Index out_freq, Index stride, Index k,
                      Index pad, Index& lo, Index& hi) {
  lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  hi = out_freq - 1 + pad - k;
  hi = hi < 0 ? 0 : std::min(in_freq, hi / stride + 1);
}

// Output time range [lo, hi) whose input frame to*stride + offset lies
// inside [0, in_time).
void valid_time_range(Index in_time, Index out_time, Index offset, Index& lo,
                      Index& hi) {
  lo = offset < 0 ? -offset : 0;
  hi = std::max<Index>(lo, std::min(out_time, in_time - offset));
}

// Feature maps with a single frequency bin are contiguous along time.
bool time_only(const Conv2dGeometry& g) {
  return g.in_freq == 1 && g.kernel_freq == 1 && g.pad_freq == 0 &&
         g.stride_time == 1;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> in,
                    std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const Index T = static_cast<Index>(g.out_time());
  const Index F = static_cast<Index>(g.out_freq());
  const Index Ti = static_cast<Index>(g.in_time);
  const Index Fi = static_cast<Index>(g.in_freq);
  const Index C = static_cast<Index>(g.out_channels);
  const Index KT = static_cast<Index>(g.kernel_time);
  const Index KF = static_cast<Index>(g.kernel_freq);
  const Index st = static_cast<Index>(g.stride_time);
  const Index sf = static_cast<Index>(g.stride_freq);
  const Index dt = static_cast<Index>(g.dilation_time);
  const Index pt = static_cast<Index>(g.pad_time_front);
  const Index pf = static_cast<Index>(g.pad_freq);
  const Index Ci = static_cast<Index>(g.in_channels);

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < C; ++co) {
    double* out_c = out.data() + co * T * F;
    std::fill(out_c, out_c + T * F, bias.empty() ? 0.0 : bias[co]);
    for (Index ci = 0; ci < Ci; ++ci) {
      const double* in_c = in.data() + ci * Ti * Fi;
      if (time_only(g)) {
        for (Index kt = 0; kt < KT; ++kt) {
          const double w = weight[(co * Ci + ci) * KT + kt];
          Index lo, hi;
          valid_time_range(Ti, T, kt * dt - pt, lo, hi);
          const double* src = in_c + kt * dt - pt;
          for (Index to = lo; to < hi; ++to) out_c[to] += w * src[to];
        }
        continue;
      }
      for (Index kt = 0; kt < KT; ++kt) {
        for (Index kf = 0; kf < KF; ++kf) {
          const double w = weight[((co * Ci + ci) * KT + kt) * KF + kf];
          Index lo, hi;
          valid_freq_range(Fi, F, sf, kf, pf, lo, hi);
          for (Index to = 0; to < T; ++to) {
            const Index ti = to * st + kt * dt - pt;
            if (ti < 0 || ti >= Ti) continue;
            const double* in_row = in_c + ti * Fi + kf - pf;
            double* out_row = out_c + to * F;
            if (sf == 1) {
              for (Index fo = lo; fo < hi; ++fo) out_row[fo] += w * in_row[fo];
            } else {
              for (Index fo = lo; fo < hi; ++fo) {
                out_row[fo] += w * in_row[fo * sf];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g,
                           std::span<const double> grad_out,
                           std::span<const double> weight,
                           std::span<double> grad_in) {
  const Index T = static_cast<Index>(g.out_time());
  const Index F = static_cast<Index>(g.out_freq());
  const Index Ti = static_cast<Index>(g.in_time);
  const Index Fi = static_cast<Index>(g.in_freq);
  const Index C = static_cast<Index>(g.out_channels);
  const Index KT = static_cast<Index>(g.kernel_time);
  const Index KF = static_cast<Index>(g.kernel_freq);
  const Index st = static_cast<Index>(g.stride_time);
  const Index sf = static_cast<Index>(g.stride_freq);
  const Index dt = static_cast<Index>(g.dilation_time);
  const Index pt = static_cast<Index>(g.pad_time_front);
  const Index pf = static_cast<Index>(g.pad_freq);
  const Index Ci = static_cast<Index>(g.in_channels);

#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < Ci; ++ci) {
    double* gin_c = grad_in.data() + ci * Ti * Fi;
    for (Index co = 0; co < C; ++co) {
      const double* gout_c = grad_out.data() + co * T * F;
      if (time_only(g)) {
        for (Index kt = 0; kt < KT; ++kt) {
          const double w = weight[(co * Ci + ci) * KT + kt];
          Index lo, hi;
          valid_time_range(Ti, T, kt * dt - pt, lo, hi);
          double* dst = gin_c + kt * dt - pt;
          for (Index to = lo; to < hi; ++to) dst[to] += w * gout_c[to];
        }
        continue;
      }
      for (Index kt = 0; kt < KT; ++kt) {
        for (Index kf = 0; kf < KF; ++kf) {
          const double w = weight[((co * Ci + ci) * KT + kt) * KF + kf];
          Index lo, hi;
          valid_freq_range(Fi, F, sf, kf, pf, lo, hi);
          for (Index to = 0; to < T; ++to) {
            const Index ti = to * st + kt * dt - pt;
            if (ti < 0 || ti >= Ti) continue;
            double* gin_row = gin_c + ti * Fi + kf - pf;
            const double* gout_row = gout_c + to * F;
            for (Index fo = lo; fo < hi; ++fo) {
              gin_row[fo * sf] += w * gout_row[fo];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const Conv2dGeometry& g,
                            std::span<const double> in,
                            std::span<const double> grad_out,
                            std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const Index T = static_cast<Index>(g.out_time());
  const Index F = static_cast<Index>(g.out_freq());
  const Index Ti = static_cast<Index>(g.in_time);
  const Index Fi = static_cast<Index>(g.in_freq);
  const Index C = static_cast<Index>(g.out_channels);
  const Index KT = static_cast<Index>(g.kernel_time);
  const Index KF = static_cast<Index>(g.kernel_freq);
  const Index st = static_cast<Index>(g.stride_time);
  const Index sf = static_cast<Index>(g.stride_freq);
  const Index dt = static_cast<Index>(g.dilation_time);
  const Index pt = static_cast<Index>(g.pad_time_front);
  const Index pf = static_cast<Index>(g.pad_freq);
  const Index Ci = static_cast<Index>(g.in_channels);

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < C; ++co) {
    const double* gout_c = grad_out.data() + co * T * F;
    if (!grad_bias.empty()) {
      double acc = 0.0;
      for (Index i = 0; i < T * F; ++i) acc += gout_c[i];
      grad_bias[co] += acc;
    }
    for (Index ci = 0; ci < Ci; ++ci) {
      const double* in_c = in.data() + ci * Ti * Fi;
      if (time_only(g)) {
        for (Index kt = 0; kt < KT; ++kt) {
          Index lo, hi;
          valid_time_range(Ti, T, kt * dt - pt, lo, hi);
          const double* src = in_c + kt * dt - pt;
          double acc = 0.0;
          for (Index to = lo; to < hi; ++to) acc += gout_c[to] * src[to];
          grad_weight[(co * Ci + ci) * KT + kt] += acc;
        }
        continue;
      }
      for (Index kt = 0; kt < KT; ++kt) {
        for (Index kf = 0; kf < KF; ++kf) {
          Index lo, hi;
          valid_freq_range(Fi, F, sf, kf, pf, lo, hi);
          double acc = 0.0;
          for (Index to = 0; to < T; ++to) {
            const Index ti = to * st + kt * dt - pt;
            if (ti < 0 || ti >= Ti) continue;
            const double* in_row = in_c + ti * Fi + kf - pf;
            const double* gout_row = gout_c + to * F;
            for (Index fo = lo; fo < hi; ++fo) {
              acc += gout_row[fo] * in_row[fo * sf];
            }
          }
          grad_weight[((co * Ci + ci) * KT + kt) * KF + kf] += acc;
        }
      }
    }
  }
}

void conv_transpose_forward(const ConvTransposeGeometry& g,
                            std::span<const double> in,
                            std::span<const double> weight,
                            std::span<const double> bias,
                            std::span<double> out) {
  const Index T = static_cast<Index>(g.time);
  const Index Fi = static_cast<Index>(g.in_freq);
  const Index Fo = static_cast<Index>(g.out_freq());
  const Index Ci = static_cast<Index>(g.in_channels);
  const Index C = static_cast<Index>(g.out_channels);
  const Index K = static_cast<Index>(g.kernel_freq);
  const Index s = static_cast<Index>(g.stride_freq);
  const Index p = static_cast<Index>(g.pad_freq);

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < C; ++co) {
    double* out_c = out.data() + co * T * Fo;
    std::fill(out_c, out_c + T * Fo, bias.empty() ? 0.0 : bias[co]);
    for (Index ci = 0; ci < Ci; ++ci) {
      const double* in_c = in.data() + ci * T * Fi;
      for (Index k = 0; k < K; ++k) {
        const double w = weight[(ci * C + co) * K + k];
        Index lo, hi;
        transposed_range(Fi, Fo, s, k, p, lo, hi);
        for (Index t = 0; t < T; ++t) {
          const double* in_row = in_c + t * Fi;
          double* out_row = out_c + t * Fo + k - p;
          for (Index fi = lo; fi < hi; ++fi) out_row[fi * s] += w * in_row[fi];
        }
      }
    }
  }
}

void conv_transpose_backward_input(const ConvTransposeGeometry& g,
                                   std::span<const double> grad_out,
                                   std::span<const double> weight,
                                   std::span<double> grad_in) {
  const Index T = static_cast<Index>(g.time);
  const Index Fi = static_cast<Index>(g.in_freq);
  const Index Fo = static_cast<Index>(g.out_freq());
  const Index Ci = static_cast<Index>(g.in_channels);
  const Index C = static_cast<Index>(g.out_channels);
  const Index K = static_cast<Index>(g.kernel_freq);
  const Index s = static_cast<Index>(g.stride_freq);
  const Index p = static_cast<Index>(g.pad_freq);

#pragma omp parallel for schedule(static)
  for (Index ci = 0; ci < Ci; ++ci) {
    double* gin_c = grad_in.data() + ci * T * Fi;
    for (Index co = 0; co < C; ++co) {
      const double* gout_c = grad_out.data() + co * T * Fo;
      for (Index k = 0; k < K; ++k) {
        const double w = weight[(ci * C + co) * K + k];
        Index lo, hi;
        transposed_range(Fi, Fo, s, k, p, lo, hi);
        for (Index t = 0; t < T; ++t) {
          double* gin_row = gin_c + t * Fi;
          const double* gout_row = gout_c + t * Fo + k - p;
          for (Index fi = lo; fi < hi; ++fi) {
            gin_row[fi] += w * gout_row[fi * s];
          }
        }
      }
    }
  }
}

void conv_transpose_backward_weight(const ConvTransposeGeometry& g,
                                    std::span<const double> in,
                                    std::span<const double> grad_out,
                                    std::span<double> grad_weight,
                                    std::span<double> grad_bias) {
  const Index T = static_cast<Index>(g.time);
  const Index Fi = static_cast<Index>(g.in_freq);
  const Index Fo = static_cast<Index>(g.out_freq());
  const Index Ci = static_cast<Index>(g.in_channels);
  const Index C = static_cast<Index>(g.out_channels);
  const Index K = static_cast<Index>(g.kernel_freq);
  const Index s = static_cast<Index>(g.stride_freq);
  const Index p = static_cast<Index>(g.pad_freq);

#pragma omp parallel for schedule(static)
  for (Index co = 0; co < C; ++co) {
    const double* gout_c = grad_out.data() + co * T * Fo;
    if (!grad_bias.empty()) {
      double acc = 0.0;
      for (Index i = 0; i < T * Fo; ++i) acc += gout_c[i];
      grad_bias[co] += acc;
    }
    for (Index ci = 0; ci < Ci; ++ci) {
      const double* in_c = in.data() + ci * T * Fi;
      for (Index k = 0; k < K; ++k) {
        Index lo, hi;
        transposed_range(Fi, Fo, s, k, p, lo, hi);
        double acc = 0.0;
        for (Index t = 0; t < T; ++t) {
          const double* in_row = in_c + t * Fi;
          const double* gout_row = gout_c + t * Fo + k - p;
          for (Index fi = lo; fi < hi; ++fi) acc += in_row[fi] * gout_row[fi * s];
        }
        grad_weight[(ci * C + co) * K + k] += acc;
      }
    }
  }
}

}  // namespace parallel
}  // namespace napse::kernels
