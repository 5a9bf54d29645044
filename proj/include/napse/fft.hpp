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

// Thin FFTW wrapper. Plans are cached per size; execution is thread-safe.

#ifndef NAPSE_FFT_HPP_
#define NAPSE_FFT_HPP_

#include <complex>
#include <span>

namespace napse::fft {

// X[k] = sum_n x[n] exp(-2 pi i k n / n_fft), k = 0 .. n_fft/2.
// `in` holds n_fft samples, `out` n_fft/2 + 1 bins.
void rfft(std::span<const double> in, std::span<std::complex<double>> out);

// Unnormalised Hermitian inverse: x[n] = sum_{k=0}^{n_fft-1} X[k] exp(+...),
// with bins above n_fft/2 implied by conjugate symmetry. Imaginary parts of
// the DC and Nyquist bins are ignored.
void irfft(std::span<const std::complex<double>> in, std::span<double> out);

}  // namespace napse::fft

#endif  // NAPSE_FFT_HPP_
