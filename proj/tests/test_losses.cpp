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

#include <cmath>
#include <complex>
#include <numeric>

#include <gtest/gtest.h>

#include "napse/losses.hpp"
#include "napse/ops.hpp"
#include "test_util.hpp"

namespace napse::losses {
namespace {

using napse::testing::grad_check;
using napse::testing::random_tensor;
using napse::testing::random_vector;
using cd = std::complex<double>;
using ag::Var;

// Brute-force recomputations on std::complex.
std::vector<cd> bins_of(const Tensor& s) {
  const std::size_t planes = s.dim(0) / 2, plane = s.numel() / s.dim(0);
  std::vector<cd> out;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < plane; ++i)
      out.emplace_back(s[2 * p * plane + i], s[(2 * p + 1) * plane + i]);
  return out;
}

double brute_mag(const Tensor& e, const Tensor& r, double c) {
  const auto be = bins_of(e), br = bins_of(r);
  double acc = 0.0;
  for (std::size_t i = 0; i < be.size(); ++i) {
    const double d = std::pow(std::abs(br[i]), c) - std::pow(std::abs(be[i]), c);
    acc += d * d;
  }
  return acc / be.size();
}

double brute_asym(const Tensor& e, const Tensor& r, double c) {
  const auto be = bins_of(e), br = bins_of(r);
  double acc = 0.0;
  for (std::size_t i = 0; i < be.size(); ++i) {
    const double d = std::max(0.0, std::pow(std::abs(br[i]), c) - std::pow(std::abs(be[i]), c));
    acc += d * d;
  }
  return acc / be.size();
}

double brute_ri(const Tensor& e, const Tensor& r, double c) {
  const auto be = bins_of(e), br = bins_of(r);
  auto comp = [c](cd z) { return std::abs(z) == 0.0 ? cd{} : std::pow(std::abs(z), c) * z / std::abs(z); };
  double acc = 0.0;
  for (std::size_t i = 0; i < be.size(); ++i) acc += std::norm(comp(be[i]) - comp(br[i]));
  return acc / be.size();
}

Var cvar(const Tensor& t) { return ag::constant(t); }

TEST(SiSnr, IdentityHitsFloor) {
  const auto ref = random_vector(4800, 1);
  const double loss = si_snr_loss(cvar(Tensor::from(ref)), Tensor::from(ref)).item();
  EXPECT_LE(loss, -60.0);
}

TEST(SiSnr, ScaleInvariance) {
  const auto ref = random_vector(4800, 2);
  auto est = random_vector(4800, 3);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += ref[i];
  const double base = si_snr_loss(cvar(Tensor::from(est)), Tensor::from(ref)).item();
  for (double alpha : {0.1, 2.0, 100.0}) {
    std::vector<double> scaled(est);
    for (auto& v : scaled) v *= alpha;
    EXPECT_NEAR(si_snr_loss(cvar(Tensor::from(scaled)), Tensor::from(ref)).item(), base, 1e-6);
  }
  // est = 2 ref matches est = ref
  std::vector<double> twice(ref);
  for (auto& v : twice) v *= 2.0;
  EXPECT_NEAR(si_snr_db(twice, ref), si_snr_db(ref, ref), 1e-6);
}

TEST(SiSnr, OrthogonalNoiseOfEqualNormIsZeroDb) {
  // Zero-mean reference and a Gram-Schmidt orthogonal, zero-mean noise
  // rescaled to the same norm.
  auto ref = random_vector(2000, 4);
  auto noise = random_vector(2000, 5);
  auto center = [](std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    for (auto& x : v) x -= m;
  };
  center(ref);
  center(noise);
  const double rr = std::inner_product(ref.begin(), ref.end(), ref.begin(), 0.0);
  const double nr = std::inner_product(noise.begin(), noise.end(), ref.begin(), 0.0);
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] -= nr / rr * ref[i];
  const double nn = std::inner_product(noise.begin(), noise.end(), noise.begin(), 0.0);
  std::vector<double> est(ref);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += noise[i] * std::sqrt(rr / nn);
  EXPECT_NEAR(si_snr_db(est, ref), 0.0, 1e-6);
}

TEST(SiSnr, SilentReferenceIsAnError) {
  const Tensor silent({100});
  EXPECT_THROW(si_snr_loss(cvar(Tensor({100}, 1.0)), silent), std::invalid_argument);
  // A constant is silent after mean removal.
  EXPECT_THROW(si_snr_loss(cvar(Tensor({100}, 1.0)), Tensor({100}, 0.3)), std::invalid_argument);
  EXPECT_THROW(si_snr_loss(cvar(Tensor({10})), Tensor({11})), std::invalid_argument);
}

TEST(SpectralLosses, IdenticalSpectraGiveZero) {
  const Tensor s = random_tensor({2, 5, 9}, 6);
  EXPECT_EQ(mag_loss(cvar(s), s).item(), 0.0);
  EXPECT_EQ(asym_loss(cvar(s), s).item(), 0.0);
  EXPECT_EQ(ri_loss(cvar(s), s).item(), 0.0);
}

TEST(SpectralLosses, ClosedForms) {
  // Unit-magnitude bins with random phase.
  Tensor ref({2, 4, 6});
  const auto ph = random_vector(24, 7);
  for (std::size_t i = 0; i < 24; ++i) {
    ref[i] = std::cos(ph[i]);
    ref[24 + i] = std::sin(ph[i]);
  }
  const Tensor zero({2, 4, 6});
  EXPECT_NEAR(mag_loss(cvar(zero), ref).item(), 1.0, 1e-12);
  EXPECT_NEAR(asym_loss(cvar(zero), ref).item(), 1.0, 1e-12);
  Tensor flipped(ref);
  for (auto& v : flipped.vec()) v = -v;
  EXPECT_NEAR(ri_loss(cvar(flipped), ref, 1.0).item(), 4.0, 1e-12);
}

TEST(SpectralLosses, AsymIgnoresOverEstimation) {
  Tensor ref = random_tensor({2, 3, 7}, 8);
  Tensor est(ref);
  for (auto& v : est.vec()) v *= 1.7;
  EXPECT_EQ(asym_loss(cvar(est), ref).item(), 0.0);
  EXPECT_GT(mag_loss(cvar(est), ref).item(), 0.0);
}

TEST(SpectralLosses, MatchBruteForce) {
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor e = random_tensor({4, 6, 11}, 10 + trial), r = random_tensor({4, 6, 11}, 20 + trial);
    for (double c : {0.5, 0.3, 1.0}) {
      EXPECT_NEAR(mag_loss(cvar(e), r, c).item(), brute_mag(e, r, c), 1e-9);
      EXPECT_NEAR(asym_loss(cvar(e), r, c).item(), brute_asym(e, r, c), 1e-9);
      EXPECT_NEAR(ri_loss(cvar(e), r, c).item(), brute_ri(e, r, c), 1e-9);
    }
  }
}

TEST(SpectralLosses, NonNegative) {
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor e = random_tensor({2, 3, 5}, 40 + trial), r = random_tensor({2, 3, 5}, 60 + trial);
    EXPECT_GE(mag_loss(cvar(e), r).item(), 0.0);
    EXPECT_GE(asym_loss(cvar(e), r).item(), 0.0);
    EXPECT_GE(ri_loss(cvar(e), r).item(), 0.0);
  }
}

TEST(SpectralLosses, GeometryMismatchIsAnError) {
  EXPECT_THROW(mag_loss(cvar(Tensor({2, 3, 4})), Tensor({2, 3, 5})), std::invalid_argument);
  EXPECT_THROW(ri_loss(cvar(Tensor({3, 3, 4})), Tensor({3, 3, 4})), std::invalid_argument);
}

TEST(SpectralLosses, ZeroEstimateHasFiniteGradient) {
  Var e = ag::leaf(Tensor({2, 3, 4}));
  const Tensor r = random_tensor({2, 3, 4}, 9);
  ag::backward(ag::add(ag::add(mag_loss(e, r), asym_loss(e, r)), ri_loss(e, r)));
  for (double g : e.grad().vec()) EXPECT_TRUE(std::isfinite(g));
}

TEST(LossGradients, FiniteDifferenceAgreement) {
  const auto ref = random_vector(1500, 30);
  const Tensor rt = Tensor::from(ref);
  auto est_init = random_vector(1500, 31, 0.5);
  for (std::size_t i = 0; i < est_init.size(); ++i) est_init[i] += ref[i];
  Var est = ag::leaf(Tensor::from(est_init));
  EXPECT_LE(grad_check(est, [&] { return si_snr_loss(est, rt); }, 10, 32).max_rel_error, 1e-4);

  const Tensor rs = random_tensor({2, 5, 9}, 33);
  Var es = ag::leaf(random_tensor({2, 5, 9}, 34));
  EXPECT_LE(grad_check(es, [&] { return mag_loss(es, rs); }, 10, 35).max_rel_error, 1e-4);
  EXPECT_LE(grad_check(es, [&] { return ri_loss(es, rs); }, 10, 36).max_rel_error, 1e-4);

  // Keep asym away from its kink: every estimate bin below the reference.
  Var ea = ag::leaf([&] {
    Tensor t(rs);
    for (auto& v : t.vec()) v *= 0.5;
    return t;
  }());
  EXPECT_LE(grad_check(ea, [&] { return asym_loss(ea, rs); }, 10, 37).max_rel_error, 1e-4);
}

TEST(CompressedMagnitude, VarMatchesTensorAndGradient) {
  const Tensor spec = random_tensor({4, 3, 5}, 40);
  Var v = ag::leaf(spec);
  const Tensor want = compressed_magnitude(spec, 0.3);
  const Var got = compressed_magnitude(v, 0.3);
  ASSERT_EQ(got.shape(), (Shape{2, 3, 5}));
  for (std::size_t i = 0; i < want.numel(); ++i) EXPECT_DOUBLE_EQ(got.value()[i], want[i]);
  const Tensor w = random_tensor({2, 3, 5}, 41);
  EXPECT_LE(grad_check(v, [&] { return ag::sum(ag::mul_const(compressed_magnitude(v, 0.3), w)); },
                       20, 42).max_rel_error,
            1e-4);
  Var z = ag::leaf(Tensor({2, 2, 2}));
  ag::backward(ag::sum(compressed_magnitude(z, 0.5)));
  for (double g : z.grad().vec()) EXPECT_EQ(g, 0.0);
}

TEST(MultiScale, SingleScaleEqualsTerm) {
  const auto x = random_vector(6000, 50), y = random_vector(6000, 51);
  const auto scales = single_scale();
  const Tensor ex = dsp::stft_forward(x, scales[0]), ey = dsp::stft_forward(y, scales[0]);
  EXPECT_EQ(multi_scale(Term::kMag, cvar(Tensor::from(x)), Tensor::from(y), scales).item(),
            mag_loss(cvar(ex), ey).item());
}

TEST(MultiScale, EqualsMeanOfIndependentScales) {
  const auto x = random_vector(9000, 52), y = random_vector(9000, 53);
  const auto scales = default_scales();
  ASSERT_EQ(scales.size(), 3u);
  for (Term term : {Term::kAsym, Term::kMag, Term::kRi}) {
    double acc = 0.0;
    for (const auto& cfg : scales) {
      const Tensor ex = dsp::stft_forward(x, cfg), ey = dsp::stft_forward(y, cfg);
      acc += term == Term::kMag ? brute_mag(ex, ey, 0.5)
           : term == Term::kAsym ? brute_asym(ex, ey, 0.5)
                                 : brute_ri(ex, ey, 0.5);
    }
    EXPECT_NEAR(multi_scale(term, cvar(Tensor::from(x)), Tensor::from(y), scales).item(),
                acc / 3.0, 1e-6);
  }
}

TEST(MultiScale, PermutationInvariantAndZeroOnIdentity) {
  const auto x = random_vector(5000, 54), y = random_vector(5000, 55);
  auto scales = default_scales();
  const double a = multi_scale(Term::kRi, cvar(Tensor::from(x)), Tensor::from(y), scales).item();
  std::swap(scales[0], scales[2]);
  const double b = multi_scale(Term::kRi, cvar(Tensor::from(x)), Tensor::from(y), scales).item();
  EXPECT_NEAR(a, b, 1e-12);
  for (Term t : {Term::kAsym, Term::kMag, Term::kRi})
    EXPECT_EQ(multi_scale(t, cvar(Tensor::from(x)), Tensor::from(x), scales).item(), 0.0);
  EXPECT_THROW(multi_scale(Term::kMag, cvar(Tensor::from(x)), Tensor::from(y), {}),
               std::invalid_argument);
}

TEST(StageTotals, RecombineIndependently) {
  const auto x = random_vector(7000, 56), y = random_vector(7000, 57);
  const Var gan = cvar(Tensor({1}, 1.0));
  const auto s1 = stage1_total(cvar(Tensor::from(x)), Tensor::from(y), gan);
  const auto s2 = stage2_total(cvar(Tensor::from(x)), Tensor::from(y), gan);
  const double sisnr = -si_snr_db(x, y);
  double l1 = 0.0, l2 = 0.0;
  for (const auto& cfg : default_scales()) {
    const Tensor ex = dsp::stft_forward(x, cfg), ey = dsp::stft_forward(y, cfg);
    const double base = brute_asym(ex, ey, 0.5) + brute_mag(ex, ey, 0.5);
    l1 += base / 3.0;
    l2 += (base + brute_ri(ex, ey, 0.5)) / 3.0;
  }
  EXPECT_NEAR(s1.breakdown.total, sisnr + l1 + 1.0, 1e-6);
  EXPECT_NEAR(s2.breakdown.total, sisnr + l2 + 1.0, 1e-6);
  EXPECT_NEAR(s1.total.item(), s1.breakdown.total, 1e-12);
  EXPECT_EQ(s1.breakdown.gan, 1.0);
  EXPECT_TRUE(s1.breakdown.ri.empty());
  EXPECT_EQ(s2.breakdown.ri.size(), 3u);
  // Breakdown fields recombine to the total.
  double recombined = s2.breakdown.si_snr + s2.breakdown.gan;
  for (std::size_t m = 0; m < 3; ++m)
    recombined += (s2.breakdown.asym[m] + s2.breakdown.mag[m] + s2.breakdown.ri[m]) / 3.0;
  EXPECT_NEAR(recombined, s2.breakdown.total, 1e-6);
}

TEST(StageTotals, IdentityWithoutGanIsSiSnrFloor) {
  const auto x = random_vector(5000, 58);
  const auto s = stage1_total(cvar(Tensor::from(x)), Tensor::from(x), Var{});
  EXPECT_NEAR(s.breakdown.total, s.breakdown.si_snr, 1e-12);
  EXPECT_LE(s.breakdown.total, -60.0);
}

TEST(StageTotals, JsonHasAllFields) {
  const auto x = random_vector(5000, 59), y = random_vector(5000, 60);
  const auto s = stage2_total(cvar(Tensor::from(x)), Tensor::from(y), Var{});
  const auto j = s.breakdown.to_json();
  for (const char* key : {"si_snr", "asym", "mag", "ri", "gan", "total"}) EXPECT_TRUE(j.contains(key));
}

}  // namespace
}  // namespace napse::losses
