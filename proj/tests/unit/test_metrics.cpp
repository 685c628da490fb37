#include <gtest/gtest.h>

#include <cmath>

#include "apsusct/errors.hpp"
#include "apsusct/metrics.hpp"
#include "apsusct/random.hpp"

using namespace apsusct;

namespace {

SosMap phantom(std::uint64_t seed) {
  PhantomSpec spec;
  return generate_phantom(spec, seed);
}

SosMap with_noise(const SosMap& m, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  SosMap out = m;
  for (auto& v : out.values) v += normal(rng, 0.0, stddev);
  return out;
}

AcquisitionConfig acq(std::size_t s, std::size_t r, std::size_t t) {
  return {s, r, RingGeometry::centered(64, 1e-3), t, 1e-7};
}

WaveformCube random_cube(std::size_t s, std::size_t r, std::size_t t, std::uint64_t seed) {
  Rng rng(seed);
  WaveformCube c(s, r, t, acq(s, r, t));
  for (auto& v : c.values) v = normal(rng);
  return c;
}

}  // namespace

TEST(Ssim, IdentitySymmetryBounds) {
  const SosMap a = phantom(1);
  const SosMap b = phantom(2);
  EXPECT_NEAR(ssim(a, a, 200.0), 1.0, 1e-9);
  EXPECT_EQ(ssim(a, b, 200.0), ssim(b, a, 200.0));
  const double s = ssim(a, b, 200.0);
  EXPECT_GE(s, -1.0);
  EXPECT_LE(s, 1.0);
  SosMap inverted = a;
  for (auto& v : inverted.values) v = 3000.0 - v;
  const double neg = ssim(a, inverted, 200.0);
  EXPECT_GE(neg, -1.0);
  EXPECT_LT(neg, 1.0);
}

TEST(Ssim, DecreasesWithNoiseVariance) {
  const SosMap x = phantom(3);
  double previous = 1.0 + 1e-12;
  for (double sd : {2.0, 8.0, 30.0}) {
    const double s = ssim(x, with_noise(x, sd, 99), 200.0);
    EXPECT_LT(s, previous) << "stddev " << sd;
    previous = s;
  }
}

TEST(Ssim, Errors) {
  EXPECT_THROW(ssim(phantom(1), SosMap(16, 5e-4, 1500.0), 200.0), DataError);
  EXPECT_THROW(ssim(phantom(1), phantom(2), 0.0), ConfigError);
}

TEST(Psnr, AnalyticCases) {
  EXPECT_NEAR(Psnr::from_mse(0.01, 1.0).db(), 20.0, 1e-12);
  for (double m : {0.3, 0.01, 4e-5}) {
    EXPECT_NEAR(Psnr::from_mse(m / 2.0, 1.0).db() - Psnr::from_mse(m, 1.0).db(), 3.010299956639812, 1e-9);
  }
  const SosMap a = phantom(4);
  EXPECT_TRUE(psnr(a, a, 200.0).is_infinite());
  EXPECT_THROW(psnr(a, a, 200.0).db(), StateError);
  EXPECT_EQ(psnr(a, a, 200.0).str(), "inf");
  double previous = std::numeric_limits<double>::infinity();
  for (double m : {1e-4, 1e-3, 1e-2, 1.0}) {
    EXPECT_LT(Psnr::from_mse(m, 1.0).db(), previous);
    previous = Psnr::from_mse(m, 1.0).db();
  }
}

TEST(Psnr, MapVersionMatchesDefinition) {
  SosMap a(8, 1e-3, 1500.0);
  SosMap b = a;
  for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] += (i % 2 == 0) ? 2.0 : -2.0;
  EXPECT_NEAR(psnr(a, b, 200.0).db(), 10.0 * std::log10(200.0 * 200.0 / 4.0), 1e-12);
}

TEST(CosineSimilarity, Fixtures) {
  const WaveformCube a = random_cube(2, 3, 5, 1);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-12);
  WaveformCube e1(1, 1, 2, acq(1, 1, 2));
  WaveformCube e2 = e1;
  e1.values = {1.0, 0.0};
  e2.values = {0.0, 1.0};
  EXPECT_EQ(cosine_similarity(e1, e2), 0.0);
  const WaveformCube b = random_cube(2, 3, 5, 2);
  for (double lambda : {0.001, 2.5, 1e6}) {
    WaveformCube scaled = b;
    for (auto& v : scaled.values) v *= lambda;
    EXPECT_NEAR(cosine_similarity(a, scaled), cosine_similarity(a, b), 1e-12);
  }
  const WaveformCube zero(2, 3, 5, acq(2, 3, 5));
  EXPECT_EQ(cosine_similarity(a, zero), 0.0);
  EXPECT_THROW(cosine_similarity(a, random_cube(2, 4, 5, 3)), DataError);
}

TEST(ThresholdFractions, Fixtures) {
  // 8293 of 10000 entries above 0.8.
  std::vector<double> v(10000, 0.5);
  for (std::size_t i = 0; i < 8293; ++i) v[i] = 0.81;
  EXPECT_NEAR(threshold_fractions(v, {0.8})[0], 0.8293, 1e-12);
  EXPECT_EQ(threshold_fractions(std::vector<double>(7, 1.0), {0.8, 0.85, 0.9}), (std::vector<double>{1, 1, 1}));
  Rng rng(5);
  std::vector<double> r(200);
  for (auto& x : r) x = uniform(rng, 0.6, 1.0);
  const auto f = threshold_fractions(r, {0.8, 0.85, 0.9});
  EXPECT_GE(f[0], f[1]);
  EXPECT_GE(f[1], f[2]);
  EXPECT_THROW(threshold_fractions({}, {0.8}), DataError);
  EXPECT_THROW(threshold_fractions(r, {0.9, 0.8}), ConfigError);
  EXPECT_EQ(threshold_fractions({0.8}, {0.8})[0], 0.0);
}

TEST(MetricReport, AggregatesAndFractions) {
  std::vector<SosMap> truth{phantom(1), phantom(2), phantom(3)};
  std::vector<SosMap> pred{phantom(1), with_noise(phantom(2), 5.0, 1), with_noise(phantom(3), 20.0, 2)};
  const MetricReport rep = evaluate_maps(pred, truth, 1400.0, 1600.0);
  ASSERT_EQ(rep.ssim.size(), 3u);
  EXPECT_NEAR(rep.ssim[0], 1.0, 1e-9);
  EXPECT_EQ(rep.psnr_infinite, 1u);
  EXPECT_GE(rep.fractions[0], rep.fractions[1]);
  EXPECT_GE(rep.fractions[1], rep.fractions[2]);
  const double mean = (rep.ssim[0] + rep.ssim[1] + rep.ssim[2]) / 3.0;
  EXPECT_NEAR(rep.ssim_mean, mean, 1e-15);
  EXPECT_THROW(evaluate_maps({}, {}, 1400.0, 1600.0), DataError);
}

TEST(NearestInterp, TieRuleAndPreservation) {
  WaveformCube s(1, 2, 3, acq(1, 2, 3));
  s.values = {1, 2, 3, 4, 5, 6};
  const WaveformCube d = nearest_interp(s, acq(1, 4, 3));
  EXPECT_EQ(d.values, (std::vector<double>{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6}));
  EXPECT_EQ(d.acquisition.n_receivers, 4u);

  const WaveformCube big = random_cube(2, 4, 6, 7);
  const WaveformCube up = nearest_interp(big, acq(4, 16, 6));
  for (std::size_t si = 0; si < 2; ++si)
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(up.at(2 * si, 4 * r, k), big.at(si, r, k));
  // Stride 4: slot 1 -> 0, slot 2 ties -> 0, slot 3 -> 4.
  EXPECT_EQ(up.at(0, 2, 0), big.at(0, 0, 0));
  EXPECT_EQ(up.at(0, 3, 0), big.at(0, 1, 0));
  EXPECT_EQ(up.at(0, 15, 0), big.at(0, 3, 0));

  WaveformCube flat(2, 4, 3, acq(2, 4, 3));
  for (auto& v : flat.values) v = 0.25;
  for (double v : nearest_interp(flat, acq(2, 8, 3)).values) EXPECT_EQ(v, 0.25);
  EXPECT_THROW(nearest_interp(s, acq(1, 5, 3)), ConfigError);
}

TEST(BicubicInterp, ConstantLinearAndWeights) {
  WaveformCube flat(2, 4, 3, acq(2, 4, 3));
  for (auto& v : flat.values) v = -1.5;
  for (double v : bicubic_interp(flat, acq(4, 16, 3)).values) EXPECT_NEAR(v, -1.5, 1e-15);

  // Linear in the dense receiver index: value(r) = 0.5 + 0.25 r at dense index r.
  const std::size_t stride = 4;
  WaveformCube lin(1, 5, 1, acq(1, 5, 1));
  for (std::size_t r = 0; r < 5; ++r) lin.at(0, r, 0) = 0.5 + 0.25 * static_cast<double>(r * stride);
  const WaveformCube up = bicubic_interp(lin, acq(1, 20, 1));
  for (std::size_t j = 0; j < 20; ++j) EXPECT_NEAR(up.at(0, j, 0), 0.5 + 0.25 * static_cast<double>(j), 1e-12);

  // Interior midpoint uses weights (-1/16, 9/16, 9/16, -1/16).
  WaveformCube four(1, 4, 1, acq(1, 4, 1));
  four.values = {2.0, -1.0, 4.0, 7.0};
  const WaveformCube mid = bicubic_interp(four, acq(1, 8, 1));
  EXPECT_NEAR(mid.at(0, 3, 0), (-2.0 + 9.0 * -1.0 + 9.0 * 4.0 - 7.0) / 16.0, 1e-15);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(mid.at(0, 2 * r, 0), four.values[r]);
}

TEST(Interpolators, AreLinear) {
  const WaveformCube a = random_cube(2, 4, 8, 11);
  const WaveformCube b = random_cube(2, 4, 8, 12);
  WaveformCube mix = a;
  for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = 0.7 * a.values[i] - 1.3 * b.values[i];
  const auto target = acq(4, 16, 8);
  for (auto interp : {&nearest_interp, &bicubic_interp}) {
    const auto ia = interp(a, target);
    const auto ib = interp(b, target);
    const auto im = interp(mix, target);
    for (std::size_t i = 0; i < im.values.size(); ++i) {
      EXPECT_NEAR(im.values[i], 0.7 * ia.values[i] - 1.3 * ib.values[i], 1e-12);
    }
  }
}
