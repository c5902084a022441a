#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "gdm/error.hpp"
#include "gdm/preprocess.hpp"
#include "gdm/spectral.hpp"
#include "test_util.hpp"

using namespace gdm;
using gdm::testing::random_image;
using gdm::testing::random_matrix;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Periodic low-frequency texture: all energy sits within a few bins of DC.
Matrix smooth_periodic(int n) {
  Matrix m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      m(r, c) = 0.5 + 0.15 * std::cos(kTwoPi * 2 * c / n) + 0.1 * std::sin(kTwoPi * 3 * r / n) +
                0.08 * std::cos(kTwoPi * (c + 2 * r) / n);
  return m;
}

// Energy concentrated in the spectrum columns at +-kx from center.
Matrix column_comb(int n, int kx) {
  Matrix m = Matrix::Zero(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      for (int ky : {0, 5, 17, 40, 90})
        m(r, c) += 0.02 * std::cos(kTwoPi * (kx * c + ky * r) / n + 0.3 * ky);
  return m;
}

}  // namespace

TEST(StmMask, BandAndAngularExclusion) {
  const FreqMask m = stm_frequency_mask(256, 256, {});
  const int cy = 128, cx = 128;
  EXPECT_FALSE(m.mask(cy, cx));
  EXPECT_FALSE(m.mask(cy, cx + 20));  // r = r_low is excluded
  EXPECT_TRUE(m.mask(cy, cx + 21));
  EXPECT_TRUE(m.mask(cy, cx + 59));
  EXPECT_FALSE(m.mask(cy, cx + 60));
  EXPECT_FALSE(m.mask(cy + 40, cx));  // on the vertical axis
  EXPECT_FALSE(m.mask(cy - 40, cx + 10));
  EXPECT_TRUE(m.mask(cy + 20, cx + 40));  // ~26.6 degrees
  EXPECT_THROW(stm_frequency_mask(256, 256, {60, 20, 30}), InvalidInput);
  EXPECT_THROW(stm_frequency_mask(100, 100, {20, 60, 30}), InvalidInput);
}

TEST(StmBandpass, SpectrumZeroOutsideMask) {
  const GrayImage img = random_image(256, 256, 1);
  const StmResult res = stm_bandpass(img);
  const ComplexMatrix f = shifted_spectrum(res.filtered);
  const ComplexMatrix g = shifted_spectrum(res.image.pixels());
  const int cy = 128, cx = 128;
  double worst_filtered = 0.0, worst_rescaled = 0.0;
  for (int r = 0; r < 256; ++r) {
    for (int c = 0; c < 256; ++c) {
      if (res.mask.mask(r, c)) continue;
      worst_filtered = std::max(worst_filtered, std::abs(f(r, c)));
      // Rescaling adds a constant, which only touches DC.
      if (r != cy || c != cx) worst_rescaled = std::max(worst_rescaled, std::abs(g(r, c)));
    }
  }
  EXPECT_LE(worst_filtered, 1e-10);
  EXPECT_LE(worst_rescaled, 1e-10);
  EXPECT_EQ(res.image.height(), 256);
  EXPECT_GE(res.image.pixels().minCoeff(), 0.0);
  EXPECT_LE(res.image.pixels().maxCoeff(), 1.0);
}

TEST(StmBandpass, VerticalComponentAnnihilated) {
  Matrix m(256, 256);
  for (int r = 0; r < 256; ++r)
    for (int c = 0; c < 256; ++c) m(r, c) = 0.5 + 0.4 * std::cos(kTwoPi * 40 * r / 256);
  const StmResult res = stm_bandpass(GrayImage(m));
  EXPECT_LE(res.filtered.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(StmBandpass, HorizontalComponentPasses) {
  Matrix m(256, 256);
  for (int r = 0; r < 256; ++r)
    for (int c = 0; c < 256; ++c) m(r, c) = 0.5 + 0.4 * std::cos(kTwoPi * 40 * c / 256);
  const StmResult res = stm_bandpass(GrayImage(m));
  const ComplexMatrix in = shifted_spectrum(m);
  const ComplexMatrix out = shifted_spectrum(res.filtered);
  for (int c : {128 - 40, 128 + 40}) {
    EXPECT_NEAR(std::abs(out(128, c)) / std::abs(in(128, c)), 1.0, 1e-9);
  }
  EXPECT_NEAR(std::abs(out(128, 128)), 0.0, 1e-9);
}

TEST(AfmNotch, DetectsInjectedComb) {
  const Matrix m = smooth_periodic(256) + column_comb(256, 70);
  const AfmResult res = afm_notch_clean(GrayImage::clamped(m));
  ASSERT_EQ(res.notch_lines.size(), 2u);
  EXPECT_LE(std::abs(res.notch_lines[0] - (128 - 70)), 1);
  EXPECT_LE(std::abs(res.notch_lines[1] - (128 + 70)), 1);
  // The comb is removed from the cleaned image.
  const Matrix resid = res.cleaned.pixels() - smooth_periodic(256);
  EXPECT_LT(resid.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AfmNotch, RowAxisVariant) {
  const Matrix m = smooth_periodic(256) + Matrix(column_comb(256, 70).transpose());
  AfmParams p;
  p.axis = NotchAxis::kRows;
  const AfmResult res = afm_notch_clean(GrayImage::clamped(m), p);
  ASSERT_EQ(res.notch_lines.size(), 2u);
  EXPECT_LE(std::abs(res.notch_lines[0] - 58), 1);
  EXPECT_LE(std::abs(res.notch_lines[1] - 198), 1);
}

TEST(AfmNotch, DcDiskBitExact) {
  const Matrix m = smooth_periodic(256) + column_comb(256, 30) + 0.05 * random_matrix(256, 256, 2);
  const AfmResult res = afm_notch_clean(GrayImage::clamped(m));
  ASSERT_FALSE(res.notch_lines.empty());
  int inside = 0;
  for (int r = 0; r < 256; ++r) {
    for (int c = 0; c < 256; ++c) {
      if (std::hypot(r - 128, c - 128) > 50.0) continue;
      ++inside;
      EXPECT_EQ(res.notched_spectrum(r, c), res.spectrum(r, c));
      EXPECT_TRUE(res.notch.mask(r, c));
    }
  }
  EXPECT_GT(inside, 7800);
}

TEST(AfmNotch, SmoothImageHasNoNotches) {
  const GrayImage img(smooth_periodic(256));
  const AfmResult res = afm_notch_clean(img);
  EXPECT_TRUE(res.notch_lines.empty());
  EXPECT_LT((res.cleaned.pixels() - img.pixels()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AfmNotch, ConstantImageUnchanged) {
  const GrayImage img(Matrix::Constant(128, 128, 0.3));
  const AfmResult res = afm_notch_clean(img);
  EXPECT_TRUE(res.notch_lines.empty());
  EXPECT_EQ(res.cleaned.pixels(), img.pixels());
}

TEST(AfmNotch, TooSmallIsInvalid) {
  EXPECT_THROW(afm_notch_clean(random_image(99, 200, 3)), InvalidInput);
}

TEST(AfmNotch, DarkMaskSplitsAtPercentile) {
  const AfmResult res = afm_notch_clean(random_image(128, 128, 4));
  const Matrix& d = res.pair.dark_masked.pixels();
  EXPECT_TRUE(((d.array() == 0.0) || (d.array() == 1.0)).all());
  EXPECT_EQ(d.sum(), 128.0 * 128.0 / 2.0);
}

TEST(AfmMerge, SpecExamples) {
  const GrayImage orig(Matrix::Constant(2, 2, 0.37));
  Matrix mask(2, 2);
  mask << 200.0 / 255.0, 100.0 / 255.0, 0.0, 1.0;
  const GrayImage merged = afm_merge(GrayImage(mask), orig);
  EXPECT_EQ(merged(0, 0), 1.0);
  EXPECT_EQ(merged(0, 1), 0.37);
  EXPECT_EQ(merged(1, 0), 0.37);
  EXPECT_EQ(merged(1, 1), 1.0);
  EXPECT_EQ(afm_merge(GrayImage(Matrix::Zero(2, 2)), orig).pixels(), orig.pixels());
  EXPECT_THROW(afm_merge(GrayImage(Matrix::Zero(3, 2)), orig), InvalidInput);
}

TEST(AfmMerge, PointwiseOnRandomPixelsAndIdempotent) {
  const GrayImage orig = random_image(64, 64, 5);
  const GrayImage mask = random_image(64, 64, 6);
  const GrayImage merged = afm_merge(mask, orig);
  Rng rng(7);
  std::uniform_int_distribution<int> pick(0, 63);
  for (int i = 0; i < 1000; ++i) {
    const int r = pick(rng), c = pick(rng);
    EXPECT_EQ(merged(r, c), mask(r, c) > 0.5 ? 1.0 : orig(r, c));
  }
  EXPECT_EQ(afm_merge(mask, merged).pixels(), merged.pixels());
}

TEST(Percentile, MatchesLinearInterpolation) {
  Matrix v(1, 4);
  v << 4, 1, 3, 2;
  EXPECT_DOUBLE_EQ(percentile(v, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile(v, 25), 1.75);
  EXPECT_DOUBLE_EQ(percentile(v, 0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 100), 4.0);
}

TEST(GaussianSmooth1d, TinySigmaIsIdentityAndUnitSigmaMatchesKernel) {
  Eigen::VectorXd s(7);
  s << 0, 0, 0, 1, 0, 0, 0;
  EXPECT_EQ(gaussian_smooth_1d(s, 0.1), s);
  const Eigen::VectorXd out = gaussian_smooth_1d(s, 1.0);
  double norm = 0.0;
  for (int k = -4; k <= 4; ++k) norm += std::exp(-0.5 * k * k);
  EXPECT_NEAR(out(3), 1.0 / norm, 1e-12);
  EXPECT_NEAR(out(4), std::exp(-0.5) / norm, 1e-12);
  EXPECT_NEAR(out(2), out(4), 1e-15);
}

TEST(SemMask, StrictThresholdBoundary) {
  Matrix m(1, 3);
  m << 130.0 / 255.0, 131.0 / 255.0, 0.0;
  const BinaryMask mask = sem_strip_mask(GrayImage(m));
  EXPECT_EQ(mask(0, 0), 0);
  EXPECT_EQ(mask(0, 1), 1);
  EXPECT_EQ(mask(0, 2), 0);
  EXPECT_EQ(sem_strip_mask(GrayImage(Matrix::Zero(8, 8))).cast<int>().sum(), 0);
}

TEST(SemInpaint, EmptyMaskIdentity) {
  const GrayImage img = random_image(32, 32, 8);
  EXPECT_EQ(sem_inpaint(img, BinaryMask::Zero(32, 32)).pixels(), img.pixels());
}

TEST(SemInpaint, UnmaskedPixelsBitIdentical) {
  const GrayImage img = random_image(64, 64, 9);
  BinaryMask mask = (random_matrix(64, 64, 10).array() > 0.8).cast<std::uint8_t>();
  const GrayImage out = sem_inpaint(img, mask);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c)
      if (!mask(r, c)) ASSERT_EQ(out(r, c), img(r, c));
}

TEST(SemInpaint, SinglePixelInConstantField) {
  const GrayImage img(Matrix::Constant(21, 21, 0.42));
  BinaryMask mask = BinaryMask::Zero(21, 21);
  mask(10, 10) = 1;
  EXPECT_NEAR(sem_inpaint(img, mask)(10, 10), 0.42, 1e-6);
}

TEST(SemInpaint, DiskInLinearRamp) {
  Matrix ramp(64, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) ramp(r, c) = 0.2 + 0.6 * c / 63.0;
  BinaryMask mask = BinaryMask::Zero(64, 64);
  double lo = 1.0, hi = 0.0;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      const double d = std::hypot(r - 32, c - 32);
      if (d <= 5.0) mask(r, c) = 1;
      else if (d <= 8.0) lo = std::min(lo, ramp(r, c)), hi = std::max(hi, ramp(r, c));
    }
  }
  const GrayImage out = sem_inpaint(GrayImage(ramp), mask);
  double mad = 0.0;
  int n = 0;
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 64; ++c) {
      if (!mask(r, c)) continue;
      EXPECT_GE(out(r, c), lo - 1e-9);
      EXPECT_LE(out(r, c), hi + 1e-9);
      mad += std::abs(out(r, c) - ramp(r, c));
      ++n;
    }
  }
  EXPECT_LT(mad / n, 0.05);
}

TEST(SemInpaint, FullMaskIsInvalid) {
  EXPECT_THROW(sem_inpaint(random_image(8, 8, 11), BinaryMask::Ones(8, 8)), InvalidInput);
}

TEST(SemClean, RemovesBrightStrip) {
  Matrix m = Matrix::Constant(40, 40, 0.3);
  m.block(18, 5, 3, 30).setConstant(0.9);
  const SemResult res = sem_clean(GrayImage(m));
  EXPECT_EQ(res.mask.cast<int>().sum(), 90);
  EXPECT_LT(res.cleaned.pixels().maxCoeff(), 130.0 / 255.0);
}

TEST(Preprocess, Deterministic) {
  const GrayImage img = random_image(128, 128, 12);
  EXPECT_EQ(stm_bandpass(img).image.pixels(), stm_bandpass(img).image.pixels());
  EXPECT_EQ(afm_notch_clean(img).cleaned.pixels(), afm_notch_clean(img).cleaned.pixels());
  EXPECT_EQ(sem_clean(img).cleaned.pixels(), sem_clean(img).cleaned.pixels());
}
