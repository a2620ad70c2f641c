#include "peqfit/prototypes.hpp"

#include <cmath>
#include <complex>
#include <random>

#include <gtest/gtest.h>

namespace peqfit {
namespace {

// Oracle: evaluate the Laplace-domain transfer functions directly with complex
// arithmetic at s = j f / f_c, independent of the squared-term formulas.
double laplace_magnitude(double f, const BandParams& b) {
  const double a = std::pow(10.0, b.gain_db / 40.0);
  const std::complex<double> s(0.0, f / b.fc_hz);
  const double sa = std::sqrt(a);
  std::complex<double> h;
  switch (b.kind) {
    case BandKind::Bell:
      h = (s * s + a / b.q * s + 1.0) / (s * s + s / (a * b.q) + 1.0);
      break;
    case BandKind::LowShelf:
      h = a * (s * s + sa / b.q * s + a) / (a * s * s + sa / b.q * s + 1.0);
      break;
    case BandKind::HighShelf:
      h = a * (a * s * s + sa / b.q * s + 1.0) / (s * s + sa / b.q * s + a);
      break;
  }
  return std::abs(h);
}

BandParams random_band(std::mt19937_64& rng, BandKind kind) {
  std::uniform_real_distribution<double> lfc(std::log(30.0), std::log(18000.0));
  std::uniform_real_distribution<double> gain(-30.0, 12.0);
  std::uniform_real_distribution<double> lq(std::log(0.3), std::log(10.0));
  return {kind, std::exp(lfc(rng)), gain(rng), std::exp(lq(rng))};
}

TEST(DbToLinearAmp, Examples) {
  EXPECT_DOUBLE_EQ(db_to_linear_amp(0.0), 1.0);
  EXPECT_DOUBLE_EQ(db_to_linear_amp(40.0), 10.0);
  EXPECT_DOUBLE_EQ(db_to_linear_amp(-40.0), 0.1);
}

TEST(DbToLinearAmp, RejectsNonFinite) {
  EXPECT_THROW(db_to_linear_amp(std::nan("")), InvalidParameter);
  EXPECT_THROW(db_to_linear_amp(INFINITY), InvalidParameter);
}

TEST(DbToLinearAmp, Monotone) {
  double prev = 0.0;
  for (double g = -60.0; g <= 60.0; g += 0.5) {
    const double a = db_to_linear_amp(g);
    EXPECT_GT(a, prev);
    prev = a;
  }
}

TEST(BellMagnitude, CenterEqualsSquaredAmplitude) {
  for (double g : {-24.0, -6.0, 3.0, 12.0}) {
    const BandParams b{BandKind::Bell, 1000.0, g, 1.3};
    EXPECT_NEAR(bell_magnitude(1000.0, b), std::pow(10.0, g / 20.0), 1e-12);
    EXPECT_NEAR(laplace_magnitude(1000.0, b), std::pow(10.0, g / 20.0), 1e-12);
  }
}

TEST(BellMagnitude, UnityAtEdgesAndForZeroGain) {
  const BandParams b{BandKind::Bell, 1000.0, -12.0, 2.0};
  EXPECT_NEAR(bell_magnitude(0.0, b), 1.0, 1e-15);
  EXPECT_NEAR(bell_magnitude(1e9, b), 1.0, 1e-9);
  const BandParams flat{BandKind::Bell, 1000.0, 0.0, 2.0};
  for (double f : {0.0, 10.0, 999.0, 1000.0, 20000.0}) {
    EXPECT_DOUBLE_EQ(bell_magnitude(f, flat), 1.0);
  }
}

TEST(LowShelfMagnitude, Asymptotes) {
  const BandParams b{BandKind::LowShelf, 200.0, -9.0, 0.7};
  EXPECT_NEAR(low_shelf_magnitude(0.0, b), std::pow(10.0, -9.0 / 20.0), 1e-12);
  EXPECT_NEAR(low_shelf_magnitude(200.0 * 1e6, b), 1.0, 1e-9);
  const BandParams flat{BandKind::LowShelf, 200.0, 0.0, 0.7};
  EXPECT_DOUBLE_EQ(low_shelf_magnitude(123.0, flat), 1.0);
}

TEST(HighShelfMagnitude, Asymptotes) {
  const BandParams b{BandKind::HighShelf, 5000.0, -15.0, 1.1};
  EXPECT_NEAR(high_shelf_magnitude(0.0, b), 1.0, 1e-12);
  EXPECT_NEAR(high_shelf_magnitude(5000.0 * 1e6, b), std::pow(10.0, -15.0 / 20.0), 1e-9);
  const BandParams flat{BandKind::HighShelf, 5000.0, 0.0, 1.1};
  EXPECT_DOUBLE_EQ(high_shelf_magnitude(77.0, flat), 1.0);
}

TEST(Magnitude, RejectsInvalidParameters) {
  EXPECT_THROW(bell_magnitude(100.0, {BandKind::Bell, 0.0, 1.0, 1.0}), InvalidParameter);
  EXPECT_THROW(bell_magnitude(100.0, {BandKind::Bell, -5.0, 1.0, 1.0}), InvalidParameter);
  EXPECT_THROW(bell_magnitude(100.0, {BandKind::Bell, 100.0, 1.0, 0.0}), InvalidParameter);
  EXPECT_THROW(low_shelf_magnitude(100.0, {BandKind::LowShelf, 100.0, NAN, 1.0}),
               InvalidParameter);
  EXPECT_THROW(bell_magnitude(100.0, {BandKind::LowShelf, 100.0, 1.0, 1.0}), InvalidParameter);
  EXPECT_THROW(band_magnitude(-1.0, {BandKind::Bell, 100.0, 1.0, 1.0}), InvalidArgument);
}

TEST(Magnitude, MatchesLaplaceOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lf(std::log(1.0), std::log(40000.0));
  for (int i = 0; i < 3000; ++i) {
    const auto b = random_band(rng, static_cast<BandKind>(i % 3));
    const double f = std::exp(lf(rng));
    const double oracle = laplace_magnitude(f, b);
    EXPECT_NEAR(band_magnitude(f, b), oracle, 1e-10 * oracle);
    EXPECT_NEAR(band_log_magnitude_db(f, b), 20.0 * std::log10(oracle), 1e-9);
  }
}

TEST(Magnitude, Reciprocity) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lf(std::log(1.0), std::log(24000.0));
  for (int i = 0; i < 3000; ++i) {
    auto b = random_band(rng, static_cast<BandKind>(i % 3));
    const double f = std::exp(lf(rng));
    const double up = band_magnitude(f, b);
    b.gain_db = -b.gain_db;
    EXPECT_NEAR(up * band_magnitude(f, b), 1.0, 1e-9);
  }
}

TEST(Magnitude, BellIsSymmetricOnLogAxis) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> lr(0.0, std::log(100.0));
  for (int i = 0; i < 2000; ++i) {
    const auto b = random_band(rng, BandKind::Bell);
    const double r = std::exp(lr(rng));
    const double above = bell_magnitude(b.fc_hz * r, b);
    EXPECT_NEAR(above, bell_magnitude(b.fc_hz / r, b), 1e-9 * above);
  }
}

TEST(Magnitude, EdgeAsymptotesAndPositivity) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 1000; ++i) {
    const auto kind = static_cast<BandKind>(i % 3);
    const auto b = random_band(rng, kind);
    const double lo = band_magnitude(b.fc_hz * 1e-6, b);
    const double hi = band_magnitude(b.fc_hz * 1e6, b);
    const double g = std::pow(10.0, b.gain_db / 20.0);
    const double expect_lo = kind == BandKind::LowShelf ? g : 1.0;
    const double expect_hi = kind == BandKind::HighShelf ? g : 1.0;
    EXPECT_NEAR(lo, expect_lo, 1e-6 * expect_lo);
    EXPECT_NEAR(hi, expect_hi, 1e-6 * expect_hi);
    EXPECT_GT(band_magnitude(b.fc_hz * 0.37, b), 0.0);
  }
}

}  // namespace
}  // namespace peqfit
