#include "peqfit/fdn_verify.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "peqfit/io.hpp"

namespace peqfit {
namespace {

constexpr double kFs = 48000.0;

SosCascade gain_section(double gain) {
  return SosCascade{{BiquadCoeffs{gain, 0.0, 0.0, 0.0, 0.0, kFs}}};
}

// Broadband FDN whose line k loses exactly -60*m_k/(t60*fs) dB per pass.
FdnConfig flat_fdn(const std::vector<std::size_t>& delays, double t60, double duration) {
  FdnConfig cfg;
  cfg.fs = kFs;
  cfg.delays = delays;
  cfg.duration_s = duration;
  cfg.feedback = householder_matrix(delays.size());
  for (std::size_t i = 0; i < delays.size(); ++i) {
    const double db = -60.0 * static_cast<double>(delays[i]) / (t60 * kFs);
    cfg.filters.push_back(gain_section(std::pow(10.0, db / 20.0)));
    cfg.input_gains.push_back(1.0);
    cfg.output_gains.push_back(i % 2 ? -1.0 : 1.0);
  }
  return cfg;
}

TEST(Householder, Examples) {
  const auto one = householder_matrix(1);
  ASSERT_EQ(one.rows(), 1);
  EXPECT_EQ(one(0, 0), -1.0);
  const auto four = householder_matrix(4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(four(i, j), i == j ? 0.5 : -0.5);
  }
  EXPECT_THROW(householder_matrix(0), InvalidArgument);
}

TEST(Householder, OrthogonalUpTo64Lines) {
  for (std::size_t l = 1; l <= 64; ++l) {
    const auto a = householder_matrix(l);
    const auto n = static_cast<Eigen::Index>(l);
    const double err = (a * a.transpose() - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    EXPECT_LT(err, 1e-12) << "L = " << l;
  }
}

TEST(CoprimeDelays, DistinctCoprimeInRange) {
  const auto d = coprime_delay_lengths(8, 0.01, 0.3, kFs);
  ASSERT_EQ(d.size(), 8u);
  EXPECT_GE(d.front(), 480u);
  EXPECT_LE(d.back(), 14400u + 50u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) EXPECT_EQ(std::gcd(d[i], d[j]), 1u);
  }
}

TEST(FdnConfig, ValidationRejectsBadConfigs) {
  auto cfg = flat_fdn({101, 103, 107, 109}, 1.0, 0.1);
  EXPECT_NO_THROW(validate(cfg));
  auto dup = cfg;
  dup.delays[1] = 101;
  EXPECT_THROW(validate(dup), InvalidArgument);
  auto skew = cfg;
  skew.feedback(0, 0) += 1e-6;
  EXPECT_THROW(validate(skew), InvalidArgument);
  auto short_gains = cfg;
  short_gains.output_gains.pop_back();
  EXPECT_THROW(validate(short_gains), InvalidArgument);
  auto zero_len = cfg;
  zero_len.duration_s = 0.0;
  EXPECT_THROW(validate(zero_len), InvalidArgument);
}

TEST(RenderIr, LosslessLoopKeepsEnergy) {
  const auto delays = coprime_delay_lengths(8, 0.005, 0.03, kFs);
  auto cfg = flat_fdn(delays, 1.0, 3.0);
  for (auto& f : cfg.filters) f = gain_section(1.0);
  const auto ir = render_ir(cfg);
  const std::size_t win = static_cast<std::size_t>(0.1 * kFs);
  std::vector<double> rms_db;
  for (std::size_t s = 2 * win; s + win <= ir.size(); s += win) {
    double e = 0.0;
    for (std::size_t i = s; i < s + win; ++i) e += ir[i] * ir[i];
    rms_db.push_back(10.0 * std::log10(e / static_cast<double>(win)));
  }
  const auto [lo, hi] = std::minmax_element(rms_db.begin(), rms_db.end());
  EXPECT_LT(*hi - *lo, 3.0);
}

TEST(RenderIr, ZeroInputGivesSilence) {
  auto cfg = flat_fdn({331, 479, 613}, 1.0, 0.2);
  std::fill(cfg.input_gains.begin(), cfg.input_gains.end(), 0.0);
  for (double v : render_ir(cfg)) EXPECT_EQ(v, 0.0);
}

TEST(RenderIr, LinearInInputGains) {
  const auto cfg = flat_fdn({331, 479, 613, 797}, 0.8, 0.3);
  auto scaled = cfg;
  for (auto& g : scaled.input_gains) g *= -2.5;
  const auto a = render_ir(cfg);
  const auto b = render_ir(scaled);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), static_cast<std::size_t>(0.3 * kFs));
  // Relative to the peak: samples where the mix cancels carry rounding residue.
  double peak = 0.0;
  for (double v : a) peak = std::max(peak, std::abs(v));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], -2.5 * a[i], 1e-12 * 2.5 * peak);
}

TEST(RenderIr, FlatAttenuationGivesOneSecond) {
  const auto cfg = flat_fdn(coprime_delay_lengths(8, 0.01, 0.3, kFs), 1.0, 2.0);
  const auto ir = render_ir(cfg);
  const auto m = schroeder_t60(ir, kFs, 0.0);
  EXPECT_NEAR(m.t60_s, 1.0, 0.05);
}

TEST(RenderIr, GrowingLoopRaisesInstability) {
  auto cfg = flat_fdn({31, 37, 41}, 1.0, 10.0);
  for (auto& f : cfg.filters) f = gain_section(1e3);
  try {
    render_ir(cfg);
    FAIL() << "expected Instability";
  } catch (const Instability& e) {
    EXPECT_GT(e.sample_index(), 0u);
  }
}

std::vector<double> synthetic_decay(double t60, double seconds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(seconds * kFs));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / kFs;
    x[i] = std::exp(-3.0 * std::log(10.0) * t / t60) * noise(rng);
  }
  return x;
}

TEST(SchroederT60, SyntheticDecay) {
  const auto x = synthetic_decay(1.5, 3.0, 1);
  const auto m = schroeder_t60(x, kFs, 0.0);
  EXPECT_NEAR(m.t60_s, 1.5, 0.015);
  EXPECT_EQ(m.fit_hi_db, -5.0);
  EXPECT_EQ(m.fit_lo_db, -25.0);
  EXPECT_GE(m.residual_db, 0.0);
}

TEST(SchroederT60, SyntheticDecayInOctaveBands) {
  const auto x = synthetic_decay(1.5, 3.0, 2);
  // Narrow bands of noise fluctuate more than the broadband decay.
  for (double band : {250.0, 1000.0, 4000.0}) {
    EXPECT_NEAR(schroeder_t60(x, kFs, band).t60_s, 1.5, 0.075) << band;
  }
}

TEST(SchroederT60, ScaleInvariant) {
  const auto x = synthetic_decay(0.7, 1.5, 3);
  const double ref = schroeder_t60(x, kFs, 0.0).t60_s;
  for (double c : {1e-6, 0.3, -4.0, 1e5}) {
    auto y = x;
    for (auto& v : y) v *= c;
    EXPECT_NEAR(schroeder_t60(y, kFs, 0.0).t60_s, ref, 1e-9 * ref);
  }
}

TEST(SchroederT60, RejectsSilenceAndShortDecays) {
  EXPECT_THROW(schroeder_t60(std::vector<double>(48000, 0.0), kFs, 0.0), InsufficientDecay);
  EXPECT_THROW(schroeder_t60(std::vector<double>{}, kFs, 0.0), InsufficientDecay);
  // 0.1 s of a 10 s decay only drops about 0.6 dB.
  const auto x = synthetic_decay(10.0, 0.1, 4);
  EXPECT_THROW(schroeder_t60(x, kFs, 0.0), InsufficientDecay);
}

TEST(DecayCsv, Layout) {
  const std::vector<DecayMeasurement> rows{{0.0, 1.25, -5.0, -25.0, 0.5}};
  EXPECT_EQ(decay_measurements_to_csv(rows), "band_hz,t60_s,residual\n0,1.25,0.5\n");
}

TEST(Wav, RoundTrip) {
  const std::vector<double> x{0.0, 0.5, -0.25, 1.0, -1.0, 1e-7};
  const auto bytes = encode_wav_f32(x, 48000);
  EXPECT_EQ(bytes.substr(0, 4), "RIFF");
  EXPECT_EQ(bytes.substr(8, 4), "WAVE");
  const auto back = decode_wav_f32(bytes);
  EXPECT_EQ(back.sample_rate, 48000u);
  ASSERT_EQ(back.samples.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(back.samples[i], static_cast<float>(x[i]));
}

}  // namespace
}  // namespace peqfit
