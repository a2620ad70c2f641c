#include "peqfit/peq_model.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "peqfit/optimizer.hpp"
#include "peqfit/target_curves.hpp"

namespace peqfit {
namespace {

PeqParams sample_peq() {
  return PeqParams{{{BandKind::LowShelf, 90.0, -4.0, 0.8},
                    {BandKind::Bell, 400.0, -2.5, 1.2},
                    {BandKind::Bell, 2000.0, -3.0, 0.9},
                    {BandKind::HighShelf, 9000.0, -8.0, 0.7}}};
}

TEST(PeqParams, Validation) {
  EXPECT_NO_THROW(validate(sample_peq()));
  PeqParams too_few{{{BandKind::LowShelf, 90.0, 0.0, 1.0}, {BandKind::HighShelf, 900.0, 0.0, 1.0}}};
  EXPECT_THROW(validate(too_few), InvalidParameter);
  auto wrong_kind = sample_peq();
  wrong_kind.bands[0].kind = BandKind::Bell;
  EXPECT_THROW(validate(wrong_kind), InvalidParameter);
  auto unsorted = sample_peq();
  std::swap(unsorted.bands[1], unsorted.bands[2]);
  EXPECT_THROW(validate(unsorted), InvalidParameter);
}

TEST(PeqLogMagnitude, ZeroGainsGiveZeroDb) {
  auto peq = sample_peq();
  for (auto& b : peq.bands) b.gain_db = 0.0;
  const auto g = FrequencyGrid::default_for(48000.0, 64);
  for (double v : peq_log_magnitude(peq, g.freqs)) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(PeqLogMagnitude, IsSumOfBands) {
  const auto peq = sample_peq();
  const auto g = FrequencyGrid::default_for(48000.0, 128);
  const auto total = peq_log_magnitude(peq, g.freqs);
  std::vector<double> sum(g.size(), 0.0);
  for (const auto& b : peq.bands) {
    const auto part = peq_log_magnitude(std::span<const BandParams>(&b, 1), g.freqs);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += part[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(total[i], sum[i], 1e-12);
}

TEST(PeqLogMagnitude, RejectsBadFrequencies) {
  const auto peq = sample_peq();
  EXPECT_THROW(peq_log_magnitude(peq, std::vector<double>{}), InvalidArgument);
  EXPECT_THROW(peq_log_magnitude(peq, std::vector<double>{0.0, 10.0}), InvalidArgument);
  EXPECT_THROW(peq_log_magnitude(peq, std::vector<double>{100.0, 10.0}), InvalidArgument);
}

TEST(ScaleToDelay, Examples) {
  const FittedPeq fitted{sample_peq(), 4800.0, 48000.0};
  EXPECT_EQ(scale_to_delay(fitted, 4800.0), fitted.params);
  const auto doubled = scale_to_delay(fitted, 9600.0);
  for (std::size_t i = 0; i < doubled.size(); ++i) {
    EXPECT_EQ(doubled.bands[i].gain_db, 2.0 * fitted.params.bands[i].gain_db);
    EXPECT_EQ(doubled.bands[i].fc_hz, fitted.params.bands[i].fc_hz);
    EXPECT_EQ(doubled.bands[i].q, fitted.params.bands[i].q);
  }
  EXPECT_THROW(scale_to_delay(fitted, 0.5), InvalidArgument);
}

TEST(ScaleToDelay, RescalingComposes) {
  // Composition is exact up to the rounding of the two ratios (a few ulp).
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> m(1.0, 20000.0);
  const FittedPeq fitted{sample_peq(), 4800.0, 48000.0};
  for (int i = 0; i < 200; ++i) {
    const double m1 = std::round(m(rng)), m2 = std::round(m(rng));
    const FittedPeq via{scale_to_delay(fitted, m1), m1, fitted.fs};
    const auto twice = scale_to_delay(via, m2);
    const auto direct = scale_to_delay(fitted, m2);
    for (std::size_t b = 0; b < direct.size(); ++b) {
      EXPECT_NEAR(twice.bands[b].gain_db, direct.bands[b].gain_db,
                  4.0 * std::numeric_limits<double>::epsilon() * std::abs(direct.bands[b].gain_db));
    }
  }
}

TEST(ResponseToT60, Examples) {
  EXPECT_DOUBLE_EQ(response_to_t60(std::vector<double>{-6.0}, 4800.0, 48000.0)[0], 1.0);
  EXPECT_DOUBLE_EQ(response_to_t60(std::vector<double>{-60.0}, 48000.0, 48000.0)[0], 1.0);
  EXPECT_THROW(response_to_t60(std::vector<double>{-1.0, 0.0}, 4800.0, 48000.0), NonDecaying);
  EXPECT_THROW(response_to_t60(std::vector<double>{0.5}, 4800.0, 48000.0), NonDecaying);
}

TEST(ResponseToT60, InvertsTargetMagnitude) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> t(0.1, 10.0);
  std::vector<double> t60(300);
  for (auto& v : t60) v = t(rng);
  for (double m : {1.0, 480.0, 4801.0, 14400.0}) {
    const auto back = response_to_t60(target_magnitude(t60, m, 48000.0), m, 48000.0);
    for (std::size_t i = 0; i < t60.size(); ++i) EXPECT_NEAR(back[i], t60[i], 1e-12 * t60[i]);
  }
}

TEST(FittedPeqJson, RoundTripsAndUsesFieldNames) {
  const FittedPeq fitted{sample_peq(), 4800.0, 48000.0};
  const auto j = to_json(fitted);
  EXPECT_TRUE(j.contains("fs"));
  EXPECT_TRUE(j.contains("m_ref"));
  ASSERT_EQ(j["bands"].size(), 4u);
  EXPECT_EQ(j["bands"][0]["kind"], "low_shelf");
  EXPECT_EQ(j["bands"][1]["kind"], "bell");
  EXPECT_EQ(j["bands"][3]["kind"], "high_shelf");
  for (const char* key : {"fc_hz", "gain_db", "q"}) EXPECT_TRUE(j["bands"][0].contains(key));
  EXPECT_EQ(fitted_peq_from_json_text(j.dump()), fitted);
}

TEST(FittedPeqJson, RejectsMalformed) {
  EXPECT_THROW(fitted_peq_from_json_text("{"), ParseError);
  EXPECT_THROW(fitted_peq_from_json_text(R"({"fs": 48000, "bands": []})"), ParseError);
  EXPECT_THROW(fitted_peq_from_json_text(
                   R"({"fs":48000,"m_ref":10,"bands":[{"kind":"bell","fc_hz":1,"gain_db":0,"q":1}]})"),
               ParseError);
  EXPECT_THROW(fitted_peq_from_json_text(
                   R"({"fs":48000,"m_ref":10,"bands":[{"kind":"notch","fc_hz":1,"gain_db":0,"q":1}]})"),
               ParseError);
}

TEST(ScaleToDelay, FlatTargetScalesWithDelay) {
  const auto curve = make_t60_curve({{100.0, 1.0}, {10000.0, 1.0}});
  FitConfig cfg;
  cfg.n_bands = 4;
  cfg.iterations = 3000;
  const auto result = fit(curve, 4800.0, 48000.0, cfg);
  const auto ref = peq_log_magnitude(result.peq.params, cfg.grid.freqs);
  const auto twice = peq_log_magnitude(scale_to_delay(result.peq, 9600.0), cfg.grid.freqs);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    EXPECT_NEAR(ref[i], -6.0, 0.05);
    // Shelf and bell shapes change with gain, so doubling is only approximate.
    EXPECT_NEAR(twice[i], -12.0, 0.5);
  }
}

TEST(ScaleToDelay, ResponseIsNearlyProportional) {
  // Band gains scale exactly; the summed dB response only approximately,
  // because bell and shelf shapes depend on gain.
  const std::vector<T60Point> pts{{50.0, 1.2}, {200.0, 1.1}, {1000.0, 0.9},
                                  {4000.0, 0.75}, {16000.0, 0.6}};
  FitConfig cfg;
  cfg.n_bands = 8;
  cfg.iterations = 3000;
  const auto result = fit(make_t60_curve(pts), 4800.0, 48000.0, cfg);
  for (const auto& b : result.peq.params.bands) ASSERT_LE(std::abs(b.gain_db), 12.0);
  const auto ref = peq_log_magnitude(result.peq.params, cfg.grid.freqs);
  const auto twice = peq_log_magnitude(scale_to_delay(result.peq, 9600.0), cfg.grid.freqs);
  double worst = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(twice[i] - 2.0 * ref[i]));
  RecordProperty("max_deviation_db", std::to_string(worst));
  EXPECT_LT(worst, 1.0);
}

}  // namespace
}  // namespace peqfit
