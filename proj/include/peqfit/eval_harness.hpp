#pragma once

// Evaluation: relative T60 error distributions over many target curves,
// magnitude metrics and per-sample cost.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "peqfit/errors.hpp"
#include "peqfit/optimizer.hpp"
#include "peqfit/peq_model.hpp"
#include "peqfit/target_curves.hpp"

namespace peqfit {

/// (target - achieved) / target * 100, element-wise.
inline std::vector<double> t60_relative_error(std::span<const double> target,
                                              std::span<const double> achieved) {
  if (target.size() != achieved.size()) {
    throw InvalidArgument("t60_relative_error: length mismatch");
  }
  std::vector<double> out(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!(target[i] > 0.0)) throw InvalidArgument("target T60 must be positive");
    out[i] = (target[i] - achieved[i]) / target[i] * 100.0;
  }
  return out;
}

struct MagnitudeMetrics {
  double mse_db2 = 0.0;
  double max_abs_db = 0.0;  // "MAE" in the reporting tables is the maximum
};

inline MagnitudeMetrics magnitude_metrics(std::span<const double> target_db,
                                          std::span<const double> pred_db) {
  if (target_db.size() != pred_db.size()) {
    throw InvalidArgument("magnitude_metrics: length mismatch");
  }
  if (target_db.empty()) throw InvalidArgument("magnitude_metrics: empty input");
  MagnitudeMetrics m;
  for (std::size_t i = 0; i < target_db.size(); ++i) {
    const double d = pred_db[i] - target_db[i];
    m.mse_db2 += d * d;
    m.max_abs_db = std::max(m.max_abs_db, std::abs(d));
  }
  m.mse_db2 /= static_cast<double>(target_db.size());
  return m;
}

struct CostReport {
  std::size_t ops = 0;     // arithmetic operations per sample per delay line
  std::size_t params = 0;  // trainable parameters
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

/// Transposed direct form II biquad: 5 multiplies + 4 adds per sample.
inline CostReport op_count(std::size_t n_bands) {
  if (n_bands < 1) throw InvalidArgument("op_count needs at least one band");
  return CostReport{9 * n_bands, 3 * n_bands};
}

// Literature figures for the 31-band two-stage attenuation filter; carried
// into reports for comparison only.
struct ReferenceFigures {
  static constexpr std::size_t kTsaf31Ops = 284;
  static constexpr std::size_t kTsaf31Params = 33;
};

struct ErrorDistribution {
  std::vector<double> bin_edges;  // size counts.size() + 1, percent
  std::vector<std::size_t> counts;
  std::size_t points = 0;
  double median = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  double p95_abs = 0.0;
  double max_abs = 0.0;
};

namespace detail {
// Linear interpolation between closest ranks; `sorted` must be ascending.
inline double percentile(std::span<const double> sorted, double pct) {
  if (sorted.empty()) return 0.0;
  const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}
}  // namespace detail

/// Histogram with fixed-width bins aligned to multiples of bin_width that
/// cover every value, plus summary statistics.
inline ErrorDistribution make_distribution(std::span<const double> errors_pct,
                                           double bin_width = 1.0) {
  if (!(bin_width > 0.0)) throw InvalidArgument("bin width must be positive");
  ErrorDistribution d;
  d.points = errors_pct.size();
  if (errors_pct.empty()) return d;
  std::vector<double> sorted(errors_pct.begin(), errors_pct.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> abs_sorted(sorted.size());
  std::transform(sorted.begin(), sorted.end(), abs_sorted.begin(),
                 [](double v) { return std::abs(v); });
  std::sort(abs_sorted.begin(), abs_sorted.end());
  d.median = detail::percentile(sorted, 50.0);
  d.p5 = detail::percentile(sorted, 5.0);
  d.p95 = detail::percentile(sorted, 95.0);
  d.p95_abs = detail::percentile(abs_sorted, 95.0);
  d.max_abs = abs_sorted.back();

  const double lo = std::floor(sorted.front() / bin_width) * bin_width;
  auto bins = static_cast<std::size_t>(std::floor((sorted.back() - lo) / bin_width)) + 1;
  d.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) d.bin_edges.push_back(lo + bin_width * i);
  for (double e : sorted) {
    auto k = static_cast<std::size_t>(std::floor((e - lo) / bin_width));
    d.counts[std::min(k, bins - 1)] += 1;
  }
  return d;
}

inline std::string histogram_to_csv(const ErrorDistribution& d) {
  std::string out = "bin_lo_pct,bin_hi_pct,count\n";
  char buf[128];
  for (std::size_t i = 0; i < d.counts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu\n", d.bin_edges[i], d.bin_edges[i + 1],
                  d.counts[i]);
    out += buf;
  }
  return out;
}

struct CampaignConfig {
  FitConfig fit;
  double fs = 48000.0;
  double delay_lo_s = 0.01;
  double delay_hi_s = 0.3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double bin_width_pct = 1.0;
  double flag_threshold_pct = 25.0;  // curves with any |error| above this are flagged
  double max_failure_fraction = 0.10;
};

struct CurveReport {
  std::size_t index = 0;
  std::string name;
  double delay_samples = 0.0;
  bool ok = false;
  std::string error;
  double final_mse = 0.0;
  double max_abs_error_pct = 0.0;
  std::vector<double> errors_pct;
};

struct CampaignResult {
  ErrorDistribution distribution;
  std::vector<CurveReport> curves;
  std::size_t failures = 0;
  std::vector<std::size_t> flagged;  // indices of curves above the threshold
  std::size_t n_bands = 0;
  std::size_t grid_size = 0;
};

// Fits one curve at one delay length and compares the achieved T60 with the
// interpolated target on the fit grid.
inline CurveReport evaluate_curve(const T60Curve& curve, double delay_samples, double fs,
                                  const FitConfig& cfg) {
  CurveReport r;
  r.delay_samples = delay_samples;
  const auto t60 = interpolate_to_grid(curve, cfg.grid);
  const auto result = fit(curve, delay_samples, fs, cfg);
  r.final_mse = result.report.final_mse;
  const auto response = peq_log_magnitude(result.peq.params, cfg.grid.freqs);
  const auto achieved = response_to_t60(response, delay_samples, fs);
  r.errors_pct = t60_relative_error(t60, achieved);
  for (double e : r.errors_pct) r.max_abs_error_pct = std::max(r.max_abs_error_pct, std::abs(e));
  r.ok = true;
  return r;
}

/// Fits every curve at a random delay length drawn uniformly from
/// [delay_lo_s, delay_hi_s] and pools the relative T60 errors. Results do not
/// depend on the worker count.
inline CampaignResult run_campaign(std::span<const T60Curve> curves, const CampaignConfig& cfg,
                                   std::span<const std::string> names = {}) {
  if (curves.empty()) throw InvalidArgument("campaign needs at least one curve");
  if (!(cfg.delay_lo_s > 0.0) || !(cfg.delay_hi_s >= cfg.delay_lo_s)) {
    throw InvalidArgument("invalid delay range");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> delay_s(cfg.delay_lo_s, cfg.delay_hi_s);
  std::vector<double> delays(curves.size());
  for (auto& d : delays) d = std::max(1.0, std::round(delay_s(rng) * cfg.fs));

  FitConfig fit_cfg = cfg.fit;
  fit_cfg.progress = nullptr;

  CampaignResult result;
  result.curves.resize(curves.size());
  result.n_bands = fit_cfg.n_bands;
  result.grid_size = fit_cfg.grid.size();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < curves.size(); i = next++) {
      CurveReport r;
      try {
        r = evaluate_curve(curves[i], delays[i], cfg.fs, fit_cfg);
      } catch (const Error& e) {
        r.ok = false;
        r.delay_samples = delays[i];
        r.error = e.what();
      }
      r.index = i;
      if (i < names.size()) r.name = names[i];
      result.curves[i] = std::move(r);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, curves.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<double> all;
  all.reserve(curves.size() * fit_cfg.grid.size());
  for (const auto& r : result.curves) {
    if (!r.ok) {
      ++result.failures;
      continue;
    }
    all.insert(all.end(), r.errors_pct.begin(), r.errors_pct.end());
    if (r.max_abs_error_pct > cfg.flag_threshold_pct) result.flagged.push_back(r.index);
  }
  if (static_cast<double>(result.failures) >
      cfg.max_failure_fraction * static_cast<double>(curves.size())) {
    throw Error("campaign aborted: " + std::to_string(result.failures) + " of " +
                std::to_string(curves.size()) + " fits failed");
  }
  result.distribution = make_distribution(all, cfg.bin_width_pct);
  return result;
}

inline nlohmann::ordered_json to_json(const CampaignResult& r) {
  nlohmann::ordered_json j;
  const auto cost = op_count(r.n_bands);
  j["n_bands"] = r.n_bands;
  j["curves"] = r.curves.size();
  j["grid_size"] = r.grid_size;
  j["points"] = r.distribution.points;
  j["failures"] = r.failures;
  j["median_pct"] = r.distribution.median;
  j["p5_pct"] = r.distribution.p5;
  j["p95_pct"] = r.distribution.p95;
  j["p95_abs_pct"] = r.distribution.p95_abs;
  j["max_abs_pct"] = r.distribution.max_abs;
  j["ops_per_sample"] = cost.ops;
  j["params"] = cost.params;
  j["reference_tsaf31"] = {{"ops_per_sample", ReferenceFigures::kTsaf31Ops},
                           {"params", ReferenceFigures::kTsaf31Params}};
  j["flagged_curves"] = nlohmann::ordered_json::array();
  for (std::size_t i : r.flagged) {
    const auto& c = r.curves[i];
    j["flagged_curves"].push_back(
        {{"index", i}, {"name", c.name}, {"max_abs_pct", c.max_abs_error_pct}});
  }
  auto& per = j["per_curve"] = nlohmann::ordered_json::array();
  for (const auto& c : r.curves) {
    nlohmann::ordered_json row{{"index", c.index}, {"name", c.name},
                               {"delay_samples", c.delay_samples}, {"ok", c.ok}};
    if (c.ok) {
      row["final_mse"] = c.final_mse;
      row["max_abs_pct"] = c.max_abs_error_pct;
    } else {
      row["error"] = c.error;
    }
    per.push_back(std::move(row));
  }
  return j;
}

/// Standard third-octave band centers from 20 Hz to 20 kHz (31 bands).
inline std::vector<double> third_octave_centers() {
  return {20,   25,   31.5, 40,   50,   63,   80,    100,   125,   160,   200,
          250,  315,  400,  500,  630,  800,  1000,  1250,  1600,  2000,  2500,
          3150, 4000, 5000, 6300, 8000, 10000, 12500, 16000, 20000};
}

/// Smooth random room-like T60 curves on third-octave bands, clamped to
/// [0.3, 5] s: a log-uniform mid-band value, a broad tilt and two slow
/// undulations in log T60 versus log frequency, and a high-frequency rolloff.
inline std::vector<T60Curve> synthetic_t60_curves(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const auto freqs = third_octave_centers();
  std::vector<T60Curve> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    const double mid = std::exp(std::log(0.5) + uni(rng) * std::log(6.0));
    const double tilt = (uni(rng) - 0.5) * 0.8;
    const double wave1 = uni(rng) * 0.25;
    const double phase1 = uni(rng) * 2.0 * std::numbers::pi;
    const double wave2 = uni(rng) * 0.1;
    const double phase2 = uni(rng) * 2.0 * std::numbers::pi;
    const double rolloff = uni(rng) * 1.2;
    std::vector<T60Point> pts;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(freqs.size() - 1);
      const double log_t = std::log(mid) - tilt * (s - 0.5) +
                           wave1 * std::cos(2.0 * std::numbers::pi * s + phase1) +
                           wave2 * std::cos(3.0 * std::numbers::pi * s + phase2) -
                           rolloff * std::pow(s, 4);
      pts.push_back({freqs[i], std::clamp(std::exp(log_t), 0.3, 5.0)});
    }
    out.push_back(make_t60_curve(std::move(pts)));
  }
  return out;
}

}  // namespace peqfit
