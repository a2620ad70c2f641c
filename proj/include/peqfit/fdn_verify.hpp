#pragma once

// Feedback delay network renderer and Schroeder-integration decay analysis,
// used to check that fitted attenuation filters produce the intended T60.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "peqfit/digitize.hpp"
#include "peqfit/errors.hpp"
#include "peqfit/peq_model.hpp"

namespace peqfit {

struct FdnConfig {
  std::vector<std::size_t> delays;  // samples, distinct
  double fs = 48000.0;
  Eigen::MatrixXd feedback;         // L x L orthogonal
  std::vector<SosCascade> filters;  // one attenuation cascade per line
  std::vector<double> input_gains;
  std::vector<double> output_gains;
  double duration_s = 1.0;

  std::size_t lines() const { return delays.size(); }
};

/// I - (2/L) 1 1^T.
inline Eigen::MatrixXd householder_matrix(std::size_t lines) {
  if (lines < 1) throw InvalidArgument("householder_matrix needs at least one line");
  const auto n = static_cast<Eigen::Index>(lines);
  return Eigen::MatrixXd::Identity(n, n) -
         (2.0 / static_cast<double>(lines)) * Eigen::MatrixXd::Ones(n, n);
}

inline void validate(const FdnConfig& cfg) {
  const std::size_t n = cfg.lines();
  if (n == 0) throw InvalidArgument("FDN needs at least one delay line");
  if (!(cfg.fs > 0.0)) throw InvalidArgument("sample rate must be positive");
  if (!(cfg.duration_s > 0.0) || !std::isfinite(cfg.duration_s)) {
    throw InvalidArgument("render duration must be positive");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cfg.delays[i] < 1) throw InvalidArgument("delay lengths must be >= 1 sample");
    for (std::size_t j = 0; j < i; ++j) {
      if (cfg.delays[i] == cfg.delays[j]) throw InvalidArgument("delay lengths must be distinct");
    }
  }
  const auto rows = static_cast<Eigen::Index>(n);
  if (cfg.feedback.rows() != rows || cfg.feedback.cols() != rows) {
    throw InvalidArgument("feedback matrix must be L x L");
  }
  const double err =
      (cfg.feedback * cfg.feedback.transpose() - Eigen::MatrixXd::Identity(rows, rows))
          .cwiseAbs()
          .maxCoeff();
  if (!(err < 1e-9)) throw InvalidArgument("feedback matrix is not orthogonal");
  if (cfg.filters.size() != n || cfg.input_gains.size() != n || cfg.output_gains.size() != n) {
    throw InvalidArgument("need one filter cascade and one input/output gain per line");
  }
  for (const auto& sos : cfg.filters) {
    validate(sos);
    if (sos.fs() != cfg.fs) throw InvalidArgument("filter sample rate differs from FDN rate");
  }
}

// Transposed direct form II cascade state.
class SosFilter {
 public:
  explicit SosFilter(const SosCascade& sos) : sections_(sos.sections), state_(2 * sos.size()) {}

  double process(double x) {
    for (std::size_t k = 0; k < sections_.size(); ++k) {
      const auto& c = sections_[k];
      double& s1 = state_[2 * k];
      double& s2 = state_[2 * k + 1];
      const double y = c.b0 * x + s1;
      s1 = c.b1 * x - c.a1 * y + s2;
      s2 = c.b2 * x - c.a2 * y;
      x = y;
    }
    return x;
  }

 private:
  std::vector<BiquadCoeffs> sections_;
  std::vector<double> state_;
};

/// Impulse response of the FDN: each delay line's output passes through its
/// attenuation cascade, the filtered outputs are tapped by the output gains
/// and mixed by the feedback matrix back into the lines.
inline std::vector<double> render_ir(const FdnConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.lines();
  const auto total = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));
  if (total == 0) throw InvalidArgument("render duration is shorter than one sample");

  std::vector<std::vector<double>> lines(n);
  std::vector<std::size_t> heads(n, 0);
  for (std::size_t i = 0; i < n; ++i) lines[i].assign(cfg.delays[i], 0.0);
  std::vector<SosFilter> filters;
  filters.reserve(n);
  for (const auto& sos : cfg.filters) filters.emplace_back(sos);

  Eigen::VectorXd filtered(static_cast<Eigen::Index>(n));
  Eigen::VectorXd mixed(static_cast<Eigen::Index>(n));
  std::vector<double> out(total, 0.0);
  for (std::size_t t = 0; t < total; ++t) {
    const double input = t == 0 ? 1.0 : 0.0;
    double y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = filters[i].process(lines[i][heads[i]]);
      filtered(static_cast<Eigen::Index>(i)) = v;
      y += cfg.output_gains[i] * v;
    }
    if (!std::isfinite(y)) throw Instability("FDN output became non-finite", t);
    out[t] = y;
    mixed.noalias() = cfg.feedback * filtered;
    for (std::size_t i = 0; i < n; ++i) {
      lines[i][heads[i]] = mixed(static_cast<Eigen::Index>(i)) + cfg.input_gains[i] * input;
      if (++heads[i] == cfg.delays[i]) heads[i] = 0;
    }
  }
  return out;
}

/// `count` distinct delay lengths log-spaced over [lo_s, hi_s], each nudged
/// upward to the nearest integer coprime with all shorter ones.
inline std::vector<std::size_t> coprime_delay_lengths(std::size_t count, double lo_s, double hi_s,
                                                      double fs) {
  if (count < 1) throw InvalidArgument("need at least one delay line");
  if (!(lo_s > 0.0) || !(hi_s >= lo_s)) throw InvalidArgument("need 0 < lo <= hi delay range");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    auto m = static_cast<std::size_t>(std::llround(lo_s * std::pow(hi_s / lo_s, frac) * fs));
    m = std::max<std::size_t>(m, 1);
    auto ok = [&](std::size_t c) {
      return std::all_of(out.begin(), out.end(), [c](std::size_t o) {
        return o != c && std::gcd(o, c) == 1;
      });
    };
    while (!ok(m)) ++m;
    out.push_back(m);
  }
  return out;
}

// FDN with one scaled copy of the fitted PEQ per line, Householder feedback,
// unit input gains and seeded random-sign output gains.
inline FdnConfig make_fdn(const FittedPeq& fitted, std::vector<std::size_t> delays,
                          double duration_s, std::uint64_t seed,
                          DigitizeMethod method = DigitizeMethod::Auto) {
  FdnConfig cfg;
  cfg.fs = fitted.fs;
  cfg.delays = std::move(delays);
  cfg.duration_s = duration_s;
  cfg.feedback = householder_matrix(cfg.delays.size());
  std::mt19937_64 rng(seed);
  for (std::size_t m : cfg.delays) {
    cfg.filters.push_back(peq_to_sos(scale_to_delay(fitted, static_cast<double>(m)), cfg.fs, method));
    cfg.input_gains.push_back(1.0);
    cfg.output_gains.push_back((rng() & 1) ? 1.0 : -1.0);
  }
  return cfg;
}

struct DecayMeasurement {
  double band_hz = 0.0;  // 0 means broadband
  double t60_s = 0.0;
  double fit_hi_db = -5.0;
  double fit_lo_db = -25.0;
  double residual_db = 0.0;  // RMS regression residual
};

namespace detail {
// Second-order Butterworth sections (RBJ cookbook, Q = 1/sqrt(2)).
inline BiquadCoeffs butterworth(double fc, double fs, bool highpass) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  BiquadCoeffs c;
  c.fs = fs;
  if (highpass) {
    c.b0 = (1.0 + cw) / 2.0 / a0;
    c.b1 = -(1.0 + cw) / a0;
  } else {
    c.b0 = (1.0 - cw) / 2.0 / a0;
    c.b1 = (1.0 - cw) / a0;
  }
  c.b2 = c.b0;
  c.a1 = -2.0 * cw / a0;
  c.a2 = (1.0 - alpha) / a0;
  return c;
}
}  // namespace detail

/// Fourth-order octave band: Butterworth high-pass at band/sqrt(2) followed
/// by a Butterworth low-pass at band*sqrt(2).
inline SosCascade octave_band_filter(double band_hz, double fs) {
  const double hi = band_hz * std::numbers::sqrt2;
  if (!(band_hz > 0.0) || !(hi < fs / 2.0)) {
    throw InvalidArgument("octave band must lie below Nyquist");
  }
  return SosCascade{{detail::butterworth(band_hz / std::numbers::sqrt2, fs, true),
                     detail::butterworth(hi, fs, false)}};
}

/// T60 from the backward-integrated energy decay curve, regressed over
/// [fit_lo_db, fit_hi_db] and extrapolated to 60 dB. band_hz = 0 skips the
/// octave filter.
inline DecayMeasurement schroeder_t60(std::span<const double> ir, double fs, double band_hz,
                                      double fit_hi_db = -5.0, double fit_lo_db = -25.0) {
  if (!(fs > 0.0)) throw InvalidArgument("sample rate must be positive");
  if (!(fit_lo_db < fit_hi_db) || !(fit_hi_db <= 0.0)) {
    throw InvalidArgument("fit range must satisfy lo < hi <= 0 dB");
  }
  std::vector<double> x(ir.begin(), ir.end());
  if (band_hz > 0.0) {
    SosFilter bp(octave_band_filter(band_hz, fs));
    for (auto& v : x) v = bp.process(v);
  }
  // Backward integration; long double keeps the tail from drowning in
  // rounding of the early energy.
  std::vector<double> edc_db(x.size());
  long double acc = 0.0L;
  std::vector<long double> edc(x.size());
  for (std::size_t i = x.size(); i-- > 0;) {
    acc += static_cast<long double>(x[i]) * x[i];
    edc[i] = acc;
  }
  if (x.empty() || !(acc > 0.0L)) throw InsufficientDecay("signal is silent");
  for (std::size_t i = 0; i < x.size(); ++i) {
    edc_db[i] = edc[i] > 0.0L ? 10.0 * std::log10(static_cast<double>(edc[i] / acc)) : -1e300;
  }

  const auto first_below = [&](double level) {
    return static_cast<std::size_t>(
        std::find_if(edc_db.begin(), edc_db.end(), [level](double v) { return v <= level; }) -
        edc_db.begin());
  };
  const std::size_t start = first_below(fit_hi_db);
  const std::size_t stop = first_below(fit_lo_db);
  // Truncation bends the curve down over the last stretch of the signal;
  // a crossing that only happens there is not a real decay.
  const std::size_t usable = x.size() - x.size() / 10;
  if (stop >= usable || stop <= start + 1) {
    throw InsufficientDecay("energy decay curve spans less than " +
                            std::to_string(-fit_lo_db) + " dB");
  }

  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  const double count = static_cast<double>(stop - start + 1);
  for (std::size_t i = start; i <= stop; ++i) {
    const double t = static_cast<double>(i) / fs;
    st += t;
    sy += edc_db[i];
    stt += t * t;
    sty += t * edc_db[i];
  }
  const double slope = (count * sty - st * sy) / (count * stt - st * st);
  const double intercept = (sy - slope * st) / count;
  if (!(slope < 0.0)) throw InsufficientDecay("energy decay curve is not decreasing");
  double ss = 0.0;
  for (std::size_t i = start; i <= stop; ++i) {
    const double r = edc_db[i] - (intercept + slope * static_cast<double>(i) / fs);
    ss += r * r;
  }
  return DecayMeasurement{band_hz, -60.0 / slope, fit_hi_db, fit_lo_db, std::sqrt(ss / count)};
}

// "band_hz,t60_s,residual"
inline std::string decay_measurements_to_csv(std::span<const DecayMeasurement> rows) {
  std::string out = "band_hz,t60_s,residual\n";
  char buf[128];
  for (const auto& m : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", m.band_hz, m.t60_s, m.residual_db);
    out += buf;
  }
  return out;
}

}  // namespace peqfit
