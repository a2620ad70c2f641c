#pragma once

// Analog prototype -> digital biquad. Every method reproduces the analog
// magnitude exactly at the band's f_c; they differ in how well they track it
// elsewhere, mainly towards Nyquist.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "peqfit/errors.hpp"
#include "peqfit/peq_model.hpp"
#include "peqfit/prototypes.hpp"

namespace peqfit {

// Digital second-order section with a0 normalized to 1.
struct BiquadCoeffs {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
  double fs = 48000.0;

  friend bool operator==(const BiquadCoeffs&, const BiquadCoeffs&) = default;
};

// Triangle conditions: both poles of z^2 + a1 z + a2 strictly inside the unit
// circle.
inline bool is_stable(const BiquadCoeffs& c) {
  return std::abs(c.a2) < 1.0 && std::abs(c.a1) < 1.0 + c.a2;
}

struct SosCascade {
  std::vector<BiquadCoeffs> sections;

  double fs() const { return sections.empty() ? 0.0 : sections.front().fs; }
  std::size_t size() const { return sections.size(); }
};

inline void validate(const SosCascade& sos) {
  if (sos.sections.empty()) throw InvalidArgument("SOS cascade is empty");
  for (const auto& s : sos.sections) {
    if (s.fs != sos.sections.front().fs) throw InvalidArgument("SOS sections differ in fs");
    for (double v : {s.b0, s.b1, s.b2, s.a1, s.a2}) {
      if (!std::isfinite(v)) throw InvalidArgument("non-finite SOS coefficient");
    }
  }
}

enum class DigitizeMethod {
  // Prewarped bilinear transform; exact at f_c, warped towards Nyquist.
  Bilinear,
  // Impulse-invariant poles, numerator matched to the analog magnitude at DC,
  // f_c and Nyquist.
  Matched,
  // Weighted least-squares fit of the squared magnitude in the
  // phi = sin^2(w/2) domain, pinned at f_c, then spectrally factored.
  LeastSquares,
  // Whichever of the above has the smallest worst-case dB error below
  // kFitBandEdge * Nyquist.
  Auto,
};

/// Upper edge of the frequency range, as a fraction of Nyquist, that the
/// least-squares design fits and Auto scores candidates over.
inline constexpr double kFitBandEdge = 0.8;

namespace detail {

struct AnalogQuadratics {
  // Prototype in s normalized to f_c: (n2 s^2 + n1 s + n0)/(d2 s^2 + d1 s + d0).
  double n2, n1, n0, d2, d1, d0;
};

inline AnalogQuadratics analog_quadratics(const BandParams& band) {
  const double amp = db_to_linear_amp(band.gain_db);
  const double sqrt_amp = std::sqrt(amp);
  switch (band.kind) {
    case BandKind::Bell:
      return {1.0, amp / band.q, 1.0, 1.0, 1.0 / (amp * band.q), 1.0};
    case BandKind::LowShelf:
      return {amp, amp * sqrt_amp / band.q, amp * amp, amp, sqrt_amp / band.q, 1.0};
    case BandKind::HighShelf:
      return {amp * amp, amp * sqrt_amp / band.q, amp, 1.0, sqrt_amp / band.q, amp};
  }
  return {1.0, 0.0, 1.0, 1.0, 0.0, 1.0};
}

inline double phi_of(double f, double fs) {
  const double s = std::sin(std::numbers::pi * f / fs);
  return s * s;
}

inline double analog_power(const BandParams& band, double f) {
  const double m = magnitude_unchecked(f, band);
  return m * m;
}

// Squared magnitude of c0 + c1 z^-1 + c2 z^-2 is a quadratic in
// phi = sin^2(w/2):
//   (c0+c1+c2)^2 - 4 phi (c1 (c0+c2) + 4 c0 c2) + 16 c0 c2 phi^2.
// Inverts that map for p(phi) = p0 + p1 phi + p2 phi^2, returning the factor
// with |c2| <= |c0| (roots inside or on the unit circle).
inline std::optional<std::array<double, 3>> factor_power_quadratic(double p0, double p1,
                                                                   double p2) {
  const double at_dc = p0;
  const double at_nyquist = p0 + p1 + p2;
  if (!(at_dc >= 0.0) || !(at_nyquist >= 0.0)) return std::nullopt;
  const double r0 = std::sqrt(at_dc);
  const double r1 = std::sqrt(at_nyquist);
  for (const double sign : {1.0, -1.0}) {
    const double outer = 0.5 * (r0 + sign * r1);  // c0 + c2
    const double c1 = 0.5 * (r0 - sign * r1);
    // c0 and c2 are the roots of x^2 - outer x + p2/16.
    const double disc = outer * outer - p2 / 4.0;
    if (disc < 0.0) continue;
    double c0 = 0.5 * (outer + std::copysign(std::sqrt(disc), outer));
    double c2 = outer - c0;
    if (std::abs(c2) > std::abs(c0)) std::swap(c0, c2);
    if (c0 == 0.0) continue;
    return std::array<double, 3>{c0, c1, c2};
  }
  return std::nullopt;
}

inline BiquadCoeffs bilinear(const BandParams& band, double fs) {
  const auto a = analog_quadratics(band);
  // s -> k (1 - z^-1)/(1 + z^-1) with k = cot(pi f_c / fs) maps f_c onto itself.
  const double k = 1.0 / std::tan(std::numbers::pi * band.fc_hz / fs);
  const double k2 = k * k;
  const double a0 = a.d2 * k2 + a.d1 * k + a.d0;
  BiquadCoeffs c;
  c.fs = fs;
  c.b0 = (a.n2 * k2 + a.n1 * k + a.n0) / a0;
  c.b1 = 2.0 * (a.n0 - a.n2 * k2) / a0;
  c.b2 = (a.n2 * k2 - a.n1 * k + a.n0) / a0;
  c.a1 = 2.0 * (a.d0 - a.d2 * k2) / a0;
  c.a2 = (a.d2 * k2 - a.d1 * k + a.d0) / a0;
  return c;
}

// Squared denominator magnitude as a quadratic in phi, for monic 1 + a1 z^-1 + a2 z^-2.
inline std::array<double, 3> denominator_power(double a1, double a2) {
  const double s = 1.0 + a1 + a2;
  return {s * s, -4.0 * (a1 * (1.0 + a2) + 4.0 * a2), 16.0 * a2};
}

inline std::optional<BiquadCoeffs> matched(const BandParams& band, double fs) {
  const auto a = analog_quadratics(band);
  const double w_t = 2.0 * std::numbers::pi * band.fc_hz / fs;
  const double disc = a.d1 * a.d1 - 4.0 * a.d2 * a.d0;
  const double re = -a.d1 / (2.0 * a.d2) * w_t;
  BiquadCoeffs c;
  c.fs = fs;
  if (disc < 0.0) {
    const double im = std::sqrt(-disc) / (2.0 * a.d2) * w_t;
    c.a1 = -2.0 * std::exp(re) * std::cos(im);
  } else {
    const double h = std::sqrt(disc) / (2.0 * a.d2) * w_t;
    c.a1 = -(std::exp(re + h) + std::exp(re - h));
  }
  c.a2 = std::exp(2.0 * re);

  const auto den = denominator_power(c.a1, c.a2);
  auto den_at = [&](double phi) { return den[0] + den[1] * phi + den[2] * phi * phi; };
  const double phi_c = phi_of(band.fc_hz, fs);
  const double at_dc = analog_power(band, 0.0) * den_at(0.0);
  const double at_nyquist = analog_power(band, fs / 2.0) * den_at(1.0);
  const double at_fc = analog_power(band, band.fc_hz) * den_at(phi_c);
  // Quadratic through the three points, written as S(1-phi) + D phi + q(phi^2 - phi).
  const double q = (at_fc - at_dc * (1.0 - phi_c) - at_nyquist * phi_c) / (phi_c * phi_c - phi_c);
  const auto num = factor_power_quadratic(at_dc, at_nyquist - at_dc - q, q);
  if (!num) return std::nullopt;
  c.b0 = (*num)[0];
  c.b1 = (*num)[1];
  c.b2 = (*num)[2];
  return c;
}

inline std::vector<double> fit_band_freqs(double fs) {
  const double top = kFitBandEdge * fs / 2.0;
  std::vector<double> f;
  constexpr int kLog = 200;
  constexpr int kLin = 100;
  f.reserve(kLog + kLin);
  for (int i = 0; i < kLog; ++i) f.push_back(10.0 * std::pow(top / 10.0, i / double(kLog - 1)));
  for (int i = 1; i <= kLin; ++i) f.push_back(top * i / double(kLin));
  return f;
}

// Sanathanan-Koerner iterations on
//   N(phi) - T(phi) D(phi) = 0,  D(0) = 1,
// with N(phi_c) = T(phi_c) D(phi_c) eliminated exactly so f_c is pinned.
inline std::optional<BiquadCoeffs> least_squares(const BandParams& band, double fs) {
  const auto freqs = fit_band_freqs(fs);
  const std::size_t count = freqs.size();
  std::vector<double> phi(count), power(count), den_prev(count, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    phi[i] = phi_of(freqs[i], fs);
    power[i] = analog_power(band, freqs[i]);
  }
  const double phi_c = phi_of(band.fc_hz, fs);
  const double power_c = analog_power(band, band.fc_hz);

  Eigen::Vector4d x = Eigen::Vector4d::Zero();  // n1, n2, d1, d2
  Eigen::MatrixXd design(count, 4);
  Eigen::VectorXd rhs(count);
  constexpr int kIterations = 8;
  for (int it = 0; it < kIterations; ++it) {
    for (std::size_t i = 0; i < count; ++i) {
      const double w = 1.0 / (power[i] * den_prev[i]);
      const double p = phi[i];
      design(i, 0) = w * (p - phi_c);
      design(i, 1) = w * (p * p - phi_c * phi_c);
      design(i, 2) = w * (power_c * phi_c - power[i] * p);
      design(i, 3) = w * (power_c * phi_c * phi_c - power[i] * p * p);
      rhs(i) = w * (power[i] - power_c);
    }
    x = design.colPivHouseholderQr().solve(rhs);
    for (std::size_t i = 0; i < count; ++i) {
      den_prev[i] = 1.0 + x(2) * phi[i] + x(3) * phi[i] * phi[i];
      if (!(den_prev[i] > 0.0)) return std::nullopt;
    }
  }
  const double n1 = x(0), n2 = x(1), d1 = x(2), d2 = x(3);
  const double n0 = power_c * (1.0 + d1 * phi_c + d2 * phi_c * phi_c) - n1 * phi_c - n2 * phi_c * phi_c;
  const auto den = factor_power_quadratic(1.0, d1, d2);
  const auto num = factor_power_quadratic(n0, n1, n2);
  if (!den || !num) return std::nullopt;
  const double a0 = (*den)[0];
  return BiquadCoeffs{(*num)[0] / a0, (*num)[1] / a0, (*num)[2] / a0, (*den)[1] / a0,
                      (*den)[2] / a0, fs};
}

inline bool finite(const BiquadCoeffs& c) {
  return std::isfinite(c.b0) && std::isfinite(c.b1) && std::isfinite(c.b2) &&
         std::isfinite(c.a1) && std::isfinite(c.a2);
}

}  // namespace detail

/// |H(e^{j 2 pi f / fs})| of one section, linear.
inline double biquad_magnitude(const BiquadCoeffs& c, double f) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / c.fs);
  const std::complex<double> z2 = z1 * z1;
  return std::abs((c.b0 + c.b1 * z1 + c.b2 * z2) / (1.0 + c.a1 * z1 + c.a2 * z2));
}

/// Largest |digital - analog| in dB over the given frequencies.
inline double max_deviation_db(const BiquadCoeffs& c, const BandParams& band,
                               std::span<const double> freqs) {
  double worst = 0.0;
  for (double f : freqs) {
    const double d = 20.0 * std::log10(biquad_magnitude(c, f)) -
                     20.0 * std::log10(detail::magnitude_unchecked(f, band));
    worst = std::max(worst, std::abs(d));
  }
  return worst;
}

inline BiquadCoeffs band_to_biquad(const BandParams& band, double fs,
                                   DigitizeMethod method = DigitizeMethod::Auto) {
  validate(band);
  if (!(fs > 0.0) || !std::isfinite(fs)) throw InvalidParameter("sample rate must be positive");
  if (band.fc_hz >= fs / 2.0) {
    throw InvalidParameter("band frequency " + std::to_string(band.fc_hz) +
                           " Hz is at or above Nyquist");
  }

  BiquadCoeffs c = detail::bilinear(band, fs);
  if (method == DigitizeMethod::Matched || method == DigitizeMethod::LeastSquares) {
    const auto alt = method == DigitizeMethod::Matched ? detail::matched(band, fs)
                                                       : detail::least_squares(band, fs);
    if (!alt || !detail::finite(*alt) || !is_stable(*alt)) {
      throw InvalidParameter("no stable " +
                             std::string(method == DigitizeMethod::Matched ? "matched"
                                                                           : "least-squares") +
                             " design for this band");
    }
    c = *alt;
  } else if (method == DigitizeMethod::Auto) {
    const auto freqs = detail::fit_band_freqs(fs);
    double best = max_deviation_db(c, band, freqs);
    for (const auto& alt : {detail::matched(band, fs), detail::least_squares(band, fs)}) {
      if (!alt || !detail::finite(*alt) || !is_stable(*alt)) continue;
      const double dev = max_deviation_db(*alt, band, freqs);
      if (dev < best) {
        best = dev;
        c = *alt;
      }
    }
  }

  // Zero gain cancels poles against zeros; emit the plain identity section.
  constexpr double kCancel = 1e-12;
  if (std::abs(c.b0 - 1.0) < kCancel && std::abs(c.b1 - c.a1) < kCancel &&
      std::abs(c.b2 - c.a2) < kCancel) {
    return BiquadCoeffs{1.0, 0.0, 0.0, 0.0, 0.0, fs};
  }
  return c;
}

/// Cascade response in dB (sum of per-section dB responses).
inline std::vector<double> digital_magnitude(const SosCascade& sos, std::span<const double> freqs) {
  validate(sos);
  const double nyquist = sos.fs() / 2.0;
  std::vector<double> out(freqs.size(), 0.0);
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (!(freqs[i] > 0.0) || !(freqs[i] < nyquist)) {
      throw InvalidArgument("frequency " + std::to_string(freqs[i]) +
                            " Hz is outside (0, fs/2)");
    }
    for (const auto& s : sos.sections) out[i] += 20.0 * std::log10(biquad_magnitude(s, freqs[i]));
  }
  return out;
}

/// One section per band, in band order.
inline SosCascade peq_to_sos(const PeqParams& params, double fs,
                             DigitizeMethod method = DigitizeMethod::Auto) {
  validate(params);
  SosCascade sos;
  sos.sections.reserve(params.size());
  for (const auto& b : params.bands) sos.sections.push_back(band_to_biquad(b, fs, method));
  return sos;
}

// "b0,b1,b2,a0,a1,a2", one row per section, 17 significant digits.
inline std::string sos_to_csv(const SosCascade& sos) {
  std::string out = "b0,b1,b2,a0,a1,a2\n";
  char buf[256];
  for (const auto& s : sos.sections) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.b0, s.b1, s.b2, 1.0,
                  s.a1, s.a2);
    out += buf;
  }
  return out;
}

// JSON variant with the sample rate and, when given, the band each section
// came from.
inline nlohmann::ordered_json sos_to_json(const SosCascade& sos, const PeqParams* bands = nullptr,
                                          double delay_samples = 0.0) {
  nlohmann::ordered_json j;
  j["fs"] = sos.fs();
  if (delay_samples > 0.0) j["delay_samples"] = delay_samples;
  auto& sections = j["sections"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < sos.sections.size(); ++i) {
    const auto& s = sos.sections[i];
    nlohmann::ordered_json row{{"b0", s.b0}, {"b1", s.b1}, {"b2", s.b2},
                               {"a0", 1.0},  {"a1", s.a1}, {"a2", s.a2}};
    if (bands != nullptr && i < bands->size()) {
      const auto& b = bands->bands[i];
      row["kind"] = std::string(to_string(b.kind));
      row["fc_hz"] = b.fc_hz;
      row["gain_db"] = b.gain_db;
      row["q"] = b.q;
    }
    sections.push_back(std::move(row));
  }
  return j;
}

}  // namespace peqfit
