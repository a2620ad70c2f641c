#pragma once

// Analog second-order prototypes (bell, low shelf, high shelf) evaluated on
// the j*f/f_c axis. Everything here works on squared terms so the same code
// path serves plain doubles and forward-mode dual numbers.

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "peqfit/errors.hpp"

namespace peqfit {

enum class BandKind { LowShelf, Bell, HighShelf };

inline std::string_view to_string(BandKind kind) {
  switch (kind) {
    case BandKind::LowShelf: return "low_shelf";
    case BandKind::Bell: return "bell";
    case BandKind::HighShelf: return "high_shelf";
  }
  return "unknown";
}

inline BandKind band_kind_from_string(std::string_view s) {
  if (s == "low_shelf") return BandKind::LowShelf;
  if (s == "bell") return BandKind::Bell;
  if (s == "high_shelf") return BandKind::HighShelf;
  throw ParseError("unknown band kind '" + std::string(s) + "'");
}

struct BandParams {
  BandKind kind = BandKind::Bell;
  double fc_hz = 1000.0;
  double gain_db = 0.0;
  double q = std::numbers::sqrt2 / 2.0;

  friend bool operator==(const BandParams&, const BandParams&) = default;
};

inline void validate(const BandParams& band) {
  if (!std::isfinite(band.fc_hz) || band.fc_hz <= 0.0) {
    throw InvalidParameter("band center frequency must be positive, got " +
                           std::to_string(band.fc_hz));
  }
  if (!std::isfinite(band.q) || band.q <= 0.0) {
    throw InvalidParameter("band Q must be positive, got " + std::to_string(band.q));
  }
  if (!std::isfinite(band.gain_db)) {
    throw InvalidParameter("band gain must be finite");
  }
}

/// Linear amplitude A = 10^(G/40), i.e. the square root of the dB gain's
/// amplitude ratio.
inline double db_to_linear_amp(double gain_db) {
  if (!std::isfinite(gain_db)) throw InvalidParameter("gain must be finite");
  return std::pow(10.0, gain_db / 40.0);
}

/// Per-band constants of the magnitude formula, precomputed once so the
/// per-frequency work is a handful of multiply-adds and one log.
///
/// With x2 = (f/f_c)^2 every prototype has the shape
///   |H|^2 = gain2 * ((p - r*x2)^2 + k_num*x2) / ((s - t*x2)^2 + k_den*x2)
/// and the dB magnitude is offset_db + 10*log10(num/den).
template <class T>
struct BandTerms {
  BandKind kind;
  T inv_fc2;   // 1/f_c^2
  T amp;       // A
  T k_num;     // coefficient of x2 in the numerator
  T k_den;     // coefficient of x2 in the denominator
  T offset_db; // 20*log10(A) for shelves, 0 for bells

  static BandTerms make(BandKind kind, const T& fc, const T& gain_db, const T& q) {
    using std::exp;
    BandTerms b{kind, T(1.0) / (fc * fc), exp(gain_db * (std::numbers::ln10 / 40.0)),
                T(0.0), T(0.0), T(0.0)};
    const T inv_q2 = T(1.0) / (q * q);
    if (kind == BandKind::Bell) {
      b.k_num = b.amp * b.amp * inv_q2;
      b.k_den = inv_q2 / (b.amp * b.amp);
    } else {
      b.k_num = b.amp * inv_q2;
      b.k_den = b.k_num;
      b.offset_db = gain_db * 0.5;
    }
    return b;
  }

  // num/den of |H|^2 without the shelf's leading A^2.
  T power_ratio(double f) const {
    const T x2 = inv_fc2 * (f * f);
    T num(0.0), den(1.0);
    switch (kind) {
      case BandKind::Bell: {
        const T u = 1.0 - x2;
        const T u2 = u * u;
        num = u2 + k_num * x2;
        den = u2 + k_den * x2;
        break;
      }
      case BandKind::LowShelf: {
        const T a = amp - x2;
        const T b = 1.0 - amp * x2;
        num = a * a + k_num * x2;
        den = b * b + k_den * x2;
        break;
      }
      case BandKind::HighShelf: {
        const T a = 1.0 - amp * x2;
        const T b = amp - x2;
        num = a * a + k_num * x2;
        den = b * b + k_den * x2;
        break;
      }
    }
    return num / den;
  }

  T log_magnitude_db(double f) const {
    using std::log;
    return offset_db + (10.0 / std::numbers::ln10) * log(power_ratio(f));
  }
};

namespace detail {
inline void check_frequency(double f) {
  if (!std::isfinite(f) || f < 0.0) {
    throw InvalidArgument("frequency must be finite and non-negative, got " +
                          std::to_string(f));
  }
}
inline void check_kind(const BandParams& band, BandKind expected) {
  if (band.kind != expected) {
    throw InvalidParameter("expected a " + std::string(to_string(expected)) +
                           " band, got " + std::string(to_string(band.kind)));
  }
}
inline double magnitude_unchecked(double f, const BandParams& band) {
  const auto terms = BandTerms<double>::make(band.kind, band.fc_hz, band.gain_db, band.q);
  const double scale = band.kind == BandKind::Bell ? 1.0 : terms.amp;
  return scale * std::sqrt(terms.power_ratio(f));
}
}  // namespace detail

/// Linear magnitude of any prototype kind at frequency f (Hz).
inline double band_magnitude(double f, const BandParams& band) {
  validate(band);
  detail::check_frequency(f);
  return detail::magnitude_unchecked(f, band);
}

inline double bell_magnitude(double f, const BandParams& band) {
  detail::check_kind(band, BandKind::Bell);
  return band_magnitude(f, band);
}

inline double low_shelf_magnitude(double f, const BandParams& band) {
  detail::check_kind(band, BandKind::LowShelf);
  return band_magnitude(f, band);
}

inline double high_shelf_magnitude(double f, const BandParams& band) {
  detail::check_kind(band, BandKind::HighShelf);
  return band_magnitude(f, band);
}

/// 20*log10|H(f)| for one band.
inline double band_log_magnitude_db(double f, const BandParams& band) {
  validate(band);
  detail::check_frequency(f);
  return BandTerms<double>::make(band.kind, band.fc_hz, band.gain_db, band.q)
      .log_magnitude_db(f);
}

}  // namespace peqfit
