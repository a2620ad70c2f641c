#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "peqfit/errors.hpp"
#include "peqfit/prototypes.hpp"

namespace peqfit {

// N-band parametric equalizer: low shelf, N-2 bells, high shelf.
struct PeqParams {
  std::vector<BandParams> bands;

  std::size_t size() const { return bands.size(); }
  friend bool operator==(const PeqParams&, const PeqParams&) = default;
};

// Bell center frequencies must be strictly increasing. The shelves are kept at
// the ends of the list by kind, not by frequency: the summed response does
// not depend on band order and a fitted shelf may legitimately sit above (or
// below) a neighbouring bell.
inline void validate(const PeqParams& peq) {
  const std::size_t n = peq.bands.size();
  if (n < 3) {
    throw InvalidParameter("a PEQ needs at least 3 bands, got " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = peq.bands[i];
    validate(b);
    const BandKind expected =
        i == 0 ? BandKind::LowShelf : (i + 1 == n ? BandKind::HighShelf : BandKind::Bell);
    if (b.kind != expected) {
      throw InvalidParameter("band " + std::to_string(i) + " must be " +
                             std::string(to_string(expected)));
    }
    if (i >= 2 && i + 1 < n && !(b.fc_hz > peq.bands[i - 1].fc_hz)) {
      throw InvalidParameter("bell center frequencies must be strictly increasing (band " +
                             std::to_string(i) + ")");
    }
  }
}

// Shared PEQ fitted at a reference delay; other delay lines are derived by
// scale_to_delay.
struct FittedPeq {
  PeqParams params;
  double m_ref = 1.0;  // samples
  double fs = 48000.0;

  friend bool operator==(const FittedPeq&, const FittedPeq&) = default;
};

inline void validate(const FittedPeq& fitted) {
  validate(fitted.params);
  if (!(fitted.m_ref >= 1.0)) throw InvalidParameter("m_ref must be >= 1 sample");
  if (!(fitted.fs > 0.0) || !std::isfinite(fitted.fs)) {
    throw InvalidParameter("sample rate must be positive");
  }
}

namespace detail {
inline void check_freqs(std::span<const double> freqs) {
  if (freqs.empty()) throw InvalidArgument("frequency vector is empty");
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    if (!(freqs[i] > 0.0) || !std::isfinite(freqs[i])) {
      throw InvalidArgument("frequencies must be positive and finite");
    }
    if (i > 0 && freqs[i] < freqs[i - 1]) {
      throw InvalidArgument("frequencies must be sorted ascending");
    }
  }
}
}  // namespace detail

/// Sum of the per-band dB responses at each frequency. Accepts any non-empty
/// band list (partial PEQs are handy for checking additivity).
inline std::vector<double> peq_log_magnitude(std::span<const BandParams> bands,
                                             std::span<const double> freqs) {
  detail::check_freqs(freqs);
  std::vector<double> out(freqs.size(), 0.0);
  for (const auto& band : bands) {
    validate(band);
    const auto terms = BandTerms<double>::make(band.kind, band.fc_hz, band.gain_db, band.q);
    for (std::size_t i = 0; i < freqs.size(); ++i) out[i] += terms.log_magnitude_db(freqs[i]);
  }
  return out;
}

inline std::vector<double> peq_log_magnitude(const PeqParams& params,
                                             std::span<const double> freqs) {
  return peq_log_magnitude(std::span<const BandParams>(params.bands), freqs);
}

/// Band gains scaled by m_k / m_ref; frequencies and Q untouched.
inline PeqParams scale_to_delay(const FittedPeq& fitted, double m_k) {
  if (!(m_k >= 1.0) || !std::isfinite(m_k)) {
    throw InvalidArgument("delay length must be >= 1 sample, got " + std::to_string(m_k));
  }
  PeqParams out = fitted.params;
  const double ratio = m_k / fitted.m_ref;
  for (auto& b : out.bands) b.gain_db *= ratio;
  return out;
}

/// Inverts the per-line attenuation law: T60 = -60*m_k / (response_db * fs).
inline std::vector<double> response_to_t60(std::span<const double> response_db, double m_k,
                                           double fs) {
  if (!(m_k >= 1.0) || !(fs > 0.0)) throw InvalidArgument("need m_k >= 1 and fs > 0");
  std::vector<double> out(response_db.size());
  for (std::size_t i = 0; i < response_db.size(); ++i) {
    if (!(response_db[i] < 0.0)) {
      throw NonDecaying("response is " + std::to_string(response_db[i]) +
                        " dB at index " + std::to_string(i) + "; the loop does not decay");
    }
    out[i] = -60.0 * m_k / (response_db[i] * fs);
  }
  return out;
}

// JSON: {fs, m_ref, bands: [{kind, fc_hz, gain_db, q}]}

inline nlohmann::ordered_json to_json(const FittedPeq& fitted) {
  nlohmann::ordered_json j;
  j["fs"] = fitted.fs;
  j["m_ref"] = fitted.m_ref;
  auto& bands = j["bands"] = nlohmann::ordered_json::array();
  for (const auto& b : fitted.params.bands) {
    bands.push_back({{"kind", std::string(to_string(b.kind))},
                     {"fc_hz", b.fc_hz},
                     {"gain_db", b.gain_db},
                     {"q", b.q}});
  }
  return j;
}

inline FittedPeq fitted_peq_from_json(const nlohmann::json& j) {
  FittedPeq out;
  try {
    out.fs = j.at("fs").get<double>();
    out.m_ref = j.at("m_ref").get<double>();
    for (const auto& b : j.at("bands")) {
      out.params.bands.push_back({band_kind_from_string(b.at("kind").get<std::string>()),
                                  b.at("fc_hz").get<double>(), b.at("gain_db").get<double>(),
                                  b.at("q").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed fit document: ") + e.what());
  }
  try {
    validate(out);
  } catch (const Error& e) {
    throw ParseError(std::string("invalid fit document: ") + e.what());
  }
  return out;
}

inline FittedPeq fitted_peq_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fit document is not valid JSON: ") + e.what());
  }
  return fitted_peq_from_json(j);
}

}  // namespace peqfit
