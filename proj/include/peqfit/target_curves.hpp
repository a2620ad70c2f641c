#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "peqfit/errors.hpp"

namespace peqfit {

struct T60Point {
  double freq_hz;
  double t60_s;
  friend bool operator==(const T60Point&, const T60Point&) = default;
};

// Measured reverberation time versus frequency, sorted by frequency.
struct T60Curve {
  std::vector<T60Point> points;
  friend bool operator==(const T60Curve&, const T60Curve&) = default;
};

// Sorts the points and checks the curve invariants.
inline T60Curve make_t60_curve(std::vector<T60Point> points) {
  std::sort(points.begin(), points.end(),
            [](const T60Point& a, const T60Point& b) { return a.freq_hz < b.freq_hz; });
  if (points.size() < 2) throw InvalidArgument("a T60 curve needs at least 2 points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].freq_hz > 0.0) || !std::isfinite(points[i].freq_hz)) {
      throw InvalidArgument("T60 curve frequencies must be positive");
    }
    if (!(points[i].t60_s > 0.0) || !std::isfinite(points[i].t60_s)) {
      throw InvalidArgument("T60 values must be positive");
    }
    if (i > 0 && points[i].freq_hz == points[i - 1].freq_hz) {
      throw InvalidArgument("duplicate frequency " + std::to_string(points[i].freq_hz));
    }
  }
  return T60Curve{std::move(points)};
}

struct FrequencyGrid {
  std::vector<double> freqs;

  std::size_t size() const { return freqs.size(); }

  static FrequencyGrid log_spaced(double f_lo, double f_hi, std::size_t count) {
    if (!(f_lo > 0.0) || !(f_hi > f_lo) || !std::isfinite(f_hi)) {
      throw InvalidArgument("grid needs 0 < f_lo < f_hi");
    }
    if (count < 2) throw InvalidArgument("grid needs at least 2 points");
    FrequencyGrid g;
    g.freqs.resize(count);
    const double l0 = std::log(f_lo);
    const double step = (std::log(f_hi) - l0) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
      g.freqs[i] = std::exp(l0 + step * static_cast<double>(i));
    }
    g.freqs.front() = f_lo;
    g.freqs.back() = f_hi;
    return g;
  }

  // 20 Hz up to just below Nyquist.
  static FrequencyGrid default_for(double fs, std::size_t count = 512) {
    return log_spaced(20.0, fs / 2.0 * (1.0 - std::ldexp(1.0, -20)), count);
  }
};

inline void validate(const FrequencyGrid& grid, double fs) {
  if (grid.freqs.size() < 2) throw InvalidArgument("grid needs at least 2 points");
  if (!(grid.freqs.front() > 0.0)) throw InvalidArgument("grid must start above 0 Hz");
  for (std::size_t i = 1; i < grid.freqs.size(); ++i) {
    if (!(grid.freqs[i] > grid.freqs[i - 1])) {
      throw InvalidArgument("grid must be strictly increasing");
    }
  }
  if (grid.freqs.back() > fs / 2.0) throw InvalidArgument("grid extends past Nyquist");
}

namespace detail {
inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}
inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}
}  // namespace detail

/// Parses a "freq_hz,t60_s" CSV. Rows may come in any order.
inline T60Curve load_t60_table(std::string_view text) {
  std::vector<T60Point> points;
  std::vector<std::size_t> lines;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = detail::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!header_seen) {
      const auto comma = line.find(',');
      if (comma == std::string_view::npos || detail::trim(line.substr(0, comma)) != "freq_hz" ||
          detail::trim(line.substr(comma + 1)) != "t60_s") {
        throw ParseError("expected header 'freq_hz,t60_s'", line_no);
      }
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      throw ParseError("expected exactly two fields", line_no);
    }
    T60Point p{};
    if (!detail::parse_double(line.substr(0, comma), p.freq_hz) ||
        !detail::parse_double(line.substr(comma + 1), p.t60_s)) {
      throw ParseError("malformed number", line_no);
    }
    if (!(p.freq_hz > 0.0) || !std::isfinite(p.freq_hz)) {
      throw ParseError("frequency must be positive", line_no);
    }
    if (!(p.t60_s > 0.0) || !std::isfinite(p.t60_s)) {
      throw ParseError("T60 must be positive", line_no);
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i].freq_hz == p.freq_hz) {
        throw ParseError("duplicate frequency (first seen on line " + std::to_string(lines[i]) +
                             ")",
                         line_no);
      }
    }
    points.push_back(p);
    lines.push_back(line_no);
  }
  if (!header_seen) throw ParseError("empty T60 table");
  if (points.empty()) throw ParseError("T60 table has no data rows");
  if (points.size() < 2) throw ParseError("T60 table needs at least 2 rows");
  return make_t60_curve(std::move(points));
}

/// Linear interpolation of T60 against log10(f); flat beyond the measured
/// range.
inline std::vector<double> interpolate_to_grid(const T60Curve& curve,
                                               std::span<const double> freqs) {
  const auto& pts = curve.points;
  std::vector<double> out(freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double f = freqs[i];
    if (f <= pts.front().freq_hz) {
      out[i] = pts.front().t60_s;
      continue;
    }
    if (f >= pts.back().freq_hz) {
      out[i] = pts.back().t60_s;
      continue;
    }
    const auto hi = std::upper_bound(pts.begin(), pts.end(), f,
                                     [](double v, const T60Point& p) { return v < p.freq_hz; });
    const auto lo = hi - 1;
    if (lo->freq_hz == f) {
      out[i] = lo->t60_s;
      continue;
    }
    const double l0 = std::log10(lo->freq_hz);
    const double w = (std::log10(f) - l0) / (std::log10(hi->freq_hz) - l0);
    out[i] = lo->t60_s + w * (hi->t60_s - lo->t60_s);
  }
  return out;
}

inline std::vector<double> interpolate_to_grid(const T60Curve& curve, const FrequencyGrid& grid) {
  return interpolate_to_grid(curve, std::span<const double>(grid.freqs));
}

/// Per-line attenuation target in dB: -60*m_k / (T60*fs).
inline std::vector<double> target_magnitude(std::span<const double> t60, double m_k, double fs) {
  if (!(m_k > 0.0) || !(fs > 0.0)) throw InvalidArgument("need m_k > 0 and fs > 0");
  std::vector<double> out(t60.size());
  for (std::size_t i = 0; i < t60.size(); ++i) {
    if (!(t60[i] > 0.0)) {
      throw InvalidArgument("T60 must be positive at index " + std::to_string(i));
    }
    out[i] = -60.0 * m_k / (t60[i] * fs);
  }
  return out;
}

/// Decay slope gamma(f) = -60/T60(f) in dB per second.
inline std::vector<double> decay_slope(std::span<const double> t60) {
  std::vector<double> out(t60.size());
  for (std::size_t i = 0; i < t60.size(); ++i) {
    if (!(t60[i] > 0.0)) throw InvalidArgument("T60 must be positive");
    out[i] = -60.0 / t60[i];
  }
  return out;
}

}  // namespace peqfit
