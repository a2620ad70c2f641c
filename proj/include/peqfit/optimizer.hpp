#pragma once

// Loss, exact gradients and the Adam loop that fits a shared PEQ to a
// reverberation-time target.
//
// Parameter layout (length 3N): log(f_c)[0..N), gain_db[0..N), log(Q)[0..N).
// Optimizing the logs keeps f_c and Q positive without constraints.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "peqfit/dual.hpp"
#include "peqfit/errors.hpp"
#include "peqfit/peq_model.hpp"
#include "peqfit/prototypes.hpp"
#include "peqfit/target_curves.hpp"

namespace peqfit {

using ParamVector = std::vector<double>;

inline BandKind kind_for_position(std::size_t i, std::size_t n) {
  if (i == 0) return BandKind::LowShelf;
  if (i + 1 == n) return BandKind::HighShelf;
  return BandKind::Bell;
}

inline ParamVector to_param_vector(const PeqParams& peq) {
  const std::size_t n = peq.size();
  ParamVector p(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::log(peq.bands[i].fc_hz);
    p[n + i] = peq.bands[i].gain_db;
    p[2 * n + i] = std::log(peq.bands[i].q);
  }
  return p;
}

// Inverse of to_param_vector. Band order follows the vector; no sorting.
inline PeqParams to_peq_params(std::span<const double> p) {
  if (p.size() % 3 != 0 || p.size() < 9) {
    throw InvalidArgument("parameter vector length must be 3N with N >= 3");
  }
  const std::size_t n = p.size() / 3;
  PeqParams peq;
  peq.bands.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    peq.bands[i] = {kind_for_position(i, n), std::exp(p[i]), p[n + i], std::exp(p[2 * n + i])};
  }
  return peq;
}

/// Mean squared difference in dB^2.
inline double mse_loss(std::span<const double> pred_db, std::span<const double> target_db) {
  if (pred_db.size() != target_db.size()) {
    throw InvalidArgument("mse_loss: length mismatch (" + std::to_string(pred_db.size()) +
                          " vs " + std::to_string(target_db.size()) + ")");
  }
  if (pred_db.empty()) throw InvalidArgument("mse_loss: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_db.size(); ++i) {
    const double d = pred_db[i] - target_db[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred_db.size());
}

// MSE between a PEQ response and a fixed target on a fixed grid, with
// gradients from forward-mode duals seeded per band. Holds its scratch
// buffers so the fit loop does not allocate.
class PeqObjective {
 public:
  PeqObjective(std::vector<double> freqs, std::vector<double> target_db)
      : freqs_(std::move(freqs)), target_(std::move(target_db)) {
    if (freqs_.size() != target_.size()) {
      throw InvalidArgument("grid and target lengths differ");
    }
    detail::check_freqs(freqs_);
  }

  std::size_t grid_size() const { return freqs_.size(); }
  std::span<const double> target() const { return target_; }
  std::span<const double> freqs() const { return freqs_; }

  /// Loss at p; fills grad (same length as p).
  double evaluate(std::span<const double> p, std::span<double> grad) {
    const std::size_t n = check_params(p);
    if (grad.size() != p.size()) throw InvalidArgument("gradient buffer has wrong length");
    const std::size_t count = freqs_.size();
    pred_.assign(count, 0.0);
    deriv_.resize(n * count * 3);

    using D = Dual<3>;
    for (std::size_t b = 0; b < n; ++b) {
      const D fc = exp(D::variable(p[b], 0));
      const D gain = D::variable(p[n + b], 1);
      const D q = exp(D::variable(p[2 * n + b], 2));
      const auto terms = BandTerms<D>::make(kind_for_position(b, n), fc, gain, q);
      double* d = deriv_.data() + b * count * 3;
      for (std::size_t i = 0; i < count; ++i) {
        const D lm = terms.log_magnitude_db(freqs_[i]);
        pred_[i] += lm.v;
        d[3 * i] = lm.d[0];
        d[3 * i + 1] = lm.d[1];
        d[3 * i + 2] = lm.d[2];
      }
    }

    double loss = 0.0;
    resid_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      resid_[i] = pred_[i] - target_[i];
      loss += resid_[i] * resid_[i];
    }
    const double inv_count = 1.0 / static_cast<double>(count);
    loss *= inv_count;

    for (std::size_t b = 0; b < n; ++b) {
      const double* d = deriv_.data() + b * count * 3;
      double g0 = 0.0, g1 = 0.0, g2 = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        g0 += resid_[i] * d[3 * i];
        g1 += resid_[i] * d[3 * i + 1];
        g2 += resid_[i] * d[3 * i + 2];
      }
      grad[b] = 2.0 * inv_count * g0;
      grad[n + b] = 2.0 * inv_count * g1;
      grad[2 * n + b] = 2.0 * inv_count * g2;
    }

    for (std::size_t k = 0; k < grad.size(); ++k) {
      if (!std::isfinite(grad[k])) throw NumericalFailure("non-finite gradient", k);
    }
    if (!std::isfinite(loss)) throw NumericalFailure("non-finite loss", first_bad_band(p, n));
    return loss;
  }

  /// Loss only, no gradient.
  double loss(std::span<const double> p) {
    const std::size_t n = check_params(p);
    pred_.assign(freqs_.size(), 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      const auto terms =
          BandTerms<double>::make(kind_for_position(b, n), std::exp(p[b]), p[n + b],
                                  std::exp(p[2 * n + b]));
      for (std::size_t i = 0; i < freqs_.size(); ++i) pred_[i] += terms.log_magnitude_db(freqs_[i]);
    }
    return mse_loss(pred_, target_);
  }

 private:
  static std::size_t check_params(std::span<const double> p) {
    if (p.size() % 3 != 0 || p.size() < 9) {
      throw InvalidArgument("parameter vector length must be 3N with N >= 3");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!std::isfinite(p[k])) throw NumericalFailure("non-finite parameter", k);
    }
    return p.size() / 3;
  }

  // Gain slot of the first band whose response is non-finite on the grid.
  std::size_t first_bad_band(std::span<const double> p, std::size_t n) const {
    for (std::size_t b = 0; b < n; ++b) {
      const auto terms = BandTerms<double>::make(kind_for_position(b, n), std::exp(p[b]),
                                                 p[n + b], std::exp(p[2 * n + b]));
      for (double f : freqs_) {
        if (!std::isfinite(terms.log_magnitude_db(f))) return n + b;
      }
    }
    return 0;
  }

  std::vector<double> freqs_;
  std::vector<double> target_;
  std::vector<double> pred_;
  std::vector<double> resid_;
  std::vector<double> deriv_;
};

struct LossAndGradient {
  double loss;
  std::vector<double> grad;
};

inline LossAndGradient loss_and_gradient(std::span<const double> p,
                                         std::span<const double> target_db,
                                         const FrequencyGrid& grid) {
  PeqObjective objective(grid.freqs, std::vector<double>(target_db.begin(), target_db.end()));
  LossAndGradient out{0.0, std::vector<double>(p.size())};
  out.loss = objective.evaluate(p, out.grad);
  return out;
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t dim, double learning_rate = 0.1)
      : m(dim, 0.0), v(dim, 0.0), lr(learning_rate) {}
};

/// One bias-corrected Adam update of p in place.
inline void adam_step(AdamState& state, std::span<double> p, std::span<const double> grad) {
  if (p.size() != grad.size() || p.size() != state.m.size()) {
    throw InvalidArgument("adam_step: dimension mismatch");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

struct FitConfig {
  std::size_t n_bands = 12;
  std::size_t iterations = 10000;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  FrequencyGrid grid = FrequencyGrid::default_for(48000.0);
  // Called every `log_every` iterations with (iteration, loss, best loss).
  std::function<void(std::size_t, double, double)> progress;
  std::size_t log_every = 500;
  // Box on f_c, applied after every step, so each band stays digitizable.
  double min_fc_hz = 5.0;
  double max_fc_fraction = 0.45;  // of fs
};

struct FitReport {
  double final_mse = 0.0;
  std::size_t best_iteration = 0;
  std::size_t iterations = 0;
  std::vector<double> loss_trace;  // one entry per iteration
  double wall_time_s = 0.0;
  std::uint64_t seed = 0;
};

struct FitResult {
  FittedPeq peq;
  FitReport report;
};

inline nlohmann::ordered_json to_json(const FitReport& r) {
  nlohmann::ordered_json j;
  j["final_mse"] = r.final_mse;
  j["best_iteration"] = r.best_iteration;
  j["iterations"] = r.iterations;
  auto& trace = j["loss_trace_downsampled"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.loss_trace.size(); i += 100) trace.push_back(r.loss_trace[i]);
  j["wall_time_s"] = r.wall_time_s;
  j["seed"] = r.seed;
  return j;
}

namespace detail {
// Linear interpolation of a gridded curve against log frequency, clamped.
inline double sample_log_f(std::span<const double> freqs, std::span<const double> values,
                           double f) {
  if (f <= freqs.front()) return values.front();
  if (f >= freqs.back()) return values.back();
  const auto it = std::upper_bound(freqs.begin(), freqs.end(), f);
  const std::size_t hi = static_cast<std::size_t>(it - freqs.begin());
  const std::size_t lo = hi - 1;
  const double w = std::log(f / freqs[lo]) / std::log(freqs[hi] / freqs[lo]);
  return values[lo] + w * (values[hi] - values[lo]);
}
}  // namespace detail

/// Starting point: shelves at 80 Hz and 8 kHz, bells log-spaced between,
/// Q = 1/sqrt(2), each gain equal to the target at the band's frequency.
inline PeqParams initial_params(std::size_t n_bands, std::span<const double> freqs,
                                std::span<const double> target_db) {
  if (n_bands < 3) throw InvalidArgument("need at least 3 bands");
  PeqParams peq;
  peq.bands.resize(n_bands);
  const double lo = std::log(80.0);
  const double hi = std::log(8000.0);
  for (std::size_t i = 0; i < n_bands; ++i) {
    const double fc =
        std::exp(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bands - 1));
    peq.bands[i] = {kind_for_position(i, n_bands), fc,
                    detail::sample_log_f(freqs, target_db, fc), std::numbers::sqrt2 / 2.0};
  }
  return peq;
}

// Keeps the bells ordered by frequency; shelves stay at the ends.
inline void sort_bells(PeqParams& peq) {
  if (peq.bands.size() < 3) return;
  std::stable_sort(peq.bands.begin() + 1, peq.bands.end() - 1,
                   [](const BandParams& a, const BandParams& b) { return a.fc_hz < b.fc_hz; });
}

/// Fits a shared PEQ to the target at reference delay m_ref (samples).
/// Returns the best parameters seen over the run.
inline FitResult fit_target_db(std::span<const double> target_db, double m_ref, double fs,
                               const FitConfig& cfg) {
  if (cfg.n_bands < 3) throw InvalidArgument("need at least 3 bands");
  if (cfg.iterations < 1) throw InvalidArgument("need at least 1 iteration");
  if (!(m_ref >= 1.0)) throw InvalidArgument("m_ref must be >= 1 sample");
  validate(cfg.grid, fs);
  const double log_fc_lo = std::log(cfg.min_fc_hz);
  const double log_fc_hi = std::log(cfg.max_fc_fraction * fs);
  if (!(cfg.min_fc_hz > 0.0) || !(log_fc_lo < log_fc_hi) || !(cfg.max_fc_fraction < 0.5)) {
    throw InvalidArgument("invalid f_c bounds");
  }
  const auto start = std::chrono::steady_clock::now();

  PeqObjective objective(cfg.grid.freqs, std::vector<double>(target_db.begin(), target_db.end()));
  ParamVector p = to_param_vector(initial_params(cfg.n_bands, cfg.grid.freqs, target_db));
  ParamVector grad(p.size());
  ParamVector best_p = p;
  AdamState adam(p.size(), cfg.learning_rate);

  FitReport report;
  report.iterations = cfg.iterations;
  report.seed = cfg.seed;
  report.loss_trace.reserve(cfg.iterations);
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    double loss;
    try {
      loss = objective.evaluate(p, grad);
    } catch (const NumericalFailure& e) {
      throw Divergence(std::string("fit diverged: ") + e.what(), it);
    }
    report.loss_trace.push_back(loss);
    if (loss < best) {
      best = loss;
      best_p = p;
      report.best_iteration = it;
    }
    if (cfg.progress && cfg.log_every > 0 && it % cfg.log_every == 0) {
      cfg.progress(it, loss, best);
    }
    adam_step(adam, p, grad);
    for (std::size_t b = 0; b < cfg.n_bands; ++b) p[b] = std::clamp(p[b], log_fc_lo, log_fc_hi);
  }

  FitResult result;
  result.peq.params = to_peq_params(best_p);
  sort_bells(result.peq.params);
  result.peq.m_ref = m_ref;
  result.peq.fs = fs;
  report.final_mse = best;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.report = std::move(report);
  validate(result.peq);
  return result;
}

inline FitResult fit(const T60Curve& target, double m_ref, double fs, const FitConfig& cfg) {
  validate(cfg.grid, fs);
  const auto t60 = interpolate_to_grid(target, cfg.grid);
  const auto target_db = target_magnitude(t60, m_ref, fs);
  return fit_target_db(target_db, m_ref, fs, cfg);
}

}  // namespace peqfit
