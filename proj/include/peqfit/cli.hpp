#pragma once

// Command-line front end: fit | export | render | campaign.
//
// Exit codes: 0 success, 1 usage/input errors, 2 numerical failures
// (fit divergence, render instability).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "peqfit/digitize.hpp"
#include "peqfit/errors.hpp"
#include "peqfit/eval_harness.hpp"
#include "peqfit/fdn_verify.hpp"
#include "peqfit/io.hpp"
#include "peqfit/optimizer.hpp"
#include "peqfit/peq_model.hpp"
#include "peqfit/target_curves.hpp"

namespace peqfit::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumerical = 2;

struct GridOptions {
  std::size_t size = 512;
  double f_lo = 20.0;

  FrequencyGrid make(double sample_rate) const {
    return FrequencyGrid::log_spaced(f_lo, sample_rate / 2.0 * (1.0 - std::ldexp(1.0, -20)), size);
  }
};

struct FitOptions {
  std::string t60_path;
  std::string out_path;
  std::string report_path;
  std::size_t bands = 12;
  std::optional<double> delay_ms;
  std::optional<double> delay_samples;
  double fs = 48000.0;
  std::size_t iterations = 10000;
  double lr = 0.1;
  std::uint64_t seed = 0;
  GridOptions grid;
  bool quiet = false;
};

struct ExportOptions {
  std::string fit_path;
  std::string out_dir = ".";
  std::vector<double> delay_samples;
  std::vector<double> delay_ms;
  std::string format = "both";
  std::string method = "auto";
};

struct RenderOptions {
  std::string fit_path;
  std::string out_path = "ir.wav";
  std::string decay_csv;
  std::size_t lines = 8;
  std::vector<double> delay_range_ms{10.0, 300.0};
  std::vector<double> delay_samples;
  std::optional<double> duration_s;
  std::uint64_t seed = 0;
  std::string method = "auto";
};

struct CampaignOptions {
  std::string dir;
  std::size_t synthetic = 0;
  std::string out_dir = ".";
  std::size_t bands = 12;
  std::size_t iterations = 10000;
  double lr = 0.1;
  double fs = 48000.0;
  std::vector<double> delay_range_ms{10.0, 300.0};
  std::uint64_t seed = 0;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  double bin_width = 1.0;
  GridOptions grid;
};

inline DigitizeMethod parse_method(const std::string& s) {
  if (s == "auto") return DigitizeMethod::Auto;
  if (s == "bilinear") return DigitizeMethod::Bilinear;
  if (s == "matched") return DigitizeMethod::Matched;
  if (s == "least-squares") return DigitizeMethod::LeastSquares;
  throw InvalidArgument("unknown digitization method '" + s + "'");
}

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

inline fs::path default_report_path(const fs::path& out) {
  auto p = out;
  p.replace_extension(".report.json");
  return p;
}

inline int cmd_fit(const FitOptions& o, std::ostream& err) {
  T60Curve curve;
  try {
    curve = load_t60_table(read_file(o.t60_path));
  } catch (const Error& e) {
    err << "error: " << o.t60_path << ": " << e.what() << "\n";
    return kExitInput;
  }
  double m_ref = 0.0;
  if (o.delay_samples) {
    m_ref = *o.delay_samples;
  } else {
    m_ref = std::round(o.delay_ms.value_or(100.0) / 1000.0 * o.fs);
  }
  if (!(m_ref >= 1.0)) {
    err << "error: delay must be at least one sample\n";
    return kExitInput;
  }
  FitConfig cfg;
  cfg.n_bands = o.bands;
  cfg.iterations = o.iterations;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  try {
    cfg.grid = o.grid.make(o.fs);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  if (!o.quiet) {
    cfg.progress = [&err](std::size_t it, double loss, double best) {
      err << "{\"event\":\"fit_progress\",\"iteration\":" << it << ",\"loss\":" << loss
          << ",\"best\":" << best << "}\n";
    };
  }
  FitResult result;
  try {
    result = fit(curve, m_ref, o.fs, cfg);
  } catch (const Divergence& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  const fs::path out = o.out_path;
  const fs::path report = o.report_path.empty() ? default_report_path(out) : fs::path(o.report_path);
  try {
    write_file_atomic(out, json_text(to_json(result.peq)));
    write_file_atomic(report, json_text(to_json(result.report)));
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  if (!o.quiet) {
    err << "fit: N=" << o.bands << " m_ref=" << m_ref << " mse=" << result.report.final_mse
        << " dB^2 -> " << out.string() << "\n";
  }
  return kExitOk;
}

inline std::optional<FittedPeq> load_fit(const std::string& path, std::ostream& err) {
  try {
    return fitted_peq_from_json_text(read_file(path));
  } catch (const Error& e) {
    err << "error: " << path << ": " << e.what() << "\n";
    return std::nullopt;
  }
}

inline int cmd_export(const ExportOptions& o, std::ostream& err) {
  const auto fitted = load_fit(o.fit_path, err);
  if (!fitted) return kExitInput;
  std::vector<double> delays = o.delay_samples;
  for (double ms : o.delay_ms) delays.push_back(std::round(ms / 1000.0 * fitted->fs));
  if (delays.empty()) {
    err << "error: no delay lengths given (use --delay-samples or --delay-ms)\n";
    return kExitInput;
  }
  try {
    const auto method = parse_method(o.method);
    fs::create_directories(o.out_dir);
    for (std::size_t k = 0; k < delays.size(); ++k) {
      const auto params = scale_to_delay(*fitted, delays[k]);
      const auto sos = peq_to_sos(params, fitted->fs, method);
      const fs::path stem = fs::path(o.out_dir) / ("line_" + std::to_string(k));
      if (o.format == "csv" || o.format == "both") {
        write_file_atomic(fs::path(stem).replace_extension(".csv"), sos_to_csv(sos));
      }
      if (o.format == "json" || o.format == "both") {
        write_file_atomic(fs::path(stem).replace_extension(".json"),
                          json_text(sos_to_json(sos, &params, delays[k])));
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

// Largest T60 the fitted PEQ produces on the default grid (used to size the
// render).
inline double max_fitted_t60(const FittedPeq& fitted) {
  const auto grid = FrequencyGrid::default_for(fitted.fs);
  const auto response = peq_log_magnitude(fitted.params, grid.freqs);
  const auto t60 = response_to_t60(response, fitted.m_ref, fitted.fs);
  return *std::max_element(t60.begin(), t60.end());
}

inline int cmd_render(const RenderOptions& o, std::ostream& err) {
  const auto fitted = load_fit(o.fit_path, err);
  if (!fitted) return kExitInput;
  std::vector<double> decay_rows_bands{0.0, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0};
  FdnConfig cfg;
  try {
    std::vector<std::size_t> delays;
    if (!o.delay_samples.empty()) {
      for (double d : o.delay_samples) {
        if (!(d >= 1.0)) throw InvalidArgument("delay lengths must be >= 1 sample");
        delays.push_back(static_cast<std::size_t>(std::llround(d)));
      }
    } else {
      if (o.delay_range_ms.size() != 2) throw InvalidArgument("--delay-range-ms takes two values");
      delays = coprime_delay_lengths(o.lines, o.delay_range_ms[0] / 1000.0,
                                     o.delay_range_ms[1] / 1000.0, fitted->fs);
    }
    double duration = 0.0;
    if (o.duration_s) {
      duration = *o.duration_s;
      if (!(duration > 0.0)) throw InvalidArgument("render duration must be positive");
    } else {
      duration = std::min(10.0, 2.0 * max_fitted_t60(*fitted));
    }
    cfg = make_fdn(*fitted, std::move(delays), duration, o.seed, parse_method(o.method));
    validate(cfg);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  std::vector<double> ir;
  try {
    ir = render_ir(cfg);
  } catch (const Instability& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }

  std::vector<DecayMeasurement> rows;
  for (double band : decay_rows_bands) {
    if (band * std::numbers::sqrt2 >= cfg.fs / 2.0) continue;
    try {
      rows.push_back(schroeder_t60(ir, cfg.fs, band));
    } catch (const InsufficientDecay& e) {
      err << "warning: band " << band << " Hz: " << e.what() << "\n";
    }
  }
  try {
    write_file_atomic(o.out_path,
                      encode_wav_f32(ir, static_cast<std::uint32_t>(std::lround(cfg.fs))));
    const fs::path csv =
        o.decay_csv.empty() ? fs::path(o.out_path).replace_extension(".decay.csv") : fs::path(o.decay_csv);
    write_file_atomic(csv, decay_measurements_to_csv(rows));
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

inline int cmd_campaign(const CampaignOptions& o, std::ostream& err) {
  std::vector<T60Curve> curves;
  std::vector<std::string> names;
  try {
    if (!o.dir.empty()) {
      if (!fs::is_directory(o.dir)) throw IoError("not a directory: " + o.dir);
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(o.dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        try {
          curves.push_back(load_t60_table(read_file(f)));
        } catch (const ParseError& e) {
          throw ParseError(f.string() + ": " + e.what());
        }
        names.push_back(f.filename().string());
      }
      if (curves.empty()) throw IoError("no T60 CSV files in " + o.dir);
    } else if (o.synthetic > 0) {
      curves = synthetic_t60_curves(o.synthetic, o.seed);
      for (std::size_t i = 0; i < curves.size(); ++i) names.push_back("synthetic_" + std::to_string(i));
    } else {
      throw InvalidArgument("give --dir or --synthetic");
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  CampaignConfig cfg;
  cfg.fs = o.fs;
  cfg.fit.n_bands = o.bands;
  cfg.fit.iterations = o.iterations;
  cfg.fit.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.workers = o.workers;
  cfg.bin_width_pct = o.bin_width;
  CampaignResult result;
  try {
    if (o.delay_range_ms.size() != 2) throw InvalidArgument("--delay-range-ms takes two values");
    cfg.delay_lo_s = o.delay_range_ms[0] / 1000.0;
    cfg.delay_hi_s = o.delay_range_ms[1] / 1000.0;
    cfg.fit.grid = o.grid.make(o.fs);
    result = run_campaign(curves, cfg, names);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  try {
    fs::create_directories(o.out_dir);
    write_file_atomic(fs::path(o.out_dir) / "summary.json", json_text(to_json(result)));
    write_file_atomic(fs::path(o.out_dir) / "histogram.csv", histogram_to_csv(result.distribution));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  err << "campaign: " << result.curves.size() << " curves, " << result.distribution.points
      << " points, p95|err|=" << result.distribution.p95_abs
      << "%, max|err|=" << result.distribution.max_abs << "%\n";
  for (std::size_t i : result.flagged) {
    err << "warning: curve " << result.curves[i].name << " exceeds "
        << cfg.flag_threshold_pct << "% (" << result.curves[i].max_abs_error_pct << "%)\n";
  }
  return kExitOk;
}

/// Parses argv and dispatches to a subcommand.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Fit parametric-EQ attenuation filters for feedback delay networks"};
  app.require_subcommand(1);

  FitOptions fit_o;
  auto* fit_cmd = app.add_subcommand("fit", "fit a PEQ to a T60 table");
  fit_cmd->add_option("--t60", fit_o.t60_path, "CSV with header freq_hz,t60_s")->required();
  fit_cmd->add_option("--out", fit_o.out_path, "fitted PEQ JSON")->required();
  fit_cmd->add_option("--report", fit_o.report_path, "fit report JSON (default <out>.report.json)");
  fit_cmd->add_option("--bands", fit_o.bands, "number of bands")->check(CLI::Range(3, 256));
  auto* dms = fit_cmd->add_option("--delay-ms", fit_o.delay_ms, "reference delay in ms (default 100)");
  auto* dsm = fit_cmd->add_option("--delay-samples", fit_o.delay_samples, "reference delay in samples");
  dms->excludes(dsm);
  fit_cmd->add_option("--fs", fit_o.fs, "sample rate in Hz")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--iterations", fit_o.iterations)->check(CLI::Range(std::size_t{1}, std::size_t{100000000}));
  fit_cmd->add_option("--lr", fit_o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fit_o.seed);
  fit_cmd->add_option("--grid-size", fit_o.grid.size)->check(CLI::Range(2, 1 << 20));
  fit_cmd->add_option("--f-lo", fit_o.grid.f_lo, "lowest grid frequency in Hz")->check(CLI::PositiveNumber);
  fit_cmd->add_flag("--quiet", fit_o.quiet, "suppress progress logging");

  ExportOptions exp_o;
  auto* exp_cmd = app.add_subcommand("export", "write per-delay-line biquad cascades");
  exp_cmd->add_option("--fit", exp_o.fit_path)->required();
  exp_cmd->add_option("--out-dir", exp_o.out_dir);
  exp_cmd->add_option("--delay-samples", exp_o.delay_samples)->delimiter(',');
  exp_cmd->add_option("--delay-ms", exp_o.delay_ms)->delimiter(',');
  exp_cmd->add_option("--format", exp_o.format)->check(CLI::IsMember({"csv", "json", "both"}));
  exp_cmd->add_option("--method", exp_o.method)
      ->check(CLI::IsMember({"auto", "bilinear", "matched", "least-squares"}));

  RenderOptions ren_o;
  auto* ren_cmd = app.add_subcommand("render", "render an FDN impulse response and measure T60");
  ren_cmd->add_option("--fit", ren_o.fit_path)->required();
  ren_cmd->add_option("--out", ren_o.out_path, "impulse response WAV");
  ren_cmd->add_option("--decay-csv", ren_o.decay_csv, "decay CSV (default <out>.decay.csv)");
  ren_cmd->add_option("--lines", ren_o.lines)->check(CLI::Range(1, 64));
  ren_cmd->add_option("--delay-range-ms", ren_o.delay_range_ms)->expected(2);
  ren_cmd->add_option("--delay-samples", ren_o.delay_samples)->delimiter(',');
  ren_cmd->add_option("--duration", ren_o.duration_s, "seconds (default 2x max T60, <= 10 s)");
  ren_cmd->add_option("--seed", ren_o.seed);
  ren_cmd->add_option("--method", ren_o.method)
      ->check(CLI::IsMember({"auto", "bilinear", "matched", "least-squares"}));

  CampaignOptions cam_o;
  auto* cam_cmd = app.add_subcommand("campaign", "relative T60 error distribution over many curves");
  auto* dir_opt = cam_cmd->add_option("--dir", cam_o.dir, "directory of T60 CSV files");
  auto* syn_opt = cam_cmd->add_option("--synthetic", cam_o.synthetic, "generate this many synthetic curves");
  dir_opt->excludes(syn_opt);
  cam_cmd->add_option("--out-dir", cam_o.out_dir);
  cam_cmd->add_option("--bands", cam_o.bands)->check(CLI::Range(3, 256));
  cam_cmd->add_option("--iterations", cam_o.iterations)->check(CLI::Range(std::size_t{1}, std::size_t{100000000}));
  cam_cmd->add_option("--lr", cam_o.lr)->check(CLI::PositiveNumber);
  cam_cmd->add_option("--fs", cam_o.fs)->check(CLI::PositiveNumber);
  cam_cmd->add_option("--delay-range-ms", cam_o.delay_range_ms)->expected(2);
  cam_cmd->add_option("--seed", cam_o.seed);
  cam_cmd->add_option("--workers", cam_o.workers)->check(CLI::Range(1, 1024));
  cam_cmd->add_option("--bin-width", cam_o.bin_width, "histogram bin width in percent")
      ->check(CLI::PositiveNumber);
  cam_cmd->add_option("--grid-size", cam_o.grid.size)->check(CLI::Range(2, 1 << 20));
  cam_cmd->add_option("--f-lo", cam_o.grid.f_lo)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, err, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitInput;
  }

  if (fit_cmd->parsed()) return cmd_fit(fit_o, err);
  if (exp_cmd->parsed()) return cmd_export(exp_o, err);
  if (ren_cmd->parsed()) return cmd_render(ren_o, err);
  return cmd_campaign(cam_o, err);
}

}  // namespace peqfit::cli
