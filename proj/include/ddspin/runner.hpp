#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddspin/config.hpp"
#include "ddspin/evolve.hpp"
#include "ddspin/fit.hpp"
#include "ddspin/io.hpp"
#include "ddspin/sense.hpp"

namespace ddspin {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitNumerical = 3, kExitIo = 4 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<long long> shots;
  std::optional<long long> threads;
};

/// Failure whose artifacts were written but whose result is not trustworthy.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.shots) {
    if (*o.shots <= 0) throw ConfigError("--shots", "must be a positive integer");
    cfg.shots = static_cast<std::size_t>(*o.shots);
    if (cfg.kind == ExperimentKind::decay && cfg.shots < 100) throw ConfigError("--shots", "decay curves need >= 100 shots");
  }
  if (o.threads) {
    if (*o.threads < 1 || *o.threads > 1024) throw ConfigError("--threads", "must be in [1, 1024]");
    cfg.threads = static_cast<unsigned>(*o.threads);
  }
}

namespace detail {

struct ArtifactWriter {
  std::filesystem::path dir;
  json artifacts = json::array();

  void write(const std::string& name, const std::string& text) {
    write_text_file(dir / name, text);
    artifacts.push_back(json{{"file", name}, {"digest", hex_digest(text)}});
  }
};

inline DecayFit fit_curve(const CoherenceCurve& c, const FitSpec& spec) { return fit_decay(c, spec.model, spec.fixed); }

}  // namespace detail

/// Runs a parsed config and writes its artifacts plus manifest.json into
/// `out_dir`. Returns the exit code; a fit that does not converge still
/// writes everything and returns kExitNumerical.
inline int run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  detail::ArtifactWriter w{out_dir};
  const RngSpec rng{cfg.seed};
  bool unconverged = false;
  json summary;

  auto emit_fit = [&](const DecayFit& f) {
    w.write("fit.json", fit_report_json(f).dump(2) + "\n");
    if (!f.converged) unconverged = true;
    if (f.model == DecayModel::power_law) return;
    summary["decay_time_s"] = f.decay_time.value;
    summary["stretch"] = f.stretch.value;
    log << "fit: T = " << format_double(f.decay_time.value) << " s, p = " << format_double(f.stretch.value)
        << (f.converged ? "" : " (not converged)") << "\n";
  };
  auto emit_curve = [&](const CoherenceCurve& c) {
    w.write("curve.csv", curve_csv(c));
    w.write("curve.json", curve_metadata_json(c).dump(2) + "\n");
    if (cfg.fit.enabled) emit_fit(detail::fit_curve(c, cfg.fit));
  };

  switch (cfg.kind) {
    case ExperimentKind::decay:
      emit_curve(coherence_curve(*cfg.field, cfg.sequence, cfg.grid, cfg.shots, rng, cfg.nv, cfg.threads));
      break;
    case ExperimentKind::spinlock:
      emit_curve(spin_lock_curve(*cfg.field, cfg.omega1, cfg.grid, cfg.shots, rng, cfg.nv, cfg.threads));
      break;
    case ExperimentKind::pulse_error: {
      const auto& p = cfg.pulse_error;
      emit_curve(pulse_error_curve(*cfg.field, p.n, p.flip_angle_error, p.convention, cfg.grid, cfg.shots, rng, cfg.nv,
                                   cfg.threads));
      break;
    }
    case ExperimentKind::suppression: {
      const auto& s = cfg.suppression;
      w.write("suppression.csv", suppression_csv(s.n_min, s.n_max, s.k_min, s.k_max));
      break;
    }
    case ExperimentKind::sense: {
      SenseConfig sc;
      sc.sequence = cfg.sense.sequence;
      sc.readout = cfg.sense.readout;
      sc.times = cfg.sense.times;
      sc.analytic = cfg.sense.analytic;
      sc.test_field = cfg.sense.test_field;
      sc.ac_jitter = cfg.sense.ac_jitter;
      if (cfg.sense.calibrate_k)
        sc.readout.photons_per_shot = calibrate_photons_per_shot(sc.sequence, sc.readout, cfg.nv, *cfg.sense.calibrate_k);
      const SensitivityResult r = sensitivity_scan(sc, cfg.nv, rng, cfg.threads);
      w.write("sensitivity.csv", sensitivity_csv(r));
      json rep = sensitivity_report_json(r, sc.analytic);
      rep["photons_per_shot"] = sc.readout.photons_per_shot;
      w.write("sensitivity.json", rep.dump(2) + "\n");
      if (!r.fit.converged || !r.free_fit.converged) unconverged = true;
      summary["k_nT_per_sqrtHz"] = r.fit.coefficient.value * 1e9;
      log << "sense: k = " << format_double(r.fit.coefficient.value * 1e9) << " nT/sqrt(Hz), exponent "
          << format_double(r.free_fit.exponent.value) << "\n";
      break;
    }
    case ExperimentKind::fit:
      emit_fit(detail::fit_curve(read_curve_csv(cfg.input), cfg.fit));
      break;
  }

  const json canonical = config_to_json(cfg);
  const std::string canonical_text = canonical.dump();
  json manifest;
  manifest["tool"] = "ddspin";
  manifest["version"] = kVersion;
  manifest["experiment"] = to_string(cfg.kind);
  manifest["seed"] = cfg.seed;
  manifest["inputs_digest"] = hex_digest(canonical_text);
  manifest["config"] = canonical;
  manifest["artifacts"] = w.artifacts;
  if (!summary.empty()) manifest["summary"] = summary;
  manifest["converged"] = !unconverged;
  const std::string manifest_text = manifest.dump(2) + "\n";
  write_text_file(out_dir / "manifest.json", manifest_text);
  log << manifest_text;
  if (unconverged) throw NumericalFailure("fit did not converge; artifacts written");
  return kExitOk;
}

/// Loads, validates and runs a config file, mapping failures to exit codes.
inline int run_command(ExperimentKind kind, const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                       const Overrides& overrides, std::ostream& log, std::ostream& err) {
  try {
    const std::string text = read_text_file(config_path);
    ExperimentConfig cfg = parse_config(parse_json_text(text), kind);
    // Relative curve paths are taken from the config's own directory.
    if (!cfg.input.empty() && std::filesystem::path(cfg.input).is_relative())
      cfg.input = (config_path.parent_path() / cfg.input).lexically_normal().string();
    apply_overrides(cfg, overrides);
    return run_experiment(cfg, out_dir, log);
  } catch (const ConfigParseError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IntegratorError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const FitError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::overflow_error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "validation error: " << e.what() << "\n";
    return kExitValidation;
  }
}

/// Prints the validation report; exit 0 when valid (warnings allowed).
inline int validate_command(const std::filesystem::path& config_path, std::ostream& out) {
  std::string text;
  try {
    text = read_text_file(config_path);
  } catch (const IoError& e) {
    out << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
  const ValidationReport rep = validate_config_text(text);
  out << (rep.valid ? "valid" : "invalid") << "\n";
  if (!rep.valid) out << "error: " << rep.error << "\n";
  for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
  for (const auto& d : rep.diagnostics) out << "note: " << d << "\n";
  out << "warnings: " << rep.warnings.size() << "\n";
  return rep.valid ? kExitOk : kExitValidation;
}

}  // namespace ddspin
