#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "ddspin/field.hpp"
#include "ddspin/fit.hpp"
#include "ddspin/parallel.hpp"
#include "ddspin/rng.hpp"
#include "ddspin/sequence.hpp"

namespace ddspin {

/// Scalar optical readout: a shot yields Poisson photons with mean
/// photons_per_shot * (1 - contrast (1 - S) / 2) for spin signal S.
struct ReadoutModel {
  double photons_per_shot = 0.03;
  double contrast = 0.3;
  std::size_t shots_per_point = 1'000'000;
  double overhead = 2e-6;      // laser/readout time per shot, s
  std::size_t blocks = 1000;   // block count for the sampled error estimate

  void validate() const {
    if (!(contrast > 0.0 && contrast < 1.0)) throw std::invalid_argument("readout: contrast must lie in (0, 1)");
    if (!(photons_per_shot > 0.0) || !std::isfinite(photons_per_shot))
      throw std::invalid_argument("readout: photons_per_shot must be positive");
    if (!(overhead >= 0.0) || !std::isfinite(overhead)) throw std::invalid_argument("readout: overhead must be >= 0");
    if (blocks < 2) throw std::invalid_argument("readout: blocks must be >= 2");
  }
};

struct ReadoutResult {
  double estimate = 0.0;   // normalized signal estimate
  double std_error = 0.0;  // standard error of the estimate
  double sigma_sn = 0.0;   // contrast-weighted error, contrast * std_error
};

/// AC field synchronized with the pulse train so that it changes sign at every
/// pi pulse and vanishes at the pi/2 pulses: sine at 1/T for a Hahn echo, and
/// a cosine at 1/(4 tau) for CPMG-n with base interval tau.
inline SinusoidAC synchronized_ac(const PulseSequence& seq, double amplitude) {
  const double T = seq.total_time();
  switch (seq.kind()) {
    case SequenceKind::fid: return {amplitude, 0.5 / T, 0.0};
    case SequenceKind::hahn: return {amplitude, 1.0 / T, 0.0};
    case SequenceKind::cpmg: return {amplitude, 1.0 / (4.0 * seq.base_interval()), 0.5 * std::numbers::pi};
    default: break;
  }
  throw std::invalid_argument("synchronized_ac: sequence kind must be fid, hahn or cpmg");
}

/// Phase collected from an AC field under the sequence's toggling function.
inline double phase_response(const PulseSequence& seq, const SinusoidAC& ac, const NVParameters& nv) {
  if (seq.kind() == SequenceKind::spin_lock || seq.kind() == SequenceKind::custom)
    throw std::invalid_argument("phase_response: sequence kind must be fid, hahn or cpmg");
  return signed_phase(FieldModel({ac}), toggling(seq), nv, RngSpec{}, 0);
}

/// dPhi/db of the synchronized field, rad/T.
inline double phase_slope(const PulseSequence& seq, const NVParameters& nv) {
  return phase_response(seq, synchronized_ac(seq, 1.0), nv);
}

/// Contrast-weighted signal slope at the quadrature operating point, 1/T.
inline double signal_slope(const PulseSequence& seq, const NVParameters& nv, double contrast) {
  return contrast * std::abs(phase_slope(seq, nv));
}

inline double min_detectable_field(double slope, double sigma_sn) {
  if (!(slope > 0.0)) throw std::invalid_argument("min_detectable_field: slope must be positive");
  if (!(sigma_sn >= 0.0)) throw std::invalid_argument("min_detectable_field: sigma_sn must be non-negative");
  return sigma_sn / slope;
}

/// Poisson error of the normalized estimate for `shots` shots.
inline double readout_std_error(double signal, const ReadoutModel& r, double shots) {
  const double mean_rate = 1.0 - r.contrast * (1.0 - signal) / 2.0;
  return (2.0 / r.contrast) * std::sqrt(mean_rate / (shots * r.photons_per_shot));
}

inline void check_signal(double signal) {
  if (!(std::abs(signal) <= 1.0)) throw std::invalid_argument("readout: |signal| must be <= 1");
}

/// Infinite-sample readout: the estimate is the input and the error is the
/// propagated Poisson error. `shots` may be fractional.
inline ReadoutResult analytic_readout(double signal, const ReadoutModel& r, double shots) {
  check_signal(signal);
  r.validate();
  if (!(shots > 0.0)) throw std::invalid_argument("readout: shots must be positive");
  const double se = readout_std_error(signal, r, shots);
  return {signal, se, r.contrast * se};
}

/// Photon-counting readout of `shots` shots split into blocks; the error is
/// the spread of per-block estimates. Shots beyond a whole number per block
/// are dropped. `signal_of_block` gives the signal seen in block b.
template <class SignalFn>
ReadoutResult sampled_readout(SignalFn&& signal_of_block, const ReadoutModel& r, std::size_t shots, CounterRng rng) {
  r.validate();
  if (shots < 2) throw std::invalid_argument("readout: need at least 2 shots");
  const std::size_t nb = std::min(r.blocks, shots);
  const std::size_t per_block = shots / nb;
  std::vector<double> est(nb);
  const double c = r.contrast;
  const double norm = static_cast<double>(per_block) * r.photons_per_shot;
  for (std::size_t b = 0; b < nb; ++b) {
    const double s = signal_of_block(b);
    check_signal(s);
    std::poisson_distribution<long long> counts(norm * (1.0 - c * (1.0 - s) / 2.0));
    const double f = static_cast<double>(counts(rng)) / norm;
    est[b] = (2.0 * f - 2.0 + c) / c;
  }
  const SampleStats st = sample_stats(est);
  return {st.mean, st.std_error, c * st.std_error};
}

inline ReadoutResult simulate_readout(double signal, const ReadoutModel& r, CounterRng rng) {
  check_signal(signal);
  if (r.shots_per_point == 0) throw std::invalid_argument("readout: zero shots");
  return sampled_readout([signal](std::size_t) { return signal; }, r, r.shots_per_point, rng);
}

/// Wall-clock duration of one shot: readout overhead plus the sequence.
inline double shot_duration(const PulseSequence& seq, const ReadoutModel& r) { return r.overhead + seq.total_time(); }

struct SensePoint {
  double total_time = 0.0;   // measurement time per point, s
  double delta_b_min = 0.0;  // T
  double sigma_sn = 0.0;
  double slope = 0.0;        // 1/T
};

struct SensitivityResult {
  std::vector<SensePoint> points;
  DecayFit fit;       // k t^{-1/2}, k in T s^{1/2}
  DecayFit free_fit;  // k t^q with q free
  double shot_duration = 0.0;
};

struct SenseConfig {
  PulseSequence sequence = PulseSequence::hahn(230e-6);
  ReadoutModel readout;
  std::vector<double> times;  // total measurement times, s
  bool analytic = true;
  double test_field = 0.0;  // AC amplitude present during the measurement, T
  double ac_jitter = 0.0;   // relative block-to-block amplitude jitter
};

/// delta B_min versus measurement time. Each point spends t / shot_duration
/// shots at the quadrature point and is fitted with k / sqrt(t).
inline SensitivityResult sensitivity_scan(const SenseConfig& cfg, const NVParameters& nv, const RngSpec& rng,
                                          unsigned threads = 1) {
  if (cfg.times.size() < 4) throw std::invalid_argument("sensitivity_scan: need at least 4 grid points");
  for (std::size_t i = 0; i < cfg.times.size(); ++i)
    if (!(cfg.times[i] > 0.0) || (i > 0 && !(cfg.times[i] > cfg.times[i - 1])))
      throw std::invalid_argument("sensitivity_scan: times must be positive and strictly increasing");
  if (!(cfg.ac_jitter >= 0.0)) throw std::invalid_argument("sensitivity_scan: ac_jitter must be >= 0");
  cfg.readout.validate();
  nv.validate();

  const double dphi = phase_slope(cfg.sequence, nv);
  const double t_shot = shot_duration(cfg.sequence, cfg.readout);
  const double phi_test = dphi * cfg.test_field;
  // Quadrature bias: S = cos(phi + pi/2) = -sin(phi).
  const double slope = cfg.readout.contrast * std::abs(dphi * std::cos(phi_test));
  if (!(slope > 0.0)) throw std::invalid_argument("sensitivity_scan: zero signal slope at the operating point");

  SensitivityResult out;
  out.shot_duration = t_shot;
  out.points.resize(cfg.times.size());
  parallel_for(cfg.times.size(), threads, [&](std::size_t p) {
    const double t = cfg.times[p];
    const double shots = t / t_shot;
    ReadoutResult rr;
    if (cfg.analytic) {
      rr = analytic_readout(-std::sin(phi_test), cfg.readout, shots);
    } else {
      const RngSpec point_rng = rng.fork(p);
      const auto n = static_cast<std::size_t>(std::floor(shots));
      if (n < 2) throw std::invalid_argument("sensitivity_scan: measurement time shorter than two shots");
      GaussianStream jitter(point_rng.stream(0, 1));
      std::vector<double> block_signal(std::min(cfg.readout.blocks, n));
      for (double& s : block_signal) {
        const double scale = cfg.ac_jitter > 0.0 ? 1.0 + cfg.ac_jitter * jitter() : 1.0;
        s = -std::sin(phi_test * scale);
      }
      rr = sampled_readout([&](std::size_t b) { return block_signal[b]; }, cfg.readout, n, point_rng.stream(0, 0));
    }
    out.points[p] = {t, min_detectable_field(slope, rr.sigma_sn), rr.sigma_sn, slope};
  });

  std::vector<double> t, v;
  for (const auto& pt : out.points) {
    t.push_back(pt.total_time);
    v.push_back(pt.delta_b_min);
  }
  out.fit = fit_power_law(t, v, -0.5);
  out.free_fit = fit_power_law(t, v);
  return out;
}

/// Photons per shot for which the analytic scan of `seq` gives coefficient
/// `target_k` (T s^{1/2}).
inline double calibrate_photons_per_shot(const PulseSequence& seq, const ReadoutModel& r, const NVParameters& nv,
                                         double target_k) {
  if (!(target_k > 0.0)) throw std::invalid_argument("calibrate_photons_per_shot: target must be positive");
  const double c = r.contrast;
  const double dphi = std::abs(phase_slope(seq, nv));
  const double k_dphi = target_k * dphi;
  return (2.0 / c) * (2.0 / c) * (1.0 - c / 2.0) * shot_duration(seq, r) / (k_dphi * k_dphi);
}

}  // namespace ddspin
