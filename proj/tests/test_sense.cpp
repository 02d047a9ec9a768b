#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ddspin/evolve.hpp"
#include "ddspin/sense.hpp"
#include "oracles.hpp"

using namespace ddspin;

namespace {

const NVParameters kNv{};
constexpr double kPi = std::numbers::pi;

// gamma * integral of b sin(2 pi f t + phi0) s(t) by composite quadrature.
double quadrature_phase(const PulseSequence& seq, const SinusoidAC& ac) {
  const auto br = toggling(seq).breakpoints();
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    const double s = (i % 2 == 0) ? 1.0 : -1.0;
    total += s * oracle::integrate(
                     [&](double t) { return ac.amplitude * std::sin(2.0 * kPi * ac.frequency * t + ac.phase); },
                     br[i], br[i + 1], 8, 24);
  }
  return kGammaElectron * total;
}

}  // namespace

TEST(PhaseResponse, HahnClosedForm) {
  const double b = 1e-9;
  for (double tau : {1e-6, 27e-6, 115e-6, 1e-3}) {
    const auto seq = PulseSequence::hahn(2 * tau);
    const auto ac = synchronized_ac(seq, b);
    EXPECT_DOUBLE_EQ(ac.frequency, 1.0 / (2 * tau));
    const double ref = 4.0 * kGammaElectron * b * tau / kPi;
    EXPECT_NEAR(phase_response(seq, ac, kNv), ref, 1e-10 * ref);
    EXPECT_NEAR(quadrature_phase(seq, ac), ref, 1e-10 * ref);
  }
}

TEST(PhaseResponse, CpmgClosedFormUpTo64Pulses) {
  const double b = 2e-9, tau = 27e-6;
  for (int n = 1; n <= 64; ++n) {
    const auto seq = PulseSequence::cpmg(n, 2.0 * n * tau);
    const auto ac = synchronized_ac(seq, b);
    const double ref = 4.0 * n * kGammaElectron * b * tau / kPi;
    const double got = phase_response(seq, ac, kNv);
    EXPECT_NEAR(std::abs(got), ref, 1e-10 * ref) << n;
    EXPECT_NEAR(got, quadrature_phase(seq, ac), 1e-10 * ref) << n;
  }
}

TEST(PhaseResponse, LinearAndZeroAtZeroAmplitude) {
  const auto seq = PulseSequence::cpmg(7, 3e-4);
  const auto ac = synchronized_ac(seq, 1.3e-9);
  SinusoidAC twice = ac;
  twice.amplitude *= 2.0;
  EXPECT_EQ(phase_response(seq, twice, kNv), 2.0 * phase_response(seq, ac, kNv));
  SinusoidAC zero = ac;
  zero.amplitude = 0.0;
  EXPECT_EQ(phase_response(seq, zero, kNv), 0.0);
  EXPECT_EQ(phase_response(PulseSequence::hahn(1e-4), SinusoidAC{0.0, 1e4, 0.0}, kNv), 0.0);
  EXPECT_THROW(phase_response(PulseSequence::spin_lock(1e-3, 1e5), ac, kNv), std::invalid_argument);
}

TEST(PhaseResponse, SynchronizedPhaseIsOptimal) {
  for (int n : {1, 2, 4, 10}) {
    const auto seq = PulseSequence::cpmg(n, 2.0 * n * 27e-6);
    const auto sync = synchronized_ac(seq, 1e-9);
    const double best = std::abs(phase_response(seq, sync, kNv));
    double scan_max = 0.0, arg = 0.0;
    const int steps = 720;
    for (int i = 0; i < steps; ++i) {
      SinusoidAC ac = sync;
      ac.phase = 2.0 * kPi * i / steps;
      const double v = std::abs(phase_response(seq, ac, kNv));
      if (v > scan_max) {
        scan_max = v;
        arg = ac.phase;
      }
    }
    EXPECT_LE(scan_max, best * (1.0 + 1e-12)) << n;
    const double d = std::remainder(arg - sync.phase, kPi);
    EXPECT_LE(std::abs(d), 2.0 * kPi / steps + 1e-12) << n;
  }
}

TEST(Readout, AnalyticLimit) {
  const ReadoutModel r;
  const auto a = analytic_readout(0.37, r, 1e18);
  EXPECT_EQ(a.estimate, 0.37);
  EXPECT_LT(a.sigma_sn, 1e-7);
  EXPECT_NEAR(analytic_readout(0.37, r, 1e20).sigma_sn, 0.1 * a.sigma_sn, 1e-12 * a.sigma_sn);
  EXPECT_THROW(analytic_readout(1.5, r, 10.0), std::invalid_argument);
}

TEST(Readout, PoissonPropagationFormula) {
  ReadoutModel r;
  r.shots_per_point = 1'000'000;
  const auto res = simulate_readout(0.0, r, CounterRng(17, 0));
  // Photon total N ~ Poisson(shots * alpha (1 - C/2)); estimate (2N/(shots alpha) - 2 + C)/C.
  const double mean_photons = 1e6 * 0.03 * (1.0 - 0.15);
  const double sigma_estimate = (2.0 / 0.3) * std::sqrt(mean_photons) / (1e6 * 0.03);
  EXPECT_NEAR(res.sigma_sn, 0.3 * sigma_estimate, 0.05 * 0.3 * sigma_estimate);
  EXPECT_NEAR(res.estimate, 0.0, 4.0 * sigma_estimate);
  EXPECT_NEAR(analytic_readout(0.0, r, 1e6).sigma_sn, 0.3 * sigma_estimate, 1e-12);
  r.shots_per_point = 0;
  EXPECT_THROW(simulate_readout(0.0, r, CounterRng(1, 0)), std::invalid_argument);
}

TEST(Readout, QuadruplingShotsHalvesError) {
  ReadoutModel small, large;
  small.blocks = large.blocks = 100;
  small.shots_per_point = 20'000;
  large.shots_per_point = 80'000;
  double s_small = 0.0, s_large = 0.0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    s_small += simulate_readout(0.2, small, CounterRng(3, rep)).sigma_sn;
    s_large += simulate_readout(0.2, large, CounterRng(4, rep)).sigma_sn;
  }
  EXPECT_NEAR(s_large / s_small, 0.5, 0.05);
}

TEST(MinDetectableField, CpmgExample) {
  const auto seq = PulseSequence::cpmg(10, 2.0 * 10 * 27e-6);
  const double slope = signal_slope(seq, kNv, 0.3);
  EXPECT_NEAR(slope, 0.3 * 4.0 * 10 * kGammaElectron * 27e-6 / kPi, 1e-9 * slope);
  EXPECT_NEAR(slope, 1.82e7, 0.01e7);
  EXPECT_NEAR(min_detectable_field(slope, 0.01), 0.55e-9, 0.01e-9);
  EXPECT_DOUBLE_EQ(min_detectable_field(slope, 0.02), 2.0 * min_detectable_field(slope, 0.01));
  EXPECT_THROW(min_detectable_field(0.0, 0.01), std::invalid_argument);
}

TEST(MinDetectableField, HahnVersusCpmgSlopeRatio) {
  const double hahn = signal_slope(PulseSequence::hahn(2 * 115e-6), kNv, 0.3);
  const double cpmg = signal_slope(PulseSequence::cpmg(10, 2.0 * 10 * 27e-6), kNv, 0.3);
  EXPECT_NEAR(cpmg / hahn, 10.0 * 27.0 / 115.0, 1e-9);
  EXPECT_NEAR(cpmg / hahn, 2.35, 0.01);
}

TEST(SensitivityScan, AnalyticExponentIsHalf) {
  SenseConfig cfg;
  cfg.sequence = PulseSequence::hahn(2 * 115e-6);
  cfg.times = log_grid(1.0, 1000.0, 12);
  const auto res = sensitivity_scan(cfg, kNv, RngSpec{1});
  EXPECT_NEAR(res.free_fit.exponent.value, -0.5, 1e-9);
  EXPECT_EQ(res.fit.exponent.value, -0.5);
  EXPECT_DOUBLE_EQ(res.shot_duration, 2e-6 + 230e-6);
  for (const auto& p : res.points) EXPECT_GT(p.delta_b_min, 0.0);
  cfg.times.resize(3);
  EXPECT_THROW(sensitivity_scan(cfg, kNv, RngSpec{1}), std::invalid_argument);
}

TEST(SensitivityScan, CoefficientScalesWithPhotonBudget) {
  SenseConfig cfg;
  cfg.sequence = PulseSequence::hahn(2 * 115e-6);
  cfg.times = log_grid(1.0, 100.0, 8);
  const double k1 = sensitivity_scan(cfg, kNv, RngSpec{}).fit.coefficient.value;
  cfg.readout.photons_per_shot *= 0.5;
  const double k2 = sensitivity_scan(cfg, kNv, RngSpec{}).fit.coefficient.value;
  EXPECT_NEAR(k2 / k1, std::sqrt(2.0), 0.1 * std::sqrt(2.0));
}

TEST(SensitivityScan, CalibrationHitsTarget) {
  SenseConfig cfg;
  cfg.sequence = PulseSequence::hahn(2 * 115e-6);
  cfg.times = log_grid(1.0, 100.0, 8);
  cfg.readout.photons_per_shot = calibrate_photons_per_shot(cfg.sequence, cfg.readout, kNv, 19.4e-9);
  const auto res = sensitivity_scan(cfg, kNv, RngSpec{});
  EXPECT_NEAR(res.fit.coefficient.value, 19.4e-9, 1e-9 * 19.4e-9);
}

TEST(SensitivityScan, SampledConvergesToAnalytic) {
  SenseConfig cfg;
  cfg.sequence = PulseSequence::cpmg(10, 2.0 * 10 * 27e-6);
  cfg.times = log_grid(5.0, 200.0, 10);
  const auto exact = sensitivity_scan(cfg, kNv, RngSpec{});
  cfg.analytic = false;
  const auto sampled = sensitivity_scan(cfg, kNv, RngSpec{77});
  // Block std error of a spread estimate has relative error 1/sqrt(2 (blocks - 1)).
  const double rel = 1.0 / std::sqrt(2.0 * (cfg.readout.blocks - 1.0));
  double mean_ratio = 0.0;
  for (std::size_t i = 0; i < exact.points.size(); ++i)
    mean_ratio += sampled.points[i].delta_b_min / exact.points[i].delta_b_min;
  mean_ratio /= static_cast<double>(exact.points.size());
  EXPECT_NEAR(mean_ratio, 1.0, 3.0 * rel / std::sqrt(static_cast<double>(exact.points.size())));
  EXPECT_NEAR(sampled.free_fit.exponent.value, -0.5, 0.05);
}

TEST(SensitivityScan, ThreadIndependence) {
  SenseConfig cfg;
  cfg.sequence = PulseSequence::hahn(2 * 115e-6);
  cfg.times = log_grid(1.0, 50.0, 6);
  cfg.analytic = false;
  cfg.ac_jitter = 0.1;
  cfg.test_field = 1e-9;
  const auto a = sensitivity_scan(cfg, kNv, RngSpec{5}, 1);
  const auto b = sensitivity_scan(cfg, kNv, RngSpec{5}, 8);
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].delta_b_min, b.points[i].delta_b_min);
}
