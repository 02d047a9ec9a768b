#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ddspin/evolve.hpp"
#include "ddspin/fit.hpp"
#include "ddspin/rng.hpp"
#include "oracles.hpp"

using namespace ddspin;

namespace {

std::vector<double> model_curve(const std::vector<double>& t, double A, double T, double p, double c = 0.0) {
  std::vector<double> s;
  for (double x : t) s.push_back(A * std::exp(-std::pow(x / T, p)) + c);
  return s;
}

}  // namespace

TEST(FitDecay, RecoversNoiselessHahnCurve) {
  const auto t = linear_grid(0.05e-3, 1.0e-3, 20);
  const auto s = model_curve(t, 1.0, 0.39e-3, 4.0);
  const std::vector<double> e(t.size(), 1e-3);
  const auto fit = fit_decay(t, s, e, DecayModel::stretched_exp);
  ASSERT_TRUE(fit.converged);
  EXPECT_NEAR(fit.decay_time.value, 0.39e-3, 1e-6 * 0.39e-3);
  EXPECT_NEAR(fit.stretch.value, 4.0, 1e-6);
  EXPECT_NEAR(fit.amplitude.value, 1.0, 1e-6);
  EXPECT_TRUE(fit.offset.fixed);
  EXPECT_EQ(fit.offset.value, 0.0);
}

TEST(FitDecay, RecoversExponential) {
  const auto t = linear_grid(0.1e-3, 6e-3, 15);
  const auto s = model_curve(t, 0.97, 2.44e-3, 1.0);
  const std::vector<double> e(t.size(), 2e-3);
  const auto fit = fit_decay(t, s, e, DecayModel::exponential);
  EXPECT_NEAR(fit.decay_time.value, 2.44e-3, 1e-6 * 2.44e-3);
  EXPECT_TRUE(fit.stretch.fixed);
  EXPECT_EQ(fit.stretch.value, 1.0);
}

TEST(FitDecay, FreeOffsetAndFixedAmplitude) {
  const auto t = linear_grid(1e-6, 2e-5, 25);
  const auto s = model_curve(t, 0.8, 6e-6, 1.7, 0.1);
  const std::vector<double> e(t.size(), 1e-3);
  FixedParams fp;
  fp.free_offset = true;
  const auto fit = fit_decay(t, s, e, DecayModel::stretched_exp, fp);
  EXPECT_NEAR(fit.offset.value, 0.1, 1e-6);
  EXPECT_NEAR(fit.decay_time.value, 6e-6, 1e-6 * 6e-6);
  FixedParams pinned;
  pinned.amplitude = 0.8;
  pinned.offset = 0.1;
  const auto g = fit_decay(t, s, e, DecayModel::stretched_exp, pinned);
  EXPECT_TRUE(g.amplitude.fixed);
  EXPECT_NEAR(g.stretch.value, 1.7, 1e-6);
}

TEST(FitDecay, UniformWeightScalingLeavesEstimateUnchanged) {
  const auto t = linear_grid(0.05e-3, 1.0e-3, 20);
  auto s = model_curve(t, 1.0, 0.39e-3, 3.0);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& v : s) v += noise(gen);
  std::vector<double> e1(t.size(), 0.01), e2(t.size(), 0.5);
  const auto a = fit_decay(t, s, e1, DecayModel::stretched_exp);
  const auto b = fit_decay(t, s, e2, DecayModel::stretched_exp);
  EXPECT_NEAR(a.decay_time.value, b.decay_time.value, 1e-8 * a.decay_time.value);
  EXPECT_NEAR(a.stretch.value, b.stretch.value, 1e-7);
  // Unscaled covariance: sigmas scale with the quoted errors.
  EXPECT_NEAR(b.decay_time.sigma / a.decay_time.sigma, 50.0, 1e-3 * 50.0);
}

TEST(FitDecay, TimeRescalingIsEquivariant) {
  const auto t = linear_grid(0.5, 10.0, 20);
  auto s = model_curve(t, 0.9, 3.0, 2.2);
  std::mt19937_64 gen(6);
  std::normal_distribution<double> noise(0.0, 0.005);
  for (double& v : s) v += noise(gen);
  const std::vector<double> e(t.size(), 0.005);
  std::vector<double> t_us;
  for (double x : t) t_us.push_back(x * 1e-6);
  const auto a = fit_decay(t, s, e, DecayModel::stretched_exp);
  const auto b = fit_decay(t_us, s, e, DecayModel::stretched_exp);
  EXPECT_NEAR(b.decay_time.value, a.decay_time.value * 1e-6, 1e-7 * b.decay_time.value);
  EXPECT_NEAR(a.stretch.value, b.stretch.value, 1e-7);
}

TEST(FitDecay, NoisyMonteCarloCurveWithinErrorBars) {
  const double T2 = 0.39e-3, p = 3.0;
  const auto t = linear_grid(0.05e-3, 1.0e-3, 20);
  auto s = model_curve(t, 1.0, T2, p);
  std::vector<double> e(t.size());
  std::mt19937_64 gen(7);
  for (std::size_t i = 0; i < t.size(); ++i) {
    e[i] = 0.01;
    s[i] += std::normal_distribution<double>(0.0, e[i])(gen);
  }
  const auto fit = fit_decay(t, s, e, DecayModel::stretched_exp);
  EXPECT_LE(std::abs(fit.decay_time.value - T2), 4.0 * fit.decay_time.sigma);
  EXPECT_GT(fit.decay_time.sigma, 0.0);
}

TEST(FitDecay, Errors) {
  const std::vector<double> t{1, 2, 3, 4};
  const std::vector<double> s{1, 0.5, 0.2, 0.1};
  EXPECT_THROW(fit_decay(t, s, s, DecayModel::exponential), std::invalid_argument);
  const std::vector<double> t5{1, 2, 3, 4, 5}, flat(5, 0.7), e(5, 0.01);
  EXPECT_THROW(fit_decay(t5, flat, e, DecayModel::stretched_exp), FitError);
  EXPECT_THROW(fit_decay(t5, flat, e, DecayModel::power_law), std::invalid_argument);
  const std::vector<double> bad{1, 0.5, NAN, 0.1, 0.05};
  EXPECT_THROW(fit_decay(t5, bad, e, DecayModel::exponential), std::invalid_argument);
}

TEST(FitPowerLaw, RecoversShotNoiseCoefficient) {
  const double k = 19.4e-9;
  std::vector<double> t, v;
  for (int i = 0; i < 12; ++i) {
    t.push_back(0.01 * std::pow(2.0, i));
    v.push_back(k / std::sqrt(t.back()));
  }
  const auto fixed = fit_power_law(t, v, -0.5);
  EXPECT_NEAR(fixed.coefficient.value, k, 1e-9 * k);
  EXPECT_TRUE(fixed.exponent.fixed);
  const auto free = fit_power_law(t, v);
  EXPECT_NEAR(free.exponent.value, -0.5, 1e-9);
  EXPECT_NEAR(free.coefficient.value, k, 1e-8 * k);
}

TEST(FitPowerLaw, NoisyExponentAgreesWithRegression) {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<double> t, v;
  for (int i = 0; i < 20; ++i) {
    t.push_back(0.1 * std::pow(1.5, i));
    v.push_back(11e-9 / std::sqrt(t.back()) * (1.0 + noise(gen)));
  }
  const auto fit = fit_power_law(t, v);
  EXPECT_NEAR(fit.exponent.value, -0.5, 0.02);
  const auto [slope, intercept] = oracle::loglog_regression(t, v);
  EXPECT_NEAR(fit.exponent.value, slope, 3.0 * fit.exponent.sigma);
}

TEST(FitPowerLaw, Errors) {
  const std::vector<double> t{1, 2, 3};
  EXPECT_THROW(fit_power_law(t, t), std::invalid_argument);
  const std::vector<double> t4{1, 2, 3, 4}, neg{1, -1, 1, 1};
  EXPECT_THROW(fit_power_law(t4, neg), std::invalid_argument);
}
