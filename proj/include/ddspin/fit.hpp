#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddspin/evolve.hpp"

namespace ddspin {

enum class DecayModel { stretched_exp, exponential, power_law };

inline const char* to_string(DecayModel m) {
  switch (m) {
    case DecayModel::stretched_exp: return "stretched_exp";
    case DecayModel::exponential: return "exponential";
    case DecayModel::power_law: return "power_law";
  }
  return "?";
}

struct Estimate {
  double value = std::numeric_limits<double>::quiet_NaN();
  double sigma = std::numeric_limits<double>::quiet_NaN();
  bool fixed = false;
};

/// Result of a decay or power-law fit. Decay models fill amplitude, decay_time,
/// stretch and offset of S(t) = A exp(-(t/T)^p) + c; power_law fills
/// coefficient k and exponent q of v = k t^q.
struct DecayFit {
  DecayModel model = DecayModel::stretched_exp;
  Estimate amplitude, decay_time, stretch, offset;
  Estimate coefficient, exponent;
  double residual_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Optional parameter pins for fit_decay. The offset is pinned to 0 unless
/// `free_offset` is set.
struct FixedParams {
  std::optional<double> amplitude;
  std::optional<double> stretch;
  std::optional<double> offset;
  bool free_offset = false;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct LmResult {
  Eigen::VectorXd x;
  Eigen::MatrixXd covariance;  // (J^T J)^{-1} at the optimum, in residual units
  double cost = 0.0;           // sum of squared residuals
  bool converged = false;
  int iterations = 0;
};

/// Residual callback: fills r (size m) and J (m x n) for parameters x.
using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J)>;

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt scaling).
inline LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd x, std::size_t m,
                                    const std::function<bool(const Eigen::VectorXd&)>& admissible,
                                    int max_iterations = 500) {
  const auto n = x.size();
  Eigen::VectorXd r(static_cast<Eigen::Index>(m));
  Eigen::MatrixXd J(static_cast<Eigen::Index>(m), n);
  fn(x, r, J);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  LmResult out;
  int it = 0;
  for (; it < max_iterations; ++it) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() <= 1e-15 * std::max(1.0, cost)) {
      out.converged = true;
      break;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      for (Eigen::Index i = 0; i < n; ++i) A(i, i) += lambda * std::max(JtJ(i, i), 1e-300);
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd trial = x + step;
      if (!admissible(trial)) {
        lambda *= 10.0;
        continue;
      }
      Eigen::VectorXd r_trial(static_cast<Eigen::Index>(m));
      Eigen::MatrixXd J_trial(static_cast<Eigen::Index>(m), n);
      fn(trial, r_trial, J_trial);
      const double trial_cost = r_trial.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const double rel_drop = (cost - trial_cost) / std::max(cost, 1e-300);
        const double rel_step = step.norm() / (x.norm() + 1e-12);
        x = trial;
        r = r_trial;
        J = J_trial;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-15);
        improved = true;
        if (rel_step < 1e-13 || (rel_drop < 1e-15 && rel_step < 1e-9) || cost == 0.0) out.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      // No downhill step at any damping: the point is a minimum to working precision.
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  out.x = x;
  out.cost = cost;
  out.iterations = it;
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(JtJ);
  out.covariance = lu.isInvertible() ? Eigen::MatrixXd(lu.inverse())
                                     : Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
  return out;
}

/// Effective standard errors: floored at 1% of the median positive error;
/// unit weights when no errors are given.
inline std::vector<double> effective_sigmas(std::span<const double> std_errors) {
  std::vector<double> positive;
  for (double s : std_errors)
    if (s > 0.0 && std::isfinite(s)) positive.push_back(s);
  std::vector<double> out(std_errors.size(), 1.0);
  if (positive.empty()) return out;
  std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(positive.size() / 2),
                   positive.end());
  const double floor = 0.01 * positive[positive.size() / 2];
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max(std::isfinite(std_errors[i]) ? std_errors[i] : 0.0, floor);
  return out;
}

}  // namespace detail

/// Weighted least-squares fit of S(t) = A exp(-(t/T)^p) + c. The decay time is
/// fitted as log T; several starts over decades of the time span are tried and
/// the lowest residual wins (ties go to the shorter T).
inline DecayFit fit_decay(std::span<const double> times, std::span<const double> signal,
                          std::span<const double> std_errors, DecayModel model, const FixedParams& fixed = {}) {
  if (model == DecayModel::power_law) throw std::invalid_argument("fit_decay: use fit_power_law for power laws");
  const std::size_t m = times.size();
  if (signal.size() != m || std_errors.size() != m) throw std::invalid_argument("fit_decay: size mismatch");
  if (m < 5) throw std::invalid_argument("fit_decay: need at least 5 points");
  for (std::size_t i = 0; i < m; ++i)
    if (!(times[i] >= 0.0) || !std::isfinite(signal[i])) throw std::invalid_argument("fit_decay: invalid data point");
  const auto [lo, hi] = std::minmax_element(signal.begin(), signal.end());
  if (!(*hi - *lo > 1e-12 * std::max(1.0, std::abs(*hi)))) throw FitError("fit_decay: degenerate (constant) curve");

  const std::vector<double> sig = detail::effective_sigmas(std_errors);
  std::optional<double> stretch_pin = fixed.stretch;
  if (model == DecayModel::exponential) stretch_pin = 1.0;
  std::optional<double> offset_pin = fixed.offset;
  if (!offset_pin && !fixed.free_offset) offset_pin = 0.0;

  // Free parameter layout.
  enum Slot { kA, kLogT, kP, kC };
  std::vector<Slot> free_slots;
  if (!fixed.amplitude) free_slots.push_back(kA);
  free_slots.push_back(kLogT);
  if (!stretch_pin) free_slots.push_back(kP);
  if (!offset_pin) free_slots.push_back(kC);
  const auto n = static_cast<Eigen::Index>(free_slots.size());

  auto unpack = [&](const Eigen::VectorXd& x) {
    std::array<double, 4> v{fixed.amplitude.value_or(1.0), 0.0, stretch_pin.value_or(1.0), offset_pin.value_or(0.0)};
    for (Eigen::Index j = 0; j < n; ++j) v[free_slots[static_cast<std::size_t>(j)]] = x(j);
    return v;
  };

  const detail::ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const auto v = unpack(x);
    const double A = v[kA], logT = v[kLogT], p = v[kP], c = v[kC];
    for (std::size_t i = 0; i < m; ++i) {
      const double t = times[i];
      double u = 0.0, log_ratio = 0.0;
      if (t > 0.0) {
        log_ratio = std::log(t) - logT;
        u = std::exp(p * log_ratio);
      }
      const double e = std::exp(-u);
      const double model_value = A * e + c;
      const auto row = static_cast<Eigen::Index>(i);
      r(row) = (model_value - signal[i]) / sig[i];
      for (Eigen::Index j = 0; j < n; ++j) {
        double d = 0.0;
        switch (free_slots[static_cast<std::size_t>(j)]) {
          case kA: d = e; break;
          case kLogT: d = A * e * u * p; break;
          case kP: d = (t > 0.0) ? -A * e * u * log_ratio : 0.0; break;
          case kC: d = 1.0; break;
        }
        J(row, j) = d / sig[i];
      }
    }
  };
  auto admissible = [&](const Eigen::VectorXd& x) {
    const auto v = unpack(x);
    return std::isfinite(v[kLogT]) && v[kP] > 0.05 && v[kP] < 50.0 && std::abs(v[kLogT]) < 700.0;
  };

  const double t_min = *std::min_element(times.begin(), times.end());
  const double t_max = *std::max_element(times.begin(), times.end());
  const double span = (t_max - t_min) > 0.0 ? (t_max - t_min) : std::max(t_max, 1e-300);
  const double a0 = fixed.amplitude.value_or(std::max(std::abs(*hi), std::abs(*lo)));
  std::vector<double> t_starts{0.1 * span, 1.0 * span, 10.0 * span};
  std::vector<double> p_starts = stretch_pin ? std::vector<double>{*stretch_pin} : std::vector<double>{1.0, 2.0, 4.0};

  std::optional<detail::LmResult> best;
  for (double t0 : t_starts) {
    for (double p0 : p_starts) {
      Eigen::VectorXd x(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        switch (free_slots[static_cast<std::size_t>(j)]) {
          case kA: x(j) = a0; break;
          case kLogT: x(j) = std::log(t0); break;
          case kP: x(j) = p0; break;
          case kC: x(j) = 0.0; break;
        }
      }
      detail::LmResult res = detail::levenberg_marquardt(fn, x, m, admissible);
      if (!best) {
        best = std::move(res);
        continue;
      }
      const double tol = 1e-12 * std::max(best->cost, 1e-300);
      const double t_new = unpack(res.x)[kLogT];
      const double t_best = unpack(best->x)[kLogT];
      if (res.cost < best->cost - tol || (std::abs(res.cost - best->cost) <= tol && t_new < t_best))
        best = std::move(res);
    }
  }

  const auto v = unpack(best->x);
  DecayFit out;
  out.model = model;
  out.amplitude = {v[kA], 0.0, fixed.amplitude.has_value()};
  out.decay_time = {std::exp(v[kLogT]), 0.0, false};
  out.stretch = {v[kP], 0.0, stretch_pin.has_value()};
  out.offset = {v[kC], 0.0, offset_pin.has_value()};
  for (Eigen::Index j = 0; j < n; ++j) {
    const double s = std::sqrt(best->covariance(j, j));
    switch (free_slots[static_cast<std::size_t>(j)]) {
      case kA: out.amplitude.sigma = s; break;
      case kLogT: out.decay_time.sigma = out.decay_time.value * s; break;
      case kP: out.stretch.sigma = s; break;
      case kC: out.offset.sigma = s; break;
    }
  }
  out.residual_norm = std::sqrt(best->cost);
  out.converged = best->converged && out.decay_time.value > 0.0 && std::isfinite(out.decay_time.sigma);
  out.iterations = best->iterations;
  return out;
}

inline DecayFit fit_decay(const CoherenceCurve& curve, DecayModel model, const FixedParams& fixed = {}) {
  std::vector<double> t, s, e;
  for (const auto& p : curve.points) {
    t.push_back(p.total_time);
    s.push_back(p.signal);
    e.push_back(p.std_error);
  }
  return fit_decay(t, s, e, model, fixed);
}

/// Fit v = k t^q by least squares on relative residuals (v_i - k t_i^q) / v_i.
/// With `fixed_exponent` only k is fitted. Uncertainties are scaled by the
/// reduced chi-square.
inline DecayFit fit_power_law(std::span<const double> times, std::span<const double> values,
                              std::optional<double> fixed_exponent = std::nullopt) {
  const std::size_t m = times.size();
  if (values.size() != m) throw std::invalid_argument("fit_power_law: size mismatch");
  if (m < 4) throw std::invalid_argument("fit_power_law: need at least 4 points");
  for (std::size_t i = 0; i < m; ++i)
    if (!(times[i] > 0.0) || !(values[i] > 0.0) || !std::isfinite(times[i]) || !std::isfinite(values[i]))
      throw std::invalid_argument("fit_power_law: times and values must be positive");

  const bool free_q = !fixed_exponent.has_value();
  const auto n = static_cast<Eigen::Index>(free_q ? 2 : 1);
  const detail::ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd& J) {
    const double log_k = x(0);
    const double q = free_q ? x(1) : *fixed_exponent;
    for (std::size_t i = 0; i < m; ++i) {
      const double lt = std::log(times[i]);
      const double model_value = std::exp(log_k + q * lt);
      const auto row = static_cast<Eigen::Index>(i);
      r(row) = (model_value - values[i]) / values[i];
      J(row, 0) = model_value / values[i];
      if (free_q) J(row, 1) = model_value * lt / values[i];
    }
  };
  Eigen::VectorXd x(n);
  const double q0 = fixed_exponent.value_or(-0.5);
  x(0) = std::log(values[0]) - q0 * std::log(times[0]);
  if (free_q) x(1) = q0;
  const auto res = detail::levenberg_marquardt(fn, x, m, [](const Eigen::VectorXd& v) { return v.allFinite(); });

  DecayFit out;
  out.model = DecayModel::power_law;
  const double dof = static_cast<double>(m) - static_cast<double>(n);
  const double scale = dof > 0.0 ? res.cost / dof : 0.0;
  const double k = std::exp(res.x(0));
  out.coefficient = {k, k * std::sqrt(res.covariance(0, 0) * scale), false};
  out.exponent = {free_q ? res.x(1) : *fixed_exponent, free_q ? std::sqrt(res.covariance(1, 1) * scale) : 0.0, !free_q};
  out.residual_norm = std::sqrt(res.cost);
  out.converged = res.converged;
  out.iterations = res.iterations;
  return out;
}

}  // namespace ddspin
