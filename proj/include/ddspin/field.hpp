#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "ddspin/format.hpp"
#include "ddspin/parallel.hpp"
#include "ddspin/rng.hpp"
#include "ddspin/sequence.hpp"

namespace ddspin {

/// Free-electron gyromagnetic ratio, rad s^-1 T^-1.
inline constexpr double kGammaElectron = 1.760859e11;

/// NV electron-spin constants. Only gamma_e and t1 enter the rotating-frame
/// dynamics; the splitting and bias field are carried for reports.
struct NVParameters {
  double gamma_e = kGammaElectron;
  double zero_field_splitting = 2.88e9;  // Hz
  double static_field_b0 = 15e-4;        // T
  double t1 = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(gamma_e > 0.0) || !std::isfinite(gamma_e)) throw std::invalid_argument("nv: gamma_e must be positive");
    if (!(t1 > 0.0)) throw std::invalid_argument("nv: t1 must be positive");
  }
  bool t1_enabled() const noexcept { return std::isfinite(t1); }
};

struct StaticOffset {
  double b = 0.0;  // T
};

/// One Gaussian draw per trajectory, constant in time.
struct QuasiStaticGaussian {
  double sigma_b = 0.0;  // T
};

/// Stationary Ornstein-Uhlenbeck process: zero mean, variance sigma_b^2,
/// autocovariance sigma_b^2 exp(-|dt| / tau_c).
struct OrnsteinUhlenbeck {
  double sigma_b = 0.0;  // T
  double tau_c = 1.0;    // s
};

/// sum_k a_k t^k, coefficient a_k in T s^-k.
struct Polynomial {
  std::vector<double> coefficients;
};

/// b sin(2 pi f t + phi0).
struct SinusoidAC {
  double amplitude = 0.0;  // T
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // rad
};

using FieldComponent = std::variant<StaticOffset, QuasiStaticGaussian, OrnsteinUhlenbeck, Polynomial, SinusoidAC>;

inline constexpr std::size_t kMaxPolynomialDegree = 12;

inline bool is_stochastic(const FieldComponent& c) {
  return std::holds_alternative<QuasiStaticGaussian>(c) || std::holds_alternative<OrnsteinUhlenbeck>(c);
}

inline void validate_component(const FieldComponent& c) {
  std::visit(
      [](const auto& comp) {
        using C = std::decay_t<decltype(comp)>;
        if constexpr (std::is_same_v<C, StaticOffset>) {
          if (!std::isfinite(comp.b)) throw std::invalid_argument("static offset: b must be finite");
        } else if constexpr (std::is_same_v<C, QuasiStaticGaussian>) {
          if (!(comp.sigma_b >= 0.0) || !std::isfinite(comp.sigma_b))
            throw std::invalid_argument("quasi-static: sigma_b must be >= 0");
        } else if constexpr (std::is_same_v<C, OrnsteinUhlenbeck>) {
          if (!(comp.sigma_b >= 0.0) || !std::isfinite(comp.sigma_b))
            throw std::invalid_argument("ornstein-uhlenbeck: sigma_b must be >= 0");
          if (!(comp.tau_c > 0.0) || !std::isfinite(comp.tau_c))
            throw std::invalid_argument("ornstein-uhlenbeck: tau_c must be positive and finite");
        } else if constexpr (std::is_same_v<C, Polynomial>) {
          if (comp.coefficients.empty()) throw std::invalid_argument("polynomial: needs at least one coefficient");
          if (comp.coefficients.size() > kMaxPolynomialDegree + 1)
            throw std::invalid_argument("polynomial: degree above 12 is not supported");
          for (double a : comp.coefficients)
            if (!std::isfinite(a)) throw std::invalid_argument("polynomial: coefficients must be finite");
        } else {
          if (!std::isfinite(comp.amplitude) || !std::isfinite(comp.phase) || !(comp.frequency >= 0.0) ||
              !std::isfinite(comp.frequency))
            throw std::invalid_argument("sinusoid: amplitude/phase finite, frequency >= 0");
        }
      },
      c);
}

inline std::string describe(const FieldComponent& c) {
  return std::visit(
      [](const auto& comp) -> std::string {
        using C = std::decay_t<decltype(comp)>;
        if constexpr (std::is_same_v<C, StaticOffset>) {
          return "static(b=" + format_double(comp.b) + ")";
        } else if constexpr (std::is_same_v<C, QuasiStaticGaussian>) {
          return "quasi_static(sigma=" + format_double(comp.sigma_b) + ")";
        } else if constexpr (std::is_same_v<C, OrnsteinUhlenbeck>) {
          return "ou(sigma=" + format_double(comp.sigma_b) + ",tau_c=" + format_double(comp.tau_c) + ")";
        } else if constexpr (std::is_same_v<C, Polynomial>) {
          std::string s = "polynomial(";
          for (std::size_t k = 0; k < comp.coefficients.size(); ++k)
            s += (k ? "," : "") + format_double(comp.coefficients[k]);
          return s + ")";
        } else {
          return "sinusoid(b=" + format_double(comp.amplitude) + ",f=" + format_double(comp.frequency) +
                 ",phi0=" + format_double(comp.phase) + ")";
        }
      },
      c);
}

/// Sum of field components, B_e(t) in the rotating frame.
class FieldModel {
 public:
  FieldModel() = default;
  explicit FieldModel(std::vector<FieldComponent> components) : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("field model: component list must not be empty");
    for (const auto& c : components_) validate_component(c);
  }
  FieldModel(std::initializer_list<FieldComponent> components)
      : FieldModel(std::vector<FieldComponent>(components)) {}

  const std::vector<FieldComponent>& components() const noexcept { return components_; }
  bool empty() const noexcept { return components_.empty(); }

  bool is_deterministic() const {
    for (const auto& c : components_)
      if (is_stochastic(c)) return false;
    return true;
  }

  std::string describe() const {
    std::string s;
    for (std::size_t i = 0; i < components_.size(); ++i) s += (i ? "+" : "") + ddspin::describe(components_[i]);
    return s;
  }
  std::string digest() const { return hex_digest(describe()); }

 private:
  std::vector<FieldComponent> components_;
};

namespace detail {

/// 2x - 3 + 4e^{-x} - e^{-2x}, x = dt / tau_c (conditional variance of the OU
/// running integral in units of sigma^2 tau_c^2).
inline double ou_integral_variance_shape(double x) {
  if (x < 0.05) {
    // sum_{m>=3} (-1)^m (4 - 2^m) x^m / m!
    double term = 1.0;
    double pow2 = 1.0;
    double sum = 0.0;
    for (int m = 1; m <= 18; ++m) {
      term *= x / m;
      pow2 *= 2.0;
      if (m >= 3) sum += ((m % 2 == 0) ? 1.0 : -1.0) * (4.0 - pow2) * term;
    }
    return sum;
  }
  const double e = std::exp(-x);
  return 2.0 * x - 3.0 + 4.0 * e - e * e;
}

/// x - 1 + e^{-x}
inline double ou_free_shape(double x) {
  if (x < 0.05) {
    // x^2/2 - x^3/6 + x^4/24 - ...
    double term = x;
    double sum = 0.0;
    for (int m = 2; m <= 16; ++m) {
      term *= -x / m;
      sum += -term;
    }
    return sum;
  }
  return x + std::expm1(-x);
}

}  // namespace detail

/// Exact transition of an OU process over dt.
struct OuStepper {
  double decay;       // e^{-dt/tau}
  double innovation;  // sigma sqrt(1 - e^{-2dt/tau})

  OuStepper(const OrnsteinUhlenbeck& ou, double dt)
      : decay(std::exp(-dt / ou.tau_c)), innovation(ou.sigma_b * std::sqrt(-std::expm1(-2.0 * dt / ou.tau_c))) {}

  double operator()(double x, double xi) const noexcept { return x * decay + innovation * xi; }
};

/// Exact joint transition of (X, integral of X) over dt, conditional on X at
/// the start: both are Gaussian with
///   E[X1] = x e, Var[X1] = s^2 (1 - e^2),
///   E[I] = x tau (1 - e), Var[I] = s^2 tau^2 (2u - 3 + 4e - e^2), Cov = s^2 tau (1 - e)^2.
struct OuJointStepper {
  double decay;
  double mean_integral;  // multiplies x
  double l11, l21, l22;  // Cholesky factor

  OuJointStepper(const OrnsteinUhlenbeck& ou, double dt) {
    const double u = dt / ou.tau_c;
    const double one_minus_e = -std::expm1(-u);
    decay = 1.0 - one_minus_e;
    mean_integral = ou.tau_c * one_minus_e;
    const double s2 = ou.sigma_b * ou.sigma_b;
    const double var_x = s2 * -std::expm1(-2.0 * u);
    const double var_i = s2 * ou.tau_c * ou.tau_c * detail::ou_integral_variance_shape(u);
    const double cov = s2 * ou.tau_c * one_minus_e * one_minus_e;
    l11 = std::sqrt(var_x);
    l21 = l11 > 0.0 ? cov / l11 : 0.0;
    l22 = std::sqrt(std::max(var_i - l21 * l21, 0.0));
  }

  /// Returns {X(t+dt), integral over [t, t+dt]}.
  std::pair<double, double> operator()(double x, double xi1, double xi2) const noexcept {
    return {x * decay + l11 * xi1, x * mean_integral + l21 * xi1 + l22 * xi2};
  }
};

namespace detail {

inline long double polynomial_antiderivative(const std::vector<double>& a, long double t) {
  long double acc = 0.0L;
  for (std::size_t k = a.size(); k-- > 0;) acc = acc * t + static_cast<long double>(a[k]) / static_cast<long double>(k + 1);
  return acc * t;
}

inline long double sinusoid_integral(const SinusoidAC& s, long double a, long double b) {
  const long double omega = 2.0L * std::numbers::pi_v<long double> * s.frequency;
  if (omega == 0.0L) return s.amplitude * std::sin(static_cast<long double>(s.phase)) * (b - a);
  return s.amplitude / omega * (std::cos(omega * a + s.phase) - std::cos(omega * b + s.phase));
}

inline double polynomial_value(const std::vector<double>& a, double t) {
  long double acc = 0.0L;
  for (std::size_t k = a.size(); k-- > 0;) acc = acc * t + a[k];
  return static_cast<double>(acc);
}

inline double sinusoid_value(const SinusoidAC& s, double t) {
  return s.amplitude * std::sin(2.0 * std::numbers::pi * s.frequency * t + s.phase);
}

}  // namespace detail

/// Integral of B_e(t) over each toggling segment (unsigned), tesla-seconds.
/// Stochastic component c of trajectory `index` draws from rng.stream(index, c).
inline std::vector<long double> segment_field_integrals(const FieldModel& model, const TogglingFunction& tog,
                                                        const RngSpec& rng, std::uint64_t index,
                                                        bool include_constant = true) {
  const std::size_t m = tog.segment_count();
  std::vector<long double> out(m, 0.0L);
  const auto& comps = model.components();
  for (std::size_t c = 0; c < comps.size(); ++c) {
    std::visit(
        [&](const auto& comp) {
          using C = std::decay_t<decltype(comp)>;
          if constexpr (std::is_same_v<C, StaticOffset>) {
            if (!include_constant) return;
            for (std::size_t i = 0; i < m; ++i)
              out[i] += comp.b * (static_cast<long double>(tog.segment_end(i)) - tog.segment_start(i));
          } else if constexpr (std::is_same_v<C, QuasiStaticGaussian>) {
            if (!include_constant) return;
            GaussianStream g(rng.stream(index, c));
            const double draw = comp.sigma_b * g();
            for (std::size_t i = 0; i < m; ++i)
              out[i] += draw * (static_cast<long double>(tog.segment_end(i)) - tog.segment_start(i));
          } else if constexpr (std::is_same_v<C, OrnsteinUhlenbeck>) {
            GaussianStream g(rng.stream(index, c));
            double x = comp.sigma_b * g();
            for (std::size_t i = 0; i < m; ++i) {
              const OuJointStepper step(comp, tog.segment_end(i) - tog.segment_start(i));
              const double xi1 = g();
              const double xi2 = g();
              const auto [next, integral] = step(x, xi1, xi2);
              out[i] += integral;
              x = next;
            }
          } else if constexpr (std::is_same_v<C, Polynomial>) {
            for (std::size_t i = 0; i < m; ++i)
              out[i] += detail::polynomial_antiderivative(comp.coefficients, tog.segment_end(i)) -
                        detail::polynomial_antiderivative(comp.coefficients, tog.segment_start(i));
          } else {
            for (std::size_t i = 0; i < m; ++i)
              out[i] += detail::sinusoid_integral(comp, tog.segment_start(i), tog.segment_end(i));
          }
        },
        comps[c]);
  }
  return out;
}

/// Sum of the static offsets and this trajectory's quasi-static draws, T.
inline double constant_field(const FieldModel& model, const RngSpec& rng, std::uint64_t index) {
  double b = 0.0;
  const auto& comps = model.components();
  for (std::size_t c = 0; c < comps.size(); ++c) {
    if (const auto* s = std::get_if<StaticOffset>(&comps[c])) b += s->b;
    if (const auto* q = std::get_if<QuasiStaticGaussian>(&comps[c])) {
      GaussianStream g(rng.stream(index, c));
      b += q->sigma_b * g();
    }
  }
  return b;
}

/// Phase accumulated in each free-evolution segment, gamma_e times the segment
/// field integral (no toggling sign applied).
inline std::vector<double> segment_phases(const FieldModel& model, const TogglingFunction& tog,
                                          const NVParameters& nv, const RngSpec& rng, std::uint64_t index) {
  const auto integrals = segment_field_integrals(model, tog, rng, index);
  std::vector<double> out(integrals.size());
  for (std::size_t i = 0; i < integrals.size(); ++i) out[i] = static_cast<double>(nv.gamma_e * integrals[i]);
  return out;
}

/// gamma_e times the integral of s(t) B_e(t) over [0, T], radians.
inline double signed_phase(const FieldModel& model, const TogglingFunction& tog, const NVParameters& nv,
                           const RngSpec& rng, std::uint64_t index) {
  // Time-constant parts multiply the signed area directly, so patterns with
  // zero area cancel them exactly.
  const auto integrals = segment_field_integrals(model, tog, rng, index, false);
  CompensatedSum<long double> acc;
  for (std::size_t i = 0; i < integrals.size(); ++i) acc.add(TogglingFunction::sign(i) * integrals[i]);
  acc.add(static_cast<long double>(constant_field(model, rng, index)) * tog.signed_area());
  return static_cast<double>(static_cast<long double>(nv.gamma_e) * acc.value());
}

/// One realization of B_e(t) on a grid starting at 0.
inline std::vector<double> sample_trajectory(const FieldModel& model, std::span<const double> grid,
                                             const RngSpec& rng, std::uint64_t index) {
  if (grid.empty()) throw std::invalid_argument("sample_trajectory: empty grid");
  if (grid.front() != 0.0) throw std::invalid_argument("sample_trajectory: grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("sample_trajectory: grid must be strictly increasing");

  std::vector<double> out(grid.size(), 0.0);
  const auto& comps = model.components();
  for (std::size_t c = 0; c < comps.size(); ++c) {
    std::visit(
        [&](const auto& comp) {
          using C = std::decay_t<decltype(comp)>;
          if constexpr (std::is_same_v<C, StaticOffset>) {
            for (auto& v : out) v += comp.b;
          } else if constexpr (std::is_same_v<C, QuasiStaticGaussian>) {
            GaussianStream g(rng.stream(index, c));
            const double draw = comp.sigma_b * g();
            for (auto& v : out) v += draw;
          } else if constexpr (std::is_same_v<C, OrnsteinUhlenbeck>) {
            GaussianStream g(rng.stream(index, c));
            double x = comp.sigma_b * g();
            out[0] += x;
            for (std::size_t i = 1; i < grid.size(); ++i) {
              x = OuStepper(comp, grid[i] - grid[i - 1])(x, g());
              out[i] += x;
            }
          } else if constexpr (std::is_same_v<C, Polynomial>) {
            for (std::size_t i = 0; i < grid.size(); ++i) out[i] += detail::polynomial_value(comp.coefficients, grid[i]);
          } else {
            for (std::size_t i = 0; i < grid.size(); ++i) out[i] += detail::sinusoid_value(comp, grid[i]);
          }
        },
        comps[c]);
  }
  return out;
}

/// Variance of the Gaussian part of the signed phase (quasi-static and OU
/// components), rad^2. Closed form of the double integral of the
/// autocovariance against s(t)s(t').
inline double gaussian_phase_variance(const FieldModel& model, const TogglingFunction& tog, const NVParameters& nv) {
  long double total = 0.0L;
  for (const auto& c : model.components()) {
    if (const auto* qs = std::get_if<QuasiStaticGaussian>(&c)) {
      const long double area = tog.signed_area();
      total += static_cast<long double>(qs->sigma_b) * qs->sigma_b * area * area;
    } else if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&c)) {
      const double tau = ou->tau_c;
      long double diag = 0.0L;
      long double cross = 0.0L;
      long double carry = 0.0L;  // sum_{i<j} s_i (1 - e^{-x_i}) e^{-(a_j - b_i)/tau}
      for (std::size_t j = 0; j < tog.segment_count(); ++j) {
        const double x = (tog.segment_end(j) - tog.segment_start(j)) / tau;
        const double one_minus_e = -std::expm1(-x);
        const int s = TogglingFunction::sign(j);
        diag += 2.0L * detail::ou_free_shape(x);
        cross += 2.0L * s * one_minus_e * carry;
        carry = carry * (1.0L - one_minus_e) + s * one_minus_e;
      }
      total += static_cast<long double>(ou->sigma_b) * ou->sigma_b * tau * tau * (diag + cross);
    }
  }
  return static_cast<double>(static_cast<long double>(nv.gamma_e) * nv.gamma_e * total);
}

/// Deterministic part of the signed phase (mean phase), radians.
inline double deterministic_phase(const FieldModel& model, const TogglingFunction& tog, const NVParameters& nv) {
  std::vector<FieldComponent> det;
  for (const auto& c : model.components())
    if (!is_stochastic(c)) det.push_back(c);
  if (det.empty()) return 0.0;
  return signed_phase(FieldModel(std::move(det)), tog, nv, RngSpec{}, 0);
}

/// gamma_e sigma_b tau_c of an OU component; >> 1 is the slow (quasi-static)
/// side, << 1 the motional-narrowing side.
inline double slow_fluctuation_ratio(const OrnsteinUhlenbeck& ou, const NVParameters& nv) {
  return nv.gamma_e * ou.sigma_b * ou.tau_c;
}

}  // namespace ddspin
