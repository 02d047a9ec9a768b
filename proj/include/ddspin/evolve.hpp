#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddspin/field.hpp"
#include "ddspin/parallel.hpp"
#include "ddspin/rng.hpp"
#include "ddspin/sequence.hpp"

namespace ddspin {

struct CurveMetadata {
  std::string model_digest;
  std::string sequence;
  std::size_t shots = 0;
  std::uint64_t seed = 0;
};

/// Sampled signal versus total evolution time with Monte Carlo standard errors.
struct CoherenceCurve {
  struct Point {
    double total_time = 0.0;  // s
    double signal = 0.0;
    double std_error = 0.0;
    int n_pulses = 0;
  };
  std::vector<Point> points;
  CurveMetadata metadata;

  std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(points.size());
    for (const auto& p : points) t.push_back(p.total_time);
    return t;
  }
  std::vector<double> signals() const {
    std::vector<double> s;
    s.reserve(points.size());
    for (const auto& p : points) s.push_back(p.signal);
    return s;
  }
};

/// Thrown when the Bloch integrator cannot meet its tolerance.
class IntegratorError : public std::runtime_error {
 public:
  IntegratorError(const std::string& what, double time, std::uint64_t trajectory)
      : std::runtime_error(what + " at t=" + format_double(time) + " s, trajectory " + std::to_string(trajectory)),
        time_(time),
        trajectory_(trajectory) {}
  double time() const noexcept { return time_; }
  std::uint64_t trajectory() const noexcept { return trajectory_; }

 private:
  double time_;
  std::uint64_t trajectory_;
};

inline double t1_envelope(double t, const NVParameters& nv) {
  if (t < 0.0) throw std::invalid_argument("t1_envelope: negative time");
  if (!nv.t1_enabled()) return 1.0;
  return std::exp(-t / nv.t1);
}

inline void check_time_grid(std::span<const double> grid) {
  if (grid.empty()) throw std::invalid_argument("time grid must not be empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) throw std::invalid_argument("time grid values must be positive");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw std::invalid_argument("time grid must be strictly increasing");
  }
}

/// Signal <cos(phase)> of a pulse-sequence family, times the T1 envelope.
/// Grid point p uses substreams of rng.fork(p); trajectory i of that point is
/// stream i, so the curve does not depend on `threads`.
inline CoherenceCurve coherence_curve(const FieldModel& model, const SequenceFamily& family,
                                      std::span<const double> grid, std::size_t shots, const RngSpec& rng,
                                      const NVParameters& nv, unsigned threads = 1) {
  if (family.kind == SequenceKind::spin_lock)
    throw std::invalid_argument("coherence_curve: spin locking is driven evolution; use spin_lock_curve");
  if (shots < 100) throw std::invalid_argument("coherence_curve: shots must be >= 100");
  check_time_grid(grid);
  nv.validate();

  CoherenceCurve curve;
  curve.metadata = {model.digest(), family.descriptor(), shots, rng.master_seed};
  std::vector<double> values(shots);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const double total = grid[p];
    const TogglingFunction tog = toggling(family.at(total));
    const RngSpec point_rng = rng.fork(p);
    parallel_for(shots, threads, [&](std::size_t i) {
      values[i] = std::cos(signed_phase(model, tog, nv, point_rng, i));
    });
    const SampleStats st = sample_stats(values);
    const double env = t1_envelope(total, nv);
    curve.points.push_back({total, st.mean * env, st.std_error * env, family.pulse_count()});
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Rotating-frame Bloch vectors
// ---------------------------------------------------------------------------

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(Vec3 o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
  double norm() const { return std::sqrt(dot(*this)); }
};

/// Magnetization in the rotating frame; starts along +z.
struct BlochState {
  Vec3 m{0.0, 0.0, 1.0};
};

/// Right-handed rotation of v by `angle` about the unit vector `axis`.
inline Vec3 rotate(Vec3 v, Vec3 axis, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return c * v + s * axis.cross(v) + ((1.0 - c) * axis.dot(v)) * axis;
}

inline Vec3 axis_vector(PulseAxis a) { return a == PulseAxis::x ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0}; }

/// Magnetization right after an ideal pi/2 pulse about y (+z rotated onto +x).
inline BlochState after_pi_half_y() { return BlochState{{1.0, 0.0, 0.0}}; }

struct SpinLockOptions {
  double tolerance = 1e-9;  // local error per accepted step
  int max_depth = 40;       // subdivision limit before reporting step-size collapse
};

namespace detail {

/// Field over one integration cell: deterministic part evaluated pointwise,
/// stochastic part linear between the sampled end points.
struct CellField {
  const FieldModel* model;
  double t0, t1;
  double stoch0, stoch1;

  double at(double t) const {
    const double w = (t1 > t0) ? (t - t0) / (t1 - t0) : 0.0;
    double b = stoch0 + w * (stoch1 - stoch0);
    for (const auto& c : model->components()) {
      if (const auto* s = std::get_if<StaticOffset>(&c)) {
        b += s->b;
      } else if (const auto* p = std::get_if<Polynomial>(&c)) {
        b += polynomial_value(p->coefficients, t);
      } else if (const auto* ac = std::get_if<SinusoidAC>(&c)) {
        b += sinusoid_value(*ac, t);
      }
    }
    return b;
  }
};

class BlochIntegrator {
 public:
  BlochIntegrator(double omega1, double gamma, SpinLockOptions opts, std::uint64_t trajectory)
      : omega1_(omega1), gamma_(gamma), opts_(opts), trajectory_(trajectory) {}

  Vec3 advance(Vec3 m, double a, double b, const CellField& f, int depth = 0) const {
    const double h = b - a;
    const Vec3 full = rk4(m, a, h, f);
    const double mid = a + 0.5 * h;
    const Vec3 half = rk4(rk4(m, a, 0.5 * h, f), mid, 0.5 * h, f);
    if ((full - half).norm() <= opts_.tolerance) return half;
    if (depth >= opts_.max_depth || !(mid > a && mid < b))
      throw IntegratorError("bloch integrator: step-size collapse", a, trajectory_);
    return advance(advance(m, a, mid, f, depth + 1), mid, b, f, depth + 1);
  }

 private:
  Vec3 rhs(double t, Vec3 m, const CellField& f) const {
    const Vec3 omega{omega1_, 0.0, gamma_ * f.at(t)};
    return m.cross(omega);
  }

  Vec3 rk4(Vec3 m, double t, double h, const CellField& f) const {
    const Vec3 k1 = rhs(t, m, f);
    const Vec3 k2 = rhs(t + 0.5 * h, m + (0.5 * h) * k1, f);
    const Vec3 k3 = rhs(t + 0.5 * h, m + (0.5 * h) * k2, f);
    const Vec3 k4 = rhs(t + h, m + h * k3, f);
    return m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  double omega1_;
  double gamma_;
  SpinLockOptions opts_;
  std::uint64_t trajectory_;
};

/// Largest cell width: resolve the shortest noise correlation time and the
/// Rabi rotation.
inline double cell_cap(const FieldModel& model, double omega1) {
  double cap = std::numeric_limits<double>::infinity();
  for (const auto& c : model.components())
    if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&c)) cap = std::min(cap, ou->tau_c / 20.0);
  if (omega1 > 0.0) cap = std::min(cap, 1.0 / (20.0 * omega1));
  return cap;
}

}  // namespace detail

/// One driven trajectory: pi/2 about y, then continuous drive omega1 about x
/// with dm/dt = m x (omega1, 0, gamma B_e(t)). Returns the state at each grid time.
inline std::vector<BlochState> spin_lock_trajectory(const FieldModel& model, double omega1,
                                                    std::span<const double> grid, const NVParameters& nv,
                                                    const RngSpec& rng, std::uint64_t index,
                                                    const SpinLockOptions& opts = {}) {
  if (!(omega1 >= 0.0) || !std::isfinite(omega1)) throw std::invalid_argument("spin lock: omega1 must be >= 0");
  check_time_grid(grid);

  const auto& comps = model.components();
  // Stochastic state per component.
  struct Source {
    std::size_t component;
    GaussianStream gauss;
    double value;
  };
  std::vector<Source> sources;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    if (const auto* qs = std::get_if<QuasiStaticGaussian>(&comps[c])) {
      GaussianStream g(rng.stream(index, c));
      const double v = qs->sigma_b * g();
      sources.push_back({c, g, v});
    } else if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&comps[c])) {
      GaussianStream g(rng.stream(index, c));
      const double v = ou->sigma_b * g();
      sources.push_back({c, g, v});
    }
  }
  auto stochastic_sum = [&] {
    double s = 0.0;
    for (const auto& src : sources) s += src.value;
    return s;
  };

  const double cap = detail::cell_cap(model, omega1);
  const detail::BlochIntegrator integrator(omega1, nv.gamma_e, opts, index);
  std::vector<BlochState> out;
  out.reserve(grid.size());
  BlochState state = after_pi_half_y();
  double t = 0.0;
  for (double target : grid) {
    const double span_len = target - t;
    const auto cells = std::isfinite(cap) ? static_cast<std::size_t>(std::ceil(span_len / cap)) : std::size_t{1};
    const std::size_t n_cells = std::max<std::size_t>(cells, 1);
    const double h = span_len / static_cast<double>(n_cells);
    std::vector<OuStepper> steppers;
    for (const auto& src : sources) {
      const auto* ou = std::get_if<OrnsteinUhlenbeck>(&comps[src.component]);
      steppers.push_back(ou ? OuStepper(*ou, h) : OuStepper(OrnsteinUhlenbeck{0.0, 1.0}, h));
    }
    for (std::size_t c = 0; c < n_cells; ++c) {
      const double a = t;
      const double b = (c + 1 == n_cells) ? target : t + h;
      const double before = stochastic_sum();
      for (std::size_t k = 0; k < sources.size(); ++k)
        if (std::holds_alternative<OrnsteinUhlenbeck>(comps[sources[k].component]))
          sources[k].value = steppers[k](sources[k].value, sources[k].gauss());
      const detail::CellField field{&model, a, b, before, stochastic_sum()};
      state.m = integrator.advance(state.m, a, b, field);
      t = b;
    }
    out.push_back(state);
  }
  return out;
}

/// Spin-locking decay: shot average of m_x(t) under continuous drive, times the
/// T1 envelope. All grid times of one trajectory come from a single integration.
inline CoherenceCurve spin_lock_curve(const FieldModel& model, double omega1, std::span<const double> grid,
                                      std::size_t shots, const RngSpec& rng, const NVParameters& nv,
                                      unsigned threads = 1, const SpinLockOptions& opts = {}) {
  if (shots < 1) throw std::invalid_argument("spin_lock_curve: shots must be >= 1");
  check_time_grid(grid);
  nv.validate();
  std::vector<std::vector<double>> mx(grid.size(), std::vector<double>(shots));
  parallel_for(shots, threads, [&](std::size_t i) {
    const auto states = spin_lock_trajectory(model, omega1, grid, nv, rng, i, opts);
    for (std::size_t p = 0; p < grid.size(); ++p) mx[p][i] = states[p].m.x;
  });
  CoherenceCurve curve;
  curve.metadata = {model.digest(), "spin_lock(omega1=" + format_double(omega1) + ")", shots, rng.master_seed};
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const SampleStats st = sample_stats(mx[p]);
    const double env = t1_envelope(grid[p], nv);
    curve.points.push_back({grid[p], st.mean * env, st.std_error * env, 0});
  }
  return curve;
}

/// Phase convention of the pi-pulse train relative to the initial pi/2 (about y).
enum class PhaseConvention {
  cp,    // pi pulses about y, in phase with the pi/2
  cpmg,  // pi pulses about x, shifted by 90 degrees
};

inline const char* to_string(PhaseConvention c) { return c == PhaseConvention::cp ? "cp" : "cpmg"; }

/// Final magnetization of one CPMG-timed train with every pi pulse replaced by
/// a rotation by pi (1 + flip_angle_error) about the convention's axis. Free
/// evolution between pulses is the exact precession by each segment phase.
inline Vec3 pulse_train_state(std::span<const double> segment_phase, double flip_angle_error, PhaseConvention conv) {
  const Vec3 axis = conv == PhaseConvention::cpmg ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
  const double angle = std::numbers::pi * (1.0 + flip_angle_error);
  Vec3 m = after_pi_half_y().m;
  const Vec3 z{0.0, 0.0, 1.0};
  for (std::size_t i = 0; i < segment_phase.size(); ++i) {
    m = rotate(m, z, -segment_phase[i]);
    if (i + 1 < segment_phase.size()) m = rotate(m, axis, angle);
  }
  return m;
}

/// Axis along which an ideal train refocuses: +x for CPMG, (-1)^n x for CP.
inline Vec3 ideal_echo_axis(int n, PhaseConvention conv) {
  if (conv == PhaseConvention::cpmg) return {1.0, 0.0, 0.0};
  return {(n % 2 == 0) ? 1.0 : -1.0, 0.0, 0.0};
}

inline CoherenceCurve pulse_error_curve(const FieldModel& model, int n, double flip_angle_error, PhaseConvention conv,
                                        std::span<const double> grid, std::size_t shots, const RngSpec& rng,
                                        const NVParameters& nv, unsigned threads = 1) {
  if (n < 1) throw std::invalid_argument("pulse_error_curve: n must be >= 1");
  if (!(std::abs(flip_angle_error) < 0.5)) throw std::invalid_argument("pulse_error_curve: |flip_angle_error| must be < 0.5");
  if (shots < 1) throw std::invalid_argument("pulse_error_curve: shots must be >= 1");
  check_time_grid(grid);
  nv.validate();
  const Vec3 echo_axis = ideal_echo_axis(n, conv);
  CoherenceCurve curve;
  curve.metadata = {model.digest(),
                    std::string("cpmg(") + std::to_string(n) + ")," + to_string(conv) +
                        ",flip_error=" + format_double(flip_angle_error),
                    shots, rng.master_seed};
  std::vector<double> values(shots);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const TogglingFunction tog = toggling(PulseSequence::cpmg(n, grid[p]));
    const RngSpec point_rng = rng.fork(p);
    parallel_for(shots, threads, [&](std::size_t i) {
      const auto phases = segment_phases(model, tog, nv, point_rng, i);
      values[i] = pulse_train_state(phases, flip_angle_error, conv).dot(echo_axis);
    });
    const SampleStats st = sample_stats(values);
    const double env = t1_envelope(grid[p], nv);
    curve.points.push_back({grid[p], st.mean * env, st.std_error * env, n});
  }
  return curve;
}

/// Evenly spaced grid (inclusive end points).
inline std::vector<double> linear_grid(double start, double stop, std::size_t points) {
  if (points < 1) throw std::invalid_argument("linear_grid: need at least one point");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = points == 1 ? start : start + (stop - start) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

inline std::vector<double> log_grid(double start, double stop, std::size_t points) {
  if (!(start > 0.0 && stop > 0.0)) throw std::invalid_argument("log_grid: end points must be positive");
  std::vector<double> g(points);
  const double a = std::log(start), b = std::log(stop);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = points == 1 ? start : std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  if (points > 1) {
    g.front() = start;
    g.back() = stop;
  }
  return g;
}

}  // namespace ddspin
