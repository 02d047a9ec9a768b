#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ddspin {

/// Rotating-frame axis of the pi-pulse drive field.
enum class PulseAxis { x, y };

enum class SequenceKind { fid, hahn, cpmg, spin_lock, custom };

inline const char* to_string(SequenceKind k) {
  switch (k) {
    case SequenceKind::fid: return "fid";
    case SequenceKind::hahn: return "hahn";
    case SequenceKind::cpmg: return "cpmg";
    case SequenceKind::spin_lock: return "spin_lock";
    case SequenceKind::custom: return "custom";
  }
  return "?";
}

inline const char* to_string(PulseAxis a) { return a == PulseAxis::x ? "x" : "y"; }

/// pi-pulse instants of an n-pulse CPMG train over [0, total_time]:
/// t_j = (2j - 1) / (2n) * total_time. The train is built symmetric about the
/// centre, so t_j + t_{n+1-j} reproduces total_time to rounding.
inline std::vector<double> cpmg_times(int n, double total_time) {
  if (n < 1) throw std::invalid_argument("cpmg_times: pulse count must be >= 1");
  if (!(total_time > 0.0) || !std::isfinite(total_time))
    throw std::invalid_argument("cpmg_times: total_time must be positive");
  std::vector<double> times(static_cast<std::size_t>(n));
  const double denom = 2.0 * n;
  for (int j = 1; 2 * j <= n + 1; ++j) {
    const double t = static_cast<double>(2 * j - 1) * total_time / denom;
    times[static_cast<std::size_t>(j - 1)] = t;
    times[static_cast<std::size_t>(n - j)] = (2 * j - 1 == n) ? 0.5 * total_time : total_time - t;
  }
  return times;
}

/// Ideal instantaneous pi-pulse sequence over [0, total_time].
class PulseSequence {
 public:
  static PulseSequence fid(double total_time) {
    return PulseSequence(SequenceKind::fid, total_time, {}, PulseAxis::x, 0.0);
  }
  static PulseSequence hahn(double total_time) {
    return PulseSequence(SequenceKind::hahn, total_time, {0.5 * total_time}, PulseAxis::y, 0.0);
  }
  static PulseSequence cpmg(int n, double total_time) {
    return PulseSequence(SequenceKind::cpmg, total_time, cpmg_times(n, total_time), PulseAxis::x, 0.0);
  }
  static PulseSequence spin_lock(double duration, double omega1) {
    if (!(omega1 >= 0.0) || !std::isfinite(omega1))
      throw std::invalid_argument("spin_lock: omega1 must be finite and non-negative");
    return PulseSequence(SequenceKind::spin_lock, duration, {}, PulseAxis::x, omega1);
  }
  static PulseSequence custom(double total_time, std::vector<double> times, PulseAxis axis = PulseAxis::x) {
    return PulseSequence(SequenceKind::custom, total_time, std::move(times), axis, 0.0);
  }

  SequenceKind kind() const noexcept { return kind_; }
  double total_time() const noexcept { return total_time_; }
  const std::vector<double>& pi_pulse_times() const noexcept { return times_; }
  PulseAxis pi_pulse_phase() const noexcept { return axis_; }
  int pulse_count() const noexcept { return static_cast<int>(times_.size()); }
  double omega1() const noexcept { return omega1_; }

  /// Free-evolution interval tau between the pi/2 pulse and the first pi pulse
  /// of a CPMG/Hahn train (total_time / 2n). Zero for FID and spin locking.
  double base_interval() const noexcept {
    return times_.empty() ? 0.0 : total_time_ / (2.0 * static_cast<double>(times_.size()));
  }

  std::string descriptor() const {
    std::string s = to_string(kind_);
    if (kind_ == SequenceKind::cpmg || kind_ == SequenceKind::custom) s += "(" + std::to_string(times_.size()) + ")";
    return s;
  }

  friend bool operator==(const PulseSequence&, const PulseSequence&) = default;

 private:
  PulseSequence(SequenceKind kind, double total_time, std::vector<double> times, PulseAxis axis, double omega1)
      : kind_(kind), total_time_(total_time), times_(std::move(times)), axis_(axis), omega1_(omega1) {
    if (!(total_time_ > 0.0) || !std::isfinite(total_time_))
      throw std::invalid_argument("pulse sequence: total_time must be positive and finite");
    for (std::size_t i = 0; i < times_.size(); ++i) {
      const double t = times_[i];
      if (!(t > 0.0 && t < total_time_))
        throw std::invalid_argument("pulse sequence: pulse times must lie strictly inside (0, total_time)");
      if (i > 0 && !(t > times_[i - 1]))
        throw std::invalid_argument("pulse sequence: pulse times must be strictly increasing");
    }
  }

  SequenceKind kind_;
  double total_time_;
  std::vector<double> times_;
  PulseAxis axis_;
  double omega1_;
};

/// Piecewise-constant sign function s(t): +1 on [0, t_1), flipping at every
/// pi pulse. Segment i spans [breakpoints[i], breakpoints[i+1]] with sign (-1)^i.
class TogglingFunction {
 public:
  explicit TogglingFunction(std::vector<double> breakpoints) : breaks_(std::move(breakpoints)) {
    if (breaks_.size() < 2 || breaks_.front() != 0.0)
      throw std::invalid_argument("toggling: breakpoints must start at 0 and contain an end point");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i] > breaks_[i - 1])) throw std::invalid_argument("toggling: breakpoints must increase");
  }

  double total_time() const noexcept { return breaks_.back(); }
  std::size_t segment_count() const noexcept { return breaks_.size() - 1; }
  std::size_t flip_count() const noexcept { return breaks_.size() - 2; }
  const std::vector<double>& breakpoints() const noexcept { return breaks_; }
  double segment_start(std::size_t i) const { return breaks_[i]; }
  double segment_end(std::size_t i) const { return breaks_[i + 1]; }
  static constexpr int sign(std::size_t segment) noexcept { return (segment % 2 == 0) ? 1 : -1; }

  /// s(t); the value at a flip instant is the sign of the segment that starts there.
  int value_at(double t) const {
    if (t < 0.0 || t > total_time()) throw std::out_of_range("toggling: t outside [0, T]");
    std::size_t seg = 0;
    while (seg + 1 < segment_count() && t >= breaks_[seg + 1]) ++seg;
    return sign(seg);
  }

  /// Signed area, the integral of s(t) over [0, T].
  double signed_area() const noexcept {
    long double area = 0.0L;
    for (std::size_t i = 0; i < segment_count(); ++i)
      area += sign(i) * (static_cast<long double>(breaks_[i + 1]) - breaks_[i]);
    return static_cast<double>(area);
  }

 private:
  std::vector<double> breaks_;
};

inline TogglingFunction toggling(const PulseSequence& seq) {
  if (seq.kind() == SequenceKind::spin_lock)
    throw std::invalid_argument("toggling: spin locking has no free evolution; use the Bloch path");
  std::vector<double> b;
  b.reserve(seq.pi_pulse_times().size() + 2);
  b.push_back(0.0);
  b.insert(b.end(), seq.pi_pulse_times().begin(), seq.pi_pulse_times().end());
  b.push_back(seq.total_time());
  return TogglingFunction(std::move(b));
}

/// Echo instants 2 tau, 4 tau, ..., 2n tau of a CPMG train.
inline std::vector<double> echo_times(const PulseSequence& seq) {
  if (seq.kind() != SequenceKind::cpmg) throw std::invalid_argument("echo_times: CPMG sequence required");
  const int n = seq.pulse_count();
  std::vector<double> echoes(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j)
    echoes[static_cast<std::size_t>(j - 1)] =
        (j == n) ? seq.total_time() : static_cast<double>(j) * seq.total_time() / static_cast<double>(n);
  return echoes;
}

/// Which sequence to build at each total evolution time of a decay curve.
struct SequenceFamily {
  SequenceKind kind = SequenceKind::hahn;
  int n = 1;                            // CPMG pulse count
  std::vector<double> custom_fractions;  // custom pattern as fractions of the total time
  PulseAxis axis = PulseAxis::x;

  static SequenceFamily fid() { return {SequenceKind::fid, 0, {}, PulseAxis::x}; }
  static SequenceFamily hahn() { return {SequenceKind::hahn, 1, {}, PulseAxis::y}; }
  static SequenceFamily cpmg(int n) { return {SequenceKind::cpmg, n, {}, PulseAxis::x}; }
  static SequenceFamily custom(std::vector<double> fractions, PulseAxis axis = PulseAxis::x) {
    const int n = static_cast<int>(fractions.size());
    return {SequenceKind::custom, n, std::move(fractions), axis};
  }

  PulseSequence at(double total_time) const {
    switch (kind) {
      case SequenceKind::fid: return PulseSequence::fid(total_time);
      case SequenceKind::hahn: return PulseSequence::hahn(total_time);
      case SequenceKind::cpmg: return PulseSequence::cpmg(n, total_time);
      case SequenceKind::custom: {
        std::vector<double> t(custom_fractions.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = custom_fractions[i] * total_time;
        return PulseSequence::custom(total_time, std::move(t), axis);
      }
      case SequenceKind::spin_lock: break;
    }
    throw std::invalid_argument("sequence family: spin locking is not a free-evolution family");
  }

  int pulse_count() const noexcept {
    switch (kind) {
      case SequenceKind::fid: return 0;
      case SequenceKind::hahn: return 1;
      case SequenceKind::cpmg: return n;
      case SequenceKind::custom: return static_cast<int>(custom_fractions.size());
      case SequenceKind::spin_lock: return 0;
    }
    return 0;
  }

  std::string descriptor() const {
    std::string s = to_string(kind);
    if (kind == SequenceKind::cpmg || kind == SequenceKind::custom) s += "(" + std::to_string(pulse_count()) + ")";
    return s;
  }
};

}  // namespace ddspin
