#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ddspin/evolve.hpp"
#include "ddspin/field.hpp"
#include "ddspin/fit.hpp"
#include "ddspin/format.hpp"
#include "ddspin/presets.hpp"
#include "ddspin/sense.hpp"
#include "ddspin/sequence.hpp"

namespace ddspin {

using json = nlohmann::ordered_json;

/// Schema or physics violation, naming the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& reason)
      : std::runtime_error(path.empty() ? reason : path + ": " + reason), path_(path), reason_(reason) {}
  const std::string& path() const noexcept { return path_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string path_;
  std::string reason_;
};

/// Malformed JSON text, with a 1-based line and column.
class ConfigParseError : public std::runtime_error {
 public:
  ConfigParseError(std::size_t line, std::size_t column, const std::string& what)
      : std::runtime_error("parse error at line " + std::to_string(line) + ", column " + std::to_string(column) +
                           ": " + what),
        line_(line),
        column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// ---------------------------------------------------------------------------
// Unit-suffixed quantities

/// SI value with its dimension as powers of tesla and second. Radians are
/// dimensionless but tracked so angular rates and frequencies are not mixed.
struct Quantity {
  double value = 0.0;
  double tesla = 0.0;
  double second = 0.0;
  double rad = 0.0;
};

namespace detail {

struct UnitDef {
  std::string_view name;
  double scale;
  double tesla, second, rad;
};

inline constexpr UnitDef kUnits[] = {
    {"T", 1.0, 1, 0, 0},      {"mT", 1e-3, 1, 0, 0},  {"uT", 1e-6, 1, 0, 0},  {"nT", 1e-9, 1, 0, 0},
    {"pT", 1e-12, 1, 0, 0},   {"G", 1e-4, 1, 0, 0},   {"mG", 1e-7, 1, 0, 0},  {"s", 1.0, 0, 1, 0},
    {"ms", 1e-3, 0, 1, 0},    {"us", 1e-6, 0, 1, 0},  {"ns", 1e-9, 0, 1, 0},  {"ps", 1e-12, 0, 1, 0},
    {"Hz", 1.0, 0, -1, 0},    {"kHz", 1e3, 0, -1, 0}, {"MHz", 1e6, 0, -1, 0}, {"GHz", 1e9, 0, -1, 0},
    {"rad", 1.0, 0, 0, 1},
};

inline bool same(double a, double b) { return std::abs(a - b) < 1e-12; }

}  // namespace detail

/// Parses "<number> <unit>" where unit is a product of known units with
/// optional ^exponent, joined by '*' or ' ' and divided by '/':
/// "27 us", "2e5 rad/s", "1.76e11 rad/s/T", "19.4 nT/Hz^0.5".
inline Quantity parse_quantity(std::string_view text) {
  auto fail = [&](const std::string& why) -> Quantity {
    throw std::invalid_argument("bad quantity '" + std::string(text) + "': " + why);
  };
  std::string_view s = text;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  Quantity q;
  double number = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), number);
  if (res.ec != std::errc{}) return fail("missing number");
  if (!std::isfinite(number)) return fail("number must be finite");
  s.remove_prefix(static_cast<std::size_t>(res.ptr - s.data()));
  q.value = number;
  bool any_unit = false;
  int sign = 1;
  while (!s.empty()) {
    const char c = s.front();
    if (c == ' ' || c == '*') {
      s.remove_prefix(1);
      continue;
    }
    if (c == '/') {
      sign = -1;
      s.remove_prefix(1);
      continue;
    }
    std::size_t len = 0;
    while (len < s.size() && std::isalpha(static_cast<unsigned char>(s[len]))) ++len;
    if (len == 0) return fail("unexpected character '" + std::string(1, c) + "'");
    const std::string_view name = s.substr(0, len);
    s.remove_prefix(len);
    double exponent = 1.0;
    if (!s.empty() && s.front() == '^') {
      s.remove_prefix(1);
      const auto er = std::from_chars(s.data(), s.data() + s.size(), exponent);
      if (er.ec != std::errc{}) return fail("bad exponent");
      s.remove_prefix(static_cast<std::size_t>(er.ptr - s.data()));
    }
    exponent *= sign;
    sign = 1;
    const detail::UnitDef* def = nullptr;
    for (const auto& u : detail::kUnits)
      if (u.name == name) def = &u;
    if (!def) return fail("unknown unit '" + std::string(name) + "'");
    // Sub-unit prefixes divide by an exact integer so "100 us" is exactly 1e-4.
    if (def->scale < 1.0)
      q.value /= std::pow(std::round(1.0 / def->scale), exponent);
    else
      q.value *= std::pow(def->scale, exponent);
    q.tesla += def->tesla * exponent;
    q.second += def->second * exponent;
    q.rad += def->rad * exponent;
    any_unit = true;
  }
  if (!any_unit) return fail("missing unit suffix");
  return q;
}

/// Unit string for a plain SI dimension, used when writing canonical configs.
inline std::string si_unit(double tesla, double second, double rad = 0.0) {
  std::string u;
  auto add = [&](const char* name, double e) {
    if (detail::same(e, 0.0)) return;
    if (!u.empty()) u += "*";
    u += name;
    if (!detail::same(e, 1.0)) u += "^" + format_double(e);
  };
  add("rad", rad);
  add("T", tesla);
  add("s", second);
  return u;
}

inline std::string quantity_string(double value, double tesla, double second, double rad = 0.0) {
  return format_double(value) + " " + si_unit(tesla, second, rad);
}

// ---------------------------------------------------------------------------
// Strict JSON object reader

namespace detail {

inline std::string child_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

struct Dim {
  double tesla, second, rad;
  const char* label;
};

inline constexpr Dim kField{1, 0, 0, "magnetic field (e.g. nT)"};
inline constexpr Dim kTime{0, 1, 0, "time (e.g. us)"};
inline constexpr Dim kFrequency{0, -1, 0, "frequency (e.g. kHz)"};
inline constexpr Dim kAngularRate{0, -1, 1, "angular rate (e.g. rad/s)"};
inline constexpr Dim kAngle{0, 0, 1, "angle (rad)"};
inline constexpr Dim kGyro{-1, -1, 1, "gyromagnetic ratio (rad/s/T)"};
inline constexpr Dim kSensitivity{1, 0.5, 0, "sensitivity (e.g. nT/Hz^0.5)"};

/// Reads keys from one JSON object and rejects any key it was not asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  std::string path(const std::string& key) const { return child_path(path_, key); }
  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(path(key), "required field missing");
    return j_.at(key);
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(path(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string_or(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path(key), "must be finite");
    return d;
  }
  double number_or(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  long long integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
    if (v.is_number_unsigned() && v.get<unsigned long long>() > 9'000'000'000'000'000'000ULL)
      throw ConfigError(path(key), "integer out of range");
    return v.get<long long>();
  }
  long long integer_or(const std::string& key, long long fallback) { return has(key) ? integer(key) : fallback; }

  bool boolean(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(path(key), "expected true or false");
    return v.get<bool>();
  }

  double quantity(const std::string& key, const Dim& dim) { return quantity_value(raw(key), path(key), dim); }
  double quantity_or(const std::string& key, const Dim& dim, double fallback) {
    return has(key) ? quantity(key, dim) : fallback;
  }

  static double quantity_value(const json& v, const std::string& where, const Dim& dim) {
    if (!v.is_string())
      throw ConfigError(where, std::string("physical quantity needs a unit-suffixed string: ") + dim.label);
    Quantity q;
    try {
      q = parse_quantity(v.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where, e.what());
    }
    if (!same(q.tesla, dim.tesla) || !same(q.second, dim.second) || !same(q.rad, dim.rad))
      throw ConfigError(where, std::string("wrong dimension, expected ") + dim.label);
    return q.value;
  }

  /// Rejects keys outside `allowed` before any required field is looked up,
  /// so a misspelt key is reported instead of "required field missing".
  void only(std::initializer_list<std::string_view> allowed) const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
        throw ConfigError(path_, "unknown key '" + it.key() + "'");
  }

  /// Throws on the first key that was never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(path_, "unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::vector<double> quantity_list(const json& v, const std::string& where, const Dim& dim) {
  if (!v.is_array()) throw ConfigError(where, "expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(ObjectReader::quantity_value(v[i], where + "[" + std::to_string(i) + "]", dim));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Field models and sequences as JSON

inline FieldComponent component_from_json(const json& j, const std::string& where) {
  using detail::ObjectReader;
  ObjectReader r(j, where);
  const std::string type = r.string("type");
  FieldComponent c;
  if (type == "static") {
    r.only({"type", "b"});
    c = StaticOffset{r.quantity("b", detail::kField)};
  } else if (type == "quasi_static") {
    r.only({"type", "sigma_b"});
    c = QuasiStaticGaussian{r.quantity("sigma_b", detail::kField)};
  } else if (type == "ou") {
    r.only({"type", "sigma_b", "tau_c"});
    c = OrnsteinUhlenbeck{r.quantity("sigma_b", detail::kField), r.quantity("tau_c", detail::kTime)};
  } else if (type == "polynomial") {
    r.only({"type", "coefficients"});
    const json& coeffs = r.raw("coefficients");
    if (!coeffs.is_array() || coeffs.empty()) throw ConfigError(r.path("coefficients"), "expected a non-empty array");
    Polynomial p;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
      const detail::Dim dim{1, -static_cast<double>(k), 0, "field per time^k (e.g. nT/us^k)"};
      p.coefficients.push_back(
          ObjectReader::quantity_value(coeffs[k], r.path("coefficients") + "[" + std::to_string(k) + "]", dim));
    }
    c = p;
  } else if (type == "sinusoid") {
    r.only({"type", "amplitude", "frequency", "phase"});
    c = SinusoidAC{r.quantity("amplitude", detail::kField), r.quantity("frequency", detail::kFrequency),
                   r.quantity_or("phase", detail::kAngle, 0.0)};
  } else {
    throw ConfigError(r.path("type"), "unknown component type '" + type +
                                          "' (static, quasi_static, ou, polynomial, sinusoid)");
  }
  r.finish();
  try {
    validate_component(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where, e.what());
  }
  return c;
}

inline json component_to_json(const FieldComponent& c) {
  return std::visit(
      [](const auto& comp) -> json {
        using C = std::decay_t<decltype(comp)>;
        json j;
        if constexpr (std::is_same_v<C, StaticOffset>) {
          j["type"] = "static";
          j["b"] = quantity_string(comp.b, 1, 0);
        } else if constexpr (std::is_same_v<C, QuasiStaticGaussian>) {
          j["type"] = "quasi_static";
          j["sigma_b"] = quantity_string(comp.sigma_b, 1, 0);
        } else if constexpr (std::is_same_v<C, OrnsteinUhlenbeck>) {
          j["type"] = "ou";
          j["sigma_b"] = quantity_string(comp.sigma_b, 1, 0);
          j["tau_c"] = quantity_string(comp.tau_c, 0, 1);
        } else if constexpr (std::is_same_v<C, Polynomial>) {
          j["type"] = "polynomial";
          json arr = json::array();
          for (std::size_t k = 0; k < comp.coefficients.size(); ++k)
            arr.push_back(quantity_string(comp.coefficients[k], 1, -static_cast<double>(k)));
          j["coefficients"] = arr;
        } else {
          j["type"] = "sinusoid";
          j["amplitude"] = quantity_string(comp.amplitude, 1, 0);
          j["frequency"] = quantity_string(comp.frequency, 0, -1);
          j["phase"] = quantity_string(comp.phase, 0, 0, 1);
        }
        return j;
      },
      c);
}

inline FieldModel field_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where, "expected a non-empty array of components");
  std::vector<FieldComponent> comps;
  for (std::size_t i = 0; i < j.size(); ++i) comps.push_back(component_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return FieldModel(std::move(comps));
}

inline json field_to_json(const FieldModel& m) {
  json arr = json::array();
  for (const auto& c : m.components()) arr.push_back(component_to_json(c));
  return arr;
}

inline SequenceKind sequence_kind_from(const std::string& s, const std::string& where) {
  if (s == "fid") return SequenceKind::fid;
  if (s == "hahn") return SequenceKind::hahn;
  if (s == "cpmg") return SequenceKind::cpmg;
  if (s == "spin_lock") return SequenceKind::spin_lock;
  if (s == "custom") return SequenceKind::custom;
  throw ConfigError(where, "unknown sequence kind '" + s + "' (fid, hahn, cpmg, spin_lock, custom)");
}

inline PulseAxis axis_from(const std::string& s, const std::string& where) {
  if (s == "x") return PulseAxis::x;
  if (s == "y") return PulseAxis::y;
  throw ConfigError(where, "pulse axis must be 'x' or 'y'");
}

/// Concrete sequence as JSON with raw SI numbers; parsing the result rebuilds
/// identical breakpoints.
inline nlohmann::json sequence_to_json(const PulseSequence& seq) {
  nlohmann::json j;
  j["kind"] = to_string(seq.kind());
  j["total_time_s"] = seq.total_time();
  j["pi_pulse_times_s"] = seq.pi_pulse_times();
  j["pi_pulse_phase"] = to_string(seq.pi_pulse_phase());
  j["omega1_rad_s"] = seq.omega1();
  return j;
}

inline PulseSequence sequence_from_json(const nlohmann::json& j) {
  const SequenceKind kind = sequence_kind_from(j.at("kind").get<std::string>(), "sequence.kind");
  const double total = j.at("total_time_s").get<double>();
  const auto times = j.at("pi_pulse_times_s").get<std::vector<double>>();
  const PulseAxis axis = axis_from(j.at("pi_pulse_phase").get<std::string>(), "sequence.pi_pulse_phase");
  std::optional<PulseSequence> seq;
  switch (kind) {
    case SequenceKind::fid: seq = PulseSequence::fid(total); break;
    case SequenceKind::hahn: seq = PulseSequence::hahn(total); break;
    case SequenceKind::cpmg: seq = PulseSequence::cpmg(static_cast<int>(times.size()), total); break;
    case SequenceKind::spin_lock: seq = PulseSequence::spin_lock(total, j.at("omega1_rad_s").get<double>()); break;
    case SequenceKind::custom: seq = PulseSequence::custom(total, times, axis); break;
  }
  if (seq->pi_pulse_times() != times || seq->pi_pulse_phase() != axis)
    throw ConfigError("sequence", "pulse times or phase inconsistent with the sequence kind");
  return *seq;
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class ExperimentKind { decay, suppression, spinlock, pulse_error, sense, fit };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::decay: return "decay";
    case ExperimentKind::suppression: return "suppression";
    case ExperimentKind::spinlock: return "spinlock";
    case ExperimentKind::pulse_error: return "pulse_error";
    case ExperimentKind::sense: return "sense";
    case ExperimentKind::fit: return "fit";
  }
  return "?";
}

inline std::optional<ExperimentKind> experiment_kind_from(std::string s) {
  for (char& c : s)
    if (c == '-') c = '_';
  if (s == "decay") return ExperimentKind::decay;
  if (s == "suppression" || s == "suppression_table") return ExperimentKind::suppression;
  if (s == "spinlock" || s == "spin_lock") return ExperimentKind::spinlock;
  if (s == "pulse_error") return ExperimentKind::pulse_error;
  if (s == "sense") return ExperimentKind::sense;
  if (s == "fit") return ExperimentKind::fit;
  return std::nullopt;
}

struct FitSpec {
  bool enabled = false;
  DecayModel model = DecayModel::stretched_exp;
  FixedParams fixed;
};

struct SuppressionSpec {
  int n_min = 1, n_max = 8, k_min = 0, k_max = 4;
};

struct PulseErrorSpec {
  int n = 50;
  double flip_angle_error = 0.05;
  PhaseConvention convention = PhaseConvention::cpmg;
};

struct SenseSpec {
  PulseSequence sequence = PulseSequence::hahn(230e-6);
  ReadoutModel readout;
  std::vector<double> times;
  bool analytic = true;
  double test_field = 0.0;
  double ac_jitter = 0.0;
  std::optional<double> calibrate_k;  // T s^{1/2}
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::decay;
  std::string preset;
  NVParameters nv;
  std::optional<FieldModel> field;
  SequenceFamily sequence = SequenceFamily::hahn();
  std::vector<double> grid;
  std::size_t shots = 10000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  FitSpec fit;
  double omega1 = 0.0;
  PulseErrorSpec pulse_error;
  SuppressionSpec suppression;
  SenseSpec sense;
  std::string input;
  std::string note;
};

namespace detail {

inline std::vector<double> grid_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  r.only({"times", "start", "stop", "points", "spacing"});
  std::vector<double> g;
  if (r.has("times")) {
    g = quantity_list(r.raw("times"), r.path("times"), kTime);
  } else {
    const double start = r.quantity("start", kTime);
    const double stop = r.quantity("stop", kTime);
    const long long points = r.integer("points");
    const std::string spacing = r.string_or("spacing", "linear");
    if (points < 1) throw ConfigError(r.path("points"), "must be >= 1");
    if (!(start > 0.0) || !(stop >= start)) throw ConfigError(where, "need 0 < start <= stop");
    if (points > 1 && !(stop > start)) throw ConfigError(where, "need start < stop for more than one point");
    if (spacing == "linear")
      g = linear_grid(start, stop, static_cast<std::size_t>(points));
    else if (spacing == "log")
      g = log_grid(start, stop, static_cast<std::size_t>(points));
    else
      throw ConfigError(r.path("spacing"), "must be 'linear' or 'log'");
  }
  r.finish();
  if (g.empty()) throw ConfigError(where, "grid must not be empty");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(g[i] > 0.0) || (i > 0 && !(g[i] > g[i - 1])))
      throw ConfigError(where, "times must be positive and strictly increasing");
  return g;
}

inline json grid_to_json(const std::vector<double>& g) {
  json arr = json::array();
  for (double t : g) arr.push_back(quantity_string(t, 0, 1));
  return json{{"times", arr}};
}

inline SequenceFamily family_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  r.only({"kind", "n", "fractions", "axis"});
  const SequenceKind kind = sequence_kind_from(r.string("kind"), r.path("kind"));
  SequenceFamily f;
  switch (kind) {
    case SequenceKind::fid: f = SequenceFamily::fid(); break;
    case SequenceKind::hahn: f = SequenceFamily::hahn(); break;
    case SequenceKind::cpmg: {
      const long long n = r.integer("n");
      if (n < 1 || n > 100000) throw ConfigError(r.path("n"), "pulse count must be in [1, 100000]");
      f = SequenceFamily::cpmg(static_cast<int>(n));
      break;
    }
    case SequenceKind::custom: {
      const json& fr = r.raw("fractions");
      if (!fr.is_array() || fr.empty()) throw ConfigError(r.path("fractions"), "expected a non-empty array");
      std::vector<double> v;
      for (const auto& x : fr) {
        if (!x.is_number()) throw ConfigError(r.path("fractions"), "fractions are plain numbers in (0, 1)");
        v.push_back(x.get<double>());
      }
      for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0 && v[i] < 1.0) || (i > 0 && !(v[i] > v[i - 1])))
          throw ConfigError(r.path("fractions"), "fractions must be strictly increasing inside (0, 1)");
      f = SequenceFamily::custom(v, axis_from(r.string_or("axis", "x"), r.path("axis")));
      break;
    }
    case SequenceKind::spin_lock:
      throw ConfigError(r.path("kind"), "spin locking is configured through the spinlock experiment");
  }
  r.finish();
  return f;
}

inline json family_to_json(const SequenceFamily& f) {
  json j;
  j["kind"] = to_string(f.kind);
  if (f.kind == SequenceKind::cpmg) j["n"] = f.n;
  if (f.kind == SequenceKind::custom) {
    j["fractions"] = f.custom_fractions;
    j["axis"] = to_string(f.axis);
  }
  return j;
}

/// Concrete sense sequence: hahn / cpmg with base interval tau (or total time).
inline PulseSequence sense_sequence_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  r.only({"kind", "n", "tau", "total_time"});
  const SequenceKind kind = sequence_kind_from(r.string("kind"), r.path("kind"));
  int n = 1;
  if (kind == SequenceKind::cpmg) {
    const long long nn = r.integer("n");
    if (nn < 1 || nn > 100000) throw ConfigError(r.path("n"), "pulse count must be in [1, 100000]");
    n = static_cast<int>(nn);
  } else if (kind != SequenceKind::hahn && kind != SequenceKind::fid) {
    throw ConfigError(r.path("kind"), "sensing supports fid, hahn and cpmg");
  }
  double total = 0.0;
  const bool has_tau = r.has("tau");
  const bool has_total = r.has("total_time");
  if (has_tau == has_total) throw ConfigError(where, "give exactly one of 'tau' or 'total_time'");
  if (has_tau) {
    const double tau = r.quantity("tau", kTime);
    total = (kind == SequenceKind::fid ? 1.0 : 2.0 * n) * tau;
  } else {
    total = r.quantity("total_time", kTime);
  }
  r.finish();
  if (!(total > 0.0)) throw ConfigError(where, "sequence duration must be positive");
  if (kind == SequenceKind::fid) return PulseSequence::fid(total);
  if (kind == SequenceKind::hahn) return PulseSequence::hahn(total);
  return PulseSequence::cpmg(n, total);
}

inline json sense_sequence_to_json(const PulseSequence& s) {
  json j;
  j["kind"] = to_string(s.kind());
  if (s.kind() == SequenceKind::cpmg) j["n"] = s.pulse_count();
  j["total_time"] = quantity_string(s.total_time(), 0, 1);
  return j;
}

inline ReadoutModel readout_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  ReadoutModel m;
  m.photons_per_shot = r.number_or("photons_per_shot", m.photons_per_shot);
  m.contrast = r.number_or("contrast", m.contrast);
  m.overhead = r.quantity_or("overhead", kTime, m.overhead);
  const long long blocks = r.integer_or("blocks", static_cast<long long>(m.blocks));
  const long long spp = r.integer_or("shots_per_point", static_cast<long long>(m.shots_per_point));
  r.finish();
  if (blocks < 2) throw ConfigError(r.path("blocks"), "must be >= 2");
  if (spp < 1) throw ConfigError(r.path("shots_per_point"), "must be positive");
  m.blocks = static_cast<std::size_t>(blocks);
  m.shots_per_point = static_cast<std::size_t>(spp);
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where, e.what());
  }
  return m;
}

inline json readout_to_json(const ReadoutModel& m) {
  json j;
  j["photons_per_shot"] = m.photons_per_shot;
  j["contrast"] = m.contrast;
  j["overhead"] = quantity_string(m.overhead, 0, 1);
  j["blocks"] = m.blocks;
  j["shots_per_point"] = m.shots_per_point;
  return j;
}

inline DecayModel decay_model_from(const std::string& s, const std::string& where) {
  if (s == "stretched_exp") return DecayModel::stretched_exp;
  if (s == "exponential") return DecayModel::exponential;
  throw ConfigError(where, "fit model must be 'stretched_exp' or 'exponential'");
}

inline FitSpec fit_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  FitSpec f;
  f.enabled = true;
  f.model = decay_model_from(r.string_or("model", "stretched_exp"), r.path("model"));
  if (r.has("amplitude")) f.fixed.amplitude = r.number("amplitude");
  if (r.has("stretch")) {
    const double p = r.number("stretch");
    if (!(p > 0.0)) throw ConfigError(r.path("stretch"), "must be positive");
    f.fixed.stretch = p;
  }
  if (r.has("offset")) {
    const json& v = r.raw("offset");
    if (v.is_string() && v.get<std::string>() == "free")
      f.fixed.free_offset = true;
    else if (v.is_number())
      f.fixed.offset = v.get<double>();
    else
      throw ConfigError(r.path("offset"), "expected a number or \"free\"");
  }
  r.finish();
  return f;
}

inline json fit_to_json(const FitSpec& f) {
  json j;
  j["model"] = to_string(f.model);
  if (f.fixed.amplitude) j["amplitude"] = *f.fixed.amplitude;
  if (f.fixed.stretch) j["stretch"] = *f.fixed.stretch;
  if (f.fixed.free_offset)
    j["offset"] = "free";
  else if (f.fixed.offset)
    j["offset"] = *f.fixed.offset;
  return j;
}

inline NVParameters nv_from_json(const json& j, const std::string& where, NVParameters nv) {
  ObjectReader r(j, where);
  nv.gamma_e = r.quantity_or("gamma_e", kGyro, nv.gamma_e);
  nv.zero_field_splitting = r.quantity_or("zero_field_splitting", kFrequency, nv.zero_field_splitting);
  nv.static_field_b0 = r.quantity_or("static_field_b0", kField, nv.static_field_b0);
  if (r.has("t1")) {
    const json& v = r.raw("t1");
    if (v.is_string() && v.get<std::string>() == "off")
      nv.t1 = std::numeric_limits<double>::infinity();
    else
      nv.t1 = ObjectReader::quantity_value(v, r.path("t1"), kTime);
  }
  r.finish();
  try {
    nv.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where, e.what());
  }
  return nv;
}

inline json nv_to_json(const NVParameters& nv) {
  json j;
  j["gamma_e"] = quantity_string(nv.gamma_e, -1, -1, 1);
  j["zero_field_splitting"] = quantity_string(nv.zero_field_splitting, 0, -1);
  j["static_field_b0"] = quantity_string(nv.static_field_b0, 1, 0);
  if (nv.t1_enabled())
    j["t1"] = quantity_string(nv.t1, 0, 1);
  else
    j["t1"] = "off";
  return j;
}

inline std::size_t positive_count(ObjectReader& r, const std::string& key, std::size_t fallback) {
  if (!r.has(key)) return fallback;
  const long long v = r.integer(key);
  if (v <= 0) throw ConfigError(r.path(key), "must be a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Parses JSON text, reporting syntax errors with line and column.
inline json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::string what = e.what();
    if (const auto pos = what.find("parse error"); pos != std::string::npos) {
      const auto colon = what.find(": ", pos);
      if (colon != std::string::npos) what = what.substr(colon + 2);
    }
    throw ConfigParseError(line, column, what);
  }
}

/// Schema-validates and expands a config. `kind_hint` is the CLI subcommand;
/// an "experiment" key in the file must agree with it.
inline ExperimentConfig parse_config(const json& j, std::optional<ExperimentKind> kind_hint = std::nullopt) {
  using namespace detail;
  ObjectReader r(j, "");
  ExperimentConfig cfg;
  std::optional<ExperimentKind> kind = kind_hint;
  if (r.has("experiment")) {
    const std::string s = r.string("experiment");
    const auto k = experiment_kind_from(s);
    if (!k) throw ConfigError("experiment", "unknown experiment '" + s + "'");
    if (kind && *kind != *k)
      throw ConfigError("experiment", std::string("config is for '") + to_string(*k) + "' but the command is '" +
                                          to_string(*kind) + "'");
    kind = k;
  }
  if (!kind) throw ConfigError("experiment", "required field missing");
  cfg.kind = *kind;
  cfg.note = r.string_or("note", "");

  std::optional<Preset> preset;
  if (r.has("preset")) {
    cfg.preset = r.string("preset");
    try {
      preset = preset_by_name(cfg.preset);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("preset", e.what());
    }
    cfg.nv = preset->nv;
    cfg.field = preset->field;
    cfg.sequence = preset->sequence;
    cfg.grid = preset->grid;
    cfg.omega1 = preset->spin_lock_omega1;
  }
  if (r.has("nv")) cfg.nv = nv_from_json(r.raw("nv"), "nv", cfg.nv);
  if (r.has("field")) cfg.field = field_from_json(r.raw("field"), "field");
  if (r.has("sequence")) cfg.sequence = family_from_json(r.raw("sequence"), "sequence");
  if (r.has("grid")) cfg.grid = grid_from_json(r.raw("grid"), "grid");

  if (r.has("shots")) {
    const long long s = r.integer("shots");
    if (s <= 0) throw ConfigError("shots", "must be a positive integer");
    cfg.shots = static_cast<std::size_t>(s);
  }
  if (r.has("seed")) {
    const json& v = r.raw("seed");
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0))
      throw ConfigError("seed", "must be a non-negative integer");
    cfg.seed = v.get<std::uint64_t>();
  }
  if (r.has("threads")) {
    const long long t = r.integer("threads");
    if (t < 1 || t > 1024) throw ConfigError("threads", "must be in [1, 1024]");
    cfg.threads = static_cast<unsigned>(t);
  }
  if (r.has("fit")) cfg.fit = fit_from_json(r.raw("fit"), "fit");

  if (r.has("spinlock")) {
    ObjectReader s(r.raw("spinlock"), "spinlock");
    s.only({"omega1"});
    cfg.omega1 = s.quantity("omega1", kAngularRate);
    s.finish();
    if (!(cfg.omega1 >= 0.0)) throw ConfigError("spinlock.omega1", "must be >= 0");
  }
  if (r.has("pulse_error")) {
    ObjectReader s(r.raw("pulse_error"), "pulse_error");
    const long long n = s.integer_or("n", cfg.pulse_error.n);
    if (n < 1 || n > 100000) throw ConfigError("pulse_error.n", "pulse count must be in [1, 100000]");
    cfg.pulse_error.n = static_cast<int>(n);
    cfg.pulse_error.flip_angle_error = s.number_or("flip_angle_error", cfg.pulse_error.flip_angle_error);
    if (!(std::abs(cfg.pulse_error.flip_angle_error) < 0.5))
      throw ConfigError("pulse_error.flip_angle_error", "|flip_angle_error| must be < 0.5");
    const std::string conv = s.string_or("convention", "cpmg");
    if (conv == "cpmg")
      cfg.pulse_error.convention = PhaseConvention::cpmg;
    else if (conv == "cp")
      cfg.pulse_error.convention = PhaseConvention::cp;
    else
      throw ConfigError("pulse_error.convention", "must be 'cp' or 'cpmg'");
    s.finish();
  }
  if (r.has("suppression")) {
    ObjectReader s(r.raw("suppression"), "suppression");
    auto& sp = cfg.suppression;
    sp.n_min = static_cast<int>(s.integer_or("n_min", sp.n_min));
    sp.n_max = static_cast<int>(s.integer_or("n_max", sp.n_max));
    sp.k_min = static_cast<int>(s.integer_or("k_min", sp.k_min));
    sp.k_max = static_cast<int>(s.integer_or("k_max", sp.k_max));
    s.finish();
    if (sp.n_min < 1 || sp.n_max < sp.n_min || sp.n_max > 10000) throw ConfigError("suppression", "need 1 <= n_min <= n_max <= 10000");
    if (sp.k_min < 0 || sp.k_max < sp.k_min || sp.k_max > 200) throw ConfigError("suppression", "need 0 <= k_min <= k_max <= 200");
  }
  if (r.has("sense")) {
    ObjectReader s(r.raw("sense"), "sense");
    s.only({"sequence", "readout", "times", "path", "test_field", "ac_jitter", "calibrate_k"});
    auto& sp = cfg.sense;
    sp.sequence = sense_sequence_from_json(s.raw("sequence"), "sense.sequence");
    if (s.has("readout")) sp.readout = readout_from_json(s.raw("readout"), "sense.readout");
    sp.times = grid_from_json(s.raw("times"), "sense.times");
    const std::string path = s.string_or("path", "analytic");
    if (path != "analytic" && path != "sampled") throw ConfigError("sense.path", "must be 'analytic' or 'sampled'");
    sp.analytic = path == "analytic";
    sp.test_field = s.quantity_or("test_field", kField, 0.0);
    sp.ac_jitter = s.number_or("ac_jitter", 0.0);
    if (!(sp.ac_jitter >= 0.0)) throw ConfigError("sense.ac_jitter", "must be >= 0");
    if (s.has("calibrate_k")) {
      const double k = s.quantity("calibrate_k", kSensitivity);
      if (!(k > 0.0)) throw ConfigError("sense.calibrate_k", "must be positive");
      sp.calibrate_k = k;
    }
    s.finish();
    if (sp.times.size() < 4) throw ConfigError("sense.times", "need at least 4 measurement times");
  }
  if (r.has("input")) cfg.input = r.string("input");
  r.finish();

  // Per-experiment requirements.
  switch (cfg.kind) {
    case ExperimentKind::decay:
    case ExperimentKind::spinlock:
    case ExperimentKind::pulse_error:
      if (!cfg.field) {
        if (cfg.kind != ExperimentKind::pulse_error) throw ConfigError("field", "required field missing");
        cfg.field = FieldModel({StaticOffset{0.0}});
      }
      if (cfg.grid.empty()) throw ConfigError("grid", "required field missing");
      if (cfg.kind == ExperimentKind::decay && cfg.shots < 100) throw ConfigError("shots", "decay curves need >= 100 shots");
      if (cfg.fit.enabled && cfg.grid.size() < 5) throw ConfigError("grid", "fitting needs at least 5 points");
      break;
    case ExperimentKind::sense:
      if (!j.contains("sense")) throw ConfigError("sense", "required field missing");
      break;
    case ExperimentKind::fit:
      if (cfg.input.empty()) throw ConfigError("input", "required field missing");
      cfg.fit.enabled = true;
      break;
    case ExperimentKind::suppression: break;
  }
  return cfg;
}

/// Fully explicit config in SI unit strings; reparsing it gives the same run.
inline json config_to_json(const ExperimentConfig& cfg) {
  using namespace detail;
  json j;
  j["experiment"] = to_string(cfg.kind);
  switch (cfg.kind) {
    case ExperimentKind::suppression: {
      const auto& s = cfg.suppression;
      j["suppression"] = json{{"n_min", s.n_min}, {"n_max", s.n_max}, {"k_min", s.k_min}, {"k_max", s.k_max}};
      return j;
    }
    case ExperimentKind::fit:
      j["input"] = cfg.input;
      j["fit"] = fit_to_json(cfg.fit);
      return j;
    case ExperimentKind::sense: {
      const auto& s = cfg.sense;
      j["nv"] = nv_to_json(cfg.nv);
      json sj;
      sj["sequence"] = sense_sequence_to_json(s.sequence);
      sj["readout"] = readout_to_json(s.readout);
      sj["times"] = grid_to_json(s.times);
      sj["path"] = s.analytic ? "analytic" : "sampled";
      sj["test_field"] = quantity_string(s.test_field, 1, 0);
      sj["ac_jitter"] = s.ac_jitter;
      if (s.calibrate_k) sj["calibrate_k"] = quantity_string(*s.calibrate_k, 1, 0.5);
      j["sense"] = sj;
      j["seed"] = cfg.seed;
      return j;
    }
    default: break;
  }
  j["nv"] = nv_to_json(cfg.nv);
  j["field"] = field_to_json(*cfg.field);
  if (cfg.kind == ExperimentKind::decay) j["sequence"] = family_to_json(cfg.sequence);
  if (cfg.kind == ExperimentKind::spinlock) j["spinlock"] = json{{"omega1", quantity_string(cfg.omega1, 0, -1, 1)}};
  if (cfg.kind == ExperimentKind::pulse_error) {
    const auto& p = cfg.pulse_error;
    j["pulse_error"] = json{{"n", p.n}, {"flip_angle_error", p.flip_angle_error}, {"convention", to_string(p.convention)}};
  }
  j["grid"] = grid_to_json(cfg.grid);
  j["shots"] = cfg.shots;
  j["seed"] = cfg.seed;
  if (cfg.fit.enabled) j["fit"] = fit_to_json(cfg.fit);
  return j;
}

// ---------------------------------------------------------------------------
// Validation report

struct ValidationReport {
  bool valid = true;
  std::string error;
  std::vector<std::string> warnings;
  std::vector<std::string> diagnostics;
};

/// Physics sanity checks on a parsed config.
inline void physics_checks(const ExperimentConfig& cfg, ValidationReport& rep) {
  if (!cfg.field) return;
  std::vector<const OrnsteinUhlenbeck*> ous;
  bool quasi_static = false;
  for (const auto& c : cfg.field->components()) {
    if (const auto* ou = std::get_if<OrnsteinUhlenbeck>(&c)) ous.push_back(ou);
    if (std::holds_alternative<QuasiStaticGaussian>(c)) quasi_static = true;
  }
  for (std::size_t i = 0; i < ous.size(); ++i)
    rep.diagnostics.push_back("ou component " + std::to_string(i) + ": gamma*sigma*tau_c = " +
                              format_double(slow_fluctuation_ratio(*ous[i], cfg.nv)));
  if (cfg.kind != ExperimentKind::decay && cfg.kind != ExperimentKind::pulse_error) return;
  if (ous.empty() || quasi_static || cfg.grid.empty()) return;
  const int n = cfg.kind == ExperimentKind::pulse_error ? cfg.pulse_error.n : cfg.sequence.pulse_count();
  if (n < 1) return;
  const double tau = cfg.grid.front() / (2.0 * n);
  // Decoupling needs at least one component that is slow on the scale of the
  // pulse spacing; a bath made only of fast components is motionally narrowed.
  bool all_fast = true;
  for (const auto* ou : ous)
    if (!(tau / ou->tau_c > 10.0 && slow_fluctuation_ratio(*ou, cfg.nv) < 1.0)) all_fast = false;
  if (all_fast)
    rep.warnings.push_back("motional-narrowing regime, decoupling ineffective: every OU component has tau_c << base tau (" +
                           format_double(tau) + " s) and gamma*sigma*tau_c < 1");
}

inline ValidationReport validate_config_text(const std::string& text, std::optional<ExperimentKind> kind_hint = std::nullopt) {
  ValidationReport rep;
  try {
    const ExperimentConfig cfg = parse_config(parse_json_text(text), kind_hint);
    physics_checks(cfg, rep);
  } catch (const ConfigParseError& e) {
    rep.valid = false;
    rep.error = e.what();
  } catch (const ConfigError& e) {
    rep.valid = false;
    rep.error = e.what();
  } catch (const std::invalid_argument& e) {
    rep.valid = false;
    rep.error = e.what();
  }
  return rep;
}

}  // namespace ddspin
