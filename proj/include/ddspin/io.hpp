#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ddspin/evolve.hpp"
#include "ddspin/fit.hpp"
#include "ddspin/format.hpp"
#include "ddspin/sense.hpp"
#include "ddspin/taylor.hpp"

namespace ddspin {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.close();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string curve_csv(const CoherenceCurve& curve) {
  std::string s = "total_time_s,signal,std_error,n_pulses\n";
  for (const auto& p : curve.points)
    s += format_double(p.total_time) + "," + format_double(p.signal) + "," + format_double(p.std_error) + "," +
         std::to_string(p.n_pulses) + "\n";
  return s;
}

inline double parse_csv_double(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size())
    throw IoError("curve csv line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  return v;
}

inline CoherenceCurve parse_curve_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("curve csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "total_time_s,signal,std_error,n_pulses") throw IoError("curve csv: unexpected header '" + line + "'");
  CoherenceCurve curve;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto pos = rest.find(',');
      f.push_back(rest.substr(0, pos));
      if (pos == std::string_view::npos) break;
      rest.remove_prefix(pos + 1);
    }
    if (f.size() != 4) throw IoError("curve csv line " + std::to_string(lineno) + ": expected 4 columns");
    CoherenceCurve::Point p;
    p.total_time = parse_csv_double(f[0], lineno);
    p.signal = parse_csv_double(f[1], lineno);
    p.std_error = parse_csv_double(f[2], lineno);
    p.n_pulses = static_cast<int>(parse_csv_double(f[3], lineno));
    curve.points.push_back(p);
  }
  return curve;
}

inline CoherenceCurve read_curve_csv(const std::filesystem::path& path) { return parse_curve_csv(read_text_file(path)); }

inline std::string suppression_csv(int n_min, int n_max, int k_min, int k_max) {
  std::string s = "n,k,factor_exact_num,factor_exact_den,factor_float\n";
  for (int n = n_min; n <= n_max; ++n) {
    for (int k = k_min; k <= k_max; ++k) {
      const SuppressionFactor f = cpmg_factor(n, k);
      s += std::to_string(n) + "," + std::to_string(k) + "," + to_string(f.exact.num()) + "," +
           to_string(f.exact.den()) + "," + format_double(f.value) + "\n";
    }
  }
  return s;
}

inline std::string sensitivity_csv(const SensitivityResult& r) {
  std::string s = "total_time_s,delta_b_min_T,sigma_sn,slope_per_T\n";
  for (const auto& p : r.points)
    s += format_double(p.total_time) + "," + format_double(p.delta_b_min) + "," + format_double(p.sigma_sn) + "," +
         format_double(p.slope) + "\n";
  return s;
}

inline nlohmann::ordered_json curve_metadata_json(const CoherenceCurve& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.metadata.seed;
  j["shots"] = c.metadata.shots;
  j["model_digest"] = c.metadata.model_digest;
  j["sequence"] = c.metadata.sequence;
  j["points"] = c.points.size();
  return j;
}

inline nlohmann::ordered_json estimate_json(const Estimate& e) {
  nlohmann::ordered_json j;
  j["value"] = e.value;
  if (std::isfinite(e.sigma))
    j["sigma"] = e.sigma;
  else
    j["sigma"] = nullptr;
  j["fixed"] = e.fixed;
  return j;
}

inline nlohmann::ordered_json fit_report_json(const DecayFit& f) {
  nlohmann::ordered_json j;
  j["model"] = to_string(f.model);
  nlohmann::ordered_json params;
  if (f.model == DecayModel::power_law) {
    params["coefficient"] = estimate_json(f.coefficient);
    params["exponent"] = estimate_json(f.exponent);
  } else {
    params["amplitude"] = estimate_json(f.amplitude);
    params["decay_time_s"] = estimate_json(f.decay_time);
    params["stretch"] = estimate_json(f.stretch);
    params["offset"] = estimate_json(f.offset);
  }
  j["parameters"] = params;
  j["residual_norm"] = f.residual_norm;
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  return j;
}

inline nlohmann::ordered_json sensitivity_report_json(const SensitivityResult& r, bool analytic) {
  nlohmann::ordered_json j;
  j["path"] = analytic ? "analytic" : "sampled";
  j["shot_duration_s"] = r.shot_duration;
  j["overhead_included"] = true;
  j["k_nT_per_sqrtHz"] = r.fit.coefficient.value * 1e9;
  j["k_sigma_nT_per_sqrtHz"] = r.fit.coefficient.sigma * 1e9;
  j["fit_fixed_exponent"] = fit_report_json(r.fit);
  j["fit_free_exponent"] = fit_report_json(r.free_fit);
  return j;
}

}  // namespace ddspin
