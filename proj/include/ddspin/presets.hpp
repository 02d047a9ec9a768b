#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddspin/evolve.hpp"
#include "ddspin/field.hpp"
#include "ddspin/sequence.hpp"

namespace ddspin {

/// Named parameter bundle. The bath has a slow OU component, which sets the
/// Hahn decay, and a fast (white) OU component, which sets the decoupled
/// ceiling together with T1.
struct Preset {
  std::string name;
  NVParameters nv;
  FieldModel field;
  double hahn_t2_target = 0.0;   // s
  double ceiling_target = 0.0;   // decoupled T2 / T1rho target, s
  double spin_lock_omega1 = 0.0; // rad/s
  SequenceFamily sequence = SequenceFamily::hahn();
  std::vector<double> grid;
};

struct BathDesign {
  double t1;
  double hahn_t2_target;
  double ceiling_target;
  double slow_tau_c;
  double fast_tau_c;
};

/// Two-component OU bath meeting a design. The fast component's white rate
/// gamma^2 sigma^2 tau_c closes the gap between the ceiling and T1; the slow
/// amplitude is then solved so the analytic Hahn signal at the target time is
/// 1/e including the fast part and the T1 envelope.
inline FieldModel design_bath(const BathDesign& d, const NVParameters& nv) {
  if (!(d.ceiling_target < d.t1)) throw std::invalid_argument("design_bath: ceiling must be below T1");
  const double fast_rate = 1.0 / d.ceiling_target - 1.0 / d.t1;
  const double sigma_fast = std::sqrt(fast_rate / d.fast_tau_c) / nv.gamma_e;
  const OrnsteinUhlenbeck fast{sigma_fast, d.fast_tau_c};

  const TogglingFunction hahn = toggling(PulseSequence::hahn(d.hahn_t2_target));
  const double chi_fast = 0.5 * gaussian_phase_variance(FieldModel({fast}), hahn, nv);
  const double chi_unit = 0.5 * gaussian_phase_variance(FieldModel({OrnsteinUhlenbeck{1.0, d.slow_tau_c}}), hahn, nv);
  const double chi_needed = 1.0 - d.hahn_t2_target / d.t1 - chi_fast;
  if (!(chi_needed > 0.0)) throw std::invalid_argument("design_bath: Hahn target unreachable with this ceiling");
  const OrnsteinUhlenbeck slow{std::sqrt(chi_needed / chi_unit), d.slow_tau_c};
  return FieldModel({slow, fast});
}

/// Bulk CVD diamond: T1 = 5.93 ms, Hahn T2 = 0.39 ms, decoupled ceiling 2.44 ms.
inline Preset bulk_cvd() {
  Preset p;
  p.name = "bulk_cvd";
  p.nv.t1 = 5.93e-3;
  p.hahn_t2_target = 0.39e-3;
  p.ceiling_target = 2.44e-3;
  p.field = design_bath({p.nv.t1, p.hahn_t2_target, p.ceiling_target, 1e-3, 0.5e-6}, p.nv);
  p.spin_lock_omega1 = 2e5;
  p.grid = linear_grid(0.05e-3, 1.0e-3, 20);
  return p;
}

/// Nanodiamond: T1 = 100 us, Hahn T2 = 2.1 us, decoupled ceiling 4.8 us.
inline Preset nanodiamond() {
  Preset p;
  p.name = "nanodiamond";
  p.nv.t1 = 100e-6;
  p.hahn_t2_target = 2.1e-6;
  p.ceiling_target = 4.8e-6;
  p.field = design_bath({p.nv.t1, p.hahn_t2_target, p.ceiling_target, 10e-6, 5e-9}, p.nv);
  p.spin_lock_omega1 = 2e7;
  p.grid = linear_grid(0.25e-6, 6e-6, 20);
  return p;
}

inline std::vector<std::string> preset_names() { return {"bulk_cvd", "nanodiamond"}; }

inline Preset preset_by_name(const std::string& name) {
  if (name == "bulk_cvd") return bulk_cvd();
  if (name == "nanodiamond") return nanodiamond();
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace ddspin
