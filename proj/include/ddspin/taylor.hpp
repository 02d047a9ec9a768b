#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "ddspin/parallel.hpp"
#include "ddspin/rational.hpp"
#include "ddspin/sequence.hpp"

// Suppression of the Taylor dephasing channels a_k t^k by a pi-pulse pattern.
//
// For pulses at fractions t_1 < ... < t_m of the window, channel k is scaled by
//
//   F_k = (integral of s(t) t^k over [0,1]) / (integral of t^k over [0,1])
//       = sum_i s_i (t_{i+1}^{k+1} - t_i^{k+1}),   s_i = (-1)^i, t_0 = 0, t_{m+1} = 1.
//
// For CPMG-n this collapses to
//
//   F_k = [2 + (-1)^n (2n)^{k+1} + 2 sum_{j=1}^{n-1} (-1)^j (2j+1)^{k+1}] / (2n)^{k+1}.
//
// Values are signed with the first segment positive; at n = 1 this is
// -(1 - 2^{-k}). magnitude() gives the echo convention 1 - 2^{-k}.

namespace ddspin {

struct SuppressionFactor {
  int n = 0;
  int k = 0;
  Rational exact;
  double value = 0.0;  // exact value rounded to double

  double magnitude() const noexcept { return std::abs(value); }
  Rational exact_magnitude() const { return exact.abs(); }
};

inline void check_order(int k) {
  if (k < 0) throw std::invalid_argument("taylor: order k must be >= 0");
}

/// Echo suppression 1 - 2^{-k}.
inline double hahn_factor(int k) {
  check_order(k);
  return 1.0 - std::ldexp(1.0, -k);
}

inline Rational hahn_factor_exact(int k) {
  check_order(k);
  if (k > 120) throw std::overflow_error("hahn_factor_exact: k outside 128-bit range");
  const int128 den = static_cast<int128>(1) << k;
  return Rational(den - 1, den);
}

/// CPMG-n factor in exact integer arithmetic. Throws std::overflow_error when
/// (2n)^{k+1} or the alternating sum leaves the 128-bit range.
inline Rational cpmg_factor_exact(int n, int k) {
  if (n < 1) throw std::invalid_argument("cpmg_factor: n must be >= 1");
  check_order(k);
  const auto p = static_cast<unsigned>(k + 1);
  int128 num = 2;
  num = detail::checked_add(num, (n % 2 == 0 ? 1 : -1) * ipow(2 * n, p));
  for (int j = 1; j <= n - 1; ++j) {
    const int128 term = detail::checked_mul(2, ipow(2 * j + 1, p));
    num = detail::checked_add(num, (j % 2 == 0) ? term : -term);
  }
  return Rational(num, ipow(2 * n, p));
}

/// Floating evaluation of the same factor: signed segment sum of
/// (b^{k+1} - a^{k+1}) in extended precision with compensated summation.
inline double cpmg_factor_float(int n, int k) {
  if (n < 1) throw std::invalid_argument("cpmg_factor: n must be >= 1");
  check_order(k);
  const int p = k + 1;
  const long double d = 2.0L * n;
  CompensatedSum<long double> acc;
  long double prev = 0.0L;
  for (int seg = 0; seg <= n; ++seg) {
    const long double end = (seg == n) ? 1.0L : static_cast<long double>(2 * seg + 1) / d;
    const long double term = std::pow(end, p) - std::pow(prev, p);
    acc.add(seg % 2 == 0 ? term : -term);
    prev = end;
  }
  return static_cast<double>(acc.value());
}

inline SuppressionFactor cpmg_factor(int n, int k) {
  const Rational exact = cpmg_factor_exact(n, k);
  return SuppressionFactor{n, k, exact, exact.to_double()};
}

/// Direct exact integration of t^k against the toggling function on [0, 1]
/// for an arbitrary pulse pattern.
inline Rational oracle_factor(std::span<const Rational> pulse_times, int k) {
  check_order(k);
  const Rational zero(0), one(1);
  for (std::size_t i = 0; i < pulse_times.size(); ++i) {
    if (!(pulse_times[i] > zero && pulse_times[i] < one))
      throw std::invalid_argument("oracle_factor: pulse times must lie in (0, 1)");
    if (i > 0 && !(pulse_times[i] > pulse_times[i - 1]))
      throw std::invalid_argument("oracle_factor: pulse times must be strictly increasing");
  }
  const auto p = static_cast<unsigned>(k + 1);
  Rational sum(0);
  Rational prev_pow(0);
  for (std::size_t seg = 0; seg <= pulse_times.size(); ++seg) {
    const Rational end_pow = seg == pulse_times.size() ? one : pow(pulse_times[seg], p);
    const Rational piece = end_pow - prev_pow;
    sum += (seg % 2 == 0) ? piece : -piece;
    prev_pow = end_pow;
  }
  // sum_i s_i (b^p - a^p)/p divided by the free integral 1/p.
  return sum;
}

/// CPMG pulse fractions (2j - 1)/(2n) as exact rationals.
inline std::vector<Rational> cpmg_fractions(int n) {
  if (n < 1) throw std::invalid_argument("cpmg_fractions: n must be >= 1");
  std::vector<Rational> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 1; j <= n; ++j) out.emplace_back(static_cast<long long>(2 * j - 1), static_cast<long long>(2 * n));
  return out;
}

/// Floating factor of any toggling function, in units of its own window.
inline double sequence_factor(const TogglingFunction& tog, int k) {
  check_order(k);
  const long double total = tog.total_time();
  CompensatedSum<long double> acc;
  for (std::size_t i = 0; i < tog.segment_count(); ++i) {
    const long double a = tog.segment_start(i) / total;
    const long double b = tog.segment_end(i) / total;
    const long double piece = std::pow(b, k + 1) - std::pow(a, k + 1);
    acc.add(TogglingFunction::sign(i) * piece);
  }
  return static_cast<double>(acc.value());
}

}  // namespace ddspin
