#pragma once

#include <compare>
#include <concepts>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

namespace ddspin {

using int128 = __int128;

namespace detail {

inline int128 checked_mul(int128 a, int128 b) {
  int128 r;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("rational: 128-bit multiply overflow");
  return r;
}

inline int128 checked_add(int128 a, int128 b) {
  int128 r;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("rational: 128-bit add overflow");
  return r;
}

inline int128 abs128(int128 a) { return a < 0 ? -a : a; }

inline int128 gcd128(int128 a, int128 b) {
  a = abs128(a);
  b = abs128(b);
  while (b != 0) {
    const int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

}  // namespace detail

inline std::string to_string(int128 v) {
  if (v == 0) return "0";
  const bool negative = v < 0;
  // Work with negative values so that INT128_MIN is representable.
  int128 x = negative ? v : -v;
  std::string digits;
  while (x != 0) {
    digits.push_back(static_cast<char>('0' - static_cast<int>(x % 10)));
    x /= 10;
  }
  if (negative) digits.push_back('-');
  return {digits.rbegin(), digits.rend()};
}

/// Exact rational on 128-bit integers. Always reduced, denominator positive.
/// Every operation that would overflow throws std::overflow_error.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(int128 num, int128 den = 1) : num_(num), den_(den) {
    if (den_ == 0) throw std::domain_error("rational: zero denominator");
    normalize();
  }
  template <std::integral A, std::integral B>
    requires(!std::is_same_v<A, int128> || !std::is_same_v<B, int128>)
  Rational(A num, B den) : Rational(static_cast<int128>(num), static_cast<int128>(den)) {}
  Rational(int num) : Rational(static_cast<int128>(num)) {}

  int128 num() const noexcept { return num_; }
  int128 den() const noexcept { return den_; }
  bool is_zero() const noexcept { return num_ == 0; }

  double to_double() const noexcept {
    return static_cast<double>(static_cast<long double>(num_) / static_cast<long double>(den_));
  }
  long double to_long_double() const noexcept {
    return static_cast<long double>(num_) / static_cast<long double>(den_);
  }

  Rational operator-() const { return Rational(-num_, den_); }

  friend Rational operator+(const Rational& a, const Rational& b) {
    const int128 g = detail::gcd128(a.den_, b.den_);
    const int128 bd = b.den_ / g;
    const int128 ad = a.den_ / g;
    return Rational(detail::checked_add(detail::checked_mul(a.num_, bd), detail::checked_mul(b.num_, ad)),
                    detail::checked_mul(a.den_, bd));
  }
  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
  friend Rational operator*(const Rational& a, const Rational& b) {
    const int128 g1 = detail::gcd128(a.num_, b.den_);
    const int128 g2 = detail::gcd128(b.num_, a.den_);
    const int128 s1 = g1 == 0 ? 1 : g1;
    const int128 s2 = g2 == 0 ? 1 : g2;
    return Rational(detail::checked_mul(a.num_ / s1, b.num_ / s2), detail::checked_mul(a.den_ / s2, b.den_ / s1));
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw std::domain_error("rational: division by zero");
    return a * Rational(b.den_, b.num_);
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

  friend bool operator==(const Rational& a, const Rational& b) noexcept {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    const int128 lhs = detail::checked_mul(a.num_, b.den_);
    const int128 rhs = detail::checked_mul(b.num_, a.den_);
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

  Rational abs() const { return num_ < 0 ? -*this : *this; }

  std::string str() const { return den_ == 1 ? to_string(num_) : to_string(num_) + "/" + to_string(den_); }
  friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

 private:
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const int128 g = detail::gcd128(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  int128 num_ = 0;
  int128 den_ = 1;
};

inline Rational pow(const Rational& base, unsigned exponent) {
  Rational result(1);
  Rational b = base;
  while (exponent != 0) {
    if (exponent & 1U) result *= b;
    exponent >>= 1U;
    if (exponent != 0) b *= b;
  }
  return result;
}

inline int128 ipow(int128 base, unsigned exponent) {
  int128 result = 1;
  for (unsigned i = 0; i < exponent; ++i) result = detail::checked_mul(result, base);
  return result;
}

}  // namespace ddspin
