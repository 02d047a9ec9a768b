#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace ddspin {

namespace detail {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t key, std::uint64_t word) noexcept {
  return mix64(key ^ mix64(word + kGolden));
}

}  // namespace detail

/// Counter-based 64-bit generator.
///
/// Output i of a stream is a pure function of (key, i), where the key hashes
/// (master_seed, index, lane). Two streams with the same coordinates produce the
/// same sequence no matter which thread or in which order they are evaluated.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t master_seed, std::uint64_t index, std::uint64_t lane = 0) noexcept
      : key_(detail::combine(detail::combine(detail::mix64(master_seed), index), lane)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Master seed plus the substream discipline.
struct RngSpec {
  std::uint64_t master_seed = 0;

  /// Substream for one trajectory. `index` is the trajectory ordinal, `lane`
  /// separates independent consumers inside the trajectory (e.g. field components).
  CounterRng stream(std::uint64_t index, std::uint64_t lane = 0) const noexcept {
    return CounterRng(master_seed, index, lane);
  }

  /// Derived spec for a sub-experiment (a grid point, a scan point).
  RngSpec fork(std::uint64_t tag) const noexcept {
    return RngSpec{detail::combine(master_seed ^ 0x5bd1e9955bd1e995ULL, tag)};
  }
};

/// Standard normal deviates drawn from one substream.
class GaussianStream {
 public:
  explicit GaussianStream(CounterRng rng) noexcept : rng_(rng) {}
  double operator()() { return dist_(rng_); }
  CounterRng& engine() noexcept { return rng_; }

 private:
  CounterRng rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace ddspin
