#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ddspin/rational.hpp"
#include "ddspin/sequence.hpp"
#include "ddspin/taylor.hpp"

using ddspin::Rational;

namespace {

Rational R(long long n, long long d = 1) { return Rational(n, d); }

}  // namespace

TEST(Rational, ReducesAndOrders) {
  EXPECT_EQ(R(2, 4), R(1, 2));
  EXPECT_EQ(R(3, -6), R(-1, 2));
  EXPECT_EQ(R(1, 3) + R(1, 6), R(1, 2));
  EXPECT_EQ(R(1, 3) * R(3, 5), R(1, 5));
  EXPECT_EQ(R(1, 2) / R(1, 4), R(2));
  EXPECT_LT(R(1, 3), R(1, 2));
  EXPECT_EQ(ddspin::pow(R(2, 3), 3), R(8, 27));
  EXPECT_EQ(R(-7, 8).str(), "-7/8");
}

TEST(Rational, OverflowIsReported) {
  EXPECT_THROW(ddspin::ipow(10, 40), std::overflow_error);
  EXPECT_THROW(R(1, 0), std::domain_error);
}

TEST(HahnFactor, Examples) {
  EXPECT_EQ(ddspin::hahn_factor(0), 0.0);
  EXPECT_EQ(ddspin::hahn_factor(1), 0.5);
  EXPECT_EQ(ddspin::hahn_factor(3), 0.875);
  EXPECT_EQ(ddspin::hahn_factor_exact(3), R(7, 8));
  EXPECT_THROW(ddspin::hahn_factor(-1), std::invalid_argument);
}

TEST(CpmgFactor, Examples) {
  EXPECT_EQ(ddspin::cpmg_factor_exact(2, 0), R(0));
  EXPECT_EQ(ddspin::cpmg_factor_exact(3, 1), R(-1, 18));
  EXPECT_EQ(ddspin::cpmg_factor_exact(2, 2), R(3, 16));
  EXPECT_NEAR(ddspin::cpmg_factor_float(3, 1), -1.0 / 18.0, 1e-16);
  EXPECT_THROW(ddspin::cpmg_factor(0, 1), std::invalid_argument);
  EXPECT_THROW(ddspin::cpmg_factor(1, -1), std::invalid_argument);
}

TEST(CpmgFactor, OverflowIsReportedNotWrapped) {
  EXPECT_THROW(ddspin::cpmg_factor_exact(64, 40), std::overflow_error);
  EXPECT_NO_THROW(ddspin::cpmg_factor_exact(32, 12));
}

TEST(OracleFactor, Examples) {
  const std::vector<Rational> hahn{R(1, 2)};
  EXPECT_EQ(ddspin::oracle_factor(hahn, 0), R(0));
  EXPECT_EQ(ddspin::oracle_factor(hahn, 2), R(-3, 4));
  EXPECT_EQ(ddspin::oracle_factor(hahn, 2).abs().to_double(), ddspin::hahn_factor(2));
  const std::vector<Rational> three{R(1, 6), R(1, 2), R(5, 6)};
  EXPECT_EQ(ddspin::oracle_factor(three, 1), R(-1, 18));
}

TEST(OracleFactor, RejectsBadPatterns) {
  EXPECT_THROW(ddspin::oracle_factor(std::vector<Rational>{R(1, 2), R(1, 4)}, 1), std::invalid_argument);
  EXPECT_THROW(ddspin::oracle_factor(std::vector<Rational>{R(0)}, 1), std::invalid_argument);
  EXPECT_THROW(ddspin::oracle_factor(std::vector<Rational>{R(1)}, 1), std::invalid_argument);
  EXPECT_THROW(ddspin::oracle_factor(std::vector<Rational>{R(1, 3), R(1, 3)}, 1), std::invalid_argument);
}

TEST(CpmgFactor, MatchesOracleOverGrid) {
  for (int n = 1; n <= 32; ++n) {
    const auto times = ddspin::cpmg_fractions(n);
    for (int k = 0; k <= 8; ++k) {
      const auto f = ddspin::cpmg_factor(n, k);
      const Rational o = ddspin::oracle_factor(times, k);
      ASSERT_EQ(f.exact, o) << "n=" << n << " k=" << k;
      const double ref = o.to_double();
      ASSERT_EQ(f.value, ref);
      const double fl = ddspin::cpmg_factor_float(n, k);
      if (ref == 0.0)
        ASSERT_LE(std::abs(fl), 1e-15) << "n=" << n << " k=" << k;
      else
        ASSERT_LE(std::abs(fl - ref), 1e-12 * std::abs(ref)) << "n=" << n << " k=" << k;
    }
  }
}

TEST(CpmgFactor, FractionsMatchSequenceTimes) {
  for (int n = 1; n <= 16; ++n) {
    const auto fr = ddspin::cpmg_fractions(n);
    const auto t = ddspin::cpmg_times(n, 1.0);
    for (int j = 0; j < n; ++j) EXPECT_NEAR(fr[j].to_double(), t[j], 2.3e-16);
  }
}

TEST(CpmgFactor, HahnMagnitudeIdentity) {
  for (int k = 0; k <= 12; ++k) {
    EXPECT_EQ(ddspin::cpmg_factor_exact(1, k).abs(), ddspin::hahn_factor_exact(k));
    EXPECT_EQ(ddspin::cpmg_factor_exact(1, k), -ddspin::hahn_factor_exact(k));
    EXPECT_EQ(ddspin::cpmg_factor(1, k).magnitude(), ddspin::hahn_factor(k));
  }
}

TEST(CpmgFactor, StaticChannelVanishesAndBounded) {
  for (int n = 1; n <= 64; ++n) {
    EXPECT_EQ(ddspin::cpmg_factor_exact(n, 0), R(0));
    EXPECT_EQ(ddspin::cpmg_factor(n, 0).value, 0.0);
    for (int k = 0; k <= 8; ++k) EXPECT_LE(ddspin::cpmg_factor_exact(n, k).abs(), R(1));
  }
}

TEST(CpmgFactor, SuppressionIsMonotoneInPulseCount) {
  // From k = 2 on the magnitude decreases with every added pulse. At k = 1
  // even trains cancel the linear channel exactly, so the sequence zigzags;
  // each parity class is still non-increasing.
  for (int k = 2; k <= 8; ++k)
    for (int n = 1; n < 32; ++n)
      EXPECT_LE(ddspin::cpmg_factor_exact(n + 1, k).abs(), ddspin::cpmg_factor_exact(n, k).abs()) << n << "," << k;
  for (int n = 1; n + 2 <= 32; ++n)
    EXPECT_LE(ddspin::cpmg_factor_exact(n + 2, 1).abs(), ddspin::cpmg_factor_exact(n, 1).abs()) << n;
  for (int n = 2; n <= 32; n += 2) EXPECT_EQ(ddspin::cpmg_factor_exact(n, 1), R(0));
}

TEST(OracleFactor, ZeroAreaPatternsAnnihilateStaticChannel) {
  // Two pulses: zero area iff t2 = t1 + 1/2.
  for (int j = 1; j < 13; ++j) {
    const Rational t1 = R(j, 26);
    const std::vector<Rational> p{t1, t1 + R(1, 2)};
    EXPECT_EQ(ddspin::oracle_factor(p, 0), R(0));
  }
  // Three pulses: zero area iff t3 = 1/2 - t1 + t2.
  for (int a = 1; a < 10; ++a) {
    for (int b = a + 1; b < 20; ++b) {
      const Rational t1 = R(a, 21), t2 = R(b, 21);
      const Rational t3 = R(1, 2) - t1 + t2;
      if (!(t3 > t2 && t3 < R(1))) continue;
      EXPECT_EQ(ddspin::oracle_factor(std::vector<Rational>{t1, t2, t3}, 0), R(0));
    }
  }
  EXPECT_NE(ddspin::oracle_factor(std::vector<Rational>{R(1, 3)}, 0), R(0));
}

TEST(SequenceFactor, FloatPathOnCustomPattern) {
  const auto tog = ddspin::toggling(ddspin::PulseSequence::custom(1.0, {0.1, 0.35, 0.8}));
  const std::vector<Rational> exact{R(1, 10), R(7, 20), R(4, 5)};
  for (int k = 0; k <= 6; ++k)
    EXPECT_NEAR(ddspin::sequence_factor(tog, k), ddspin::oracle_factor(exact, k).to_double(), 1e-14);
}
