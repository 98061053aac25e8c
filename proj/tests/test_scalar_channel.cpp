#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include <sccs/scalar_channel.hpp>

#include "oracle_values.hpp"

using sccs::BernoulliGaussianPrior;
using sccs::ScalarChannel;

namespace {

constexpr double kRhos[3] = {0.1, 0.4, 0.8};
constexpr double kMmseGrid[4] = {0.1, 1.0, 10.0, 100.0};

}  // namespace

TEST(PosteriorMean, ZeroObservationGivesZero) {
  for (double rho : {0.1, 0.5, 1.0}) {
    for (double s : {0.5, 3.0, 100.0}) {
      EXPECT_EQ(sccs::posterior_mean({}, ScalarChannel(s), BernoulliGaussianPrior(rho)), std::complex<double>{});
    }
  }
}

TEST(PosteriorMean, DensePriorIsLinearShrinkage) {
  const auto m = sccs::posterior_mean({2.0, 0.0}, ScalarChannel(3.0), BernoulliGaussianPrior(1.0));
  EXPECT_NEAR(m.real(), 1.5, 1e-15);
  EXPECT_EQ(m.imag(), 0.0);
}

TEST(PosteriorMean, MatchesTwoDimensionalIntegral) {
  const auto m = sccs::posterior_mean({1.0, 0.5}, ScalarChannel(2.0), BernoulliGaussianPrior(0.4));
  EXPECT_NEAR(m.real(), oracle::kPosteriorMeanRe, 1e-8);
  EXPECT_NEAR(m.imag(), oracle::kPosteriorMeanIm, 1e-8);
}

TEST(PosteriorMean, PhaseEquivariant) {
  const BernoulliGaussianPrior prior(0.3);
  const ScalarChannel ch(4.0);
  const std::complex<double> y(0.7, -1.3);
  for (double theta : {0.3, 1.0, 2.5, -2.0}) {
    const auto rot = std::polar(1.0, theta);
    const auto lhs = sccs::posterior_mean(rot * y, ch, prior);
    const auto rhs = rot * sccs::posterior_mean(y, ch, prior);
    EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-14);
  }
}

TEST(PosteriorMean, MagnitudeBoundedByShrinkage) {
  const BernoulliGaussianPrior prior(0.2);
  for (double s : {0.1, 2.0, 50.0}) {
    for (double r : {0.01, 0.5, 3.0, 40.0}) {
      const auto m = sccs::posterior_mean({r, 0.0}, ScalarChannel(s), prior);
      EXPECT_LE(std::abs(m), r * s / (1.0 + s) + 1e-15);
    }
  }
}

TEST(PosteriorMean, NoOverflowForLargeObservations) {
  const auto m = sccs::posterior_mean({1e3, 0.0}, ScalarChannel(1e4), BernoulliGaussianPrior(0.01));
  EXPECT_TRUE(std::isfinite(m.real()));
  EXPECT_NEAR(m.real(), 1e3 * 1e4 / (1.0 + 1e4), 1e-9);
}

TEST(PosteriorMean, ZeroPrecisionReturnsPriorMean) {
  EXPECT_EQ(sccs::posterior_mean({3.0, 1.0}, ScalarChannel(0.0), BernoulliGaussianPrior(0.4)),
            std::complex<double>{});
}

TEST(PosteriorMean, RejectsNonFiniteObservation) {
  EXPECT_THROW(sccs::posterior_mean({NAN, 0.0}, ScalarChannel(1.0), BernoulliGaussianPrior(0.4)), sccs::InputError);
  EXPECT_THROW(sccs::posterior_mean({0.0, INFINITY}, ScalarChannel(1.0), BernoulliGaussianPrior(0.4)),
               sccs::InputError);
}

TEST(Prior, RejectsDensityOutsideUnitInterval) {
  EXPECT_THROW(BernoulliGaussianPrior(-0.1), sccs::InputError);
  EXPECT_THROW(BernoulliGaussianPrior(1.5), sccs::InputError);
  EXPECT_THROW(BernoulliGaussianPrior(NAN), sccs::InputError);
  EXPECT_THROW(ScalarChannel(-1.0), sccs::InputError);
}

TEST(Mmse, ZeroPrecisionIsPriorVariance) {
  EXPECT_EQ(sccs::mmse(0.0, BernoulliGaussianPrior(0.4)), 0.4);
}

TEST(Mmse, VanishesAtInfinitePrecision) {
  EXPECT_LE(sccs::mmse(1e12, BernoulliGaussianPrior(0.4)), 1e-6);
}

TEST(Mmse, MatchesIndependentQuadrature) {
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double m = sccs::mmse(kMmseGrid[j], BernoulliGaussianPrior(kRhos[i]));
      EXPECT_NEAR(m, oracle::kMmse[i][j], 1e-12 * oracle::kMmse[i][j] + 1e-15)
          << "rho=" << kRhos[i] << " varsigma=" << kMmseGrid[j];
    }
  }
}

TEST(Mmse, AgreesWithMonteCarloAtUnitPrecision) {
  const BernoulliGaussianPrior prior(0.4);
  const auto mc = sccs::mmse_mc_oracle(1.0, prior, 10'000'000, 2024);
  EXPECT_LE(std::abs(sccs::mmse(1.0, prior) - mc.estimate), 3.0 * mc.std_err);
}

TEST(Mmse, NonIncreasingAndBounded) {
  for (double rho : {0.05, 0.4, 0.9}) {
    const BernoulliGaussianPrior prior(rho);
    double prev = sccs::mmse(0.0, prior);
    for (double ls = -3.0; ls <= 8.0; ls += 0.1) {
      const double s = std::pow(10.0, ls);
      const double m = sccs::mmse(s, prior);
      EXPECT_LE(m, prev + 1e-10) << "rho=" << rho << " s=" << s;
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, std::min(rho, rho / (1.0 + rho * s)) + 1e-12);
      prev = m;
    }
  }
}

TEST(Mmse, DenseAndEmptyPriors) {
  EXPECT_NEAR(sccs::mmse(4.0, BernoulliGaussianPrior(1.0)), 0.2, 1e-15);
  EXPECT_EQ(sccs::mmse(4.0, BernoulliGaussianPrior(0.0)), 0.0);
}

TEST(Mmse, RejectsInvalidPrecision) {
  EXPECT_THROW(sccs::mmse(-1.0, BernoulliGaussianPrior(0.4)), sccs::InputError);
  EXPECT_THROW(sccs::mmse(INFINITY, BernoulliGaussianPrior(0.4)), sccs::InputError);
}

TEST(MonteCarlo, EmptyPriorIsExactlyZero) {
  const auto mc = sccs::mmse_mc_oracle(2.0, BernoulliGaussianPrior(0.0), 1000, 5);
  EXPECT_EQ(mc.estimate, 0.0);
  EXPECT_EQ(mc.std_err, 0.0);
}

TEST(MonteCarlo, DensePriorMatchesLinearMmse) {
  const auto mc = sccs::mmse_mc_oracle(4.0, BernoulliGaussianPrior(1.0), 200000, 11);
  EXPECT_LE(std::abs(mc.estimate - 0.2), 3.0 * mc.std_err);
}

TEST(MonteCarlo, DeterministicPerSeed) {
  const BernoulliGaussianPrior prior(0.4);
  const auto a = sccs::mmse_mc_oracle(1.0, prior, 50000, 99);
  const auto b = sccs::mmse_mc_oracle(1.0, prior, 50000, 99);
  const auto c = sccs::mmse_mc_oracle(1.0, prior, 50000, 100);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.std_err, b.std_err);
  EXPECT_NE(a.estimate, c.estimate);
}

TEST(MonteCarlo, RejectsZeroSamples) {
  EXPECT_THROW(sccs::mmse_mc_oracle(1.0, BernoulliGaussianPrior(0.4), 0, 1), sccs::InputError);
}

TEST(Rng, ComplexNormalHasUnitPower) {
  sccs::CounterRng rng(7, "power");
  double acc = 0.0;
  std::complex<double> mean{};
  constexpr int n = 400000;
  for (int i = 0; i < n; ++i) {
    const auto z = rng.complex_normal();
    acc += std::norm(z);
    mean += z;
  }
  EXPECT_NEAR(acc / n, 1.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(std::abs(mean / double(n)), 0.0, 5.0 / std::sqrt(n));
}

TEST(Rng, PermutationIsBijective) {
  sccs::CounterRng rng(3, "perm");
  const auto p = sccs::random_permutation(257, rng);
  std::vector<int> seen(257, 0);
  for (auto k : p) ++seen[k];
  for (int c : seen) EXPECT_EQ(c, 1);
}

TEST(Rng, StreamsDifferByLabelAndIndex) {
  EXPECT_NE(sccs::CounterRng(1, "a").next_u64(), sccs::CounterRng(1, "b").next_u64());
  EXPECT_NE(sccs::CounterRng(1, "a", 0, 1).next_u64(), sccs::CounterRng(1, "a", 1, 0).next_u64());
  EXPECT_EQ(sccs::CounterRng(1, "a", 2, 3).next_u64(), sccs::CounterRng(1, "a", 2, 3).next_u64());
}
