#include <gtest/gtest.h>

#include <numbers>

#include "helpers.hpp"

namespace sadr {
namespace {

const Family kGaussian = Family(Gaussian{});
const Family kGamma = Family(Gamma{});
const Family kNegBin = Family(NegativeBinomial{});

TEST(Family, GaussianStandardNormalAtMode) {
  EXPECT_NEAR(kGaussian.log_density(0.0, {0.0, 0.0}), -0.5 * std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(Family, GammaWithUnitShapeIsExponential) {
  EXPECT_NEAR(kGamma.log_density(1.0, {0.0, 0.0}), -1.0, 1e-12);
  EXPECT_NEAR(kGamma.quantile(0.5, {0.0, 0.0}), std::log(2.0), 1e-10);
}

TEST(Family, NegBinSumsToOne) {
  const Eta eta{std::log(2.0), 0.0};
  double s = 0.0;
  for (int y = 0; y <= 500; ++y) s += std::exp(kNegBin.log_density(y, eta));
  EXPECT_NEAR(s, 1.0, 1e-8);
}

TEST(Family, GaussianScoreByHand) {
  EXPECT_EQ(kGaussian.dlogp_deta(0.3, {0.3, 0.4})[0], 0.0);
  EXPECT_NEAR(kGaussian.dlogp_deta(1.0, {0.0, 0.0})[0], 1.0, 1e-14);
}

TEST(Family, GaussianCdfAtMeanIsHalf) { EXPECT_NEAR(kGaussian.cdf(1.5, {1.5, 0.7}), 0.5, 1e-15); }

TEST(Family, NegBinCdfMonotone) {
  const Eta eta{std::log(7.0), std::log(0.8)};
  double prev = 0.0;
  for (int y = 0; y <= 100; ++y) {
    const double c = kNegBin.cdf(y, eta);
    EXPECT_GE(c, prev);
    prev = c;
  }
  EXPECT_NEAR(prev, 1.0, 1e-4);
}

TEST(Family, ScoresMatchFiniteDifferences) {
  Rng rng = substream(11, "family");
  std::normal_distribution<double> nd(0.0, 0.7);
  for (const Family& f : {kGaussian, kGamma, kNegBin}) {
    for (int rep = 0; rep < 50; ++rep) {
      const Eta eta{nd(rng), nd(rng)};
      const double y = f.sample(eta, rng);
      const Eta s = f.dlogp_deta(y, eta);
      for (int k = 0; k < 2; ++k) {
        const double h = 1e-6;
        Eta a = eta, b = eta;
        a[k] += h;
        b[k] -= h;
        const double fd = (f.log_density(y, a) - f.log_density(y, b)) / (2.0 * h);
        EXPECT_LT(std::abs(s[k] - fd) / (1.0 + std::abs(s[k])), 1e-5) << f.name() << " k=" << k;
      }
    }
  }
}

TEST(Family, QuantileInvertsCdf) {
  Rng rng = substream(12, "family");
  std::normal_distribution<double> nd(0.0, 0.5);
  for (const Family& f : {kGaussian, kGamma}) {
    for (int rep = 0; rep < 50; ++rep) {
      const Eta eta{nd(rng), nd(rng)};
      const double y = f.sample(eta, rng);
      EXPECT_NEAR(f.quantile(f.cdf(y, eta), eta), y, 1e-6 * std::max(1.0, std::abs(y))) << f.name();
    }
  }
}

TEST(Family, NegBinQuantileIsSmallestCoveringCount) {
  const Eta eta{std::log(4.0), std::log(2.0)};
  for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) {
    const double q = kNegBin.quantile(p, eta);
    EXPECT_GE(kNegBin.cdf(q, eta), p);
    if (q > 0) {
      EXPECT_LT(kNegBin.cdf(q - 1.0, eta), p);
    }
  }
}

TEST(Family, ContinuousDensitiesIntegrateToOne) {
  auto integrate = [](const Family& f, const Eta& eta, double lo, double hi) {
    const int m = 200000;
    const double h = (hi - lo) / m;
    double s = 0.0;
    for (int i = 0; i <= m; ++i) s += (i == 0 || i == m ? 0.5 : 1.0) * std::exp(f.log_density(lo + i * h, eta));
    return s * h;
  };
  EXPECT_NEAR(integrate(kGaussian, {0.4, std::log(1.3)}, -15.0, 15.0), 1.0, 1e-4);
  EXPECT_NEAR(integrate(kGamma, {std::log(2.0), std::log(3.0)}, 1e-12, 60.0), 1.0, 1e-4);
}

TEST(Family, SamplerMeansWithinThreeStandardErrors) {
  const int m = 100000;
  const std::vector<std::pair<Family, Eta>> cases{
      {kGaussian, {1.0, std::log(2.0)}}, {kGamma, {std::log(3.0), std::log(0.7)}}, {kNegBin, {std::log(5.0), 0.0}}};
  Rng rng = substream(13, "family");
  for (const auto& [f, eta] : cases) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) s += f.sample(eta, rng);
    const double se = std::sqrt(f.variance(eta) / m);
    EXPECT_LT(std::abs(s / m - f.mean(eta)), 3.0 * se) << f.name();
  }
}

TEST(Family, SamplerDeterministicGivenSeed) {
  for (const Family& f : {kGaussian, kGamma, kNegBin}) {
    Rng a = substream(5, "x"), b = substream(5, "x");
    for (int i = 0; i < 20; ++i) EXPECT_EQ(f.sample({0.2, 0.1}, a), f.sample({0.2, 0.1}, b));
  }
}

TEST(Family, InvalidInputs) {
  for (const Family& f : {kGaussian, kGamma, kNegBin}) {
    EXPECT_THROW(f.quantile(0.0, {0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(f.quantile(1.0, {0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(f.log_density(std::nan(""), {0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(f.log_density(1.0, {std::nan(""), 0.0}), std::invalid_argument);
  }
  EXPECT_THROW(Family::from_name("weibull"), std::invalid_argument);
}

TEST(Family, ZeroDensityOutsideSupport) {
  EXPECT_EQ(kGamma.log_density(-1.0, {0.0, 0.0}), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(kNegBin.log_density(1.5, {0.0, 0.0}), -std::numeric_limits<double>::infinity());
  EXPECT_FALSE(kNegBin.in_support(-1.0));
  EXPECT_TRUE(kGaussian.in_support(-1.0));
}

TEST(Family, NamesAndLinks) {
  EXPECT_EQ(Family::from_name("normal").name(), "gaussian");
  EXPECT_EQ(Family::from_name("negative_binomial").name(), "negbin");
  EXPECT_EQ(kNegBin.parameter_name(1), "delta");
  EXPECT_EQ(kGaussian.link(0).kind, LinkKind::identity);
  EXPECT_EQ(kGamma.link(1).kind, LinkKind::log);
  EXPECT_TRUE(kNegBin.discrete());
  EXPECT_NEAR(kGamma.variance({std::log(2.0), std::log(4.0)}), 1.0, 1e-12);
}

}  // namespace
}  // namespace sadr
