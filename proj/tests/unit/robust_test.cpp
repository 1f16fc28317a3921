#include <gtest/gtest.h>

#include "helpers.hpp"

namespace sadr {
namespace {

SadrModel toy(Rng& rng, Index n, double shift_last = 0.0) {
  const auto x = test::uniform_column(rng, static_cast<std::size_t>(n));
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = 1.0 + x[static_cast<std::size_t>(i)] + 0.5 * standard_normal(rng);
  y[n - 1] += shift_last;
  return SadrModel(Family(Gaussian{}), y,
                   {{build_intercept(n), InverseGamma{}, 0},
                    {build_linear(std::span<const double>(x)), InverseGamma{}, 0},
                    {build_intercept(n), InverseGamma{}, 1}});
}

TEST(WeightTransform, ValuesAndRoundTrip) {
  EXPECT_EQ(weight_transform(0.0), 0.5);
  EXPECT_EQ(weight_transform(800.0), 1.0);
  EXPECT_EQ(weight_transform(-800.0), 0.0);
  EXPECT_NEAR(weight_inverse(0.98), std::log(49.0), 1e-12);
  EXPECT_NEAR(weight_inverse(0.98), 3.8918, 1e-4);
  for (double v : {-30.0, -2.5, 0.0, 1e-3, 1.0, 4.0}) EXPECT_NEAR(weight_inverse(weight_transform(v)), v, 1e-12);
  for (double w : {1e-9, 0.3, 0.5, 0.999}) EXPECT_NEAR(weight_transform(weight_inverse(w)), w, 1e-12);
  EXPECT_THROW(weight_inverse(0.0), std::domain_error);
  EXPECT_THROW(weight_inverse(1.0), std::domain_error);
}

TEST(WeightTransform, LogWeightIsStable) {
  for (double v : {-50.0, -3.0, 0.0, 2.0, 50.0}) {
    const auto lw = log_weight(v);
    const double w = weight_transform(v);
    EXPECT_NEAR(std::exp(lw.log_w), w, 1e-15);
    EXPECT_NEAR(std::exp(lw.log_1mw), 1.0 - w, 1e-15);
  }
  EXPECT_NEAR(log_weight(-800.0).log_w, -800.0, 1e-9);
}

TEST(WeightVA, InitialValues) {
  const WeightVA a = WeightVA::initial(4);
  EXPECT_NEAR(a.mu[2], std::log(49.0), 1e-12);
  EXPECT_EQ(a.rho[0], 1.0);
  const WeightVA b = WeightVA::initial(3, 0.98, false);
  EXPECT_EQ(b.mu[0], 0.98);
  WeightVA c(3, 0.0, 0.0);
  c.assign(a.flatten().head(6) * 0 + VectorXd::LinSpaced(6, 1, 6));
  EXPECT_EQ(c.rho[2], 6.0);
}

TEST(AugmentedLogJoint, UnitWeightsRecoverLikelihood) {
  Rng rng = substream(71, "robust");
  const SadrModel m = toy(rng, 20);
  VectorXd theta(3);
  theta << 0.8, 1.1, std::log(0.6);
  const BetaHyper h;
  const VectorXd wt = VectorXd::Constant(20, 40.0);
  double weight_part = 0.0;
  for (Index i = 0; i < 20; ++i) {
    const auto lw = log_weight(wt[i]);
    weight_part += h.log_normalizer() + h.a_w * lw.log_w + h.b_w * lw.log_1mw;
  }
  EXPECT_NEAR(augmented_log_joint(m, theta, wt, h).value - weight_part, m.log_joint(theta), 1e-10);
}

TEST(AugmentedLogJoint, UniformPriorLeavesOnlyJacobian) {
  Rng rng = substream(72, "robust");
  const SadrModel m = toy(rng, 10);
  VectorXd theta(3);
  theta << 0.8, 1.1, std::log(0.6);
  const BetaHyper flat{1.0, 1.0};
  EXPECT_NEAR(flat.log_normalizer(), 0.0, 1e-15);
  const VectorXd wt = VectorXd::Zero(10);
  LikelihoodOptions opt;
  const VectorXd half = VectorXd::Constant(10, 0.5);
  opt.row_weights = &half;
  const double weighted = m.log_joint(theta, opt);
  EXPECT_NEAR(augmented_log_joint(m, theta, wt, flat).value - weighted, 10 * 2.0 * std::log(0.5), 1e-10);
}

TEST(AugmentedLogJoint, GradientsMatchFiniteDifferences) {
  Rng rng = substream(73, "robust");
  const SadrModel m = toy(rng, 15, 4.0);
  VectorXd theta(3);
  theta << 0.5, 0.9, std::log(0.7);
  VectorXd wt(15);
  fill_standard_normal(rng, wt);
  wt *= 2.0;
  const AugmentedEval e = augmented_log_joint(m, theta, wt);
  const VectorXd fw = test::numeric_gradient([&](const VectorXd& v) { return augmented_log_joint(m, theta, v).value; }, wt);
  const VectorXd ft = test::numeric_gradient([&](const VectorXd& v) { return augmented_log_joint(m, v, wt).value; }, theta);
  EXPECT_LT(test::max_rel_error(e.grad_wt, fw), 1e-5);
  EXPECT_LT(test::max_rel_error(e.grad_theta, ft), 1e-5);
}

TEST(StackedFactor, WeightRowsAreZero) {
  Rng rng = substream(74, "robust");
  FactorGaussianVA va(3, 2);
  VectorXd lam = va.flatten();
  fill_standard_normal(rng, lam);
  va.assign(lam);
  const WeightVA w = WeightVA::initial(5);
  const StackedFactor s = stacked_factor(va, w);
  EXPECT_EQ(s.B.rows(), 8);
  EXPECT_EQ(s.B.bottomRows(5), MatrixXd::Zero(5, 2));
  EXPECT_EQ(s.B.topRows(3), va.B);
  EXPECT_NEAR(s.d[7], std::exp(1.0), 1e-15);
  EXPECT_NEAR(s.mu[3], std::log(49.0), 1e-12);
}

TEST(RobustGradient, NearUnitWeightsMatchPlainGradient) {
  Rng rng = substream(75, "robust");
  const SadrModel m = toy(rng, 12);
  FactorGaussianVA va(3, 2, 0.2);
  va.mu << 1.0, 1.0, std::log(0.5);
  WeightVA w(12, 40.0, -30.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng a = substream(seed, "draws"), b = substream(seed, "draws");
    const RobustGradient r = robust_grad_estimate(m, va, w, 1, a);
    const GradientEstimate p = grad_estimate(m, va, 1, b);
    const VectorXd gt = r.grad.head(va.flat_size());
    EXPECT_LT((gt - p.grad).cwiseAbs().maxCoeff(), 1e-3 * (1.0 + p.grad.cwiseAbs().maxCoeff()));
  }
}

TEST(RobustGradient, WeightBlockUnbiased) {
  Rng rng = substream(76, "robust");
  const SadrModel m = toy(rng, 5, 3.0);
  FactorGaussianVA va(3, 1, 0.1);
  va.mu << 1.0, 1.0, std::log(0.5);
  WeightVA w(5, 1.0, -0.5);
  const Index off = va.flat_size();
  auto moments = [&](int count, Rng& r) {
    VectorXd s = VectorXd::Zero(10), s2 = VectorXd::Zero(10);
    for (int i = 0; i < count; ++i) {
      const VectorXd g = robust_grad_estimate(m, va, w, 1, r).grad.tail(10);
      s += g;
      s2 += g.cwiseAbs2();
    }
    s /= count;
    VectorXd sd = (s2 / count - s.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    return std::make_pair(s, sd);
  };
  (void)off;
  Rng r1 = substream(1, "small"), r2 = substream(2, "reference");
  const auto [small, sd] = moments(10000, r1);
  const auto [ref, sd_ref] = moments(1000000, r2);
  for (Index i = 0; i < 10; ++i) {
    const double se = std::sqrt(sd[i] * sd[i] / 1e4 + sd_ref[i] * sd_ref[i] / 1e6);
    EXPECT_LT(std::abs(small[i] - ref[i]), 3.0 * se) << i;
  }
}

TEST(RobustGradient, Validation) {
  Rng rng = substream(77, "robust");
  const SadrModel m = toy(rng, 6);
  FactorGaussianVA va(3, 1);
  EXPECT_THROW(robust_grad_estimate(m, va, WeightVA(5, 0.0, 0.0), 1, rng), std::invalid_argument);
  EXPECT_THROW(robust_grad_estimate(m, va, WeightVA(6, 0.0, 0.0), 1, rng, BetaHyper{0.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(robust_grad_estimate(m, va, WeightVA(6, 0.0, 0.0), 0, rng), std::invalid_argument);
}

TEST(FittedWeights, StrictlyInsideUnitInterval) {
  WeightVA w(4, 0.0, -5.0);
  w.mu << -1000.0, -2.0, 3.0, 1000.0;
  Rng rng = substream(78, "robust");
  const VectorXd f = fitted_weights(w, rng, 200);
  EXPECT_GT(f.minCoeff(), 0.0);
  EXPECT_LT(f.maxCoeff(), 1.0);
  EXPECT_NEAR(f[1], weight_transform(-2.0), 1e-3);
}

TEST(RobustFit, FrozenUnitWeightsReproducePlainFit) {
  Rng rng = substream(79, "robust");
  const SadrModel m = toy(rng, 100);
  FitOptions plain;
  plain.optimizer.draws = 5;
  plain.optimizer.max_iterations = 8000;
  FitOptions frozen = plain;
  RobustOptions ro;
  ro.hyper = BetaHyper{1.0, 1.0};
  ro.init_weight = 40.0;
  ro.init_weight_scale = false;
  ro.init_rho = -20.0;
  ro.freeze_weights = true;
  frozen.robust = ro;
  const FitResult a = fit(m, plain);
  const FitResult b = fit(m, frozen);
  ASSERT_TRUE(b.weights.has_value());
  EXPECT_EQ(b.weights->mu, VectorXd::Constant(100, 40.0));
  EXPECT_LT((a.va.mu.head(2) - b.va.mu.head(2)).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(RobustFit, ShiftedTwinIsDownWeighted) {
  Rng rng = substream(80, "robust");
  const Index n = 150;
  const auto x = test::uniform_column(rng, static_cast<std::size_t>(n));
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = 1.0 + x[static_cast<std::size_t>(i)] + 0.5 * standard_normal(rng);
  y[n - 1] = y[n - 2] + 10.0 * 0.5;
  std::vector<double> xs = x;
  xs[static_cast<std::size_t>(n - 1)] = xs[static_cast<std::size_t>(n - 2)];
  SadrModel m(Family(Gaussian{}), y,
              {{build_intercept(n), InverseGamma{}, 0},
               {build_linear(std::span<const double>(xs)), InverseGamma{}, 0},
               {build_intercept(n), InverseGamma{}, 1}});
  FitOptions fo;
  fo.optimizer.draws = 5;
  fo.robust = RobustOptions{};
  const FitResult r = fit(m, fo);
  Rng wr = substream(1, "weights");
  const VectorXd w = fitted_weights(*r.weights, wr);
  EXPECT_LT(w[n - 1], w[n - 2]);
  VectorXd clean = w.head(n - 2);
  std::sort(clean.data(), clean.data() + clean.size());
  EXPECT_GT(clean[clean.size() / 2], 0.9);
}

}  // namespace
}  // namespace sadr
