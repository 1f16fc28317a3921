#pragma once

// Wires a model, its variational family and the optimizer together.

#include <optional>
#include <stdexcept>
#include <string>

#include "sadr/linalg.hpp"
#include "sadr/model.hpp"
#include "sadr/optimize.hpp"
#include "sadr/robust.hpp"
#include "sadr/vi.hpp"

namespace sadr {

struct FitOptions {
  std::optional<bool> hybrid;  // unset: hybrid whenever every hyperprior is inverse gamma
  Index factors = 5;
  double d0 = 0.1;
  bool warm_start = false;     // start mu at the penalized mode with tau^2 = 1
  OptimizerOptions optimizer;
  std::optional<RobustOptions> robust;
};

struct FitResult {
  FactorGaussianVA va;
  bool hybrid = false;
  std::optional<WeightVA> weights;
  RunResult run;

  /// Mean of the ELBO trace over the final averaging window.
  double final_elbo(std::size_t window) const {
    const auto& t = run.elbo_trace;
    const std::size_t w = std::min(window, t.size());
    if (w == 0) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (std::size_t i = t.size() - w; i < t.size(); ++i) s += t[i];
    return s / static_cast<double>(w);
  }
};

inline bool resolve_hybrid(const SadrModel& model, const FitOptions& opt) {
  if (!opt.hybrid) return model.gibbs_eligible() && model.layout().p_tau() > 0;
  if (*opt.hybrid && !model.gibbs_eligible())
    throw std::invalid_argument("Gibbs path requires conjugacy (inverse gamma hyperpriors)");
  return *opt.hybrid;
}

namespace detail {

inline void check_pattern(const FactorGaussianVA& va) {
  if (!va.lower_triangular()) throw std::logic_error("factor matrix lost its lower-triangular pattern");
}

struct PlainProblem {
  const SadrModel& model;
  FactorGaussianVA va;
  bool hybrid;
  int draws;

  Index n() const { return model.n(); }
  GradientEstimate estimate(const VectorXd& lambda, const EstimatorContext& ctx, Rng& rng, Rng& gibbs_rng) {
    va.assign(lambda);
    return hybrid ? hybrid_grad_estimate(model, va, draws, rng, gibbs_rng, ctx)
                  : grad_estimate(model, va, draws, rng, ctx);
  }
  void check(const VectorXd& lambda) {
    va.assign(lambda);
    check_pattern(va);
  }
};

struct RobustProblem {
  const SadrModel& model;
  FactorGaussianVA va;
  WeightVA wva;
  bool hybrid;
  int draws;
  RobustOptions options;

  Index n() const { return model.n(); }
  void split(const VectorXd& lambda) {
    va.assign(lambda.head(va.flat_size()));
    wva.assign(lambda.tail(wva.flat_size()));
  }
  GradientEstimate estimate(const VectorXd& lambda, const EstimatorContext& ctx, Rng& rng, Rng& gibbs_rng) {
    split(lambda);
    RobustGradient g = robust_grad_estimate(model, va, wva, draws, rng, options.hyper, ctx, hybrid, &gibbs_rng);
    if (options.freeze_weights) g.grad.tail(wva.flat_size()).setZero();
    return {std::move(g.grad), g.elbo};
  }
  void check(const VectorXd& lambda) {
    split(lambda);
    check_pattern(va);
  }
};

}  // namespace detail

inline FactorGaussianVA initial_va(const SadrModel& model, bool hybrid, const FitOptions& opt) {
  const auto& lay = model.layout();
  const Index p = hybrid ? lay.p_beta : lay.p_theta();
  FactorGaussianVA va(p, std::min(opt.factors, p), opt.d0);
  if (opt.warm_start) va.mu.head(lay.p_beta) = penalized_mode(model);
  return va;
}

/// Runs the optimizer from a given starting point.
inline FitResult run_fit(const SadrModel& model, const FactorGaussianVA& start, bool hybrid, const FitOptions& opt,
                         const std::optional<WeightVA>& weight_start = std::nullopt) {
  FitResult res;
  res.hybrid = hybrid;
  res.va = start;
  if (!opt.robust) {
    detail::PlainProblem prob{model, start, hybrid, opt.optimizer.draws};
    res.run = run_sga(prob, start.flatten(), opt.optimizer);
    res.va.assign(res.run.lambda_hat);
    return res;
  }
  const RobustOptions& ro = *opt.robust;
  ro.hyper.validate();
  WeightVA wva = weight_start ? *weight_start
                              : WeightVA::initial(model.n(), ro.init_weight, ro.init_weight_scale, ro.init_rho);
  detail::RobustProblem prob{model, start, wva, hybrid, opt.optimizer.draws, ro};
  VectorXd lambda(start.flat_size() + wva.flat_size());
  lambda << start.flatten(), wva.flatten();
  res.run = run_sga(prob, lambda, opt.optimizer);
  res.va.assign(res.run.lambda_hat.head(start.flat_size()));
  wva.assign(res.run.lambda_hat.tail(wva.flat_size()));
  res.weights = wva;
  return res;
}

inline FitResult fit(const SadrModel& model, const FitOptions& opt = {}) {
  const bool hybrid = resolve_hybrid(model, opt);
  return run_fit(model, initial_va(model, hybrid, opt), hybrid, opt);
}

/// Posterior draws of beta (S x p_beta) and tau^2 from a fit.
inline PosteriorDraws sample_posterior(const SadrModel& model, const FitResult& fit, Index count, Rng& rng,
                                       Rng& gibbs_rng) {
  return posterior_sample(model, fit.va, fit.hybrid, count, rng, gibbs_rng);
}

}  // namespace sadr
