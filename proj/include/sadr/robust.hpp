#pragma once

// Bayesian data re-weighting: every observation's log-likelihood is multiplied
// by w_i in (0, 1), w_i = logit^-1(w~_i) with w_i ~ Beta(a_w, b_w). The
// variational family is q(theta) x N(w~; mu_w, diag(exp(rho)^2)).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "sadr/linalg.hpp"
#include "sadr/model.hpp"
#include "sadr/rng.hpp"
#include "sadr/vi.hpp"

namespace sadr {

struct BetaHyper {
  double a_w = 0.2;
  double b_w = 0.01;

  void validate() const {
    if (!(a_w > 0.0 && b_w > 0.0)) throw std::invalid_argument("beta hyperparameters must be positive");
  }
  double log_normalizer() const { return std::lgamma(a_w + b_w) - std::lgamma(a_w) - std::lgamma(b_w); }
};

inline double weight_transform(double wt) {
  if (wt >= 0.0) return 1.0 / (1.0 + std::exp(-wt));
  const double e = std::exp(wt);
  return e / (1.0 + e);
}

inline double weight_inverse(double w) {
  if (!(w > 0.0 && w < 1.0)) throw std::domain_error("weight must lie strictly inside (0, 1)");
  return std::log(w) - std::log1p(-w);
}

/// log w and log(1 - w) computed from w~ without cancellation.
struct LogWeight {
  double log_w;
  double log_1mw;
};
inline LogWeight log_weight(double wt) {
  const auto softplus = [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  return {-softplus(-wt), -softplus(wt)};
}

/// Diagonal Gaussian on the logit weights; rho holds log standard deviations.
struct WeightVA {
  VectorXd mu;
  VectorXd rho;

  WeightVA() = default;
  WeightVA(Index n, double mu0, double rho0) : mu(VectorXd::Constant(n, mu0)), rho(VectorXd::Constant(n, rho0)) {}

  /// mu0 read either on the weight scale (default, 0.98 -> logit(0.98)) or on the logit scale.
  static WeightVA initial(Index n, double mu0 = 0.98, bool weight_scale = true, double rho0 = 1.0) {
    return WeightVA(n, weight_scale ? weight_inverse(mu0) : mu0, rho0);
  }

  Index size() const { return mu.size(); }
  Index flat_size() const { return 2 * size(); }
  VectorXd flatten() const {
    VectorXd out(flat_size());
    out << mu, rho;
    return out;
  }
  void assign(const VectorXd& lambda) {
    if (lambda.size() != flat_size()) throw std::invalid_argument("weight parameter size mismatch");
    mu = lambda.head(size());
    rho = lambda.tail(size());
  }
  VectorXd sd() const { return rho.array().exp().matrix(); }
};

/// Weighted target value and gradients. grad_theta follows the layout of the
/// theta (fixed-form) or beta (hybrid) block.
struct AugmentedEval {
  double value = 0.0;
  VectorXd grad_theta;
  VectorXd grad_wt;
};

namespace detail {

/// Adds the weight prior, the logit Jacobian and the likelihood-weight
/// derivative given per-row log densities; `scale` is the likelihood factor
/// (subsampling and temperature), `rows` the rows that entered the likelihood.
inline void add_weight_terms(const BetaHyper& hyper, const VectorXd& wt, const VectorXd& row_logp,
                             std::span<const Index> rows, double scale, AugmentedEval& out) {
  const Index n = wt.size();
  out.grad_wt = VectorXd::Zero(n);
  for (Index i = 0; i < n; ++i) {
    const auto [lw, l1w] = log_weight(wt[i]);
    const double w = std::exp(lw);
    out.value += hyper.log_normalizer() + hyper.a_w * lw + hyper.b_w * l1w;
    out.grad_wt[i] = hyper.a_w * (1.0 - w) - hyper.b_w * w;
  }
  auto add_row = [&](Index i) {
    const double w = weight_transform(wt[i]);
    out.grad_wt[i] += scale * row_logp[i] * w * (1.0 - w);
  };
  if (rows.empty())
    for (Index i = 0; i < n; ++i) add_row(i);
  else
    for (Index i : rows) add_row(i);
}

inline VectorXd weights_of(const VectorXd& wt) { return wt.unaryExpr([](double v) { return weight_transform(v); }); }

}  // namespace detail

/// log p(y | theta, w) + log p(theta) + log p(w) + log |dw/dw~| with
/// theta = (beta, log tau^2).
inline AugmentedEval augmented_log_joint(const SadrModel& model, const VectorXd& theta, const VectorXd& wt,
                                         const BetaHyper& hyper = {}, const LikelihoodOptions& base = {}) {
  hyper.validate();
  if (wt.size() != model.n()) throw std::invalid_argument("weight vector length differs from n");
  const VectorXd w = detail::weights_of(wt);
  LikelihoodOptions opt = base;
  opt.row_weights = &w;
  VectorXd row_logp = VectorXd::Zero(model.n());
  const TargetEval te = evaluate_fixed_form(model, opt, theta, &row_logp);
  AugmentedEval out{te.value, te.grad, {}};
  detail::add_weight_terms(hyper, wt, row_logp, opt.rows, opt.scale, out);
  return out;
}

/// Block factor of the joint VA over (theta, w~): the weight rows of B are zero.
struct StackedFactor {
  VectorXd mu;
  MatrixXd B;
  VectorXd d;
};

inline StackedFactor stacked_factor(const FactorGaussianVA& va, const WeightVA& wva) {
  const Index p = va.dim(), n = wva.size();
  StackedFactor s{VectorXd(p + n), MatrixXd::Zero(p + n, va.factors()), VectorXd(p + n)};
  s.mu << va.mu, wva.mu;
  s.B.topRows(p) = va.B;
  s.d << va.d, wva.sd();
  return s;
}

struct RobustGradient {
  VectorXd grad;  // (lambda_theta, mu_w, rho)
  double elbo = 0.0;
};

struct RobustOptions {
  BetaHyper hyper;
  double init_weight = 0.98;
  bool init_weight_scale = true;
  double init_rho = 1.0;
  bool freeze_weights = false;  // keep the weight block at its initial value
};

/// Reparameterization gradient of the augmented ELBO for both blocks. With
/// hybrid = true the theta block is over beta and tau^2 is drawn from its full
/// conditional via gibbs_rng.
inline RobustGradient robust_grad_estimate(const SadrModel& model, const FactorGaussianVA& va, const WeightVA& wva,
                                           int draws, Rng& rng, const BetaHyper& hyper = {},
                                           const EstimatorContext& ctx = {}, bool hybrid = false,
                                           Rng* gibbs_rng = nullptr) {
  hyper.validate();
  if (draws < 1) throw std::invalid_argument("at least one draw is required");
  const Index n = model.n();
  if (wva.size() != n) throw std::invalid_argument("weight VA length differs from n");
  const Index want = hybrid ? model.layout().p_beta : model.layout().p_theta();
  if (va.dim() != want) throw std::invalid_argument("VA dimension does not match the model layout");
  if (hybrid && !gibbs_rng) throw std::invalid_argument("hybrid path needs a Gibbs stream");
  const WoodburyFactor wf(va);
  const VectorXd sd = wva.sd();
  const Index pt = va.flat_size();
  RobustGradient acc{VectorXd::Zero(pt + 2 * n), 0.0};
  const LikelihoodOptions base = ctx.likelihood(n);

  for (int m = 0; m < draws; ++m) {
    bool ok = false;
    for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
      const NoiseDraw z = NoiseDraw::draw(rng, va.dim(), va.factors());
      VectorXd eps_w(n);
      fill_standard_normal(rng, eps_w);
      const VectorXd wt = wva.mu + sd.cwiseProduct(eps_w);
      const VectorXd w = detail::weights_of(wt);
      LikelihoodOptions opt = base;
      opt.row_weights = &w;
      VectorXd row_logp = VectorXd::Zero(n);
      auto target = [&](const VectorXd& theta) {
        return hybrid ? evaluate_hybrid(model, opt, theta, *gibbs_rng, &row_logp)
                      : evaluate_fixed_form(model, opt, theta, &row_logp);
      };
      auto c = reparam_contribution(va, wf, z, target);
      if (!c) {
        warn("non-finite gradient draw rejected");
        continue;
      }
      AugmentedEval ae;
      detail::add_weight_terms(hyper, wt, row_logp, opt.rows, opt.scale, ae);
      // entropy of the weight block along the path: -log q = sum(rho + eps^2/2) + const
      const double neg_log_qw =
          wva.rho.sum() + 0.5 * eps_w.squaredNorm() + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
      VectorXd g(pt + 2 * n);
      g.head(pt) = c->grad;
      g.segment(pt, n) = ae.grad_wt;
      g.tail(n) = (ae.grad_wt.cwiseProduct(sd).cwiseProduct(eps_w).array() + 1.0).matrix();
      const double elbo = c->elbo + ae.value + neg_log_qw;
      if (!std::isfinite(elbo) || !g.allFinite()) {
        warn("non-finite gradient draw rejected");
        continue;
      }
      acc.grad += g;
      acc.elbo += elbo;
      ok = true;
    }
    if (!ok) throw std::runtime_error("non-finite gradient estimate after resampling");
  }
  acc.grad /= static_cast<double>(draws);
  acc.elbo /= static_cast<double>(draws);
  return acc;
}

/// Posterior mean weights: MC average of logit^-1(w~) over `draws` VA draws,
/// kept strictly inside (0, 1).
inline VectorXd fitted_weights(const WeightVA& wva, Rng& rng, Index draws = 10000) {
  const Index n = wva.size();
  const VectorXd sd = wva.sd();
  VectorXd acc = VectorXd::Zero(n);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Index s = 0; s < draws; ++s)
    for (Index i = 0; i < n; ++i) acc[i] += weight_transform(wva.mu[i] + sd[i] * n01(rng));
  acc /= static_cast<double>(draws);
  const double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return acc.unaryExpr([&](double v) { return std::clamp(v, lo, hi); });
}

}  // namespace sadr
