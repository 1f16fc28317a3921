#pragma once

// Gaussian variational family N(mu, B B' + D^2) with a lower-triangular
// p x k factor matrix B, reparameterized draws theta = mu + B xi + d o eps,
// and unbiased reparameterization-gradient estimators of the ELBO for the
// fixed-form VA (over theta = (beta, log tau^2)) and the hybrid VA (over beta,
// with tau^2 drawn from its inverse gamma full conditional).

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sadr/linalg.hpp"
#include "sadr/log.hpp"
#include "sadr/model.hpp"
#include "sadr/rng.hpp"

namespace sadr {

class FactorGaussianVA {
 public:
  VectorXd mu;
  MatrixXd B;  // p x k, zero strictly above the diagonal
  VectorXd d;

  FactorGaussianVA() = default;
  FactorGaussianVA(Index p, Index k, double d0 = 0.1)
      : mu(VectorXd::Zero(p)), B(MatrixXd::Zero(p, k)), d(VectorXd::Constant(p, d0)) {}

  Index dim() const { return mu.size(); }
  Index factors() const { return B.cols(); }

  /// Number of free entries of B (lower triangle including the diagonal).
  Index vech_size() const { return vech_size(dim(), factors()); }
  static Index vech_size(Index p, Index k) {
    Index s = 0;
    for (Index j = 0; j < k; ++j) s += std::max<Index>(p - j, 0);
    return s;
  }
  Index flat_size() const { return 2 * dim() + vech_size(); }

  /// lambda = (mu, vech(B), d); vech runs column by column over rows i >= j.
  VectorXd flatten() const {
    VectorXd out(flat_size());
    out.head(dim()) = mu;
    Index pos = dim();
    for (Index j = 0; j < factors(); ++j)
      for (Index i = j; i < dim(); ++i) out[pos++] = B(i, j);
    out.tail(dim()) = d;
    return out;
  }

  void assign(const VectorXd& lambda) {
    if (lambda.size() != flat_size()) throw std::invalid_argument("variational parameter size mismatch");
    mu = lambda.head(dim());
    Index pos = dim();
    B.setZero();
    for (Index j = 0; j < factors(); ++j)
      for (Index i = j; i < dim(); ++i) B(i, j) = lambda[pos++];
    d = lambda.tail(dim());
  }

  bool lower_triangular() const {
    for (Index j = 0; j < factors(); ++j)
      for (Index i = 0; i < std::min(j, dim()); ++i)
        if (B(i, j) != 0.0) return false;
    return true;
  }

  MatrixXd covariance() const {
    MatrixXd s = B * B.transpose();
    s.diagonal() += d.cwiseAbs2();
    return s;
  }
};

/// zeta = (xi, eps), both standard normal.
struct NoiseDraw {
  VectorXd xi;
  VectorXd eps;

  static NoiseDraw draw(Rng& rng, Index p, Index k) {
    NoiseDraw z{VectorXd(k), VectorXd(p)};
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Index j = 0; j < k; ++j) z.xi[j] = n01(rng);
    for (Index i = 0; i < p; ++i) z.eps[i] = n01(rng);
    return z;
  }
};

inline VectorXd reparam_sample(const FactorGaussianVA& va, const NoiseDraw& z) {
  return va.mu + va.B * z.xi + va.d.cwiseProduct(z.eps);
}

/// Low-rank identities for Sigma = B B' + D^2:
///   Sigma^-1 = D^-2 - D^-2 B (I + B' D^-2 B)^-1 B' D^-2
///   log|Sigma| = log|I + B' D^-2 B| + 2 sum log|d_i|
/// O(p k^2) to set up, O(p k) per solve.
class WoodburyFactor {
 public:
  explicit WoodburyFactor(const FactorGaussianVA& va) : b_(va.B) {
    const Index p = va.dim(), k = va.factors();
    for (Index i = 0; i < p; ++i)
      if (va.d[i] == 0.0) throw std::domain_error("degenerate diagonal: d_i = 0");
    dinv2_ = va.d.cwiseAbs2().cwiseInverse();
    MatrixXd inner = MatrixXd::Identity(k, k);
    inner.noalias() += b_.transpose() * dinv2_.asDiagonal() * b_;
    llt_.compute(inner);
    logdet_ = 2.0 * va.d.cwiseAbs().array().log().sum();
    if (k > 0) logdet_ += 2.0 * MatrixXd(llt_.matrixL()).diagonal().array().log().sum();
  }

  VectorXd solve(const VectorXd& v) const {
    VectorXd out = dinv2_.cwiseProduct(v);
    if (b_.cols() > 0) out -= dinv2_.cwiseProduct(b_ * llt_.solve(b_.transpose() * out));
    return out;
  }
  double log_det() const { return logdet_; }

  /// log N(theta; mu, Sigma) given r = theta - mu.
  double log_density(const VectorXd& r) const {
    return -0.5 * (static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi) + logdet_ + r.dot(solve(r)));
  }

 private:
  MatrixXd b_;
  VectorXd dinv2_;
  Eigen::LLT<MatrixXd> llt_;
  double logdet_ = 0.0;
};

inline double log_q(const FactorGaussianVA& va, const VectorXd& theta) {
  return WoodburyFactor(va).log_density(theta - va.mu);
}

/// Estimate of the ELBO gradient with respect to lambda = (mu, vech B, d).
struct GradientEstimate {
  VectorXd grad;
  double elbo = 0.0;
};

/// Value of the (possibly tempered/weighted) log target at a draw and its
/// gradient with respect to the variational coordinates.
struct TargetEval {
  double value = 0.0;
  VectorXd grad;
};

namespace detail {

/// Adds (d t / d lambda)' G for one draw into acc, where G is the gradient of
/// log target - log q along the draw.
inline void accumulate_reparam(const FactorGaussianVA& va, const NoiseDraw& z, const VectorXd& g, VectorXd& acc) {
  const Index p = va.dim(), k = va.factors();
  acc.head(p) += g;
  Index pos = p;
  for (Index j = 0; j < k; ++j)
    for (Index i = j; i < p; ++i) acc[pos++] += g[i] * z.xi[j];
  acc.tail(p) += g.cwiseProduct(z.eps);
}

inline bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace detail

/// Single-draw contribution; nullopt when anything is non-finite.
template <class Target>
std::optional<GradientEstimate> reparam_contribution(const FactorGaussianVA& va, const WoodburyFactor& wf,
                                                     const NoiseDraw& z, Target&& target) {
  const VectorXd theta = reparam_sample(va, z);
  TargetEval te = target(theta);
  const VectorXd r = theta - va.mu;
  const VectorXd g = te.grad + wf.solve(r);  // -grad log q = Sigma^-1 (theta - mu)
  GradientEstimate out{VectorXd::Zero(va.flat_size()), te.value - wf.log_density(r)};
  detail::accumulate_reparam(va, z, g, out.grad);
  if (!std::isfinite(out.elbo) || !detail::all_finite(out.grad)) return std::nullopt;
  return out;
}

/// Averages contributions over the supplied noise (no resampling).
template <class Target>
GradientEstimate reparam_gradient(const FactorGaussianVA& va, std::span<const NoiseDraw> noise, Target&& target) {
  if (noise.empty()) throw std::invalid_argument("at least one draw is required");
  const WoodburyFactor wf(va);
  GradientEstimate acc{VectorXd::Zero(va.flat_size()), 0.0};
  for (const auto& z : noise) {
    auto c = reparam_contribution(va, wf, z, target);
    if (!c) throw std::runtime_error("non-finite gradient estimate");
    acc.grad += c->grad;
    acc.elbo += c->elbo;
  }
  const double m = static_cast<double>(noise.size());
  acc.grad /= m;
  acc.elbo /= m;
  return acc;
}

/// Draws M noise vectors from rng; a draw with a non-finite contribution is
/// rejected and redrawn once, a second failure is an error.
template <class Target>
GradientEstimate reparam_gradient(const FactorGaussianVA& va, int draws, Rng& rng, Target&& target) {
  if (draws < 1) throw std::invalid_argument("at least one draw is required");
  const WoodburyFactor wf(va);
  GradientEstimate acc{VectorXd::Zero(va.flat_size()), 0.0};
  for (int m = 0; m < draws; ++m) {
    std::optional<GradientEstimate> c;
    for (int attempt = 0; attempt < 2 && !c; ++attempt) {
      const NoiseDraw z = NoiseDraw::draw(rng, va.dim(), va.factors());
      c = reparam_contribution(va, wf, z, target);
      if (!c) warn("non-finite gradient draw rejected");
    }
    if (!c) throw std::runtime_error("non-finite gradient estimate after resampling");
    acc.grad += c->grad;
    acc.elbo += c->elbo;
  }
  acc.grad /= static_cast<double>(draws);
  acc.elbo /= static_cast<double>(draws);
  return acc;
}

// ---------------------------------------------------------------------------
// Targets

/// Likelihood modifiers applied inside one iteration.
struct EstimatorContext {
  double temperature = 1.0;
  std::span<const Index> rows;  // empty: full data
  const VectorXd* row_weights = nullptr;

  LikelihoodOptions likelihood(Index n) const {
    LikelihoodOptions o;
    o.rows = rows;
    double s = 1.0;
    if (!rows.empty()) s = static_cast<double>(n) / static_cast<double>(rows.size());
    if (temperature != 1.0) s /= temperature;
    o.scale = s;
    o.row_weights = row_weights;
    return o;
  }
};

/// Fixed-form target: log g(theta) over theta = (beta, log tau^2).
inline TargetEval evaluate_fixed_form(const SadrModel& model, const LikelihoodOptions& opt, const VectorXd& theta,
                                      VectorXd* row_logp = nullptr) {
  const auto& lay = model.layout();
  TargetEval te;
  te.grad = VectorXd::Zero(lay.p_theta());
  VectorXd gb = VectorXd::Zero(lay.p_beta);
  te.value = model.log_likelihood(theta.head(lay.p_beta), opt, &gb, row_logp);
  te.grad.head(lay.p_beta) = gb;
  te.value += model.log_prior(theta, &te.grad);
  return te;
}

inline auto fixed_form_target(const SadrModel& model, const EstimatorContext& ctx) {
  return [&model, opt = ctx.likelihood(model.n())](const VectorXd& theta) {
    return evaluate_fixed_form(model, opt, theta);
  };
}

/// Shape and scale of the inverse gamma full conditional of every variance
/// parameter: IG(a + kappa/2, b + beta' K beta / 2).
inline std::vector<std::pair<double, double>> gibbs_parameters(const SadrModel& model, const VectorXd& beta) {
  const auto& lay = model.layout();
  std::vector<std::pair<double, double>> out;
  out.reserve(lay.tau_terms.size());
  for (std::size_t t : lay.tau_terms) {
    const auto* ig = std::get_if<InverseGamma>(&model.terms()[t].prior);
    if (!ig) throw std::invalid_argument("Gibbs path requires conjugacy (inverse gamma hyperpriors)");
    out.emplace_back(ig->a + 0.5 * static_cast<double>(model.terms()[t].block.rank),
                     ig->b + 0.5 * model.quadratic_form(beta, t));
  }
  return out;
}

/// One draw of every tau^2 from its full conditional.
inline VectorXd gibbs_tau(const SadrModel& model, const VectorXd& beta, Rng& rng) {
  const auto params = gibbs_parameters(model, beta);
  VectorXd out(static_cast<Index>(params.size()));
  for (std::size_t j = 0; j < params.size(); ++j) {
    std::gamma_distribution<double> g(params[j].first, 1.0 / params[j].second);
    out[static_cast<Index>(j)] = 1.0 / g(rng);
  }
  return out;
}

/// Row m of the result is a tau^2 draw given row m of beta_draws.
inline MatrixXd gibbs_tau_draws(const SadrModel& model, const MatrixXd& beta_draws, Rng& rng) {
  MatrixXd out(beta_draws.rows(), model.layout().p_tau());
  for (Index m = 0; m < beta_draws.rows(); ++m) out.row(m) = gibbs_tau(model, VectorXd(beta_draws.row(m).transpose()), rng).transpose();
  return out;
}

/// Hybrid target over beta. Draws tau^2 ~ p(tau^2 | beta, y) and evaluates
///   log g(beta, tau^2) - log p(tau^2 | beta, y)
/// with the gradient taken with respect to beta only.
inline TargetEval evaluate_hybrid(const SadrModel& model, const LikelihoodOptions& opt, const VectorXd& beta,
                                  Rng& gibbs_rng, VectorXd* row_logp = nullptr) {
  const auto& lay = model.layout();
  TargetEval te;
  te.grad = VectorXd::Zero(lay.p_beta);
  const auto params = gibbs_parameters(model, beta);
  std::vector<double> tau2(params.size());
  for (std::size_t j = 0; j < params.size(); ++j) {
    std::gamma_distribution<double> g(params[j].first, 1.0 / params[j].second);
    tau2[j] = 1.0 / g(gibbs_rng);
  }
  te.value = model.log_likelihood(beta, opt, &te.grad, row_logp);
  te.value += model.log_prior_beta(beta, tau2, &te.grad);
  for (std::size_t j = 0; j < params.size(); ++j) {
    const std::size_t t = lay.tau_terms[j];
    const auto& ig = std::get<InverseGamma>(model.terms()[t].prior);
    const auto [shape, scale] = params[j];
    te.value += inverse_gamma_logpdf(tau2[j], ig.a, ig.b) - inverse_gamma_logpdf(tau2[j], shape, scale);
    // grad_beta log IG(tau2; shape, b + q/2) = (shape / scale - 1 / tau2) K beta
    const auto seg = lay.beta[t];
    te.grad.segment(seg.offset, seg.size) -=
        (shape / scale - 1.0 / tau2[j]) * (model.terms()[t].block.penalty * beta.segment(seg.offset, seg.size));
  }
  return te;
}

inline auto hybrid_target(const SadrModel& model, const EstimatorContext& ctx, Rng& gibbs_rng) {
  return [&model, &gibbs_rng, opt = ctx.likelihood(model.n())](const VectorXd& beta) {
    return evaluate_hybrid(model, opt, beta, gibbs_rng);
  };
}

/// Fixed-form estimator: M draws of theta, gradient of the (annealed,
/// subsampled) ELBO.
inline GradientEstimate grad_estimate(const SadrModel& model, const FactorGaussianVA& va, int draws, Rng& rng,
                                      const EstimatorContext& ctx = {}) {
  if (va.dim() != model.layout().p_theta()) throw std::invalid_argument("VA dimension must equal p_theta");
  return reparam_gradient(va, draws, rng, fixed_form_target(model, ctx));
}

/// Hybrid estimator over beta; tau^2 drawn per draw from gibbs_rng.
inline GradientEstimate hybrid_grad_estimate(const SadrModel& model, const FactorGaussianVA& va, int draws, Rng& rng,
                                             Rng& gibbs_rng, const EstimatorContext& ctx = {}) {
  if (!model.gibbs_eligible()) throw std::invalid_argument("Gibbs path requires conjugacy (inverse gamma hyperpriors)");
  if (va.dim() != model.layout().p_beta) throw std::invalid_argument("hybrid VA dimension must equal p_beta");
  return reparam_gradient(va, draws, rng, hybrid_target(model, ctx, gibbs_rng));
}

/// Draws from a fitted VA. Fixed-form: theta rows, tau2 = exp(log tau^2).
/// Hybrid: beta rows, tau2 from the Gibbs conditional per draw.
struct PosteriorDraws {
  MatrixXd beta;  // S x p_beta
  MatrixXd tau2;  // S x p_tau
};

inline PosteriorDraws posterior_sample(const SadrModel& model, const FactorGaussianVA& va, bool hybrid, Index count,
                                       Rng& rng, Rng& gibbs_rng) {
  const auto& lay = model.layout();
  PosteriorDraws out{MatrixXd(count, lay.p_beta), MatrixXd(count, lay.p_tau())};
  for (Index s = 0; s < count; ++s) {
    const VectorXd theta = reparam_sample(va, NoiseDraw::draw(rng, va.dim(), va.factors()));
    out.beta.row(s) = theta.head(lay.p_beta).transpose();
    if (hybrid)
      out.tau2.row(s) = gibbs_tau(model, VectorXd(theta.head(lay.p_beta)), gibbs_rng).transpose();
    else
      out.tau2.row(s) = theta.tail(lay.p_tau()).array().exp().matrix().transpose();
  }
  return out;
}

}  // namespace sadr
