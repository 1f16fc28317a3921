#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sadr/design.hpp"
#include "sadr/family.hpp"
#include "sadr/log.hpp"
#include "sadr/prior.hpp"

namespace sadr {

/// A design block attached to one distributional parameter.
struct ModelTerm {
  DesignBlock block;
  Hyperprior prior = InverseGamma{};
  int parameter = 0;
};

/// Position of every coefficient block and log-variance inside
/// theta = (beta, log tau^2).
struct ParamLayout {
  struct BetaSegment {
    Index offset = 0;
    Index size = 0;
  };
  std::vector<BetaSegment> beta;        // one per term, model order
  std::vector<Index> tau_of_term;       // -1 when the term carries no variance parameter
  std::vector<std::size_t> tau_terms;   // term index of each variance parameter
  Index p_beta = 0;

  Index p_tau() const { return static_cast<Index>(tau_terms.size()); }
  Index p_theta() const { return p_beta + p_tau(); }
  Index tau_offset(Index j) const { return p_beta + j; }
};

/// Per-evaluation modifications of the log-likelihood: a row subset, a global
/// multiplier (n / n_sub, 1 / T) and optional per-observation weights.
struct LikelihoodOptions {
  std::span<const Index> rows;
  double scale = 1.0;
  const VectorXd* row_weights = nullptr;
};

class SadrModel {
 public:
  SadrModel(Family family, VectorXd y, std::vector<ModelTerm> terms,
            std::vector<VectorXd> offsets = {})
      : family_(std::move(family)), y_(std::move(y)), terms_(std::move(terms)), offsets_(std::move(offsets)) {
    const Index n = y_.size();
    if (n == 0) throw std::invalid_argument("empty response");
    for (Index i = 0; i < n; ++i)
      if (!family_.in_support(y_[i]))
        throw std::invalid_argument("response value outside the support of family " + family_.name());
    offsets_.resize(Family::K);
    for (auto& o : offsets_) {
      if (o.size() == 0) o = VectorXd::Zero(n);
      if (o.size() != n) throw std::invalid_argument("offset length differs from response length");
    }
    layout_.tau_of_term.assign(terms_.size(), -1);
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      const auto& term = terms_[t];
      if (term.parameter < 0 || term.parameter >= Family::K) throw std::invalid_argument("bad parameter index");
      if (term.block.n() != n)
        throw std::invalid_argument("term '" + term.block.label + "' has a row count different from the response");
      validate(term.prior);
      layout_.beta.push_back({layout_.p_beta, term.block.dim()});
      layout_.p_beta += term.block.dim();
      if (term.block.rank > 0 && !is_fixed(term.prior)) {
        layout_.tau_of_term[t] = static_cast<Index>(layout_.tau_terms.size());
        layout_.tau_terms.push_back(t);
      }
    }
  }

  const Family& family() const { return family_; }
  const VectorXd& response() const { return y_; }
  const std::vector<ModelTerm>& terms() const { return terms_; }
  const std::vector<VectorXd>& offsets() const { return offsets_; }
  const ParamLayout& layout() const { return layout_; }
  Index n() const { return y_.size(); }

  /// True when every variance parameter has an inverse gamma hyperprior.
  bool gibbs_eligible() const {
    for (std::size_t t : layout_.tau_terms)
      if (!is_inverse_gamma(terms_[t].prior)) return false;
    return true;
  }

  auto beta_of(const VectorXd& theta, std::size_t term) const {
    return theta.segment(layout_.beta[term].offset, layout_.beta[term].size);
  }

  /// eta (n x K) = offset + sum of block contributions.
  RowMatrixXd predictors(const VectorXd& beta) const {
    check_beta(beta);
    RowMatrixXd eta(n(), Family::K);
    for (int k = 0; k < Family::K; ++k) eta.col(k) = offsets_[static_cast<std::size_t>(k)];
    for (std::size_t t = 0; t < terms_.size(); ++t)
      eta.col(terms_[t].parameter) += terms_[t].block.design * beta.segment(layout_.beta[t].offset, layout_.beta[t].size);
    return eta;
  }

  /// Scaled log-likelihood sum_i scale * w_i * log p(y_i | eta_i). Adds the
  /// gradient w.r.t. beta into grad_beta (if given) and writes unweighted
  /// per-row log densities into row_logp (length n; only used rows are set).
  double log_likelihood(const VectorXd& beta, const LikelihoodOptions& opt = {}, VectorXd* grad_beta = nullptr,
                        VectorXd* row_logp = nullptr) const {
    check_beta(beta);
    const bool all = opt.rows.empty();
    const Index m = all ? n() : static_cast<Index>(opt.rows.size());
    RowMatrixXd eta(m, Family::K);
    if (all) {
      eta = predictors(beta);
    } else {
      for (Index r = 0; r < m; ++r) {
        const Index i = opt.rows[static_cast<std::size_t>(r)];
        for (int k = 0; k < Family::K; ++k) eta(r, k) = offsets_[static_cast<std::size_t>(k)][i];
      }
      for (std::size_t t = 0; t < terms_.size(); ++t) {
        const auto b = beta.segment(layout_.beta[t].offset, layout_.beta[t].size);
        const int k = terms_[t].parameter;
        for (Index r = 0; r < m; ++r)
          eta(r, k) += terms_[t].block.design.row(opt.rows[static_cast<std::size_t>(r)]).dot(b);
      }
    }
    RowMatrixXd score;
    if (grad_beta) score.resize(m, Family::K);
    double total = 0.0;
    for (Index r = 0; r < m; ++r) {
      const Index i = all ? r : opt.rows[static_cast<std::size_t>(r)];
      const Eta e{eta(r, 0), eta(r, 1)};
      const double lp = family_.log_density(y_[i], e);
      if (row_logp) (*row_logp)[i] = lp;
      const double w = opt.scale * (opt.row_weights ? (*opt.row_weights)[i] : 1.0);
      total += w * lp;
      if (grad_beta) {
        const Eta s = family_.dlogp_deta(y_[i], e);
        score(r, 0) = w * s[0];
        score(r, 1) = w * s[1];
      }
    }
    if (grad_beta) {
      for (std::size_t t = 0; t < terms_.size(); ++t) {
        auto g = grad_beta->segment(layout_.beta[t].offset, layout_.beta[t].size);
        const int k = terms_[t].parameter;
        if (all) {
          g.noalias() += terms_[t].block.design.transpose() * score.col(k);
        } else {
          for (Index r = 0; r < m; ++r)
            g.noalias() += score(r, k) * terms_[t].block.design.row(opt.rows[static_cast<std::size_t>(r)]).transpose();
        }
      }
    }
    return total;
  }

  /// beta' K beta for every term.
  double quadratic_form(const VectorXd& beta, std::size_t term) const {
    const auto b = beta.segment(layout_.beta[term].offset, layout_.beta[term].size);
    return b.dot(terms_[term].block.penalty * b);
  }

  /// log p(beta | tau^2) + log p(log tau^2) in the fixed-form parametrization.
  /// Random-variance blocks contribute -(kappa/2) log tau^2 - q / (2 tau^2)
  /// (the tau-free normalizer is dropped); known-variance blocks contribute
  /// their fully normalized Gaussian log density.
  double log_prior(const VectorXd& theta, VectorXd* grad = nullptr) const {
    check_theta(theta);
    double total = 0.0;
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      const auto& term = terms_[t];
      if (term.block.rank == 0) continue;
      const auto seg = layout_.beta[t];
      const auto b = theta.segment(seg.offset, seg.size);
      const VectorXd kb = term.block.penalty * b;
      const double q = b.dot(kb);
      const double kappa = static_cast<double>(term.block.rank);
      const Index j = layout_.tau_of_term[t];
      if (j < 0) {
        const double tau2 = std::get<FixedVariance>(term.prior).tau2;
        total += fixed_normalizer(term) - 0.5 * q / tau2;
        if (grad) grad->segment(seg.offset, seg.size) -= kb / tau2;
        continue;
      }
      const double lt = theta[layout_.tau_offset(j)];
      const double prec = std::exp(-lt);
      const auto hp = log_scale_hyperprior(term.prior, lt);
      total += -0.5 * kappa * lt - 0.5 * prec * q + hp.value;
      if (grad) {
        grad->segment(seg.offset, seg.size) -= prec * kb;
        (*grad)[layout_.tau_offset(j)] += -0.5 * kappa + 0.5 * prec * q + hp.derivative;
      }
    }
    return total;
  }

  /// log p(beta | tau^2) with tau^2 on its natural scale (hybrid path). Known
  /// variance blocks are included exactly as in log_prior.
  double log_prior_beta(const VectorXd& beta, std::span<const double> tau2, VectorXd* grad_beta = nullptr) const {
    double total = 0.0;
    for (std::size_t t = 0; t < terms_.size(); ++t) {
      const auto& term = terms_[t];
      if (term.block.rank == 0) continue;
      const auto seg = layout_.beta[t];
      const auto b = beta.segment(seg.offset, seg.size);
      const VectorXd kb = term.block.penalty * b;
      const double q = b.dot(kb);
      const Index j = layout_.tau_of_term[t];
      double v;
      if (j < 0) {
        v = std::get<FixedVariance>(term.prior).tau2;
        total += fixed_normalizer(term);
      } else {
        v = tau2[static_cast<std::size_t>(j)];
        total += -0.5 * static_cast<double>(term.block.rank) * std::log(v);
      }
      total -= 0.5 * q / v;
      if (grad_beta) grad_beta->segment(seg.offset, seg.size) -= kb / v;
    }
    return total;
  }

  double log_joint(const VectorXd& theta, const LikelihoodOptions& opt = {}, VectorXd* grad = nullptr) const {
    check_theta(theta);
    if (grad) grad->setZero(layout_.p_theta());
    VectorXd gb;
    if (grad) gb = VectorXd::Zero(layout_.p_beta);
    const VectorXd beta = theta.head(layout_.p_beta);
    double v = log_likelihood(beta, opt, grad ? &gb : nullptr);
    if (grad) grad->head(layout_.p_beta) = gb;
    v += log_prior(theta, grad);
    if (!std::isfinite(v)) {
      warn("non-finite log joint density");
      return -std::numeric_limits<double>::infinity();
    }
    return v;
  }

  VectorXd grad_log_joint(const VectorXd& theta, const LikelihoodOptions& opt = {}) const {
    VectorXd g;
    log_joint(theta, opt, &g);
    return g;
  }

 private:
  static double fixed_normalizer(const ModelTerm& term) {
    const double tau2 = std::get<FixedVariance>(term.prior).tau2;
    const double kappa = static_cast<double>(term.block.rank);
    return 0.5 * term.block.log_pdet - 0.5 * kappa * (std::log(2.0 * std::numbers::pi) + std::log(tau2));
  }
  void check_beta(const VectorXd& beta) const {
    if (beta.size() != layout_.p_beta && beta.size() != layout_.p_theta())
      throw std::invalid_argument("coefficient vector does not match the layout");
  }
  void check_theta(const VectorXd& theta) const {
    if (theta.size() != layout_.p_theta()) throw std::invalid_argument("theta does not match the layout");
  }

  Family family_;
  VectorXd y_;
  std::vector<ModelTerm> terms_;
  std::vector<VectorXd> offsets_;
  ParamLayout layout_;
};

/// Posterior mode of beta for fixed smoothing variances (all tau^2 set to
/// `tau2`), by gradient ascent with backtracking. Used as an optional warm start.
inline VectorXd penalized_mode(const SadrModel& model, double tau2 = 1.0, int iterations = 200) {
  const auto& lay = model.layout();
  std::vector<double> t2(static_cast<std::size_t>(lay.p_tau()), tau2);
  auto objective = [&](const VectorXd& b, VectorXd* g) {
    if (g) g->setZero(lay.p_beta);
    double v = model.log_likelihood(b, {}, g);
    v += model.log_prior_beta(b, t2, g);
    return v;
  };
  VectorXd beta = VectorXd::Zero(lay.p_beta);
  VectorXd g(lay.p_beta);
  double f = objective(beta, &g);
  double step = 1.0 / std::max(1.0, static_cast<double>(model.n()));
  for (int it = 0; it < iterations && std::isfinite(f); ++it) {
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      const VectorXd cand = beta + step * g;
      const double fc = objective(cand, nullptr);
      if (std::isfinite(fc) && fc > f) {
        beta = cand;
        f = objective(beta, &g);
        step *= 1.5;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return beta;
}

}  // namespace sadr
