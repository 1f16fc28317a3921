#pragma once

// Predictive scores from posterior draws: log score, CRPS (energy form),
// WAIC, and normalized quantile residuals.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "sadr/family.hpp"
#include "sadr/linalg.hpp"
#include "sadr/log.hpp"
#include "sadr/model.hpp"
#include "sadr/rng.hpp"

namespace sadr {

/// Maps coefficient vectors to predictors on an arbitrary set of rows.
struct PredictorMap {
  struct Block {
    MatrixXd design;
    int parameter = 0;
    Index offset = 0;
  };
  std::vector<Block> blocks;
  std::array<VectorXd, Family::K> offsets;

  Index n() const { return offsets[0].size(); }

  static PredictorMap from_model(const SadrModel& model) {
    PredictorMap m;
    for (std::size_t t = 0; t < model.terms().size(); ++t)
      m.blocks.push_back({model.terms()[t].block.design, model.terms()[t].parameter, model.layout().beta[t].offset});
    for (int k = 0; k < Family::K; ++k) m.offsets[k] = model.offsets()[static_cast<std::size_t>(k)];
    return m;
  }

  RowMatrixXd predictors(const VectorXd& beta) const {
    RowMatrixXd eta(n(), Family::K);
    for (int k = 0; k < Family::K; ++k) eta.col(k) = offsets[k];
    for (const auto& b : blocks) eta.col(b.parameter) += b.design * beta.segment(b.offset, b.design.cols());
    return eta;
  }
};

/// Predictor values for S posterior draws: eta[k](s, i).
struct PosteriorSamples {
  std::array<MatrixXd, Family::K> eta;

  Index draws() const { return eta[0].rows(); }
  Index n() const { return eta[0].cols(); }
  Eta at(Index s, Index i) const { return {eta[0](s, i), eta[1](s, i)}; }

  static PosteriorSamples from_beta(const PredictorMap& map, const MatrixXd& beta_draws) {
    PosteriorSamples ps;
    for (auto& e : ps.eta) e.resize(beta_draws.rows(), map.n());
    for (Index s = 0; s < beta_draws.rows(); ++s) {
      const RowMatrixXd eta = map.predictors(beta_draws.row(s).transpose());
      for (int k = 0; k < Family::K; ++k) ps.eta[k].row(s) = eta.col(k).transpose();
    }
    return ps;
  }
};

/// l(s, i) = log p(y_i | eta^[s]_i).
inline MatrixXd loglik_matrix(const Family& family, const PosteriorSamples& ps, const VectorXd& y) {
  if (y.size() != ps.n()) throw std::invalid_argument("response length differs from the evaluation rows");
  MatrixXd l(ps.draws(), ps.n());
  for (Index i = 0; i < ps.n(); ++i)
    for (Index s = 0; s < ps.draws(); ++s) l(s, i) = family.log_density(y[i], ps.at(s, i));
  return l;
}

/// Per-observation log mixture density log((1/S) sum_s exp(l(s, i))).
inline VectorXd log_predictive_density(const MatrixXd& loglik) {
  const Index s = loglik.rows();
  if (s < 1) throw std::invalid_argument("at least one posterior draw is required");
  VectorXd out(loglik.cols());
  for (Index i = 0; i < loglik.cols(); ++i) {
    const VectorXd col = loglik.col(i);
    out[i] = log_sum_exp(col.data(), s) - std::log(static_cast<double>(s));
  }
  return out;
}

/// Negatively oriented log score: -(1/n) sum_i log p_mix(y_i).
inline double log_score(const MatrixXd& loglik) {
  const VectorXd lpd = log_predictive_density(loglik);
  for (Index i = 0; i < lpd.size(); ++i)
    if (lpd[i] == -std::numeric_limits<double>::infinity()) {
      warn("zero predictive density at evaluation row " + std::to_string(i));
      break;
    }
  return -lpd.mean();
}

inline double log_score(const Family& family, const PosteriorSamples& ps, const VectorXd& y) {
  return log_score(loglik_matrix(family, ps, y));
}

/// Energy-form CRPS of predictive draws x against y, with x_perm an
/// independent rearrangement of x: mean|x - y| - mean|x - x_perm| / 2.
inline double crps_energy(std::span<const double> x, std::span<const double> x_perm, double y) {
  if (x.empty() || x.size() != x_perm.size()) throw std::invalid_argument("predictive draw sets must be non-empty and equal in size");
  double a = 0.0, b = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    a += std::abs(x[j] - y);
    b += std::abs(x[j] - x_perm[j]);
  }
  const double m = static_cast<double>(x.size());
  return a / m - 0.5 * b / m;
}

/// Same estimator with the pairing drawn from rng: draws are shuffled and each
/// one is paired with its successor, so no draw is paired with itself.
inline double crps_energy(std::span<const double> x, double y, Rng& rng) {
  std::vector<double> a(x.begin(), x.end());
  std::shuffle(a.begin(), a.end(), rng);
  std::vector<double> b(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) b[j] = a[(j + 1) % a.size()];
  return crps_energy(a, b, y);
}

/// Mean CRPS over evaluation rows; J predictive draws per posterior draw.
inline double crps(const Family& family, const PosteriorSamples& ps, const VectorXd& y, int draws_per_sample,
                   Rng& rng) {
  if (family.discrete()) throw std::invalid_argument("CRPS is defined here for continuous families only; use the log score");
  if (draws_per_sample < 1) throw std::invalid_argument("draws per sample must be positive");
  if (y.size() != ps.n()) throw std::invalid_argument("response length differs from the evaluation rows");
  const std::size_t total = static_cast<std::size_t>(ps.draws()) * static_cast<std::size_t>(draws_per_sample);
  std::vector<double> x(total);
  double acc = 0.0;
  for (Index i = 0; i < ps.n(); ++i) {
    std::size_t pos = 0;
    for (Index s = 0; s < ps.draws(); ++s)
      for (int j = 0; j < draws_per_sample; ++j) x[pos++] = family.sample(ps.at(s, i), rng);
    acc += crps_energy(x, y[i], rng);
  }
  return acc / static_cast<double>(ps.n());
}

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;    // l_WAIC
  double p_waic = 0.0;
};

inline WaicResult waic(const MatrixXd& loglik) {
  const Index s = loglik.rows();
  if (s < 2) throw std::invalid_argument("WAIC needs at least two posterior draws");
  WaicResult r;
  r.lppd = log_predictive_density(loglik).sum();
  for (Index i = 0; i < loglik.cols(); ++i) {
    const double m = loglik.col(i).mean();
    r.p_waic += (loglik.col(i).array() - m).square().sum() / static_cast<double>(s - 1);
  }
  r.waic = -2.0 * r.lppd + 2.0 * r.p_waic;
  return r;
}

inline WaicResult waic(const Family& family, const PosteriorSamples& ps, const VectorXd& y) {
  return waic(loglik_matrix(family, ps, y));
}

/// Phi^-1 of the fitted predictive CDF; randomized between F(y-1) and F(y)
/// for discrete families. Values at F = 0 or 1 are clamped to -8 or 8.
inline VectorXd quantile_residuals(const Family& family, const RowMatrixXd& eta, const VectorXd& y, Rng& rng) {
  if (y.size() != eta.rows()) throw std::invalid_argument("response length differs from the predictor rows");
  constexpr double bound = 8.0;
  VectorXd r(y.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bool clamped = false;
  for (Index i = 0; i < y.size(); ++i) {
    const Eta e{eta(i, 0), eta(i, 1)};
    double u = family.cdf(y[i], e);
    if (family.discrete()) {
      const double lo = family.cdf(y[i] - 1.0, e);
      u = lo + unif(rng) * (u - lo);
    }
    if (!(u > 0.0)) {
      r[i] = -bound;
      clamped = true;
    } else if (!(u < 1.0)) {
      r[i] = bound;
      clamped = true;
    } else {
      r[i] = std::clamp(detail::normal_quantile(u), -bound, bound);
    }
  }
  if (clamped) warn("quantile residuals clamped at +-8 where the fitted CDF is 0 or 1");
  return r;
}

}  // namespace sadr
