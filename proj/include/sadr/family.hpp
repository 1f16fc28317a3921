#pragma once

// Response distributions with K = 2 linked parameters. Every family evaluates
// on the predictor scale: eta -> theta_k = h_k^{-1}(eta_k), and returns scores
// d log p / d eta chain-ruled through the response functions.

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "sadr/rng.hpp"

namespace sadr {

enum class LinkKind { identity, log, logit };

struct Link {
  LinkKind kind = LinkKind::identity;

  /// Parameter scale -> predictor scale.
  double link(double theta) const {
    switch (kind) {
      case LinkKind::identity: return theta;
      case LinkKind::log: return std::log(theta);
      case LinkKind::logit: return std::log(theta) - std::log1p(-theta);
    }
    return theta;
  }
  /// Predictor scale -> parameter scale (the response function).
  double inverse(double eta) const {
    switch (kind) {
      case LinkKind::identity: return eta;
      case LinkKind::log: return std::exp(eta);
      case LinkKind::logit: return 1.0 / (1.0 + std::exp(-eta));
    }
    return eta;
  }
  /// d inverse / d eta.
  double inverse_derivative(double eta) const {
    switch (kind) {
      case LinkKind::identity: return 1.0;
      case LinkKind::log: return std::exp(eta);
      case LinkKind::logit: {
        const double p = inverse(eta);
        return p * (1.0 - p);
      }
    }
    return 1.0;
  }
};

using Eta = std::array<double, 2>;

namespace detail {
inline void check_finite(double y, const Eta& eta) {
  if (std::isnan(y) || std::isnan(eta[0]) || std::isnan(eta[1]))
    throw std::invalid_argument("NaN passed to a family evaluator");
}
inline void check_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probability must lie in (0, 1)");
}
inline double normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
}  // namespace detail

/// N(mu, sigma^2); mu identity-linked, sigma log-linked.
struct Gaussian {
  static constexpr const char* name = "gaussian";
  static constexpr bool discrete = false;
  static constexpr std::array<const char*, 2> parameter_names{"mu", "sigma"};
  static constexpr std::array<LinkKind, 2> links{LinkKind::identity, LinkKind::log};

  static double log_density(double y, const Eta& eta) {
    detail::check_finite(y, eta);
    const double z = (y - eta[0]) * std::exp(-eta[1]);
    return -0.5 * std::log(2.0 * std::numbers::pi) - eta[1] - 0.5 * z * z;
  }
  static Eta score(double y, const Eta& eta) {
    detail::check_finite(y, eta);
    const double inv_var = std::exp(-2.0 * eta[1]);
    const double r = y - eta[0];
    return {r * inv_var, -1.0 + r * r * inv_var};
  }
  static double cdf(double y, const Eta& eta) { return detail::normal_cdf((y - eta[0]) * std::exp(-eta[1])); }
  static double quantile(double p, const Eta& eta) {
    detail::check_probability(p);
    return eta[0] + std::exp(eta[1]) * detail::normal_quantile(p);
  }
  static double sample(const Eta& eta, Rng& rng) {
    std::normal_distribution<double> d(eta[0], std::exp(eta[1]));
    return d(rng);
  }
  static double mean(const Eta& eta) { return eta[0]; }
  static double variance(const Eta& eta) { return std::exp(2.0 * eta[1]); }
};

/// Gamma with mean mu = exp(eta1) and shape sigma = exp(eta2); Var = mu^2 / sigma.
struct Gamma {
  static constexpr const char* name = "gamma";
  static constexpr bool discrete = false;
  static constexpr std::array<const char*, 2> parameter_names{"mu", "sigma"};
  static constexpr std::array<LinkKind, 2> links{LinkKind::log, LinkKind::log};

  static double log_density(double y, const Eta& eta) {
    detail::check_finite(y, eta);
    if (y <= 0.0) return -std::numeric_limits<double>::infinity();
    const double shape = std::exp(eta[1]);
    const double mu = std::exp(eta[0]);
    return shape * (eta[1] - eta[0]) - std::lgamma(shape) + (shape - 1.0) * std::log(y) - shape * y / mu;
  }
  static Eta score(double y, const Eta& eta) {
    detail::check_finite(y, eta);
    if (y <= 0.0) throw std::invalid_argument("gamma response must be positive");
    const double shape = std::exp(eta[1]);
    const double ratio = y * std::exp(-eta[0]);
    return {shape * (ratio - 1.0),
            shape * (eta[1] - eta[0] + 1.0 - boost::math::digamma(shape) + std::log(y) - ratio)};
  }
  static double cdf(double y, const Eta& eta) {
    if (y <= 0.0) return 0.0;
    const double shape = std::exp(eta[1]);
    return boost::math::gamma_p(shape, y * shape * std::exp(-eta[0]));
  }
  static double quantile(double p, const Eta& eta) {
    detail::check_probability(p);
    const double shape = std::exp(eta[1]);
    return boost::math::gamma_p_inv(shape, p) * std::exp(eta[0]) / shape;
  }
  static double sample(const Eta& eta, Rng& rng) {
    const double shape = std::exp(eta[1]);
    std::gamma_distribution<double> d(shape, std::exp(eta[0]) / shape);
    return d(rng);
  }
  static double mean(const Eta& eta) { return std::exp(eta[0]); }
  static double variance(const Eta& eta) { return std::exp(2.0 * eta[0] - eta[1]); }
};

/// Negative binomial with mean mu = exp(eta1) and dispersion delta = exp(eta2);
/// Var = mu + mu^2 / delta.
struct NegativeBinomial {
  static constexpr const char* name = "negbin";
  static constexpr bool discrete = true;
  static constexpr std::array<const char*, 2> parameter_names{"mu", "delta"};
  static constexpr std::array<LinkKind, 2> links{LinkKind::log, LinkKind::log};

  static double log_density(double y, const Eta& eta) {
    detail::check_finite(y, eta);
    if (y < 0.0 || y != std::floor(y)) return -std::numeric_limits<double>::infinity();
    const double mu = std::exp(eta[0]);
    const double delta = std::exp(eta[1]);
    const double log_sum = std::log(delta + mu);
    return std::lgamma(y + delta) - std::lgamma(delta) - std::lgamma(y + 1.0) + delta * eta[1] + y * eta[0] -
           (y + delta) * log_sum;
  }
  static Eta score(double y, const Eta& eta) {
    detail::check_finite(y, eta);
    const double mu = std::exp(eta[0]);
    const double delta = std::exp(eta[1]);
    const double s = delta + mu;
    return {delta * (y - mu) / s,
            delta * (boost::math::digamma(y + delta) - boost::math::digamma(delta) + eta[1] + 1.0 - std::log(s) -
                     (y + delta) / s)};
  }
  static double cdf(double y, const Eta& eta) {
    if (y < 0.0) return 0.0;
    const double mu = std::exp(eta[0]);
    const double delta = std::exp(eta[1]);
    return boost::math::ibeta(delta, std::floor(y) + 1.0, delta / (delta + mu));
  }
  /// Smallest y with cdf(y) >= p.
  static double quantile(double p, const Eta& eta) {
    detail::check_probability(p);
    const double mu = std::exp(eta[0]);
    const double delta = std::exp(eta[1]);
    const double sd = std::sqrt(mu + mu * mu / delta);
    double lo = -1.0;  // cdf(lo) < p
    double hi = std::ceil(mu + 4.0 * sd) + 1.0;
    while (cdf(hi, eta) < p) hi *= 2.0;
    while (hi - lo > 1.0) {
      const double mid = std::floor(0.5 * (lo + hi));
      (cdf(mid, eta) >= p ? hi : lo) = mid;
    }
    return hi;
  }
  static double sample(const Eta& eta, Rng& rng) {
    const double mu = std::exp(eta[0]);
    const double delta = std::exp(eta[1]);
    std::gamma_distribution<double> g(delta, mu / delta);
    const double rate = g(rng);
    std::poisson_distribution<long long> pois(rate);
    return rate > 0.0 ? static_cast<double>(pois(rng)) : 0.0;
  }
  static double mean(const Eta& eta) { return std::exp(eta[0]); }
  static double variance(const Eta& eta) {
    const double mu = std::exp(eta[0]);
    return mu + mu * mu * std::exp(-eta[1]);
  }
};

/// Runtime-selected family.
class Family {
 public:
  using Variant = std::variant<Gaussian, Gamma, NegativeBinomial>;
  static constexpr int K = 2;

  Family() = default;
  Family(Variant v) : v_(v) {}

  static Family from_name(const std::string& name) {
    if (name == Gaussian::name || name == "normal") return Family(Gaussian{});
    if (name == Gamma::name) return Family(Gamma{});
    if (name == NegativeBinomial::name || name == "negative_binomial" || name == "nbinom")
      return Family(NegativeBinomial{});
    throw std::invalid_argument("unknown family '" + name + "'");
  }

  std::string name() const {
    return std::visit([](const auto& f) { return std::string(std::decay_t<decltype(f)>::name); }, v_);
  }
  bool discrete() const {
    return std::visit([](const auto& f) { return std::decay_t<decltype(f)>::discrete; }, v_);
  }
  int parameters() const { return K; }
  std::string parameter_name(int k) const {
    return std::visit([k](const auto& f) { return std::string(std::decay_t<decltype(f)>::parameter_names[k]); },
                      v_);
  }
  Link link(int k) const {
    return std::visit([k](const auto& f) { return Link{std::decay_t<decltype(f)>::links[k]}; }, v_);
  }

  double log_density(double y, const Eta& eta) const {
    return std::visit([&](const auto& f) { return f.log_density(y, eta); }, v_);
  }
  Eta dlogp_deta(double y, const Eta& eta) const {
    return std::visit([&](const auto& f) { return f.score(y, eta); }, v_);
  }
  double cdf(double y, const Eta& eta) const {
    return std::visit([&](const auto& f) { return f.cdf(y, eta); }, v_);
  }
  double quantile(double p, const Eta& eta) const {
    return std::visit([&](const auto& f) { return f.quantile(p, eta); }, v_);
  }
  double sample(const Eta& eta, Rng& rng) const {
    return std::visit([&](const auto& f) { return f.sample(eta, rng); }, v_);
  }
  double mean(const Eta& eta) const {
    return std::visit([&](const auto& f) { return f.mean(eta); }, v_);
  }
  double variance(const Eta& eta) const {
    return std::visit([&](const auto& f) { return f.variance(eta); }, v_);
  }
  /// Whether y lies in the support (positivity, integrality).
  bool in_support(double y) const {
    if (std::holds_alternative<Gamma>(v_)) return y > 0.0;
    if (std::holds_alternative<NegativeBinomial>(v_)) return y >= 0.0 && y == std::floor(y);
    return std::isfinite(y);
  }

  const Variant& variant() const { return v_; }

 private:
  Variant v_ = Gaussian{};
};

}  // namespace sadr
