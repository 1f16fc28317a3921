#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>

namespace sadr {

/// tau^2 ~ IG(a, b). The only hyperprior eligible for the Gibbs (hybrid) path.
struct InverseGamma {
  double a = 0.001;
  double b = 0.001;
};

/// tau^2 ~ Weibull(shape, scale), the scale-dependent prior.
struct ScaleDependentWeibull {
  double shape = 0.5;
  double scale = 0.0088;
};

/// Known prior variance: beta ~ N(0, tau2 * K^-), no tau parameter is estimated.
struct FixedVariance {
  double tau2 = 1.0;
};

using Hyperprior = std::variant<InverseGamma, ScaleDependentWeibull, FixedVariance>;

inline void validate(const Hyperprior& h) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        bool ok = true;
        if constexpr (std::is_same_v<T, InverseGamma>) ok = p.a > 0 && p.b > 0;
        if constexpr (std::is_same_v<T, ScaleDependentWeibull>) ok = p.shape > 0 && p.scale > 0;
        if constexpr (std::is_same_v<T, FixedVariance>) ok = p.tau2 > 0;
        if (!ok) throw std::invalid_argument("hyperprior parameters must be positive");
      },
      h);
}

inline bool is_inverse_gamma(const Hyperprior& h) { return std::holds_alternative<InverseGamma>(h); }
inline bool is_fixed(const Hyperprior& h) { return std::holds_alternative<FixedVariance>(h); }

inline std::string hyperprior_name(const Hyperprior& h) {
  if (std::holds_alternative<InverseGamma>(h)) return "inverse_gamma";
  if (std::holds_alternative<ScaleDependentWeibull>(h)) return "weibull";
  return "fixed";
}

/// log IG(x; a, b) on the natural scale, fully normalized.
inline double inverse_gamma_logpdf(double x, double a, double b) {
  if (!(x > 0)) return -std::numeric_limits<double>::infinity();
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

/// Log density of log_tau2 = log(tau^2), Jacobian included. Value and derivative.
struct LogScaleDensity {
  double value;
  double derivative;
};

inline LogScaleDensity log_scale_hyperprior(const Hyperprior& h, double log_tau2) {
  if (const auto* ig = std::get_if<InverseGamma>(&h)) {
    const double e = ig->b * std::exp(-log_tau2);
    return {ig->a * std::log(ig->b) - std::lgamma(ig->a) - ig->a * log_tau2 - e, -ig->a + e};
  }
  if (const auto* wb = std::get_if<ScaleDependentWeibull>(&h)) {
    const double k = wb->shape;
    const double z = log_tau2 - std::log(wb->scale);
    const double pw = std::exp(k * z);
    return {std::log(k) - std::log(wb->scale) + (k - 1.0) * z - pw + log_tau2, k - k * pw};
  }
  throw std::logic_error("fixed-variance prior has no log-scale density");
}

}  // namespace sadr
