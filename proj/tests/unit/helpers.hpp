#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sadr/sadr.hpp"

namespace sadr::test {

/// Central differences of f at x.
inline VectorXd numeric_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-6) {
  VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd a = x, b = x;
    const double step = h * std::max(1.0, std::abs(x[i]));
    a[i] += step;
    b[i] -= step;
    g[i] = (f(a) - f(b)) / (2.0 * step);
  }
  return g;
}

inline double max_rel_error(const VectorXd& analytic, const VectorXd& numeric) {
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / (1.0 + std::abs(analytic[i])));
  return worst;
}

inline std::vector<double> uniform_column(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(n);
  for (auto& v : x) v = u(rng);
  return x;
}

inline TermData numeric_data(const std::vector<double>& x) {
  TermData d;
  d.numeric.emplace_back(x);
  return d;
}

inline TermData numeric_data(const std::vector<double>& x, const std::vector<double>& z) {
  TermData d;
  d.numeric.emplace_back(x);
  d.numeric.emplace_back(z);
  return d;
}

inline TermData label_data(const std::vector<std::string>& labels) {
  TermData d;
  d.labels = labels;
  return d;
}

/// Silences diagnostics for the lifetime of the guard.
struct Quiet {
  ScopedDiagnosticSink guard{[](std::string_view) {}};
};

}  // namespace sadr::test
