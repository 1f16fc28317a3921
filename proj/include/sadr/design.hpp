#pragma once

// Design matrices, penalty matrices and identifiability constraints for the
// supported additive terms. Every builder returns a DesignBlock whose design
// and penalty already live in the constrained (null-space) parametrization.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sadr/linalg.hpp"
#include "sadr/log.hpp"
#include "sadr/prior.hpp"

namespace sadr {

enum class TermKind { intercept, linear, categorical, pspline, cyclic_pspline, tensor_pspline, mrf };
enum class Coding { dummy, effect };

inline std::string to_string(TermKind k) {
  switch (k) {
    case TermKind::intercept: return "intercept";
    case TermKind::linear: return "linear";
    case TermKind::categorical: return "categorical";
    case TermKind::pspline: return "pspline";
    case TermKind::cyclic_pspline: return "cyclic_pspline";
    case TermKind::tensor_pspline: return "tensor_pspline";
    case TermKind::mrf: return "mrf";
  }
  return "unknown";
}

inline TermKind term_kind_from_string(const std::string& s) {
  for (TermKind k : {TermKind::intercept, TermKind::linear, TermKind::categorical, TermKind::pspline,
                     TermKind::cyclic_pspline, TermKind::tensor_pspline, TermKind::mrf})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown term kind '" + s + "'");
}

/// Undirected neighbourhood structure for a Markov random field.
struct MrfGraph {
  std::vector<std::string> regions;                            // sorted, unique
  std::vector<std::pair<std::size_t, std::size_t>> edges;      // i < j

  /// Builds from a neighbour list; the list must be symmetric without self-edges.
  static MrfGraph from_neighbours(const std::map<std::string, std::vector<std::string>>& nb) {
    std::set<std::string> names;
    for (const auto& [r, list] : nb) {
      names.insert(r);
      for (const auto& s : list) names.insert(s);
    }
    MrfGraph g;
    g.regions.assign(names.begin(), names.end());
    auto index = [&](const std::string& s) {
      return static_cast<std::size_t>(std::lower_bound(g.regions.begin(), g.regions.end(), s) - g.regions.begin());
    };
    std::set<std::pair<std::size_t, std::size_t>> directed;
    for (const auto& [r, list] : nb)
      for (const auto& s : list) {
        if (s == r) throw std::invalid_argument("mrf adjacency has a self-edge at '" + r + "'");
        directed.insert({index(r), index(s)});
      }
    for (const auto& [i, j] : directed) {
      if (!directed.count({j, i}))
        throw std::invalid_argument("mrf adjacency is not symmetric: " + g.regions[i] + " -> " + g.regions[j]);
      if (i < j) g.edges.emplace_back(i, j);
    }
    return g;
  }

  std::optional<std::size_t> find(const std::string& label) const {
    auto it = std::lower_bound(regions.begin(), regions.end(), label);
    if (it == regions.end() || *it != label) return std::nullopt;
    return static_cast<std::size_t>(it - regions.begin());
  }
};

/// User-facing description of one additive term.
struct TermSpec {
  TermKind kind = TermKind::linear;
  std::vector<std::string> covariates;
  std::vector<int> basis_dim{10};  // per margin
  int degree = 3;
  int penalty_order = 2;
  Coding coding = Coding::dummy;
  std::optional<std::pair<double, double>> cyclic_range;  // period; defaults to the data range
  MrfGraph graph;
  Hyperprior hyperprior = InverseGamma{};
  std::string label;
};

/// One equidistant B-spline margin.
struct SplineMargin {
  double lo = 0.0;
  double hi = 1.0;
  int dim = 10;
  int degree = 3;
  int order = 2;
  bool cyclic = false;

  double spacing() const { return (hi - lo) / (cyclic ? dim : dim - degree); }
};

struct DesignBlock {
  std::string label;
  TermKind kind = TermKind::linear;
  MatrixXd design;                  // n x D~
  MatrixXd penalty;                 // K-bar, D~ x D~; prior precision is penalty / tau^2
  Index rank = 0;                   // kappa
  double log_pdet = 0.0;            // log pseudo-determinant of penalty
  MatrixXd constraint;              // A, rows x D (original dimension)
  MatrixXd transform;               // Z, D x D~ with orthonormal columns
  bool centered = false;            // centering constraint 1'B beta = 0 applied

  // Enough to re-evaluate the basis on new covariate values.
  std::vector<std::string> covariates;
  std::vector<SplineMargin> margins;
  std::vector<std::string> levels;  // categorical levels or mrf regions
  Coding coding = Coding::dummy;

  Index n() const { return design.rows(); }
  Index dim() const { return design.cols(); }
  Index original_dim() const { return transform.rows(); }
};

/// Covariate values handed to a term: numeric columns or a label column.
struct TermData {
  std::vector<std::span<const double>> numeric;
  std::span<const std::string> labels;
};

// ---------------------------------------------------------------------------
// Spline primitives

/// Values of the degree+1 B-splines that are non-zero at x on a uniform knot
/// grid, plus the index of the first one. Knot i sits at lo + (i - degree) * h.
inline std::pair<int, Eigen::VectorXd> local_bspline(double x, double lo, double h, int degree, int span_lo,
                                                     int span_hi) {
  int s = degree + static_cast<int>(std::floor((x - lo) / h));
  s = std::clamp(s, span_lo, span_hi);
  auto knot = [&](int i) { return lo + (i - degree) * h; };
  Eigen::VectorXd N = Eigen::VectorXd::Zero(degree + 1);
  std::vector<double> left(degree + 1), right(degree + 1);
  N[0] = 1.0;
  for (int j = 1; j <= degree; ++j) {
    left[j] = x - knot(s + 1 - j);
    right[j] = knot(s + j) - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    N[j] = saved;
  }
  return {s - degree, N};
}

/// Unconstrained basis rows. Non-cyclic margins clamp x to [lo, hi]; cyclic
/// margins wrap x into the period.
inline MatrixXd bspline_basis(std::span<const double> x, const SplineMargin& m) {
  MatrixXd out = MatrixXd::Zero(static_cast<Index>(x.size()), m.dim);
  const double h = m.spacing();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i])) throw std::invalid_argument("NaN covariate value");
    double xi = x[i];
    if (m.cyclic) {
      const double period = m.hi - m.lo;
      xi = m.lo + std::fmod(xi - m.lo, period);
      if (xi < m.lo) xi += period;
      if (xi >= m.hi) xi = m.lo;
      auto [first, vals] = local_bspline(xi, m.lo, h, m.degree, m.degree, m.dim + m.degree - 1);
      for (int r = 0; r <= m.degree; ++r) out(static_cast<Index>(i), (first + r) % m.dim) += vals[r];
    } else {
      xi = std::clamp(xi, m.lo, m.hi);
      auto [first, vals] = local_bspline(xi, m.lo, h, m.degree, m.degree, m.dim - 1);
      for (int r = 0; r <= m.degree; ++r) out(static_cast<Index>(i), first + r) = vals[r];
    }
  }
  return out;
}

/// r-th order difference matrix; the cyclic variant wraps around and is square.
inline MatrixXd difference_matrix(int dim, int order, bool cyclic) {
  if (cyclic) {
    MatrixXd c = MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
      c(i, i) = -1.0;
      c(i, (i + 1) % dim) += 1.0;
    }
    MatrixXd d = MatrixXd::Identity(dim, dim);
    for (int r = 0; r < order; ++r) d = (c * d).eval();
    return d;
  }
  MatrixXd d = MatrixXd::Identity(dim, dim);
  for (int r = 0; r < order; ++r) d = (d.bottomRows(d.rows() - 1) - d.topRows(d.rows() - 1)).eval();
  return d;
}

inline MatrixXd difference_penalty(int dim, int order, bool cyclic) {
  const MatrixXd d = difference_matrix(dim, order, cyclic);
  return d.transpose() * d;
}

/// Row-wise Kronecker product: row i of the result is kron(a.row(i), b.row(i)).
inline MatrixXd row_kronecker(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index p = 0; p < a.cols(); ++p) out.row(i).segment(p * b.cols(), b.cols()) = a(i, p) * b.row(i);
  return out;
}

/// Kronecker sum K1 (x) I + I (x) K2.
inline MatrixXd kronecker_sum(const MatrixXd& k1, const MatrixXd& k2) {
  const Index d1 = k1.rows(), d2 = k2.rows();
  MatrixXd out = MatrixXd::Zero(d1 * d2, d1 * d2);
  for (Index a = 0; a < d1; ++a)
    for (Index b = 0; b < d1; ++b) out.block(a * d2, b * d2, d2, d2).diagonal().array() += k1(a, b);
  for (Index a = 0; a < d1; ++a) out.block(a * d2, a * d2, d2, d2) += k2;
  return out;
}

// ---------------------------------------------------------------------------
// Block assembly

namespace detail {

inline void finalize_penalty(DesignBlock& b) {
  b.penalty = 0.5 * (b.penalty + b.penalty.transpose());
  const auto s = spectral_summary(b.penalty);
  b.rank = s.rank;
  b.log_pdet = s.log_pdet;
}

inline DesignBlock raw_block(std::string label, TermKind kind, MatrixXd design, MatrixXd penalty) {
  DesignBlock b;
  b.label = std::move(label);
  b.kind = kind;
  const Index d = design.cols();
  b.design = std::move(design);
  b.penalty = std::move(penalty);
  b.transform = MatrixXd::Identity(d, d);
  b.constraint = MatrixXd(0, d);
  finalize_penalty(b);
  return b;
}

inline void check_margin(const SplineMargin& m, std::size_t n, const std::string& label) {
  if (m.dim < m.degree + 1)
    throw std::invalid_argument(label + ": basis dimension must be at least degree + 1");
  if (m.dim <= m.order) throw std::invalid_argument(label + ": basis dimension must exceed the penalty order");
  if (m.degree < 0 || m.order < 0) throw std::invalid_argument(label + ": negative degree or order");
  if (!(m.hi > m.lo)) throw std::invalid_argument(label + ": covariate range is degenerate");
  if (n < static_cast<std::size_t>(m.dim))
    warn(label + ": fewer observations than basis functions");
}

inline SplineMargin margin_from_data(std::span<const double> x, int dim, int degree, int order, bool cyclic,
                                     std::optional<std::pair<double, double>> range = std::nullopt) {
  for (double v : x)
    if (std::isnan(v)) throw std::invalid_argument("NaN covariate value");
  SplineMargin m;
  m.dim = dim;
  m.degree = degree;
  m.order = order;
  m.cyclic = cyclic;
  if (range) {
    m.lo = range->first;
    m.hi = range->second;
  } else if (!x.empty()) {
    auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    m.lo = *mn;
    m.hi = *mx;
  }
  return m;
}

inline std::string default_label(const TermSpec& spec) {
  if (!spec.label.empty()) return spec.label;
  std::string s = to_string(spec.kind) + "(";
  for (std::size_t i = 0; i < spec.covariates.size(); ++i) s += (i ? "," : "") + spec.covariates[i];
  return s + ")";
}

}  // namespace detail

/// Reparametrizes a block onto the null space of A (rows x original_dim):
/// design <- design Z, penalty <- Z' penalty Z.
inline DesignBlock absorb_constraint(DesignBlock block, const MatrixXd& a) {
  if (a.rows() == 0) return block;
  // A refers to the block's current coefficients.
  if (a.cols() != block.dim()) throw std::invalid_argument("constraint has wrong number of columns");
  Index rank = 0;
  MatrixXd z = null_space(a, &rank);
  if (rank >= block.dim()) throw std::invalid_argument("constraint removes all coefficients");
  if (rank < a.rows()) throw std::invalid_argument("constraint matrix does not have full row rank");
  block.design = block.design * z;
  block.penalty = z.transpose() * block.penalty * z;
  MatrixXd a_orig = a * block.transform.transpose();
  MatrixXd stacked(block.constraint.rows() + a_orig.rows(), block.original_dim());
  stacked << block.constraint, a_orig;
  block.constraint = std::move(stacked);
  block.transform = block.transform * z;
  detail::finalize_penalty(block);
  return block;
}

/// Centering constraint 1'B beta = 0.
inline DesignBlock center(DesignBlock block) {
  MatrixXd a = block.design.colwise().sum();
  block = absorb_constraint(std::move(block), a);
  block.centered = true;
  return block;
}

inline DesignBlock build_intercept(Index n) {
  auto b = detail::raw_block("(Intercept)", TermKind::intercept, MatrixXd::Ones(n, 1), MatrixXd::Zero(1, 1));
  return b;
}

/// Linear effect of a continuous covariate: flat prior, no constraint.
inline DesignBlock build_linear(std::span<const double> x, std::string label = "linear") {
  VectorXd col(static_cast<Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i])) throw std::invalid_argument("missing value in covariate '" + label + "'");
    col[static_cast<Index>(i)] = x[i];
  }
  auto b = detail::raw_block(std::move(label), TermKind::linear, col, MatrixXd::Zero(1, 1));
  return b;
}

/// Design rows for a categorical covariate under a given level set and coding.
/// Dummy coding uses the first level as reference; effect coding gives the
/// last level -1 in every column.
inline MatrixXd categorical_basis(std::span<const std::string> x, const std::vector<std::string>& levels,
                                  Coding coding) {
  const Index q = static_cast<Index>(levels.size()) - 1;
  MatrixXd out = MatrixXd::Zero(static_cast<Index>(x.size()), q);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto it = std::lower_bound(levels.begin(), levels.end(), x[i]);
    if (it == levels.end() || *it != x[i]) throw std::invalid_argument("unknown level '" + x[i] + "'");
    const Index l = static_cast<Index>(it - levels.begin());
    if (coding == Coding::dummy) {
      if (l > 0) out(static_cast<Index>(i), l - 1) = 1.0;
    } else if (l < q) {
      out(static_cast<Index>(i), l) = 1.0;
    } else {
      out.row(static_cast<Index>(i)).setConstant(-1.0);
    }
  }
  return out;
}

inline DesignBlock build_linear(std::span<const std::string> x, Coding coding, std::string label = "categorical") {
  std::set<std::string> lv(x.begin(), x.end());
  if (lv.size() < 2) throw std::invalid_argument("degenerate covariate '" + label + "': fewer than two levels");
  std::vector<std::string> levels(lv.begin(), lv.end());
  MatrixXd design = categorical_basis(x, levels, coding);
  const Index q = design.cols();
  auto b = detail::raw_block(std::move(label), TermKind::categorical, std::move(design), MatrixXd::Zero(q, q));
  b.levels = std::move(levels);
  b.coding = coding;
  return b;
}

inline DesignBlock build_pspline(std::span<const double> x, const TermSpec& spec) {
  const std::string label = detail::default_label(spec);
  const int dim = spec.basis_dim.empty() ? 10 : spec.basis_dim[0];
  SplineMargin m = detail::margin_from_data(x, dim, spec.degree, spec.penalty_order, false);
  detail::check_margin(m, x.size(), label);
  auto b = detail::raw_block(label, TermKind::pspline, bspline_basis(x, m),
                             difference_penalty(m.dim, m.order, false));
  b.margins = {m};
  b.covariates = spec.covariates;
  return center(std::move(b));
}

inline DesignBlock build_cyclic_pspline(std::span<const double> x, const TermSpec& spec) {
  const std::string label = detail::default_label(spec);
  const int dim = spec.basis_dim.empty() ? 10 : spec.basis_dim[0];
  SplineMargin m = detail::margin_from_data(x, dim, spec.degree, spec.penalty_order, true, spec.cyclic_range);
  detail::check_margin(m, x.size(), label);
  auto b = detail::raw_block(label, TermKind::cyclic_pspline, bspline_basis(x, m),
                             difference_penalty(m.dim, m.order, true));
  b.margins = {m};
  b.covariates = spec.covariates;
  return center(std::move(b));
}

/// Tensor product P-spline with a single shared smoothing variance.
inline DesignBlock build_tensor_pspline(std::span<const double> x1, std::span<const double> x2,
                                        const TermSpec& spec) {
  if (x1.size() != x2.size()) throw std::invalid_argument("tensor margins differ in length");
  const std::string label = detail::default_label(spec);
  const int d1 = spec.basis_dim.empty() ? 10 : spec.basis_dim[0];
  const int d2 = spec.basis_dim.size() > 1 ? spec.basis_dim[1] : d1;
  SplineMargin m1 = detail::margin_from_data(x1, d1, spec.degree, spec.penalty_order, false);
  SplineMargin m2 = detail::margin_from_data(x2, d2, spec.degree, spec.penalty_order, false);
  detail::check_margin(m1, x1.size(), label);
  detail::check_margin(m2, x2.size(), label);
  if (static_cast<std::size_t>(d1 * d2) > x1.size()) warn(label + ": more tensor coefficients than observations");
  auto b = detail::raw_block(label, TermKind::tensor_pspline,
                             row_kronecker(bspline_basis(x1, m1), bspline_basis(x2, m2)),
                             kronecker_sum(difference_penalty(d1, m1.order, false),
                                           difference_penalty(d2, m2.order, false)));
  b.margins = {m1, m2};
  b.covariates = spec.covariates;
  return center(std::move(b));
}

/// Connected components of the region graph, as region index lists.
inline std::vector<std::vector<std::size_t>> connected_components(const MrfGraph& g) {
  std::vector<std::size_t> parent(g.regions.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (auto [i, j] : g.edges) parent[find(i)] = find(j);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < g.regions.size(); ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end());
  return out;
}

inline MatrixXd mrf_basis(std::span<const std::string> x, const std::vector<std::string>& regions) {
  MatrixXd out = MatrixXd::Zero(static_cast<Index>(x.size()), static_cast<Index>(regions.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto it = std::lower_bound(regions.begin(), regions.end(), x[i]);
    if (it == regions.end() || *it != x[i])
      throw std::invalid_argument("region '" + x[i] + "' is not a node of the graph");
    out(static_cast<Index>(i), it - regions.begin()) = 1.0;
  }
  return out;
}

inline MatrixXd graph_laplacian(const MrfGraph& g) {
  const Index r = static_cast<Index>(g.regions.size());
  MatrixXd k = MatrixXd::Zero(r, r);
  for (auto [i, j] : g.edges) {
    const Index a = static_cast<Index>(i), b = static_cast<Index>(j);
    k(a, b) -= 1.0;
    k(b, a) -= 1.0;
    k(a, a) += 1.0;
    k(b, b) += 1.0;
  }
  return k;
}

/// Gaussian Markov random field over discrete regions. Coefficients sum to
/// zero within every connected component with at least two regions; isolated
/// regions keep a free coefficient. A graph without edges gets one global
/// sum-to-zero constraint instead.
inline DesignBlock build_mrf(std::span<const std::string> x, const MrfGraph& graph, std::string label = "mrf") {
  if (graph.regions.empty()) throw std::invalid_argument(label + ": empty region graph");
  auto b = detail::raw_block(label, TermKind::mrf, mrf_basis(x, graph.regions), graph_laplacian(graph));
  b.levels = graph.regions;
  const auto comps = connected_components(graph);
  const Index r = static_cast<Index>(graph.regions.size());
  std::vector<VectorXd> rows;
  for (const auto& c : comps) {
    if (c.size() < 2) {
      warn(label + ": isolated region '" + graph.regions[c[0]] + "'");
      continue;
    }
    VectorXd row = VectorXd::Zero(r);
    for (std::size_t i : c) row[static_cast<Index>(i)] = 1.0;
    rows.push_back(std::move(row));
  }
  if (rows.empty() && r >= 2) rows.push_back(VectorXd::Ones(r));
  MatrixXd a(static_cast<Index>(rows.size()), r);
  for (std::size_t i = 0; i < rows.size(); ++i) a.row(static_cast<Index>(i)) = rows[i].transpose();
  return absorb_constraint(std::move(b), a);
}

/// Builds any term from its specification.
inline DesignBlock build_term(const TermSpec& spec, const TermData& data) {
  const std::string label = detail::default_label(spec);
  auto need_numeric = [&](std::size_t k) {
    if (data.numeric.size() < k) throw std::invalid_argument(label + ": missing numeric covariate");
  };
  DesignBlock b;
  switch (spec.kind) {
    case TermKind::intercept:
      if (data.numeric.empty() && data.labels.empty()) throw std::invalid_argument("intercept needs a row count");
      b = build_intercept(static_cast<Index>(data.numeric.empty() ? data.labels.size() : data.numeric[0].size()));
      return b;
    case TermKind::linear: need_numeric(1); b = build_linear(data.numeric[0], label); break;
    case TermKind::categorical: b = build_linear(data.labels, spec.coding, label); break;
    case TermKind::pspline: need_numeric(1); b = build_pspline(data.numeric[0], spec); break;
    case TermKind::cyclic_pspline: need_numeric(1); b = build_cyclic_pspline(data.numeric[0], spec); break;
    case TermKind::tensor_pspline:
      need_numeric(2);
      b = build_tensor_pspline(data.numeric[0], data.numeric[1], spec);
      break;
    case TermKind::mrf: b = build_mrf(data.labels, spec.graph, label); break;
  }
  b.covariates = spec.covariates;
  return b;
}

/// Constrained design rows of an existing block at new covariate values.
inline MatrixXd evaluate_design(const DesignBlock& b, const TermData& data) {
  MatrixXd raw;
  switch (b.kind) {
    case TermKind::intercept: {
      const std::size_t n = data.numeric.empty() ? data.labels.size() : data.numeric[0].size();
      raw = MatrixXd::Ones(static_cast<Index>(n), 1);
      break;
    }
    case TermKind::linear:
      raw = Eigen::Map<const VectorXd>(data.numeric.at(0).data(), static_cast<Index>(data.numeric[0].size()));
      break;
    case TermKind::categorical: raw = categorical_basis(data.labels, b.levels, b.coding); break;
    case TermKind::pspline:
    case TermKind::cyclic_pspline: raw = bspline_basis(data.numeric.at(0), b.margins.at(0)); break;
    case TermKind::tensor_pspline:
      raw = row_kronecker(bspline_basis(data.numeric.at(0), b.margins.at(0)),
                          bspline_basis(data.numeric.at(1), b.margins.at(1)));
      break;
    case TermKind::mrf: raw = mrf_basis(data.labels, b.levels); break;
  }
  return raw * b.transform;
}

}  // namespace sadr
