#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sadr/rng.hpp"

namespace sadr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Relative eigenvalue cutoff used for every rank decision on penalty matrices.
inline constexpr double kRankTolerance = 1e-8;

struct SpectralSummary {
  Index rank = 0;
  double max_eigenvalue = 0.0;
  double min_eigenvalue = 0.0;
  double log_pdet = 0.0;  // sum of log eigenvalues above the cutoff
};

/// Eigen-decomposition based rank of a symmetric PSD matrix with cutoff
/// tol * max(|lambda|).
inline SpectralSummary spectral_summary(const MatrixXd& sym, double rel_tol = kRankTolerance) {
  SpectralSummary out;
  if (sym.size() == 0) return out;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const VectorXd& ev = es.eigenvalues();
  out.max_eigenvalue = ev.maxCoeff();
  out.min_eigenvalue = ev.minCoeff();
  const double scale = ev.cwiseAbs().maxCoeff();
  if (scale == 0.0) return out;
  const double cut = rel_tol * scale;
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > cut) {
      ++out.rank;
      out.log_pdet += std::log(ev[i]);
    }
  }
  return out;
}

inline Index numerical_rank(const MatrixXd& sym, double rel_tol = kRankTolerance) {
  return spectral_summary(sym, rel_tol).rank;
}

/// Orthonormal basis (columns) for the null space of a (m x D) matrix.
inline MatrixXd null_space(const MatrixXd& a, Index* rank_out = nullptr) {
  const Index d = a.cols();
  if (a.rows() == 0) {
    if (rank_out) *rank_out = 0;
    return MatrixXd::Identity(d, d);
  }
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullV);
  const VectorXd& sv = svd.singularValues();
  const double smax = sv.size() ? sv.maxCoeff() : 0.0;
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-12 * std::max(1.0, smax) * static_cast<double>(std::max(a.rows(), d))) ++r;
  if (rank_out) *rank_out = r;
  return svd.matrixV().rightCols(d - r);
}

inline double log_sum_exp(const double* x, Index n) {
  double m = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

template <class Derived>
void fill_standard_normal(Rng& rng, Eigen::MatrixBase<Derived>& out) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (Index i = 0; i < out.size(); ++i) out.derived().data()[i] = n01(rng);
}

inline void write_matrix_csv(std::ostream& os, const MatrixXd& m) {
  const Eigen::IOFormat fmt(Eigen::FullPrecision, Eigen::DontAlignCols, ",", "\n", "", "", "", "\n");
  os << m.format(fmt);
}

inline void write_matrix_csv(const std::string& path, const MatrixXd& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_matrix_csv(os, m);
}

}  // namespace sadr
