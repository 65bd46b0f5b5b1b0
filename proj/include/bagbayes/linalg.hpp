#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>

#include "bagbayes/errors.hpp"

namespace bagbayes {

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

inline void require_symmetric(const Eigen::MatrixXd& m, const char* name, double tol = 1e-10) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(name) + ": matrix must be square");
  }
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * scale) {
    throw std::invalid_argument(std::string(name) + ": matrix must be symmetric");
  }
}

// Cholesky factorization of a symmetric positive-definite matrix.  Rejects
// factorizations whose smallest pivot (squared diagonal of L) is below 1e-12
// times the largest, reporting the implied condition estimate.
inline Eigen::LLT<Eigen::MatrixXd> spd_llt(const Eigen::MatrixXd& m, const char* name) {
  require_symmetric(m, name);
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw rank_deficiency_error(std::string(name) + ": matrix is not positive definite");
  }
  const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
  const double dmax = diag.maxCoeff();
  const double dmin = diag.minCoeff();
  if (!(dmin > 0.0) || dmin * dmin < 1e-12 * dmax * dmax) {
    std::ostringstream oss;
    oss << name << ": matrix is numerically singular (condition number at least "
        << (dmax / dmin) * (dmax / dmin) << ")";
    throw rank_deficiency_error(oss.str());
  }
  return llt;
}

// Positive semidefiniteness within tolerance, for prior precisions that may
// be singular (a zero matrix encodes the flat prior).
inline bool is_psd(const Eigen::MatrixXd& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * (1.0 + m.cwiseAbs().maxCoeff())) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double emax = es.eigenvalues().maxCoeff();
  return es.eigenvalues().minCoeff() >= -tol * std::max(1.0, emax);
}

inline double quad_form(const Eigen::MatrixXd& m, const Eigen::VectorXd& u) {
  return u.dot(m * u);
}

// Row mean accumulated in index order so permuting nothing changes nothing.
inline Eigen::VectorXd row_mean(const Eigen::MatrixXd& x) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) acc += x.row(i).transpose();
  return acc / static_cast<double>(x.rows());
}

// Sum of x_i x_i^T over rows, accumulated in index order.
inline Eigen::MatrixXd gram(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    acc.selfadjointView<Eigen::Lower>().rankUpdate(x.row(i).transpose());
  }
  return acc.selfadjointView<Eigen::Lower>();
}

// Sample covariance about a given mean with divisor N.
inline Eigen::MatrixXd scatter_about(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    acc.selfadjointView<Eigen::Lower>().rankUpdate(x.row(i).transpose() - mean);
  }
  Eigen::MatrixXd out = acc.selfadjointView<Eigen::Lower>();
  return out / static_cast<double>(x.rows());
}

}  // namespace bagbayes
