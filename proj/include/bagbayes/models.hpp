#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <variant>

#include "bagbayes/dataset.hpp"
#include "bagbayes/distributions.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/linalg.hpp"

namespace bagbayes {

// Observations modeled i.i.d. N(theta, V) with prior theta ~ N(0, V0).
// V0_inv = 0 encodes the flat prior.
class GaussianLocationModel {
 public:
  GaussianLocationModel(Eigen::MatrixXd v, Eigen::MatrixXd v0_inv)
      : v_(std::move(v)), v0_inv_(std::move(v0_inv)) {
    spd_llt(v_, "GaussianLocationModel: V");
    if (v0_inv_.rows() != v_.rows() || v0_inv_.cols() != v_.cols()) {
      throw std::invalid_argument("GaussianLocationModel: V and V0_inv dimensions must match");
    }
    if (!is_psd(v0_inv_)) {
      throw std::invalid_argument(
          "GaussianLocationModel: V0_inv must be symmetric positive semidefinite");
    }
  }

  static GaussianLocationModel flat_prior(Eigen::MatrixXd v) {
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(v.rows(), v.cols());
    return GaussianLocationModel(std::move(v), std::move(zero));
  }

  const Eigen::MatrixXd& v() const { return v_; }
  const Eigen::MatrixXd& v0_inv() const { return v0_inv_; }
  Eigen::Index dim() const { return v_.rows(); }
  bool flat() const { return v0_inv_.isZero(0.0); }

 private:
  Eigen::MatrixXd v_;
  Eigen::MatrixXd v0_inv_;
};

// Conjugate regression model: sigma2 ~ InvGam(a0, b0), beta_d | sigma2 ~ iid
// N(0, sigma2 / lambda), Y | Z, beta, sigma2 ~ N(Z beta, sigma2 I).
struct NIGRegressionModel {
  double a0;
  double b0;
  double lambda;

  NIGRegressionModel(double a0_, double b0_, double lambda_)
      : a0(a0_), b0(b0_), lambda(lambda_) {
    if (!(a0 > 0.0) || !(b0 > 0.0) || !(lambda > 0.0)) {
      throw std::invalid_argument("NIGRegressionModel: a0, b0, lambda must be positive");
    }
  }
};

// Linear regression with fixed outcome variance and a flat prior on beta.
struct FlatLinRegModel {
  double sigma2;

  explicit FlatLinRegModel(double sigma2_) : sigma2(sigma2_) {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
      throw std::invalid_argument("FlatLinRegModel: sigma2 must be positive and finite");
    }
  }
};

using Model = std::variant<GaussianLocationModel, NIGRegressionModel, FlatLinRegModel>;

// Exact Gaussian posterior summary.
class GaussianPosterior {
 public:
  GaussianPosterior(Eigen::VectorXd mean, Eigen::MatrixXd cov)
      : mean_(std::move(mean)), cov_(std::move(cov)) {
    if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size()) {
      throw std::invalid_argument("GaussianPosterior: mean and cov dimensions must match");
    }
    if (!mean_.allFinite() || !cov_.allFinite()) {
      throw std::invalid_argument("GaussianPosterior: entries must be finite");
    }
    require_symmetric(cov_, "GaussianPosterior: cov");
    cov_ = symmetrize(cov_);
    const double floor = -1e-10 * std::abs(cov_.trace());
    if (cov_.diagonal().minCoeff() < floor) {
      throw numerical_degeneracy_error("GaussianPosterior: cov has a strongly negative diagonal");
    }
  }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  Eigen::Index dim() const { return mean_.size(); }

  // Marginal of u^T theta.
  GaussianScalar marginal(const Eigen::VectorXd& u) const {
    if (u.size() != dim()) throw std::invalid_argument("GaussianPosterior: direction size mismatch");
    if (u.isZero(0.0)) throw std::invalid_argument("GaussianPosterior: direction must be nonzero");
    const double var = quad_form(cov_, u);
    if (!(var > 0.0)) {
      throw numerical_degeneracy_error("GaussianPosterior: marginal variance is not positive");
    }
    return GaussianScalar(u.dot(mean_), std::sqrt(var));
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
};

using StudentScalarPosterior = StudentScalar;

// Normal-inverse-gamma posterior: beta | sigma2 ~ N(mu, sigma2 Lambda^{-1}),
// sigma2 ~ InvGam(a, b).
class NIGPosterior {
 public:
  NIGPosterior(Eigen::VectorXd mu, Eigen::MatrixXd lambda, double a, double b)
      : mu_(std::move(mu)), lambda_(std::move(lambda)), a_(a), b_(b) {
    if (lambda_.rows() != lambda_.cols() || lambda_.rows() != mu_.size()) {
      throw std::invalid_argument("NIGPosterior: mu and Lambda dimensions must match");
    }
    if (!(a_ > 0.0)) throw std::invalid_argument("NIGPosterior: a must be positive");
    if (!(b_ > 0.0)) {
      throw numerical_degeneracy_error("NIGPosterior: b must be positive");
    }
    llt_ = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(spd_llt(lambda_, "NIGPosterior: Lambda"));
  }

  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& lambda() const { return lambda_; }
  double a() const { return a_; }
  double b() const { return b_; }
  Eigen::Index dim() const { return mu_.size(); }
  std::pair<double, double> sigma2_marginal() const { return {a_, b_}; }

  GaussianPosterior beta_given_sigma2(double sigma2) const {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("NIGPosterior: sigma2 must be positive");
    return GaussianPosterior(mu_, sigma2 * lambda_inverse());
  }

  // Marginal of u^T beta: Student-t with 2a dof.
  StudentScalarPosterior marginal(const Eigen::VectorXd& u) const {
    if (u.size() != dim()) throw std::invalid_argument("NIGPosterior: direction size mismatch");
    if (u.isZero(0.0)) throw std::invalid_argument("NIGPosterior: direction must be nonzero");
    const double q = u.dot(llt_->solve(u));
    if (!(q > 0.0)) {
      throw numerical_degeneracy_error("NIGPosterior: marginal scale is not positive");
    }
    return StudentScalarPosterior(u.dot(mu_), std::sqrt((b_ / a_) * q), 2.0 * a_);
  }

  // Posterior predictive of a new outcome at regressor z.
  StudentScalarPosterior predictive(const Eigen::VectorXd& z) const {
    if (z.size() != dim()) throw std::invalid_argument("NIGPosterior: regressor size mismatch");
    const double q = z.dot(llt_->solve(z));
    return StudentScalarPosterior(z.dot(mu_), std::sqrt((b_ / a_) * (1.0 + q)), 2.0 * a_);
  }

  // First two moments of beta; the covariance requires a > 1.
  Eigen::VectorXd beta_mean() const { return mu_; }
  Eigen::MatrixXd beta_cov() const {
    if (!(a_ > 1.0)) {
      throw numerical_degeneracy_error("NIGPosterior: beta covariance undefined for a <= 1");
    }
    return (b_ / (a_ - 1.0)) * lambda_inverse();
  }

 private:
  Eigen::MatrixXd lambda_inverse() const {
    return llt_->solve(Eigen::MatrixXd::Identity(dim(), dim()));
  }

  Eigen::VectorXd mu_;
  Eigen::MatrixXd lambda_;
  double a_;
  double b_;
  std::shared_ptr<Eigen::LLT<Eigen::MatrixXd>> llt_;
};

// Precomputed posterior map for a Gaussian location model at a fixed sample
// size: posterior mean is `response * sample-mean` and covariance is `cov`.
// For a flat prior the response is the identity and cov = V/n exactly.
class LocationSolver {
 public:
  LocationSolver(const GaussianLocationModel& model, Eigen::Index n) : n_(n) {
    if (n < 1) throw std::invalid_argument("LocationSolver: need at least one observation");
    const Eigen::Index d = model.dim();
    const double nd = static_cast<double>(n);
    if (model.flat()) {
      cov_ = model.v() / nd;
      response_ = Eigen::MatrixXd::Identity(d, d);
      return;
    }
    Eigen::LLT<Eigen::MatrixXd> v_llt = spd_llt(model.v(), "LocationSolver: V");
    const Eigen::MatrixXd v_inv = v_llt.solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd precision = symmetrize(model.v0_inv() + nd * v_inv);
    Eigen::LLT<Eigen::MatrixXd> p_llt = spd_llt(precision, "LocationSolver: posterior precision");
    cov_ = symmetrize(p_llt.solve(Eigen::MatrixXd::Identity(d, d)));
    response_ = nd * p_llt.solve(v_inv);
  }

  Eigen::Index n() const { return n_; }
  const Eigen::MatrixXd& cov() const { return cov_; }
  const Eigen::MatrixXd& response() const { return response_; }

  GaussianPosterior fit_mean(const Eigen::VectorXd& sample_mean) const {
    return GaussianPosterior(response_ * sample_mean, cov_);
  }

  GaussianPosterior fit(const Dataset& data) const {
    if (data.rows() != n_) throw std::invalid_argument("LocationSolver: sample size mismatch");
    return fit_mean(row_mean(data.observations()));
  }

 private:
  Eigen::Index n_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd response_;
};

inline GaussianPosterior gaussian_location_posterior(const GaussianLocationModel& model,
                                                     const Dataset& data) {
  if (data.is_regression()) {
    throw std::invalid_argument("gaussian_location_posterior: needs a location dataset");
  }
  if (data.dim() != model.dim()) {
    throw std::invalid_argument("gaussian_location_posterior: data dimension mismatch");
  }
  return LocationSolver(model, data.rows()).fit(data);
}

inline NIGPosterior nig_regression_posterior(const NIGRegressionModel& model,
                                             const Dataset& data) {
  if (!data.is_regression()) {
    throw std::invalid_argument("nig_regression_posterior: needs a regression dataset");
  }
  const Eigen::MatrixXd& z = data.regressors();
  const Eigen::VectorXd& y = data.outcomes();
  const Eigen::Index d = z.cols();
  const double n = static_cast<double>(z.rows());

  Eigen::MatrixXd lambda = gram(z);
  lambda.diagonal().array() += model.lambda;
  Eigen::VectorXd zty = Eigen::VectorXd::Zero(d);
  double yty = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    zty += z.row(i).transpose() * y(i);
    yty += y(i) * y(i);
  }
  const Eigen::VectorXd mu = spd_llt(lambda, "nig_regression_posterior: Lambda").solve(zty);
  const double a = model.a0 + 0.5 * n;
  const double b = model.b0 + 0.5 * (yty - mu.dot(zty));
  if (!(b > 0.0) || !std::isfinite(b)) {
    throw numerical_degeneracy_error(
        "nig_regression_posterior: b_N is not positive (numerical degeneracy)");
  }
  return NIGPosterior(mu, lambda, a, b);
}

inline StudentScalarPosterior nig_marginal_functional(const NIGPosterior& posterior,
                                                      const Eigen::VectorXd& u) {
  return posterior.marginal(u);
}

// Full flat-prior posterior on beta: N((Z^T Z)^{-1} Z^T y, sigma2 (Z^T Z)^{-1}).
inline GaussianPosterior flat_linreg_posterior(const FlatLinRegModel& model, const Dataset& data) {
  if (!data.is_regression()) {
    throw std::invalid_argument("flat_linreg_posterior: needs a regression dataset");
  }
  const Eigen::MatrixXd& z = data.regressors();
  const Eigen::Index d = z.cols();
  const Eigen::MatrixXd g = gram(z);
  Eigen::LLT<Eigen::MatrixXd> llt = spd_llt(g, "flat_linreg_posterior: Z^T Z");
  Eigen::VectorXd zty = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < z.rows(); ++i) zty += z.row(i).transpose() * data.outcomes()(i);
  return GaussianPosterior(llt.solve(zty),
                           model.sigma2 * llt.solve(Eigen::MatrixXd::Identity(d, d)));
}

// u^T beta | Z, Y ~ N(v^T Y, sigma2 ||v||^2) with v = Z (Z^T Z)^{-1} u.
inline GaussianScalar flat_linreg_functional(const FlatLinRegModel& model, const Dataset& data,
                                             const Eigen::VectorXd& u) {
  if (!data.is_regression()) {
    throw std::invalid_argument("flat_linreg_functional: needs a regression dataset");
  }
  if (u.size() != data.dim()) {
    throw std::invalid_argument("flat_linreg_functional: direction size mismatch");
  }
  if (u.isZero(0.0)) throw std::invalid_argument("flat_linreg_functional: direction must be nonzero");
  const Eigen::MatrixXd& z = data.regressors();
  Eigen::LLT<Eigen::MatrixXd> llt = spd_llt(gram(z), "flat_linreg_functional: Z^T Z");
  const Eigen::VectorXd v = z * llt.solve(u);
  const double var = model.sigma2 * v.squaredNorm();
  if (!(var > 0.0)) {
    throw numerical_degeneracy_error("flat_linreg_functional: functional variance is not positive");
  }
  double center = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) center += v(i) * data.outcomes()(i);
  return GaussianScalar(center, std::sqrt(var));
}

// Unbiased residual variance estimate ||y - Z beta_hat||^2 / (N - D).
inline double residual_sigma2_hat(const Dataset& data) {
  if (!data.is_regression()) {
    throw std::invalid_argument("residual_sigma2_hat: needs a regression dataset");
  }
  const Eigen::MatrixXd& z = data.regressors();
  if (z.rows() <= z.cols()) {
    throw std::invalid_argument("residual_sigma2_hat: needs more rows than columns");
  }
  Eigen::LLT<Eigen::MatrixXd> llt = spd_llt(gram(z), "residual_sigma2_hat: Z^T Z");
  Eigen::VectorXd zty = Eigen::VectorXd::Zero(z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) zty += z.row(i).transpose() * data.outcomes()(i);
  const Eigen::VectorXd beta_hat = llt.solve(zty);
  const double ssr = (data.outcomes() - z * beta_hat).squaredNorm();
  const double s2 = ssr / static_cast<double>(z.rows() - z.cols());
  if (!(s2 > 0.0)) {
    throw numerical_degeneracy_error("residual_sigma2_hat: residual variance is not positive");
  }
  return s2;
}

// Unnormalized log posterior density for MCMC targets.  State layout:
// location model: theta in R^D; NIG model: (log sigma2, beta) in R^{D+1};
// flat model: beta in R^D.
inline std::function<double(const Eigen::VectorXd&)> log_posterior_density(const Model& model,
                                                                           const Dataset& data) {
  if (const auto* loc = std::get_if<GaussianLocationModel>(&model)) {
    if (data.is_regression()) {
      throw std::invalid_argument("log_posterior_density: location model needs location data");
    }
    const double n = static_cast<double>(data.rows());
    const Eigen::VectorXd xbar = row_mean(data.observations());
    Eigen::LLT<Eigen::MatrixXd> v_llt = spd_llt(loc->v(), "log_posterior_density: V");
    const Eigen::MatrixXd v_inv = v_llt.solve(Eigen::MatrixXd::Identity(loc->dim(), loc->dim()));
    const Eigen::MatrixXd v0_inv = loc->v0_inv();
    return [n, xbar, v_inv, v0_inv](const Eigen::VectorXd& theta) {
      const Eigen::VectorXd r = theta - xbar;
      return -0.5 * n * r.dot(v_inv * r) - 0.5 * theta.dot(v0_inv * theta);
    };
  }
  if (const auto* nig = std::get_if<NIGRegressionModel>(&model)) {
    if (!data.is_regression()) {
      throw std::invalid_argument("log_posterior_density: regression model needs regression data");
    }
    const Eigen::MatrixXd z = data.regressors();
    const Eigen::VectorXd y = data.outcomes();
    const double n = static_cast<double>(z.rows());
    const double d = static_cast<double>(z.cols());
    const double a0 = nig->a0, b0 = nig->b0, lam = nig->lambda;
    // State (t, beta) with t = log sigma2; includes the Jacobian d(sigma2)/dt.
    return [z, y, n, d, a0, b0, lam](const Eigen::VectorXd& state) {
      const double t = state(0);
      const Eigen::VectorXd beta = state.tail(state.size() - 1);
      const double ssr = (y - z * beta).squaredNorm();
      const double t_coef = -(a0 + 1.0) + 1.0 - 0.5 * d - 0.5 * n;
      return t_coef * t - std::exp(-t) * (b0 + 0.5 * lam * beta.squaredNorm() + 0.5 * ssr);
    };
  }
  const auto& flat = std::get<FlatLinRegModel>(model);
  if (!data.is_regression()) {
    throw std::invalid_argument("log_posterior_density: regression model needs regression data");
  }
  const Eigen::MatrixXd z = data.regressors();
  const Eigen::VectorXd y = data.outcomes();
  const double sigma2 = flat.sigma2;
  return [z, y, sigma2](const Eigen::VectorXd& beta) {
    return -0.5 * (y - z * beta).squaredNorm() / sigma2;
  };
}

}  // namespace bagbayes
