#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "bagbayes/dataset.hpp"
#include "bagbayes/randstream.hpp"

namespace bagbayes {

enum class FKind { linear, nonlinear };
enum class GKind { uncorrelated, correlated, fixed_design };

// Synthetic data-generating process: Y_n = f(Z_n)' beta + eps_n, with the
// regression function, regressor law, coefficient rule, and noise scale all
// configurable.  noise_scale = 0 disables noise for exactness tests.
struct DGPConfig {
  long n = 100;
  long d = 100;
  FKind f_kind = FKind::linear;
  GKind g_kind = GKind::uncorrelated;
  double kappa = 1.0;  // correlated regressors only
  long h = 10;         // chi-squared dof of the tail-mixing variable
  std::optional<Eigen::VectorXd> beta_explicit;
  double noise_scale = 1.0;

  void validate() const {
    if (n < 1 || d < 1) throw std::invalid_argument("DGPConfig: n and d must be positive");
    if (g_kind == GKind::correlated) {
      if (!(kappa > 0.0)) throw std::invalid_argument("DGPConfig: kappa must be positive");
      if (h <= 2) throw std::invalid_argument("DGPConfig: h must exceed 2");
    }
    if (beta_explicit && beta_explicit->size() != d) {
      throw std::invalid_argument("DGPConfig: explicit beta must have length d");
    }
    if (!(noise_scale >= 0.0)) {
      throw std::invalid_argument("DGPConfig: noise scale must be non-negative");
    }
    if (g_kind == GKind::fixed_design && d < 3) {
      throw std::invalid_argument(
          "DGPConfig: the fixed design needs an intercept and two grid columns");
    }
  }
};

// Location-model scenario: data i.i.d. N(true_mean, true_sd^2), modeled with
// variance model_v.
struct LocationScenario {
  double true_mean = 0.0;
  double true_sd = 1.0;
  double model_v = 1.0;

  void validate() const {
    if (!(true_sd > 0.0)) throw std::invalid_argument("LocationScenario: true_sd must be positive");
    if (!(model_v > 0.0)) throw std::invalid_argument("LocationScenario: model_v must be positive");
  }
};

// True coefficients: column j gets 4/sqrt(j+1), so their squared sum grows
// without bound in the dimension.
inline Eigen::VectorXd beta_true(const DGPConfig& cfg) {
  cfg.validate();
  if (cfg.beta_explicit) return *cfg.beta_explicit;
  Eigen::VectorXd beta(cfg.d);
  for (long j = 0; j < cfg.d; ++j) beta(j) = 4.0 / std::sqrt(static_cast<double>(j + 1));
  return beta;
}

namespace detail {

inline constexpr std::uint32_t kFixedDesignKey = 0x66647a63u;

// PSD square root of the squared-exponential kernel matrix; eigenvalues are
// clamped at zero because the kernel can be numerically semidefinite for
// large length scales.
inline Eigen::MatrixXd kernel_sqrt(long d, double kappa) {
  Eigen::MatrixXd k(d, d);
  for (long i = 0; i < d; ++i) {
    for (long j = 0; j < d; ++j) {
      const double delta = static_cast<double>(i - j) / kappa;
      k(i, j) = std::exp(-delta * delta);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Regressor matrix under the configured law.
// - uncorrelated: i.i.d. standard normal entries.
// - correlated: per row, a chi-squared(h) tail variable xi rescales every
//   other coordinate (the even 0-indexed columns) of a draw from the
//   squared-exponential kernel, giving t-like tails with unit variance.
// - fixed_design: intercept, a sqrt(N) x sqrt(N) grid over [-2,2]^2 in
//   row-major order, and standard-normal filler columns that depend only on
//   (root seed, N, D), so every replicate sees the identical matrix.
inline Eigen::MatrixXd gen_regressors(const DGPConfig& cfg, const SeedPath& sp) {
  cfg.validate();
  Eigen::MatrixXd z(cfg.n, cfg.d);
  switch (cfg.g_kind) {
    case GKind::uncorrelated: {
      Stream s(sp);
      for (long i = 0; i < cfg.n; ++i) {
        for (long j = 0; j < cfg.d; ++j) z(i, j) = s.normal();
      }
      return z;
    }
    case GKind::correlated: {
      const Eigen::MatrixXd root = detail::kernel_sqrt(cfg.d, cfg.kappa);
      const double hm2 = static_cast<double>(cfg.h - 2);
      Stream s(sp);
      Eigen::VectorXd g(cfg.d);
      for (long i = 0; i < cfg.n; ++i) {
        const double xi = s.chi_squared(static_cast<double>(cfg.h));
        const double tail = std::sqrt(xi / hm2);
        for (long j = 0; j < cfg.d; ++j) g(j) = s.normal();
        Eigen::VectorXd row = root * g;
        for (long j = 0; j < cfg.d; j += 2) row(j) /= tail;
        z.row(i) = row.transpose();
      }
      return z;
    }
    case GKind::fixed_design: {
      const long q = static_cast<long>(std::llround(std::sqrt(static_cast<double>(cfg.n))));
      if (q * q != cfg.n) {
        throw std::invalid_argument("gen_regressors: the fixed design needs a perfect-square N");
      }
      z.col(0).setOnes();
      for (long i = 0; i < q; ++i) {
        for (long j = 0; j < q; ++j) {
          const double step = q > 1 ? 4.0 / static_cast<double>(q - 1) : 0.0;
          z(i * q + j, 1) = q > 1 ? -2.0 + step * static_cast<double>(i) : 0.0;
          z(i * q + j, 2) = q > 1 ? -2.0 + step * static_cast<double>(j) : 0.0;
        }
      }
      Stream s(SeedPath(sp.root_seed, {detail::kFixedDesignKey, static_cast<std::uint32_t>(cfg.n),
                                       static_cast<std::uint32_t>(cfg.d)}));
      for (long i = 0; i < cfg.n; ++i) {
        for (long j = 3; j < cfg.d; ++j) z(i, j) = s.normal();
      }
      return z;
    }
  }
  throw std::logic_error("gen_regressors: unknown regressor law");
}

inline Eigen::MatrixXd apply_f(FKind f_kind, const Eigen::MatrixXd& z) {
  if (f_kind == FKind::linear) return z;
  return z.array().cube().matrix();
}

// Outcomes at the given regressors: homoskedastic unit-variance noise, or
// variance 1 + z1^2 + z2^2 under the fixed design, both times noise_scale.
inline Eigen::VectorXd gen_outcomes(const DGPConfig& cfg, const Eigen::MatrixXd& z,
                                    const SeedPath& sp) {
  cfg.validate();
  if (z.cols() != cfg.d) throw std::invalid_argument("gen_outcomes: column count mismatch");
  const Eigen::VectorXd beta = beta_true(cfg);
  Eigen::VectorXd y = apply_f(cfg.f_kind, z) * beta;
  Stream s(sp);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double sd = 1.0;
    if (cfg.g_kind == GKind::fixed_design) {
      sd = std::sqrt(1.0 + z(i, 1) * z(i, 1) + z(i, 2) * z(i, 2));
    }
    y(i) += cfg.noise_scale * sd * s.normal();
  }
  return y;
}

inline Dataset gen_regression_data(const DGPConfig& cfg, const SeedPath& regressor_path,
                                   const SeedPath& noise_path) {
  Eigen::MatrixXd z = gen_regressors(cfg, regressor_path);
  Eigen::VectorXd y = gen_outcomes(cfg, z, noise_path);
  return Dataset::regression(std::move(z), std::move(y));
}

// n i.i.d. draws from N(true_mean, true_sd^2), as a one-column dataset.
inline Dataset gen_location_data(const LocationScenario& scenario, long n, const SeedPath& sp) {
  scenario.validate();
  if (n < 1) throw std::invalid_argument("gen_location_data: n must be positive");
  Stream s(sp);
  Eigen::MatrixXd x(n, 1);
  for (long i = 0; i < n; ++i) x(i, 0) = scenario.true_mean + scenario.true_sd * s.normal();
  return Dataset::location(std::move(x));
}

// Test points from the same law as the training regressors; the fixed design
// resamples its own rows uniformly.
inline Eigen::MatrixXd gen_test_points(const DGPConfig& cfg, long count, const SeedPath& sp) {
  cfg.validate();
  if (count < 1) throw std::invalid_argument("gen_test_points: count must be positive");
  if (cfg.g_kind == GKind::fixed_design) {
    const Eigen::MatrixXd z = gen_regressors(cfg, sp);
    Stream s(sp);
    Eigen::MatrixXd out(count, cfg.d);
    for (long i = 0; i < count; ++i) {
      out.row(i) = z.row(static_cast<Eigen::Index>(s.uniform_below(static_cast<std::uint64_t>(cfg.n))));
    }
    return out;
  }
  DGPConfig test_cfg = cfg;
  test_cfg.n = count;
  return gen_regressors(test_cfg, sp);
}

}  // namespace bagbayes
