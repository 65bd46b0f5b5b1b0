#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bagbayes/dataset.hpp"
#include "bagbayes/distributions.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/linalg.hpp"
#include "bagbayes/models.hpp"
#include "bagbayes/parallel.hpp"
#include "bagbayes/randstream.hpp"

namespace bagbayes {

using PosteriorComponent = std::variant<GaussianPosterior, NIGPosterior>;

inline Eigen::Index component_dim(const PosteriorComponent& c) {
  return std::visit([](const auto& p) { return p.dim(); }, c);
}

inline Eigen::VectorXd component_parameter_mean(const PosteriorComponent& c) {
  if (const auto* g = std::get_if<GaussianPosterior>(&c)) return g->mean();
  return std::get<NIGPosterior>(c).beta_mean();
}

inline Eigen::MatrixXd component_parameter_cov(const PosteriorComponent& c) {
  if (const auto* g = std::get_if<GaussianPosterior>(&c)) return g->cov();
  return std::get<NIGPosterior>(c).beta_cov();
}

// Marginal of u^T theta under one component.
inline ScalarComponent component_scalar(const PosteriorComponent& c, const Eigen::VectorXd& u) {
  if (const auto* g = std::get_if<GaussianPosterior>(&c)) return g->marginal(u);
  return std::get<NIGPosterior>(c).marginal(u);
}

// Equal- or multiplicity-weighted mixture of component posteriors, with the
// provenance needed to reproduce it.
struct BaggedPosterior {
  std::vector<PosteriorComponent> components;
  std::vector<double> weights;
  long m = 0;
  bool exact_enumeration = false;
  SeedPath root;                         // meaningful when not exact
  std::vector<SeedPath> component_seeds; // per surviving component, empty when exact
  long skipped = 0;

  Eigen::Index dim() const { return component_dim(components.front()); }

  void validate() const {
    if (components.empty()) {
      throw std::invalid_argument("BaggedPosterior: need at least one component");
    }
    if (components.size() != weights.size()) {
      throw std::invalid_argument("BaggedPosterior: components and weights must align");
    }
    double total = 0.0;
    for (double w : weights) total += w;
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("BaggedPosterior: weights must sum to one");
    }
    const Eigen::Index d = component_dim(components.front());
    for (const auto& c : components) {
      if (component_dim(c) != d) {
        throw std::invalid_argument("BaggedPosterior: components must share dimension");
      }
    }
  }
};

// Fits one posterior of the requested family.  An optional LocationSolver
// lets bootstrap loops reuse the covariance factorization.
inline PosteriorComponent fit_component(const Model& model, const Dataset& data,
                                        const LocationSolver* location_hint = nullptr) {
  if (const auto* loc = std::get_if<GaussianLocationModel>(&model)) {
    if (location_hint != nullptr && location_hint->n() == data.rows()) {
      return location_hint->fit(data);
    }
    return gaussian_location_posterior(*loc, data);
  }
  if (const auto* nig = std::get_if<NIGRegressionModel>(&model)) {
    return nig_regression_posterior(*nig, data);
  }
  return flat_linreg_posterior(std::get<FlatLinRegModel>(model), data);
}

namespace detail {

// Bootstrap-component fit failures that are skipped and renormalized rather
// than propagated: rank deficiency (flat prior on a degenerate resample) and
// numerical degeneracy.  Structural errors still propagate.
inline bool skippable_fit_failure(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const rank_deficiency_error&) {
    return true;
  } catch (const numerical_degeneracy_error&) {
    return true;
  } catch (...) {
    return false;
  }
}

// Exact multinomial coefficient M! / prod(k_i!), built from incremental
// binomial updates; every intermediate is an integer below 2^53 whenever
// N^M stays within the enumeration cap.
inline double multinomial_coefficient(const std::vector<long>& counts) {
  double coeff = 1.0;
  long t = 0;
  for (long k : counts) {
    for (long j = 1; j <= k; ++j) {
      ++t;
      coeff = coeff * static_cast<double>(t) / static_cast<double>(j);
    }
  }
  return coeff;
}

inline void enumerate_compositions(long remaining, std::size_t slot, std::vector<long>& scratch,
                                   const std::function<void(const std::vector<long>&)>& visit) {
  if (slot + 1 == scratch.size()) {
    scratch[slot] = remaining;
    visit(scratch);
    return;
  }
  for (long k = remaining; k >= 0; --k) {
    scratch[slot] = k;
    enumerate_compositions(remaining - k, slot + 1, scratch, visit);
  }
}

}  // namespace detail

// The bagged posterior computed exactly: one component per multiset of
// bootstrap indices, weighted by its multinomial probability.
inline BaggedPosterior bag_exact(const Model& model, const Dataset& data, long m,
                                 double enumeration_cap = 1e5) {
  if (m < 1) throw std::invalid_argument("bag_exact: bootstrap size must be positive");
  const long n = data.rows();
  if (static_cast<double>(m) * std::log(static_cast<double>(n)) >
      std::log(enumeration_cap) + 1e-9) {
    throw enumeration_too_large_error(
        "bag_exact: N^M exceeds the enumeration cap of " + std::to_string(enumeration_cap) +
        " sequences; use bag_monte_carlo instead");
  }
  double n_pow_m = 1.0;  // exact: stays below the cap, far inside 2^53
  for (long i = 0; i < m; ++i) n_pow_m *= static_cast<double>(n);

  std::optional<LocationSolver> solver;
  if (const auto* loc = std::get_if<GaussianLocationModel>(&model)) {
    solver.emplace(*loc, m);
  }

  BaggedPosterior bp;
  bp.m = m;
  bp.exact_enumeration = true;
  double surviving_weight = 0.0;
  std::vector<long> scratch(static_cast<std::size_t>(n), 0);
  detail::enumerate_compositions(m, 0, scratch, [&](const std::vector<long>& counts) {
    const double weight = detail::multinomial_coefficient(counts) / n_pow_m;
    try {
      bp.components.push_back(
          fit_component(model, resample(data, counts), solver ? &*solver : nullptr));
      bp.weights.push_back(weight);
      surviving_weight += weight;
    } catch (...) {
      if (!detail::skippable_fit_failure(std::current_exception())) throw;
      ++bp.skipped;
    }
  });
  if (bp.components.empty()) {
    throw aggregate_failure_error("bag_exact: every enumerated component fit failed");
  }
  if (bp.skipped > 0) {
    for (double& w : bp.weights) w /= surviving_weight;
  }
  return bp;
}

// Monte Carlo bagged posterior: B bootstrap datasets drawn from per-component
// substreams root.child(b), fit independently (parallelizable), weights 1/B
// over surviving components.
inline BaggedPosterior bag_monte_carlo(const Model& model, const Dataset& data, long m, long b,
                                       const SeedPath& root, int threads = 1) {
  if (b < 1) throw std::invalid_argument("bag_monte_carlo: need at least one component");
  if (m < 1) throw std::invalid_argument("bag_monte_carlo: bootstrap size must be positive");
  const long n = data.rows();

  std::optional<LocationSolver> solver;
  if (const auto* loc = std::get_if<GaussianLocationModel>(&model)) {
    solver.emplace(*loc, m);
  }

  std::vector<std::optional<PosteriorComponent>> slots(static_cast<std::size_t>(b));
  parallel_for(b, threads, [&](long k) {
    Stream stream(root.child(static_cast<std::uint32_t>(k)));
    const std::vector<long> counts = draw_counts(n, m, stream);
    try {
      slots[static_cast<std::size_t>(k)] =
          fit_component(model, resample(data, counts), solver ? &*solver : nullptr);
    } catch (...) {
      if (!detail::skippable_fit_failure(std::current_exception())) throw;
    }
  });

  BaggedPosterior bp;
  bp.m = m;
  bp.root = root;
  for (long k = 0; k < b; ++k) {
    auto& slot = slots[static_cast<std::size_t>(k)];
    if (slot.has_value()) {
      bp.components.push_back(std::move(*slot));
      bp.component_seeds.push_back(root.child(static_cast<std::uint32_t>(k)));
    } else {
      ++bp.skipped;
    }
  }
  if (bp.components.empty()) {
    throw aggregate_failure_error("bag_monte_carlo: all " + std::to_string(b) +
                                  " component fits failed");
  }
  bp.weights.assign(bp.components.size(), 1.0 / static_cast<double>(bp.components.size()));
  return bp;
}

// Mixture moments by the law of total covariance.
struct BaggedMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd within_cov;
  Eigen::MatrixXd between_cov;
};

inline BaggedMoments bagged_moments(const BaggedPosterior& bp) {
  bp.validate();
  const Eigen::Index d = bp.dim();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < bp.components.size(); ++i) {
    mean += bp.weights[i] * component_parameter_mean(bp.components[i]);
  }
  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd between = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < bp.components.size(); ++i) {
    within += bp.weights[i] * component_parameter_cov(bp.components[i]);
    const Eigen::VectorXd dev = component_parameter_mean(bp.components[i]) - mean;
    between += bp.weights[i] * (dev * dev.transpose());
  }
  BaggedMoments out;
  out.mean = std::move(mean);
  out.within_cov = symmetrize(within);
  out.between_cov = symmetrize(between);
  out.cov = out.within_cov + out.between_cov;
  return out;
}

// Bagged moments for the Gaussian location model in closed form: the mixture
// mean applies the posterior response operator to the sample mean, the
// within part is the fixed posterior covariance at sample size M, and the
// between part is the bootstrap covariance of the resampled mean pushed
// through the response operator.
inline BaggedMoments gaussian_location_bagged_moments_closed_form(
    const GaussianLocationModel& model, const Dataset& data, long m) {
  if (data.is_regression()) {
    throw std::invalid_argument(
        "gaussian_location_bagged_moments_closed_form: needs a location dataset");
  }
  const LocationSolver solver(model, m);
  const Eigen::VectorXd xbar = row_mean(data.observations());
  const Eigen::MatrixXd sigma_hat = scatter_about(data.observations(), xbar);
  const Eigen::MatrixXd& a = solver.response();
  BaggedMoments out;
  out.mean = a * xbar;
  out.within_cov = solver.cov();
  out.between_cov = symmetrize((a * sigma_hat * a.transpose()) / static_cast<double>(m));
  out.cov = out.within_cov + out.between_cov;
  return out;
}

// Scalar mixture for u^T theta across all components.
inline ScalarMixture scalar_mixture(const BaggedPosterior& bp, const Eigen::VectorXd& u) {
  bp.validate();
  std::vector<ScalarComponent> comps;
  comps.reserve(bp.components.size());
  for (const auto& c : bp.components) comps.push_back(component_scalar(c, u));
  return ScalarMixture(std::move(comps), bp.weights);
}

// Closed-form posterior predictive of one component at regressor z_new.
inline ScalarComponent component_predictive(const PosteriorComponent& component,
                                            const Model& model, const Eigen::VectorXd& z_new) {
  if (const auto* nig = std::get_if<NIGPosterior>(&component)) {
    return nig->predictive(z_new);
  }
  const auto& g = std::get<GaussianPosterior>(component);
  if (const auto* flat = std::get_if<FlatLinRegModel>(&model)) {
    if (z_new.size() != g.dim()) {
      throw std::invalid_argument("component_predictive: regressor size mismatch");
    }
    const double var = flat->sigma2 + quad_form(g.cov(), z_new);
    return GaussianScalar(z_new.dot(g.mean()), std::sqrt(var));
  }
  throw std::invalid_argument(
      "component_predictive: needs a regression model with a closed-form predictive");
}

inline double standard_predictive_log_density(const Model& model,
                                              const PosteriorComponent& component,
                                              const Eigen::VectorXd& z_new, double y_new) {
  return component_log_pdf(component_predictive(component, model, z_new), y_new);
}

// log of the mixture predictive density at (z_new, y_new), max-shifted.
inline double bagged_predictive_log_density(const BaggedPosterior& bp, const Model& model,
                                            const Eigen::VectorXd& z_new, double y_new) {
  bp.validate();
  std::vector<ScalarComponent> predictives;
  predictives.reserve(bp.components.size());
  for (const auto& c : bp.components) predictives.push_back(component_predictive(c, model, z_new));
  ScalarMixture mix(std::move(predictives), bp.weights);
  return mix.log_pdf(y_new);
}

// Monte Carlo standard errors of the bagged mean and standard deviation of
// u^T theta across components (mean: sd/sqrt(B); sd: delta method on the
// component first and second moments).
struct ChooseBDiagnostic {
  double se_mean = 0.0;
  double se_sd = 0.0;
};

inline ChooseBDiagnostic choose_b_diagnostic(const BaggedPosterior& bp, const Eigen::VectorXd& u) {
  bp.validate();
  const std::size_t b = bp.components.size();
  if (b < 2) {
    throw insufficient_components_error(
        "choose_b_diagnostic: need at least 2 components, have " + std::to_string(b));
  }
  for (double w : bp.weights) {
    if (std::abs(w - 1.0 / static_cast<double>(b)) > 1e-12) {
      throw std::invalid_argument("choose_b_diagnostic: requires equal component weights");
    }
  }

  std::vector<double> mu(b), second(b);
  for (std::size_t i = 0; i < b; ++i) {
    const ScalarComponent s = component_scalar(bp.components[i], u);
    mu[i] = component_mean(s);
    second[i] = component_variance(s) + mu[i] * mu[i];
  }
  const double bd = static_cast<double>(b);
  double mu_bar = 0.0, second_bar = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    mu_bar += mu[i];
    second_bar += second[i];
  }
  mu_bar /= bd;
  second_bar /= bd;

  double var_mu = 0.0, var_second = 0.0, cov_ms = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    var_mu += (mu[i] - mu_bar) * (mu[i] - mu_bar);
    var_second += (second[i] - second_bar) * (second[i] - second_bar);
    cov_ms += (second[i] - second_bar) * (mu[i] - mu_bar);
  }
  var_mu /= (bd - 1.0);
  var_second /= (bd - 1.0);
  cov_ms /= (bd - 1.0);

  ChooseBDiagnostic out;
  out.se_mean = std::sqrt(var_mu / bd);
  const double mix_var = second_bar - mu_bar * mu_bar;
  if (mix_var > 0.0) {
    const double sd = std::sqrt(mix_var);
    const double ga = 0.5 / sd;
    const double gc = -mu_bar / sd;
    const double v = ga * ga * var_second + 2.0 * ga * gc * cov_ms + gc * gc * var_mu;
    out.se_sd = v > 0.0 ? std::sqrt(v / bd) : 0.0;
  }
  return out;
}

}  // namespace bagbayes
