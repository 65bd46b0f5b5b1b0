#pragma once

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <variant>
#include <vector>

#include "bagbayes/errors.hpp"

namespace bagbayes {

inline double normal_cdf(double x) { return cdf(boost::math::normal_distribution<double>(), x); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  return quantile(boost::math::normal_distribution<double>(), p);
}

inline double student_t_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_cdf: dof must be positive");
  return cdf(boost::math::students_t_distribution<double>(dof), x);
}

inline double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("student_t_quantile: p must lie in (0, 1)");
  if (!(dof > 0.0)) throw std::invalid_argument("student_t_quantile: dof must be positive");
  return quantile(boost::math::students_t_distribution<double>(dof), p);
}

// Pr(|W| <= a) for W standard normal, computed without cancellation.
inline double normal_central_prob(double a) {
  if (!(a >= 0.0)) throw std::invalid_argument("normal_central_prob: a must be non-negative");
  return std::erf(a / std::numbers::sqrt2);
}

// Pr(|T| <= a) for T Student-t with `dof` degrees of freedom.
inline double student_t_central_prob(double a, double dof) {
  if (!(a >= 0.0)) throw std::invalid_argument("student_t_central_prob: a must be non-negative");
  return 1.0 - 2.0 * cdf(boost::math::students_t_distribution<double>(dof), -a);
}

// Scalar Gaussian with positive standard deviation.
struct GaussianScalar {
  double mean = 0.0;
  double sd = 1.0;

  GaussianScalar() = default;
  GaussianScalar(double mean_, double sd_) : mean(mean_), sd(sd_) {
    if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
      throw std::invalid_argument("GaussianScalar: mean must be finite and sd positive");
    }
  }

  double cdf(double x) const { return normal_cdf((x - mean) / sd); }
  double quantile(double p) const { return mean + sd * normal_quantile(p); }
  double log_pdf(double x) const {
    const double z = (x - mean) / sd;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
  }
  double variance() const { return sd * sd; }
};

// Scalar location-scale Student-t with positive scale and dof.
struct StudentScalar {
  double center = 0.0;
  double scale = 1.0;
  double dof = 1.0;

  StudentScalar() = default;
  StudentScalar(double center_, double scale_, double dof_)
      : center(center_), scale(scale_), dof(dof_) {
    if (!std::isfinite(center) || !(scale > 0.0) || !std::isfinite(scale) || !(dof > 0.0)) {
      throw std::invalid_argument(
          "StudentScalar: center must be finite, scale and dof positive");
    }
  }

  double cdf(double x) const { return student_t_cdf((x - center) / scale, dof); }
  double quantile(double p) const { return center + scale * student_t_quantile(p, dof); }
  double log_pdf(double x) const {
    const double t = (x - center) / scale;
    return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
           0.5 * std::log(dof * std::numbers::pi) - std::log(scale) -
           0.5 * (dof + 1.0) * std::log1p(t * t / dof);
  }
  // Finite only for dof > 2.
  double variance() const {
    if (!(dof > 2.0)) {
      throw numerical_degeneracy_error(
          "StudentScalar: variance undefined for dof <= 2 (dof = " + std::to_string(dof) + ")");
    }
    return scale * scale * dof / (dof - 2.0);
  }
  double mean() const {
    if (!(dof > 1.0)) {
      throw numerical_degeneracy_error("StudentScalar: mean undefined for dof <= 1");
    }
    return center;
  }
};

using ScalarComponent = std::variant<GaussianScalar, StudentScalar>;

inline double component_cdf(const ScalarComponent& c, double x) {
  return std::visit([x](const auto& d) { return d.cdf(x); }, c);
}
inline double component_quantile(const ScalarComponent& c, double p) {
  return std::visit([p](const auto& d) { return d.quantile(p); }, c);
}
inline double component_log_pdf(const ScalarComponent& c, double x) {
  return std::visit([x](const auto& d) { return d.log_pdf(x); }, c);
}
inline double component_mean(const ScalarComponent& c) {
  if (const auto* g = std::get_if<GaussianScalar>(&c)) return g->mean;
  return std::get<StudentScalar>(c).mean();
}
inline double component_variance(const ScalarComponent& c) {
  return std::visit([](const auto& d) { return d.variance(); }, c);
}

// Finite mixture of scalar components.  Weights are validated to be positive
// and to sum to one within 1e-9, then renormalized exactly.
class ScalarMixture {
 public:
  ScalarMixture(std::vector<ScalarComponent> components, std::vector<double> weights)
      : components_(std::move(components)), weights_(std::move(weights)) {
    if (components_.empty()) {
      throw std::invalid_argument("ScalarMixture: need at least one component");
    }
    if (components_.size() != weights_.size()) {
      throw std::invalid_argument("ScalarMixture: components and weights must align");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("ScalarMixture: weights must be positive and finite");
      }
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("ScalarMixture: weights must sum to one");
    }
    for (double& w : weights_) w /= total;
  }

  const std::vector<ScalarComponent>& components() const { return components_; }
  const std::vector<double>& weights() const { return weights_; }

  double cdf(double x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      acc += weights_[i] * component_cdf(components_[i], x);
    }
    return acc;
  }

  double log_pdf(double x) const {
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(components_.size());
    for (std::size_t i = 0; i < components_.size(); ++i) {
      terms[i] = std::log(weights_[i]) + component_log_pdf(components_[i], x);
      max_term = std::max(max_term, terms[i]);
    }
    if (!std::isfinite(max_term)) return max_term;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc);
  }

  double mean() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      acc += weights_[i] * component_mean(components_[i]);
    }
    return acc;
  }

  // Law of total variance over the mixing index.
  double variance() const {
    const double m = mean();
    double acc = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const double mu = component_mean(components_[i]);
      acc += weights_[i] * (component_variance(components_[i]) + (mu - m) * (mu - m));
    }
    return acc;
  }

  // Quantile by bisection.  The bracket [min_i q_i(p), max_i q_i(p)] always
  // contains the mixture quantile because the mixture cdf is a convex
  // combination of the component cdfs.
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("ScalarMixture::quantile: p must lie in (0, 1)");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& c : components_) {
      const double q = component_quantile(c, p);
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    if (lo == hi) return lo;
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (cdf(mid) < p) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (hi - lo <= 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)})) break;
    }
    return 0.5 * (lo + hi);
  }

 private:
  std::vector<ScalarComponent> components_;
  std::vector<double> weights_;
};

// Gaussian with the mixture's first two moments.
inline GaussianScalar moment_match(const ScalarMixture& mix) {
  const double var = mix.variance();
  if (!(var > 0.0) || !std::isfinite(var)) {
    throw numerical_degeneracy_error("moment_match: mixture variance must be positive and finite");
  }
  return GaussianScalar(mix.mean(), std::sqrt(var));
}

// Any scalar posterior handled by the interval machinery.
using ScalarPosterior = std::variant<GaussianScalar, StudentScalar, ScalarMixture>;

inline double posterior_cdf(const ScalarPosterior& p, double x) {
  return std::visit([x](const auto& d) { return d.cdf(x); }, p);
}
inline double posterior_quantile(const ScalarPosterior& p, double q) {
  return std::visit([q](const auto& d) { return d.quantile(q); }, p);
}
inline double posterior_log_pdf(const ScalarPosterior& p, double x) {
  return std::visit([x](const auto& d) { return d.log_pdf(x); }, p);
}

}  // namespace bagbayes
