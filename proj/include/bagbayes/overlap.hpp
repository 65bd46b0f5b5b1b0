#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bagbayes/bagging.hpp"
#include "bagbayes/dataset.hpp"
#include "bagbayes/distributions.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/linalg.hpp"
#include "bagbayes/parallel.hpp"

namespace bagbayes {

// Equal-tail interval at level 1 - alpha.  Closed on both ends.
struct CredibleInterval {
  double lower;
  double upper;
  double level;

  CredibleInterval(double lower_, double upper_, double level_)
      : lower(lower_), upper(upper_), level(level_) {
    if (!(lower <= upper)) {
      throw std::invalid_argument("CredibleInterval: lower must not exceed upper");
    }
    if (!(level > 0.0 && level < 1.0)) {
      throw std::invalid_argument("CredibleInterval: level must lie in (0, 1)");
    }
  }
};

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1)");
  }
}

inline CredibleInterval central_interval(const GaussianScalar& p, double alpha) {
  check_alpha(alpha);
  const double half = p.sd * normal_quantile(1.0 - 0.5 * alpha);
  return CredibleInterval(p.mean - half, p.mean + half, 1.0 - alpha);
}

inline CredibleInterval central_interval(const StudentScalar& p, double alpha) {
  check_alpha(alpha);
  const double half = p.scale * student_t_quantile(1.0 - 0.5 * alpha, p.dof);
  return CredibleInterval(p.center - half, p.center + half, 1.0 - alpha);
}

enum class BaggedIntervalMode { moment_matched_normal, mixture_quantile };

inline CredibleInterval central_interval(const ScalarMixture& mix, double alpha,
                                         BaggedIntervalMode mode) {
  check_alpha(alpha);
  if (mode == BaggedIntervalMode::moment_matched_normal) {
    return central_interval(moment_match(mix), alpha);
  }
  return CredibleInterval(mix.quantile(0.5 * alpha), mix.quantile(1.0 - 0.5 * alpha),
                          1.0 - alpha);
}

inline CredibleInterval central_interval(
    const ScalarPosterior& p, double alpha,
    BaggedIntervalMode mode = BaggedIntervalMode::moment_matched_normal) {
  if (const auto* g = std::get_if<GaussianScalar>(&p)) return central_interval(*g, alpha);
  if (const auto* t = std::get_if<StudentScalar>(&p)) return central_interval(*t, alpha);
  return central_interval(std::get<ScalarMixture>(p), alpha, mode);
}

// Interval for u^T theta under the bagged posterior.  Moment-matched mode
// uses the normal matching the mixture's mean and variance; mixture-quantile
// mode inverts the mixture CDF by bisection.
inline CredibleInterval bagged_interval(
    const BaggedPosterior& bp, const Eigen::VectorXd& u, double alpha,
    BaggedIntervalMode mode = BaggedIntervalMode::moment_matched_normal) {
  return central_interval(scalar_mixture(bp, u), alpha, mode);
}

// Closed intervals: touching endpoints count as overlap.
inline bool intervals_overlap(const CredibleInterval& a, const CredibleInterval& b) {
  return std::max(a.lower, b.lower) <= std::min(a.upper, b.upper);
}

// Lower bound (1 - alpha)(1 - alpha') on the probability that two valid
// credible sets intersect.
inline double overlap_bound(double alpha, double alpha_prime) {
  if (!(alpha >= 0.0 && alpha < 1.0) || !(alpha_prime >= 0.0 && alpha_prime < 1.0)) {
    throw std::invalid_argument("overlap_bound: levels must lie in [0, 1)");
  }
  return (1.0 - alpha) * (1.0 - alpha_prime);
}

enum class OverlapWhich { standard, bagged };

// Limiting overlap probability for the fixed-dimension Gaussian location
// model.  Standard: Pr(|W| <= z sqrt(2) (u'Vu / u'S u)^.5); bagged replaces V
// by (V + S)/c with c the limit of M/N.
inline double asymptotic_overlap_location(const Eigen::MatrixXd& v,
                                          const Eigen::MatrixXd& sigma_true,
                                          const Eigen::VectorXd& u, double alpha, double c,
                                          OverlapWhich which) {
  check_alpha(alpha);
  require_symmetric(v, "asymptotic_overlap_location: V");
  require_symmetric(sigma_true, "asymptotic_overlap_location: Sigma_true");
  if (v.rows() != sigma_true.rows() || u.size() != v.rows()) {
    throw std::invalid_argument("asymptotic_overlap_location: dimension mismatch");
  }
  if (u.isZero(0.0)) {
    throw std::invalid_argument("asymptotic_overlap_location: direction must be nonzero");
  }
  const double us = quad_form(sigma_true, u);
  if (!(us > 0.0)) {
    throw std::invalid_argument(
        "asymptotic_overlap_location: u^T Sigma_true u must be positive");
  }
  const double uv = quad_form(v, u);
  if (uv < 0.0) {
    throw std::invalid_argument("asymptotic_overlap_location: u^T V u must be non-negative");
  }
  const double z = normal_quantile(1.0 - 0.5 * alpha);
  double numerator = uv;
  if (which == OverlapWhich::bagged) {
    if (!(c > 0.0)) throw std::invalid_argument("asymptotic_overlap_location: c must be positive");
    numerator = (uv + us) / c;
  }
  return normal_central_prob(z * std::sqrt(2.0) * std::sqrt(numerator / us));
}

enum class GrowingDimWhich { standard_exact, bagged_lower_bound };

// Growing-dimension location model (V = I, flat prior, Gaussian data,
// ||u|| = 1).  Standard is exact in N; bagged is the Student-t lower bound
// Pr(|T_{2N-2}| <= z sqrt((N-1)/M)).
inline double growing_dim_overlap(double sigma_true_quadform, double alpha, long n, long m,
                                  GrowingDimWhich which) {
  check_alpha(alpha);
  const double z = normal_quantile(1.0 - 0.5 * alpha);
  if (which == GrowingDimWhich::standard_exact) {
    if (!(sigma_true_quadform > 0.0)) {
      throw std::invalid_argument("growing_dim_overlap: u^T Sigma_true u must be positive");
    }
    return normal_central_prob(z * std::sqrt(2.0) / std::sqrt(sigma_true_quadform));
  }
  if (n < 2) {
    throw std::invalid_argument("growing_dim_overlap: the bagged bound requires n >= 2");
  }
  if (m < 1) throw std::invalid_argument("growing_dim_overlap: m must be positive");
  const double dof = 2.0 * static_cast<double>(n) - 2.0;
  const double arg = z * std::sqrt(static_cast<double>(n - 1) / static_cast<double>(m));
  return student_t_central_prob(arg, dof);
}

// Inputs for the regular-model (Bernstein-von Mises) overlap formulas.
struct SandwichInputs {
  Eigen::MatrixXd j;
  Eigen::MatrixXd k;
  double c = 1.0;
  Eigen::VectorXd u;
  double alpha = 0.05;

  void validate() const {
    check_alpha(alpha);
    require_symmetric(j, "SandwichInputs: J");
    require_symmetric(k, "SandwichInputs: K");
    if (j.rows() != k.rows() || u.size() != j.rows()) {
      throw std::invalid_argument("SandwichInputs: dimension mismatch");
    }
    if (u.isZero(0.0)) throw std::invalid_argument("SandwichInputs: direction must be nonzero");
    if (!(c > 0.0)) throw std::invalid_argument("SandwichInputs: c must be positive");
  }
};

// Asymptotic overlap for regular models.  Standard numerator u'J^{-1}u;
// bagged numerator u'(J^{-1}/c + J^{-1}KJ^{-1}/c)u; both over the sandwich
// quadratic form u'J^{-1}KJ^{-1}u.
inline double asymptotic_overlap_regular(const SandwichInputs& inputs, OverlapWhich which) {
  inputs.validate();
  Eigen::LLT<Eigen::MatrixXd> j_llt = spd_llt(inputs.j, "asymptotic_overlap_regular: J");
  spd_llt(inputs.k, "asymptotic_overlap_regular: K");
  const Eigen::VectorXd jinv_u = j_llt.solve(inputs.u);
  const double num_model = inputs.u.dot(jinv_u);
  const double sandwich = jinv_u.dot(inputs.k * jinv_u);
  if (!(sandwich > 0.0)) {
    throw std::invalid_argument("asymptotic_overlap_regular: sandwich form must be positive");
  }
  const double z = normal_quantile(1.0 - 0.5 * inputs.alpha);
  const double numerator =
      which == OverlapWhich::standard ? num_model : (num_model + sandwich) / inputs.c;
  return normal_central_prob(z * std::sqrt(2.0) * std::sqrt(numerator / sandwich));
}

enum class LinRegCase { correct, fixed_design, random_design_bound };

// Geometry of the two replicate designs: v = Z (Z'Z)^{-1} u and its replicate
// analogue, the model and true standard deviations, the quadratic form
// v' K(Z) v, and the projected true means v'm(Z), v~'m(Z~).
struct LinRegGeometry {
  double v_norm = 0.0;
  double vt_norm = 0.0;
  double sigma = 1.0;
  double sigma_tilde = 1.0;
  double sigma_dagger = 1.0;
  double k_quadform = 0.0;
  double offset_v = 0.0;
  double offset_vt = 0.0;
};

struct LinRegOverlapResult {
  double probability = 0.0;
  bool is_upper_bound = false;
};

// Flat-prior linear regression overlap probabilities.  The correct and
// fixed-design cases are exact; the random-design case is an upper bound and
// is labeled as such in the result.
inline LinRegOverlapResult linreg_overlap(LinRegCase which, const LinRegGeometry& g,
                                          double alpha) {
  check_alpha(alpha);
  if (!(g.sigma > 0.0) || !(g.sigma_tilde > 0.0)) {
    throw std::invalid_argument("linreg_overlap: model standard deviations must be positive");
  }
  const double z = normal_quantile(1.0 - 0.5 * alpha);
  LinRegOverlapResult out;
  switch (which) {
    case LinRegCase::correct: {
      const double denom = g.sigma_dagger * std::hypot(g.v_norm, g.vt_norm);
      if (!(denom > 0.0)) {
        throw std::invalid_argument("linreg_overlap: denominator must be positive");
      }
      out.probability =
          normal_central_prob(z * (g.sigma * g.v_norm + g.sigma_tilde * g.vt_norm) / denom);
      return out;
    }
    case LinRegCase::fixed_design: {
      if (!(g.k_quadform > 0.0)) {
        throw std::invalid_argument("linreg_overlap: v^T K(Z) v must be positive");
      }
      out.probability = normal_central_prob(z * (g.sigma + g.sigma_tilde) * g.v_norm /
                                            (std::sqrt(2.0) * std::sqrt(g.k_quadform)));
      return out;
    }
    case LinRegCase::random_design_bound: {
      const double denom = g.sigma_dagger * std::hypot(g.v_norm, g.vt_norm);
      if (!(denom > 0.0)) {
        throw std::invalid_argument("linreg_overlap: denominator must be positive");
      }
      const double offset = (g.offset_v - g.offset_vt) / denom;
      const double a =
          z * std::sqrt(g.sigma * g.sigma + g.sigma_tilde * g.sigma_tilde) / g.sigma_dagger;
      out.probability = normal_cdf(a - offset) - normal_cdf(-a - offset);
      out.is_upper_bound = true;
      return out;
    }
  }
  throw std::logic_error("linreg_overlap: unknown case");
}

// One estimated overlap probability per level for a single direction.
struct OverlapRow {
  std::string direction_id;
  double level = 0.0;
  double overlap_prob = 0.0;
  double bound = 0.0;
  long replicates = 0;
  bool violated = false;
};

struct OverlapReport {
  std::vector<OverlapRow> rows;
  long skipped_replicates = 0;
};

using PairSource = std::function<std::pair<Dataset, Dataset>(long)>;
using ScalarFit = std::function<ScalarPosterior(const Dataset&, const Eigen::VectorXd&)>;

// Monte Carlo overlap estimation: fraction of replicate pairs whose central
// intervals intersect, per level.  Replicates whose fits fail are excluded
// and counted; the estimate errors out only if every replicate fails.
inline OverlapReport estimate_overlap(const PairSource& pair_source, const ScalarFit& fit,
                                      const Eigen::VectorXd& u, const std::vector<double>& levels,
                                      long r, BaggedIntervalMode mode, int threads = 1,
                                      const std::string& direction_id = "u") {
  if (r < 1) throw std::invalid_argument("estimate_overlap: need at least one replicate");
  if (levels.empty()) throw std::invalid_argument("estimate_overlap: need at least one level");
  for (double level : levels) {
    if (!(level > 0.0 && level < 1.0)) {
      throw std::invalid_argument("estimate_overlap: levels must lie in (0, 1)");
    }
  }

  const std::size_t num_levels = levels.size();
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(r), 0);
  std::vector<std::uint8_t> hits(static_cast<std::size_t>(r) * num_levels, 0);

  parallel_for(r, threads, [&](long k) {
    std::pair<Dataset, Dataset> pair = pair_source(k);
    ScalarPosterior a(GaussianScalar{});
    ScalarPosterior b(GaussianScalar{});
    try {
      a = fit(pair.first, u);
      b = fit(pair.second, u);
    } catch (...) {
      if (!detail::skippable_fit_failure(std::current_exception())) throw;
      return;
    }
    ok[static_cast<std::size_t>(k)] = 1;
    for (std::size_t li = 0; li < num_levels; ++li) {
      const double alpha = 1.0 - levels[li];
      const bool hit = intervals_overlap(central_interval(a, alpha, mode),
                                         central_interval(b, alpha, mode));
      hits[static_cast<std::size_t>(k) * num_levels + li] = hit ? 1 : 0;
    }
  });

  long successes = 0;
  for (long k = 0; k < r; ++k) successes += ok[static_cast<std::size_t>(k)];
  if (successes == 0) {
    throw aggregate_failure_error("estimate_overlap: every replicate fit failed");
  }

  OverlapReport report;
  report.skipped_replicates = r - successes;
  for (std::size_t li = 0; li < num_levels; ++li) {
    long count = 0;
    for (long k = 0; k < r; ++k) {
      if (ok[static_cast<std::size_t>(k)]) {
        count += hits[static_cast<std::size_t>(k) * num_levels + li];
      }
    }
    OverlapRow row;
    row.direction_id = direction_id;
    row.level = levels[li];
    row.overlap_prob = static_cast<double>(count) / static_cast<double>(successes);
    row.bound = levels[li] * levels[li];
    row.replicates = successes;
    row.violated = row.overlap_prob < row.bound;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace bagbayes
