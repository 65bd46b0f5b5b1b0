// Acceptance gate.  Each check prints exactly one line
//
//   ACCEPTANCE <k> (<name>): PASS|FAIL(<details>) [<seconds>s]
//
// and the binary exits nonzero if any check fails.  Tolerances are pinned
// next to each check: closed-form comparisons use tight relative bounds,
// Monte Carlo rates use binomial standard errors at the known true
// probability, and one-sided bounds subtract two standard errors from the
// guaranteed floor.  Elapsed times are informational only.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <bagbayes/bagging.hpp>
#include <bagbayes/dataset.hpp>
#include <bagbayes/distributions.hpp>
#include <bagbayes/experiments.hpp>
#include <bagbayes/models.hpp>
#include <bagbayes/overlap.hpp>
#include <bagbayes/parallel.hpp>
#include <bagbayes/randstream.hpp>
#include <bagbayes/sampler.hpp>
#include <bagbayes/simgen.hpp>

#include "support/quadrature.hpp"

namespace fs = std::filesystem;
using namespace bagbayes;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return std::string(buf);
}

void require(Outcome& o, bool cond, const std::string& msg) {
  if (cond) return;
  o.pass = false;
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += msg;
}

double binom_se(double p, long n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

Eigen::MatrixXd random_pd(Stream& s, Eigen::Index d, double ridge) {
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = s.normal();
  }
  Eigen::MatrixXd out = a * a.transpose();
  out.diagonal().array() += ridge;
  return 0.5 * (out + out.transpose());
}

Eigen::VectorXd random_vec(Stream& s, Eigen::Index d) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = s.normal();
  if (v.isZero(0.0)) v(0) = 1.0;
  return v;
}

// --- check 1: the product bound is exact arithmetic --------------------------

void check_bound_arithmetic(Outcome& o) {
  require(o, overlap_bound(0.05, 0.05) == 0.9025,
          fmt("overlap_bound(0.05,0.05) = %.17g, want exactly 0.9025",
              overlap_bound(0.05, 0.05)));
  require(o, overlap_bound(0.0, 0.0) == 1.0, "overlap_bound(0,0) != 1");
}

// --- check 2: exhaustive bagging reproduces the location closed form ---------

void check_exact_bag_vs_closed_form(Outcome& o) {
  const double tol = 1e-10;
  Stream rng(SeedPath(1001));
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_below(2));
    const long n = 2 + static_cast<long>(rng.uniform_below(3));
    const long m = 1 + static_cast<long>(rng.uniform_below(4));
    const Eigen::MatrixXd v = random_pd(rng, d, 0.2);
    const bool flat = rng.uniform_below(2) == 0;
    const Eigen::MatrixXd v0_inv =
        flat ? Eigen::MatrixXd::Zero(d, d).eval() : random_pd(rng, d, 0.1);
    Eigen::MatrixXd x(n, d);
    for (long i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = 3.0 * rng.normal();
    }
    const GaussianLocationModel model(v, v0_inv);
    const Dataset data = Dataset::location(x);

    const BaggedMoments got = bagged_moments(bag_exact(Model(model), data, m));
    const BaggedMoments want = gaussian_location_bagged_moments_closed_form(model, data, m);
    const double worst = std::max({oracle::rel_err(got.mean, want.mean),
                                   oracle::rel_err(got.cov, want.cov),
                                   oracle::rel_err(got.within_cov, want.within_cov),
                                   oracle::rel_err(got.between_cov, want.between_cov)});
    require(o, worst <= tol,
            fmt("case %d (d=%ld n=%ld m=%ld): rel err %.3g > %.0e", rep,
                static_cast<long>(d), n, m, worst, tol));
    if (!o.pass) return;
  }
}

// --- check 3: conjugate posteriors agree with numerical integration ----------

void check_fits_vs_quadrature(Outcome& o) {
  const double tol = 1e-6;
  Stream rng(SeedPath(1002));
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_below(2));
    switch (rep % 3) {
      case 0: {
        const long n = 2 + static_cast<long>(rng.uniform_below(4));
        const Eigen::MatrixXd v = random_pd(rng, d, 0.3);
        const Eigen::MatrixXd v0_inv = (rng.uniform_below(2) == 0)
                                           ? Eigen::MatrixXd::Zero(d, d).eval()
                                           : random_pd(rng, d, 0.1);
        Eigen::MatrixXd x(n, d);
        for (long i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) x(i, j) = 2.0 * rng.normal();
        }
        const GaussianPosterior post =
            gaussian_location_posterior(GaussianLocationModel(v, v0_inv), Dataset::location(x));
        const oracle::VectorStats ref = oracle::location_posterior_moments(v, v0_inv, x);
        require(o, oracle::rel_err(post.mean(), ref.mean) <= tol,
                fmt("case %d location mean rel err %.3g", rep,
                    oracle::rel_err(post.mean(), ref.mean)));
        require(o, oracle::rel_err(post.cov(), ref.cov) <= tol,
                fmt("case %d location cov rel err %.3g", rep,
                    oracle::rel_err(post.cov(), ref.cov)));
        break;
      }
      case 1: {
        const long n = static_cast<long>(d) + 1 + static_cast<long>(rng.uniform_below(3));
        const double a0 = 1.6 + rng.uniform01();
        const double b0 = 0.6 + rng.uniform01();
        const double lambda = 0.5 + rng.uniform01();
        Eigen::MatrixXd z(n, d);
        for (long i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
        }
        const Eigen::VectorXd beta = random_vec(rng, d);
        Eigen::VectorXd y = z * beta;
        for (long i = 0; i < n; ++i) y(i) += 0.5 * rng.normal();
        const NIGPosterior post = nig_regression_posterior(NIGRegressionModel(a0, b0, lambda),
                                                           Dataset::regression(z, y));
        const oracle::NIGStats ref = oracle::nig_posterior_moments(a0, b0, lambda, z, y);
        require(o, oracle::rel_err(post.beta_mean(), ref.beta_mean) <= tol,
                fmt("case %d nig beta mean rel err %.3g", rep,
                    oracle::rel_err(post.beta_mean(), ref.beta_mean)));
        require(o, oracle::rel_err(post.beta_cov(), ref.beta_cov) <= tol,
                fmt("case %d nig beta cov rel err %.3g", rep,
                    oracle::rel_err(post.beta_cov(), ref.beta_cov)));
        require(o, oracle::rel_err(post.b() / (post.a() - 1.0), ref.sigma2_mean) <= tol,
                fmt("case %d nig E[s2] rel err %.3g", rep,
                    oracle::rel_err(post.b() / (post.a() - 1.0), ref.sigma2_mean)));
        require(o, oracle::rel_err(post.a() / post.b(), ref.inv_sigma2_mean) <= tol,
                fmt("case %d nig E[1/s2] rel err %.3g", rep,
                    oracle::rel_err(post.a() / post.b(), ref.inv_sigma2_mean)));
        break;
      }
      default: {
        const long n = static_cast<long>(d) + 1 + static_cast<long>(rng.uniform_below(3));
        const double sigma2 = 0.5 + 1.5 * rng.uniform01();
        Eigen::MatrixXd z(n, d);
        for (long i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
        }
        const Eigen::VectorXd beta = random_vec(rng, d);
        Eigen::VectorXd y = z * beta;
        for (long i = 0; i < n; ++i) y(i) += rng.normal();
        const GaussianPosterior post =
            flat_linreg_posterior(FlatLinRegModel(sigma2), Dataset::regression(z, y));
        const oracle::VectorStats ref = oracle::flat_linreg_moments(sigma2, z, y);
        require(o, oracle::rel_err(post.mean(), ref.mean) <= tol,
                fmt("case %d flat mean rel err %.3g", rep,
                    oracle::rel_err(post.mean(), ref.mean)));
        require(o, oracle::rel_err(post.cov(), ref.cov) <= tol,
                fmt("case %d flat cov rel err %.3g", rep,
                    oracle::rel_err(post.cov(), ref.cov)));
        break;
      }
    }
    if (!o.pass) return;
  }
}

// --- check 4: overlap rates under a 25x variance misspecification ------------
//
// Flat prior, V = 1, truth N(0, 25), N = M = 100.  The standard rate has the
// closed form 2 Phi(z sqrt(2)/5) - 1 at every sample size, so the observed
// rate is Binomial(500, p) around it; 0.09 is about four standard errors.

void check_misspecified_location_rates(Outcome& o) {
  const double p_std = 0.42066855137818813;
  const double bound = 0.9025;
  const long r = 500;
  const LocationScenario scenario{0.0, 5.0, 1.0};
  const GaussianLocationModel model =
      GaussianLocationModel::flat_prior(Eigen::MatrixXd::Identity(1, 1));
  Eigen::VectorXd u(1);
  u(0) = 1.0;
  const SeedPath root(20250401);

  std::vector<std::uint8_t> std_hit(static_cast<std::size_t>(r), 0);
  std::vector<std::uint8_t> bag_hit(static_cast<std::size_t>(r), 0);
  parallel_for(r, 4, [&](long k) {
    const SeedPath kr = root.child(static_cast<std::uint32_t>(k));
    const Dataset d1 = gen_location_data(scenario, 100, kr.child(0));
    const Dataset d2 = gen_location_data(scenario, 100, kr.child(1));
    const auto iv = [&](const Dataset& d) {
      return central_interval(gaussian_location_posterior(model, d).marginal(u), 0.05);
    };
    std_hit[static_cast<std::size_t>(k)] = intervals_overlap(iv(d1), iv(d2)) ? 1 : 0;
    const BaggedPosterior b1 = bag_monte_carlo(Model(model), d1, 100, 50, kr.child(2));
    const BaggedPosterior b2 = bag_monte_carlo(Model(model), d2, 100, 50, kr.child(3));
    bag_hit[static_cast<std::size_t>(k)] =
        intervals_overlap(bagged_interval(b1, u, 0.05), bagged_interval(b2, u, 0.05)) ? 1 : 0;
  });
  double std_rate = 0.0, bag_rate = 0.0;
  for (long k = 0; k < r; ++k) {
    std_rate += std_hit[static_cast<std::size_t>(k)];
    bag_rate += bag_hit[static_cast<std::size_t>(k)];
  }
  std_rate /= static_cast<double>(r);
  bag_rate /= static_cast<double>(r);

  require(o, std::abs(std_rate - p_std) <= 0.09,
          fmt("standard rate %.4f outside %.4f +- 0.09", std_rate, p_std));
  const double floor = bound - 2.0 * binom_se(bound, r);
  require(o, bag_rate >= floor, fmt("bagged rate %.4f < %.4f", bag_rate, floor));
}

// --- check 5: the overlap rate converges as the sample size grows ------------
//
// V = 1 with a proper unit prior and truth N(0, 4): the exact overlap
// probability at size N is 2 Phi(z sqrt((N+1)/(2N))) - 1, decreasing to
// 2 Phi(z/sqrt(2)) - 1.  Rates are checked against the exact values at four
// binomial standard errors, and the empirical errors must shrink up to
// sampling noise.

void check_rate_convergence(Outcome& o) {
  const long sizes[3] = {25, 100, 400};
  const double p_exact[3] = {0.84244719858087141, 0.83632459320046478, 0.83475181930935094};
  const double p_limit = 0.83422372710429607;
  const long r = 500;
  const LocationScenario scenario{0.0, 2.0, 1.0};
  const GaussianLocationModel model(Eigen::MatrixXd::Identity(1, 1),
                                    Eigen::MatrixXd::Identity(1, 1));
  Eigen::VectorXd u(1);
  u(0) = 1.0;
  const SeedPath root(20250402);

  for (int i = 0; i < 2; ++i) {
    require(o, std::abs(p_exact[i + 1] - p_limit) < std::abs(p_exact[i] - p_limit),
            "exact rates do not approach the limit monotonically");
  }

  double rate[3] = {0.0, 0.0, 0.0};
  for (int i = 0; i < 3; ++i) {
    const long n = sizes[i];
    std::vector<std::uint8_t> hit(static_cast<std::size_t>(r), 0);
    parallel_for(r, 4, [&](long k) {
      const SeedPath kr = root.child(static_cast<std::uint32_t>(i)).child(static_cast<std::uint32_t>(k));
      const auto iv = [&](const SeedPath& sp) {
        const Dataset d = gen_location_data(scenario, n, sp);
        return central_interval(gaussian_location_posterior(model, d).marginal(u), 0.05);
      };
      hit[static_cast<std::size_t>(k)] = intervals_overlap(iv(kr.child(0)), iv(kr.child(1))) ? 1 : 0;
    });
    for (long k = 0; k < r; ++k) rate[i] += hit[static_cast<std::size_t>(k)];
    rate[i] /= static_cast<double>(r);
    const double tol = 4.0 * binom_se(p_exact[i], r);
    require(o, std::abs(rate[i] - p_exact[i]) <= tol,
            fmt("n=%ld rate %.4f outside %.6f +- %.4f", n, rate[i], p_exact[i], tol));
  }
  for (int i = 0; i < 2; ++i) {
    const double e0 = std::abs(rate[i] - p_limit);
    const double e1 = std::abs(rate[i + 1] - p_limit);
    const double slack = 2.0 * std::hypot(binom_se(p_exact[i], r), binom_se(p_exact[i + 1], r));
    require(o, e1 <= e0 + slack,
            fmt("error to limit grew: %.4f -> %.4f (slack %.4f)", e0, e1, slack));
  }
}

// --- check 6: overlap rates when the dimension grows with the sample ---------
//
// Truth covariance 0.5 I + 0.5 11', unit model variance with a flat prior,
// direction 1/sqrt(D), N = M = 50.  The standard rate is exactly
// 2 Phi(z sqrt(2 / (0.5 + 0.5 D))) - 1 at any N; the bagged floor is the
// n = m = 50 limit value minus two binomial standard errors.

void check_growing_dimension_rates(Outcome& o) {
  const long dims[2] = {10, 50};
  const double p_std[2] = {0.76275571033283485, 0.41692572045318896};
  const double bag_limit = 0.94477837836084977;
  const long n = 50, m = 50, b = 50, r = 500;
  const SeedPath root(20250403);

  for (int di = 0; di < 2; ++di) {
    const Eigen::Index d = dims[di];
    Eigen::MatrixXd sigma_true = 0.5 * Eigen::MatrixXd::Identity(d, d);
    sigma_true.array() += 0.5;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_true);
    const Eigen::MatrixXd sqrt_sigma = es.operatorSqrt();
    const GaussianLocationModel model =
        GaussianLocationModel::flat_prior(Eigen::MatrixXd::Identity(d, d));
    const Eigen::VectorXd u =
        Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));

    std::vector<std::uint8_t> std_hit(static_cast<std::size_t>(r), 0);
    std::vector<std::uint8_t> bag_hit(static_cast<std::size_t>(r), 0);
    parallel_for(r, 4, [&](long k) {
      const SeedPath kr = root.child(static_cast<std::uint32_t>(di)).child(static_cast<std::uint32_t>(k));
      const auto draw = [&](const SeedPath& sp) {
        Stream st(sp);
        Eigen::MatrixXd x(n, d);
        Eigen::VectorXd g(d);
        for (long i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < d; ++j) g(j) = st.normal();
          x.row(i) = (sqrt_sigma * g).transpose();
        }
        return Dataset::location(x);
      };
      const Dataset d1 = draw(kr.child(0));
      const Dataset d2 = draw(kr.child(1));
      const auto iv = [&](const Dataset& ds) {
        return central_interval(gaussian_location_posterior(model, ds).marginal(u), 0.05);
      };
      std_hit[static_cast<std::size_t>(k)] = intervals_overlap(iv(d1), iv(d2)) ? 1 : 0;
      const BaggedPosterior b1 = bag_monte_carlo(Model(model), d1, m, b, kr.child(2));
      const BaggedPosterior b2 = bag_monte_carlo(Model(model), d2, m, b, kr.child(3));
      bag_hit[static_cast<std::size_t>(k)] =
          intervals_overlap(bagged_interval(b1, u, 0.05), bagged_interval(b2, u, 0.05)) ? 1 : 0;
    });
    double std_rate = 0.0, bag_rate = 0.0;
    for (long k = 0; k < r; ++k) {
      std_rate += std_hit[static_cast<std::size_t>(k)];
      bag_rate += bag_hit[static_cast<std::size_t>(k)];
    }
    std_rate /= static_cast<double>(r);
    bag_rate /= static_cast<double>(r);

    require(o, std::abs(std_rate - p_std[di]) <= 0.06,
            fmt("d=%ld standard rate %.4f outside %.4f +- 0.06", static_cast<long>(d), std_rate,
                p_std[di]));
    const double floor = bag_limit - 2.0 * binom_se(bag_limit, r);
    require(o, bag_rate >= floor,
            fmt("d=%ld bagged rate %.4f < %.4f", static_cast<long>(d), bag_rate, floor));
  }
}

// --- check 7: the sandwich-limit bagged overlap never drops below 1-alpha ----

void check_sandwich_bound(Outcome& o) {
  Stream rng(SeedPath(1006));
  for (int rep = 0; rep < 1000; ++rep) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.uniform_below(4));
    SandwichInputs in;
    in.j = random_pd(rng, d, 0.1);
    in.k = random_pd(rng, d, 0.1);
    in.u = random_vec(rng, d);
    in.c = 2.0 * (1.0 - rng.uniform01());
    in.alpha = 0.05;
    const double p = asymptotic_overlap_regular(in, OverlapWhich::bagged);
    require(o, p >= 0.95 - 1e-12, fmt("case %d: bagged overlap %.6f < 0.95", rep, p));
    if (!o.pass) return;
  }
  SandwichInputs worst;
  worst.j = Eigen::MatrixXd::Identity(2, 2);
  worst.k = 100.0 * Eigen::MatrixXd::Identity(2, 2);
  worst.u = Eigen::VectorXd::Ones(2);
  const double p_std = asymptotic_overlap_regular(worst, OverlapWhich::standard);
  require(o, std::abs(p_std - 0.21835869138182573) <= 1e-10,
          fmt("K=100J standard overlap %.17g != 0.21835869138182573", p_std));
  require(o, p_std < 0.9025, "K=100J standard overlap not below the bound");
}

// --- check 8: valid credible sets overlap at least at the product bound ------
//
// Draw the location from the prior so both posteriors are exactly calibrated;
// the overlap rate must then sit at or above (1-alpha)^2.

void check_generic_overlap_bound(Outcome& o) {
  const long trials = 2000;
  const long n = 10;
  Stream rng(SeedPath(1007));
  long hits = 0;
  for (long trial = 0; trial < trials; ++trial) {
    const double theta = rng.normal();
    const auto interval = [&]() {
      double sum = 0.0;
      for (long i = 0; i < n; ++i) sum += theta + rng.normal();
      const double nd = static_cast<double>(n);
      const double mean = (nd * (sum / nd)) / (nd + 1.0);
      const double sd = std::sqrt(1.0 / (nd + 1.0));
      return central_interval(GaussianScalar(mean, sd), 0.05);
    };
    const CredibleInterval a = interval();
    const CredibleInterval b = interval();
    hits += intervals_overlap(a, b) ? 1 : 0;
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(trials);
  const double floor = 0.9025 - 2.0 * binom_se(0.9025, trials);
  require(o, rate >= floor, fmt("overlap rate %.4f < %.4f", rate, floor));
}

// --- checks 9 and 10 share one misspecified regression run -------------------

const ExperimentResult& misspecified_regression_run() {
  static const ExperimentResult result = [] {
    ExperimentSpec spec{.model = Model(NIGRegressionModel(2.0, 1.0, 1.0))};
    spec.dgp.n = 100;
    spec.dgp.d = 100;
    spec.dgp.f_kind = FKind::nonlinear;
    spec.dgp.g_kind = GKind::uncorrelated;
    spec.b = 20;
    spec.r = 20;
    spec.test_point_count = 100;
    spec.root_seed = 20250406;
    spec.threads = 4;
    return run_overlap_experiment(spec);
  }();
  return result;
}

void check_misspecified_regression_violations(Outcome& o) {
  const ExperimentResult& res = misspecified_regression_run();
  require(o, res.failed_replicates == 0,
          fmt("%ld replicates failed", res.failed_replicates));
  for (const auto& [level, frac] : res.violation_fraction_bagged) {
    require(o, frac == 0.0, fmt("bagged violations %.3f at level %.2f", frac, level));
  }
  const double std95 = res.violation_fraction_standard.at(0.95);
  require(o, std95 > 0.5, fmt("standard violations %.3f at level 0.95, want > 0.5", std95));
}

void check_predictive_gain(Outcome& o) {
  const ExperimentResult& res = misspecified_regression_run();
  require(o, std::isfinite(res.mlpd_diff_ci.first) && std::isfinite(res.mlpd_diff_ci.second),
          "predictive interval is not finite");
  require(o, res.mlpd_diff_ci.first > 0.0,
          fmt("99%% interval for mean log predictive gain is (%.4f, %.4f), want lower > 0",
              res.mlpd_diff_ci.first, res.mlpd_diff_ci.second));
}

// --- check 11: fixed-design heteroskedastic noise ----------------------------

void check_fixed_design(Outcome& o) {
  ExperimentSpec spec{.model = Model(NIGRegressionModel(2.0, 1.0, 1.0))};
  spec.dgp.n = 100;
  spec.dgp.d = 100;
  spec.dgp.f_kind = FKind::linear;
  spec.dgp.g_kind = GKind::fixed_design;
  spec.b = 20;
  spec.r = 20;
  spec.test_point_count = 100;
  spec.root_seed = 20250407;
  spec.threads = 4;
  const ExperimentResult res = run_overlap_experiment(spec);

  require(o, res.failed_replicates == 0, fmt("%ld replicates failed", res.failed_replicates));
  for (const OverlapRow& row : res.bagged_report.rows) {
    require(o, !row.violated,
            fmt("bagged row (%s, %.2f) violates its bound: %.4f < %.4f",
                row.direction_id.c_str(), row.level, row.overlap_prob, row.bound));
    if (!o.pass) return;
  }
  require(o, res.mlpd_diff_ci.first > 0.0,
          fmt("99%% interval for mean log predictive gain is (%.4f, %.4f), want lower > 0",
              res.mlpd_diff_ci.first, res.mlpd_diff_ci.second));
}

// --- check 12: sampler orchestration and an exact-chain recovery -------------

void check_sampler(Outcome& o) {
  // (a) A mock chain exposes the routing: bootstrap data, starting points
  // picked from the long run, and tuning handed from the long run to every
  // short run.
  Eigen::MatrixXd obs(5, 1);
  for (int i = 0; i < 5; ++i) obs(i, 0) = 10.0 * (i + 1);
  const Dataset data = Dataset::location(obs);
  const long t = 7, t_flat = 4, m = 5, b = 3;
  const SeedPath root(777);

  struct Call {
    Eigen::MatrixXd data;
    Eigen::VectorXd init;
    Eigen::VectorXd beta;
    long t = 0;
  };
  std::vector<Call> calls;
  const MCMCProcedure mock = [&](const Dataset& d, long steps, const Eigen::VectorXd& init,
                                 const Eigen::VectorXd& beta, Stream&) {
    calls.push_back(Call{d.observations(), init, beta, steps});
    MCMCResult r;
    r.samples.resize(steps, 1);
    if (steps == t) {
      for (long i = 0; i < steps; ++i) r.samples(i, 0) = static_cast<double>(i);
      r.beta = Eigen::VectorXd::Constant(1, 42.0);
    } else {
      const long k = static_cast<long>(calls.size()) - 2;
      for (long i = 0; i < steps; ++i) r.samples(i, 0) = static_cast<double>(1000 * k + i);
      r.beta = Eigen::VectorXd::Constant(1, 100.0 + static_cast<double>(k));
    }
    r.acceptance_rate = 0.5;
    return r;
  };

  const Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd beta0 = Eigen::VectorXd::Ones(1);
  const SamplerOutput out = bayesbag_sample(mock, data, t, t_flat, m, b, theta0, beta0, root);

  require(o, calls.size() == 4, fmt("expected 4 chain calls, got %zu", calls.size()));
  if (!o.pass) return;
  require(o, calls[0].t == t && calls[0].init == theta0 && calls[0].beta == beta0,
          "long run did not receive the provided initialization");
  require(o, out.standard_beta == Eigen::VectorXd::Constant(1, 42.0),
          "long-run tuning not surfaced");
  for (long k = 0; k < b; ++k) {
    const SeedPath run_path = root.child(1).child(static_cast<std::uint32_t>(k));
    Stream count_stream(run_path.child(0));
    const Dataset boot = resample(data, draw_counts(5, m, count_stream));
    Stream pick_stream(run_path.child(1));
    const long pick = static_cast<long>(pick_stream.uniform_below(static_cast<std::uint64_t>(t)));
    const Call& call = calls[static_cast<std::size_t>(k) + 1];
    require(o, call.data == boot.observations(), fmt("run %ld: unexpected bootstrap data", k));
    require(o, call.t == t_flat, fmt("run %ld: wrong length", k));
    require(o, call.init == Eigen::VectorXd::Constant(1, static_cast<double>(pick)),
            fmt("run %ld: start not picked from the long run", k));
    require(o, call.beta == Eigen::VectorXd::Constant(1, 42.0),
            fmt("run %ld: tuning not handed down", k));
    const BootstrapRunMetadata& meta = out.runs[static_cast<std::size_t>(k)];
    require(o, meta.seed.root_seed == 777 && meta.seed.path == run_path.path,
            fmt("run %ld: wrong seed record", k));
    require(o, meta.adapted_beta == Eigen::VectorXd::Constant(1, 100.0 + static_cast<double>(k)),
            fmt("run %ld: wrong adapted tuning record", k));
    for (long i = 0; i < t_flat; ++i) {
      require(o, out.bagged_samples(k * t_flat + i, 0) == static_cast<double>(1000 * k + i),
              fmt("run %ld: stacked rows out of order", k));
    }
    if (!o.pass) return;
  }

  // (b) A chain that samples each bootstrap posterior exactly: the grand mean
  // of the stacked draws estimates the closed-form bagged mean, with the
  // between-run spread giving its standard error.
  const GaussianLocationModel model =
      GaussianLocationModel::flat_prior(Eigen::MatrixXd::Identity(1, 1));
  Stream data_rng(SeedPath(20250408));
  Eigen::MatrixXd xs(30, 1);
  for (int i = 0; i < 30; ++i) xs(i, 0) = 2.0 * data_rng.normal();
  const Dataset big = Dataset::location(xs);
  const MCMCProcedure exact = [&](const Dataset& d, long steps, const Eigen::VectorXd&,
                                  const Eigen::VectorXd&, Stream& st) {
    const GaussianPosterior p = gaussian_location_posterior(model, d);
    const double mu = p.mean()(0);
    const double sd = std::sqrt(p.cov()(0, 0));
    MCMCResult r;
    r.samples.resize(steps, 1);
    for (long i = 0; i < steps; ++i) r.samples(i, 0) = mu + sd * st.normal();
    r.beta = Eigen::VectorXd::Ones(1);
    return r;
  };
  const long runs = 200, len = 50;
  const SamplerOutput mc = bayesbag_sample(exact, big, 50, len, 30, runs, theta0, beta0,
                                           SeedPath(20250409), 0.0, 4);
  const double grand = mc.bagged_samples.col(0).mean();
  double ss = 0.0;
  for (long k = 0; k < runs; ++k) {
    const double rm = mc.bagged_samples.col(0).segment(k * len, len).mean();
    ss += (rm - grand) * (rm - grand);
  }
  const double se = std::sqrt(ss / static_cast<double>(runs - 1)) /
                    std::sqrt(static_cast<double>(runs));
  const double want = gaussian_location_bagged_moments_closed_form(model, big, 30).mean(0);
  require(o, std::abs(grand - want) <= 4.0 * se,
          fmt("grand mean %.5f vs closed form %.5f exceeds 4 se = %.5f", grand, want, 4.0 * se));
}

// --- check 13: every subcommand reproduces its outputs byte for byte ---------

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log_dir) {
  fs::create_directories(log_dir);
  const std::string cmd = std::string("\"") + BAGBAYES_CLI_PATH + "\" " + args + " > \"" +
                          (log_dir / "stdout.txt").string() + "\" 2> \"" +
                          (log_dir / "stderr.txt").string() + "\"";
  const int rc = std::system(cmd.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  const auto listing = [](const fs::path& root) {
    std::vector<std::string> rel;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), root).string());
    }
    std::sort(rel.begin(), rel.end());
    return rel;
  };
  const std::vector<std::string> la = listing(a);
  const std::vector<std::string> lb = listing(b);
  if (la != lb) {
    why = "file listings differ";
    return false;
  }
  if (la.empty()) {
    why = "no artifacts produced";
    return false;
  }
  for (const std::string& rel : la) {
    if (read_bytes(a / rel) != read_bytes(b / rel)) {
      why = rel + " differs between runs";
      return false;
    }
  }
  return true;
}

void check_cli_reproducibility(Outcome& o) {
  const fs::path scratch = fs::temp_directory_path() / "bagbayes_acceptance";
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  const fs::path csv = scratch / "location.csv";
  {
    std::ofstream out(csv);
    out << "x_0\n";
    for (long i = 0; i < 6; ++i) out << ((7 * i) % 5) - 2 << "\n";
  }

  // Stdout-only subcommand first.
  {
    const int rc1 = run_cli("asymptotic --theorem 2 --method bagged --c 1.5", scratch / "as1");
    const int rc2 = run_cli("asymptotic --theorem 2 --method bagged --c 1.5", scratch / "as2");
    require(o, rc1 == 0 && rc2 == 0, fmt("asymptotic exited %d / %d", rc1, rc2));
    const std::string out1 = read_bytes(scratch / "as1" / "stdout.txt");
    require(o, out1.find("overlap_probability") != std::string::npos,
            "asymptotic printed no probability");
    require(o, !out1.empty() && out1 == read_bytes(scratch / "as2" / "stdout.txt"),
            "asymptotic stdout differs between runs");
  }

  const struct {
    const char* name;
    std::string args;
  } artifact_cases[] = {
      {"bag-fit", "bag-fit --data \"" + csv.string() + "\" --b 5 --seed 11"},
      {"overlap-sim", "overlap-sim --n 16 --d 4 --r 2 --b 3 --test-points 5 --seed 5 --threads 2"},
      {"fig1", "fig1 --num-datasets 2 --n 30 --b 5 --seed 6"},
      {"sample", "sample --data \"" + csv.string() + "\" --t 100 --t-flat 10 --b 2 --seed 7"},
  };
  for (const auto& c : artifact_cases) {
    const fs::path dir1 = scratch / (std::string(c.name) + "_1");
    const fs::path dir2 = scratch / (std::string(c.name) + "_2");
    fs::create_directories(dir1 / "art");
    fs::create_directories(dir2 / "art");
    const int rc1 = run_cli(c.args + " --out \"" + (dir1 / "art").string() + "\"", dir1);
    const int rc2 = run_cli(c.args + " --out \"" + (dir2 / "art").string() + "\"", dir2);
    require(o, rc1 == 0 && rc2 == 0, fmt("%s exited %d / %d", c.name, rc1, rc2));
    if (!o.pass) {
      o.detail += "; stderr: " + read_bytes(dir1 / "stderr.txt").substr(0, 160);
      return;
    }
    std::string why;
    require(o, same_tree(dir1 / "art", dir2 / "art", why),
            std::string(c.name) + ": " + why);
    if (!o.pass) return;
  }
  fs::remove_all(scratch);
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    void (*body)(Outcome&);
  };
  const Criterion criteria[] = {
      {"interval overlap bound arithmetic", check_bound_arithmetic},
      {"exact bagging matches the closed form", check_exact_bag_vs_closed_form},
      {"conjugate posteriors match quadrature", check_fits_vs_quadrature},
      {"misspecified location overlap rates", check_misspecified_location_rates},
      {"overlap rates converge in the sample size", check_rate_convergence},
      {"growing-dimension overlap rates", check_growing_dimension_rates},
      {"sandwich-limit bagged overlap bound", check_sandwich_bound},
      {"calibrated credible sets overlap rate", check_generic_overlap_bound},
      {"misspecified regression violation split", check_misspecified_regression_violations},
      {"bagged predictive density gain", check_predictive_gain},
      {"fixed-design calibration and gain", check_fixed_design},
      {"sampler orchestration and exact-chain recovery", check_sampler},
      {"command-line reproducibility", check_cli_reproducibility},
  };

  int failures = 0;
  int id = 0;
  for (const Criterion& c : criteria) {
    ++id;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.pass) {
      std::printf("ACCEPTANCE %d (%s): PASS [%.1fs]\n", id, c.name, secs);
    } else {
      std::printf("ACCEPTANCE %d (%s): FAIL(%s) [%.1fs]\n", id, c.name, o.detail.c_str(), secs);
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures > 0) {
    std::printf("%d of %d acceptance checks failed\n", failures, id);
    return 1;
  }
  std::printf("all %d acceptance checks passed\n", id);
  return 0;
}
