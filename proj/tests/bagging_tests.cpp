#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bagbayes/bagging.hpp"
#include "bagbayes/dataset.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/randstream.hpp"
#include "support/quadrature.hpp"

using namespace bagbayes;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset location_1d(std::initializer_list<double> values) {
  MatrixXd x(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) x(i++, 0) = v;
  return Dataset::location(x);
}

Model flat_location_model(double v = 1.0) {
  MatrixXd m = MatrixXd::Constant(1, 1, v);
  return GaussianLocationModel::flat_prior(m);
}

}  // namespace

TEST_CASE("exact enumeration weights follow the multinomial law") {
  const Dataset data = location_1d({0.0, 2.0});
  const BaggedPosterior bp = bag_exact(flat_location_model(), data, 2);
  REQUIRE(bp.components.size() == 3);
  CHECK(bp.exact_enumeration);
  CHECK(bp.m == 2);
  CHECK(bp.skipped == 0);
  std::vector<double> weights = bp.weights;
  std::sort(weights.begin(), weights.end());
  CHECK(weights[0] == Catch::Approx(0.25).margin(1e-15));
  CHECK(weights[1] == Catch::Approx(0.25).margin(1e-15));
  CHECK(weights[2] == Catch::Approx(0.5).margin(1e-15));
  CHECK_NOTHROW(bp.validate());
}

TEST_CASE("exact enumeration component counts") {
  const Dataset one = location_1d({5.0});
  const BaggedPosterior single = bag_exact(flat_location_model(), one, 3);
  REQUIRE(single.components.size() == 1);
  CHECK(single.weights[0] == 1.0);
  // One row resampled three times: posterior is the standard fit on 3 copies.
  const GaussianPosterior direct = gaussian_location_posterior(
      std::get<GaussianLocationModel>(flat_location_model()), location_1d({5.0, 5.0, 5.0}));
  CHECK(component_parameter_mean(single.components[0])(0) ==
        Catch::Approx(direct.mean()(0)).margin(1e-14));

  // Multisets of size 2 from 3 rows: C(3+2-1, 2) = 6.
  const Dataset three = location_1d({0.0, 1.0, 2.0});
  CHECK(bag_exact(flat_location_model(), three, 2).components.size() == 6);
}

TEST_CASE("exact enumeration respects the sequence cap") {
  MatrixXd x = MatrixXd::Zero(10, 1);
  for (int i = 0; i < 10; ++i) x(i, 0) = static_cast<double>(i);
  try {
    bag_exact(flat_location_model(), Dataset::location(x), 10);
    FAIL("expected enumeration_too_large_error");
  } catch (const enumeration_too_large_error& e) {
    CHECK(std::string(e.what()).find("bag_monte_carlo") != std::string::npos);
  }
}

TEST_CASE("multiset enumeration equals the average over ordered sequences") {
  // N=2, M=2: the 4 ordered index sequences collapse to 3 multisets with
  // multiplicities (1, 2, 1).  The mixture moments must match the plain
  // average over sequences exactly.
  const Dataset data = location_1d({0.0, 2.0});
  const Model model = flat_location_model();

  std::vector<GaussianPosterior> seq_fits;
  for (long i = 0; i < 2; ++i) {
    for (long j = 0; j < 2; ++j) {
      std::vector<long> counts{0, 0};
      ++counts[static_cast<std::size_t>(i)];
      ++counts[static_cast<std::size_t>(j)];
      seq_fits.push_back(std::get<GaussianPosterior>(fit_component(model, resample(data, counts))));
    }
  }
  double seq_mean = 0.0;
  for (const auto& f : seq_fits) seq_mean += f.mean()(0) / 4.0;
  double seq_within = 0.0, seq_between = 0.0;
  for (const auto& f : seq_fits) {
    seq_within += f.cov()(0, 0) / 4.0;
    seq_between += (f.mean()(0) - seq_mean) * (f.mean()(0) - seq_mean) / 4.0;
  }

  const BaggedMoments mm = bagged_moments(bag_exact(model, data, 2));
  CHECK(mm.mean(0) == Catch::Approx(seq_mean).margin(1e-14));
  CHECK(mm.within_cov(0, 0) == Catch::Approx(seq_within).margin(1e-14));
  CHECK(mm.between_cov(0, 0) == Catch::Approx(seq_between).margin(1e-14));
}

TEST_CASE("exact bagged moments for the two-point sample") {
  // x = (0, 2), V = 1, flat prior, M = 2.  Component means are 0, 1, 2 with
  // weights 1/4, 1/2, 1/4: mixture mean 1, within V/M = 1/2, between 1/2.
  const BaggedMoments mm = bagged_moments(bag_exact(flat_location_model(), location_1d({0.0, 2.0}), 2));
  CHECK(mm.mean(0) == Catch::Approx(1.0).margin(1e-14));
  CHECK(mm.within_cov(0, 0) == Catch::Approx(0.5).margin(1e-14));
  CHECK(mm.between_cov(0, 0) == Catch::Approx(0.5).margin(1e-14));
  CHECK(mm.cov(0, 0) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("closed-form location moments match exact enumeration") {
  Stream s(SeedPath{41, {}});
  for (int rep = 0; rep < 10; ++rep) {
    const long n = 2 + static_cast<long>(s.uniform_below(3));  // 2..4
    const long m = 1 + static_cast<long>(s.uniform_below(4));  // 1..4
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(s.uniform_below(2));
    MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = 2.0 * s.normal();
    }
    MatrixXd a = MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) a(i, j) = s.normal();
    }
    const MatrixXd v = a * a.transpose() + 0.5 * MatrixXd::Identity(d, d);
    const bool flat = s.uniform01() < 0.5;
    MatrixXd v0_inv = MatrixXd::Zero(d, d);
    if (!flat) {
      MatrixXd b = MatrixXd::Zero(d, d);
      for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) b(i, j) = s.normal();
      }
      v0_inv = b * b.transpose() + 0.1 * MatrixXd::Identity(d, d);
    }
    const GaussianLocationModel model(v, v0_inv);
    const Dataset data = Dataset::location(x);
    const BaggedMoments exact = bagged_moments(bag_exact(Model(model), data, m));
    const BaggedMoments closed = gaussian_location_bagged_moments_closed_form(model, data, m);
    CHECK(oracle::rel_err(exact.mean, closed.mean) < 1e-10);
    CHECK(oracle::rel_err(exact.within_cov, closed.within_cov) < 1e-10);
    CHECK(oracle::rel_err(exact.between_cov, closed.between_cov) < 1e-10);
    CHECK(is_psd(exact.between_cov));
  }
}

TEST_CASE("closed-form moments on a constant dataset collapse the between term") {
  const GaussianLocationModel model(MatrixXd::Constant(1, 1, 2.0), MatrixXd::Zero(1, 1));
  const BaggedMoments mm =
      gaussian_location_bagged_moments_closed_form(model, location_1d({3.0, 3.0, 3.0}), 2);
  CHECK(mm.mean(0) == Catch::Approx(3.0).margin(1e-14));
  CHECK(mm.between_cov(0, 0) == Catch::Approx(0.0).margin(1e-14));
  CHECK(mm.cov(0, 0) == Catch::Approx(1.0).margin(1e-14));  // V / M
}

TEST_CASE("monte carlo bagging with one component reproduces its bootstrap fit") {
  const Dataset data = location_1d({0.0, 1.0, 5.0});
  const SeedPath root{77, {3}};
  const BaggedPosterior bp = bag_monte_carlo(flat_location_model(), data, 3, 1, root);
  REQUIRE(bp.components.size() == 1);
  CHECK(bp.weights[0] == 1.0);
  CHECK_FALSE(bp.exact_enumeration);
  REQUIRE(bp.component_seeds.size() == 1);
  CHECK(detail::derive_key(bp.component_seeds[0]) == detail::derive_key(root.child(0)));

  // Redo the single draw by hand from the same substream.
  Stream s(root.child(0));
  const std::vector<long> counts = draw_counts(3, 3, s);
  const GaussianPosterior direct =
      std::get<GaussianPosterior>(fit_component(flat_location_model(), resample(data, counts)));
  CHECK(component_parameter_mean(bp.components[0])(0) == direct.mean()(0));
}

TEST_CASE("monte carlo bagging is deterministic across thread counts") {
  Stream gen(SeedPath{42, {}});
  MatrixXd x(20, 2);
  for (Eigen::Index i = 0; i < 20; ++i) {
    x(i, 0) = gen.normal();
    x(i, 1) = gen.normal();
  }
  const Model model = GaussianLocationModel::flat_prior(MatrixXd::Identity(2, 2));
  const Dataset data = Dataset::location(x);
  const SeedPath root{5, {1}};
  const BaggedPosterior a = bag_monte_carlo(model, data, 20, 16, root, 1);
  const BaggedPosterior b = bag_monte_carlo(model, data, 20, 16, root, 4);
  REQUIRE(a.components.size() == b.components.size());
  for (std::size_t i = 0; i < a.components.size(); ++i) {
    CHECK(component_parameter_mean(a.components[i]) == component_parameter_mean(b.components[i]));
  }
}

TEST_CASE("monte carlo mixture mean converges to the closed form") {
  Stream gen(SeedPath{43, {}});
  MatrixXd x(50, 1);
  for (Eigen::Index i = 0; i < 50; ++i) x(i, 0) = 1.0 + 2.0 * gen.normal();
  const GaussianLocationModel model(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  const Dataset data = Dataset::location(x);
  const BaggedMoments closed = gaussian_location_bagged_moments_closed_form(model, data, 50);

  const BaggedPosterior bp = bag_monte_carlo(Model(model), data, 50, 400, SeedPath{9, {}});
  const BaggedMoments mc = bagged_moments(bp);
  const ChooseBDiagnostic diag = choose_b_diagnostic(bp, VectorXd::Ones(1));
  CHECK(std::abs(mc.mean(0) - closed.mean(0)) < 4.0 * diag.se_mean);
}

TEST_CASE("monte carlo error shrinks like the square root of the component count") {
  const Dataset data = location_1d({0.0, 1.0, 2.0, 3.0, 10.0});
  const Model model = flat_location_model();
  const double exact_mean = bagged_moments(bag_exact(model, data, 5)).mean(0);

  const std::vector<long> bs{10, 100, 1000, 10000};
  std::vector<double> log_b, log_err;
  for (std::size_t bi = 0; bi < bs.size(); ++bi) {
    double err = 0.0;
    const int reps = 30;
    for (int r = 0; r < reps; ++r) {
      const SeedPath root{1000 + static_cast<std::uint64_t>(r),
                          {static_cast<std::uint32_t>(bi)}};
      const BaggedMoments mm = bagged_moments(bag_monte_carlo(model, data, 5, bs[bi], root));
      err += std::abs(mm.mean(0) - exact_mean) / reps;
    }
    log_b.push_back(std::log(static_cast<double>(bs[bi])));
    log_err.push_back(std::log(err));
  }

  // Least squares line through (log B, log err): slope near -1/2, tight fit.
  const double n = static_cast<double>(log_b.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < log_b.size(); ++i) {
    sx += log_b[i];
    sy += log_err[i];
    sxx += log_b[i] * log_b[i];
    sxy += log_b[i] * log_err[i];
    syy += log_err[i] * log_err[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double r2 = (n * sxy - sx * sy) * (n * sxy - sx * sy) /
                    ((n * sxx - sx * sx) * (n * syy - sy * sy));
  CHECK(r2 > 0.9);
  CHECK(slope < -0.25);
  CHECK(slope > -0.75);
}

TEST_CASE("scalar mixture projects every component") {
  const BaggedPosterior bp = bag_exact(flat_location_model(), location_1d({0.0, 2.0}), 2);
  const ScalarMixture mix = scalar_mixture(bp, VectorXd::Ones(1));
  REQUIRE(mix.components().size() == 3);
  CHECK(mix.mean() == Catch::Approx(1.0).margin(1e-14));
  CHECK(mix.variance() == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("bagged moments of a hand-built two-component mixture") {
  BaggedPosterior bp;
  bp.components.push_back(GaussianPosterior(VectorXd::Zero(1), MatrixXd::Identity(1, 1)));
  bp.components.push_back(GaussianPosterior(VectorXd::Constant(1, 2.0), MatrixXd::Identity(1, 1)));
  bp.weights = {0.5, 0.5};
  bp.m = 1;
  const BaggedMoments mm = bagged_moments(bp);
  CHECK(mm.mean(0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(mm.within_cov(0, 0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(mm.between_cov(0, 0) == Catch::Approx(1.0).margin(1e-15));
  CHECK(mm.cov(0, 0) == Catch::Approx(2.0).margin(1e-15));
}

TEST_CASE("predictive density of the bagged posterior") {
  const Model model = FlatLinRegModel(0.5);
  MatrixXd z(3, 1);
  z << 1.0, -1.0, 2.0;
  VectorXd y(3);
  y << 1.0, -1.2, 2.1;
  const Dataset data = Dataset::regression(z, y);
  const BaggedPosterior one = bag_monte_carlo(model, data, 3, 1, SeedPath{6, {}});
  VectorXd z_new(1);
  z_new << 0.7;
  // A single component: mixture predictive equals the component predictive.
  CHECK(bagged_predictive_log_density(one, model, z_new, 0.9) ==
        Catch::Approx(standard_predictive_log_density(model, one.components[0], z_new, 0.9))
            .epsilon(1e-14));

  // Two identical standard-normal predictives evaluated at their center.
  BaggedPosterior dup;
  const GaussianPosterior comp(VectorXd::Zero(1), MatrixXd::Constant(1, 1, 0.5));
  dup.components = {comp, comp};
  dup.weights = {0.5, 0.5};
  dup.m = 1;
  VectorXd at_one(1);
  at_one << 1.0;
  // Predictive variance = 0.5 (model) + 1 * 0.5 * 1 (posterior) = 1.
  CHECK(bagged_predictive_log_density(dup, model, at_one, 0.0) ==
        Catch::Approx(-0.91893853320467274).epsilon(1e-13));
}

TEST_CASE("component count diagnostic") {
  BaggedPosterior bp;
  bp.components.push_back(GaussianPosterior(VectorXd::Zero(1), MatrixXd::Identity(1, 1)));
  bp.components.push_back(GaussianPosterior(VectorXd::Constant(1, 2.0), MatrixXd::Identity(1, 1)));
  bp.weights = {0.5, 0.5};
  bp.m = 1;
  const ChooseBDiagnostic diag = choose_b_diagnostic(bp, VectorXd::Ones(1));
  // Component means {0, 2}: sd = sqrt(2), se_mean = sd / sqrt(2) = 1.
  CHECK(diag.se_mean == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(diag.se_sd >= 0.0);

  BaggedPosterior same = bp;
  same.components[1] = bp.components[0];
  const ChooseBDiagnostic zero = choose_b_diagnostic(same, VectorXd::Ones(1));
  CHECK(zero.se_mean == Catch::Approx(0.0).margin(1e-14));
  CHECK(zero.se_sd == Catch::Approx(0.0).margin(1e-14));

  BaggedPosterior single;
  single.components.push_back(bp.components[0]);
  single.weights = {1.0};
  single.m = 1;
  CHECK_THROWS_AS(choose_b_diagnostic(single, VectorXd::Ones(1)), insufficient_components_error);

  // Multinomial weights from exact enumeration are not equal: rejected.
  const BaggedPosterior exact = bag_exact(flat_location_model(), location_1d({0.0, 2.0}), 2);
  CHECK_THROWS_AS(choose_b_diagnostic(exact, VectorXd::Ones(1)), std::invalid_argument);
}

TEST_CASE("quadrupling the component count roughly halves the mean standard error") {
  Stream gen(SeedPath{44, {}});
  MatrixXd x(30, 1);
  for (Eigen::Index i = 0; i < 30; ++i) x(i, 0) = gen.normal();
  const Dataset data = Dataset::location(x);
  const Model model = flat_location_model();
  double se_small = 0.0, se_big = 0.0;
  for (int r = 0; r < 10; ++r) {
    const SeedPath root{static_cast<std::uint64_t>(r), {8}};
    se_small +=
        choose_b_diagnostic(bag_monte_carlo(model, data, 30, 25, root), VectorXd::Ones(1)).se_mean;
    se_big +=
        choose_b_diagnostic(bag_monte_carlo(model, data, 30, 100, root.child(1)), VectorXd::Ones(1))
            .se_mean;
  }
  const double ratio = se_big / se_small;
  CHECK(ratio > 0.3);
  CHECK(ratio < 0.7);
}

TEST_CASE("rank-deficient resamples are skipped and the weights renormalized") {
  // Three distinct rows in the plane; any resample of size 2 that repeats a
  // row (or pairs parallel ones) is singular under the flat regression model.
  const Model model = FlatLinRegModel(1.0);
  MatrixXd z(3, 2);
  z << 1.0, 0.0, 0.0, 1.0, 1.0, 1.0;
  VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  const Dataset data = Dataset::regression(z, y);

  const BaggedPosterior bp = bag_exact(model, data, 2);
  CHECK(bp.skipped > 0);
  CHECK_FALSE(bp.components.empty());
  double total = 0.0;
  for (double w : bp.weights) total += w;
  CHECK(total == Catch::Approx(1.0).margin(1e-12));

  // One-row design in the plane: every resample is rank deficient.
  MatrixXd z1(1, 2);
  z1 << 1.0, 1.0;
  VectorXd y1(1);
  y1 << 1.0;
  const Dataset degenerate = Dataset::regression(z1, y1);
  CHECK_THROWS_AS(bag_exact(model, degenerate, 2), aggregate_failure_error);
  CHECK_THROWS_AS(bag_monte_carlo(model, degenerate, 2, 4, SeedPath{0, {}}),
                  aggregate_failure_error);
}

TEST_CASE("bagging argument validation") {
  const Dataset data = location_1d({0.0, 1.0});
  CHECK_THROWS_AS(bag_exact(flat_location_model(), data, 0), std::invalid_argument);
  CHECK_THROWS_AS(bag_monte_carlo(flat_location_model(), data, 0, 5, SeedPath{0, {}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(bag_monte_carlo(flat_location_model(), data, 2, 0, SeedPath{0, {}}),
                  std::invalid_argument);
}
