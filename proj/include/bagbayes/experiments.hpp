#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bagbayes/bagging.hpp"
#include "bagbayes/dataset.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/models.hpp"
#include "bagbayes/overlap.hpp"
#include "bagbayes/parallel.hpp"
#include "bagbayes/randstream.hpp"
#include "bagbayes/simgen.hpp"

namespace bagbayes {

// Replicate-pair experiment configuration.  The bootstrap size defaults to
// the training size; sigma2 estimation applies to the flat model only and
// plugs the unbiased residual variance of each dataset into its own fit.
struct ExperimentSpec {
  DGPConfig dgp;
  Model model;
  bool estimate_sigma2 = false;
  std::optional<long> m_explicit;
  long b = 50;
  long r = 20;
  std::vector<double> levels{0.8, 0.9, 0.95};
  long test_point_count = 100;
  std::uint64_t root_seed = 0;
  int threads = 1;

  void validate() const {
    dgp.validate();
    if (r < 1) throw std::invalid_argument("ExperimentSpec: need at least one replicate");
    if (b < 1) throw std::invalid_argument("ExperimentSpec: need at least one component");
    if (test_point_count < 1) {
      throw std::invalid_argument("ExperimentSpec: need at least one test point");
    }
    if (levels.empty()) throw std::invalid_argument("ExperimentSpec: need at least one level");
    for (double level : levels) {
      if (!(level > 0.0 && level < 1.0)) {
        throw std::invalid_argument("ExperimentSpec: levels must lie in (0, 1)");
      }
    }
    if (m_explicit && *m_explicit < 1) {
      throw std::invalid_argument("ExperimentSpec: bootstrap size must be positive");
    }
    if (estimate_sigma2 && !std::holds_alternative<FlatLinRegModel>(model)) {
      throw std::invalid_argument(
          "ExperimentSpec: sigma2 estimation applies to the flat linear model only");
    }
  }
};

struct ExperimentResult {
  OverlapReport standard_report;
  OverlapReport bagged_report;         // mixture-quantile intervals
  OverlapReport bagged_moment_report;  // moment-matched intervals, for comparison
  std::map<double, double> violation_fraction_standard;
  std::map<double, double> violation_fraction_bagged;
  std::map<double, double> violation_fraction_bagged_moment;
  double mlpd_standard = 0.0;
  double mlpd_bagged = 0.0;
  std::pair<double, double> mlpd_diff_ci{0.0, 0.0};
  std::vector<double> mlpd_diffs;  // per surviving replicate, bagged - standard
  long failed_replicates = 0;
};

// Two-sided paired-t interval: mean +/- t_{n-1,(1+conf)/2} sd / sqrt(n).
inline std::pair<double, double> paired_t_interval(const std::vector<double>& differences,
                                                   double confidence) {
  if (differences.size() < 2) {
    throw insufficient_data_error("paired_t_interval: need at least 2 differences, have " +
                                  std::to_string(differences.size()));
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument("paired_t_interval: confidence must lie in (0, 1)");
  }
  const double n = static_cast<double>(differences.size());
  double mean = 0.0;
  for (double d : differences) mean += d;
  mean /= n;
  double ss = 0.0;
  for (double d : differences) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) return {mean, mean};
  const double half = student_t_quantile(0.5 * (1.0 + confidence), n - 1.0) * sd / std::sqrt(n);
  return {mean - half, mean + half};
}

namespace detail {

inline bool skippable_replicate_failure(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const rank_deficiency_error&) {
    return true;
  } catch (const numerical_degeneracy_error&) {
    return true;
  } catch (const aggregate_failure_error&) {
    return true;
  } catch (...) {
    return false;
  }
}

// Substream layout for one experiment.  Test points use a reserved prefix;
// each replicate owns a disjoint family of child streams, so the standard and
// bagged arms consume identical datasets and test outcomes by construction.
inline constexpr std::uint32_t kTestPointBranch = 0;
inline constexpr std::uint32_t kReplicateBranch = 1;
inline constexpr std::uint32_t kRegressors1 = 0;
inline constexpr std::uint32_t kNoise1 = 1;
inline constexpr std::uint32_t kRegressors2 = 2;
inline constexpr std::uint32_t kNoise2 = 3;
inline constexpr std::uint32_t kTestOutcomes = 4;
inline constexpr std::uint32_t kBag1 = 5;
inline constexpr std::uint32_t kBag2 = 6;

}  // namespace detail

// Runs the full replicate-pair protocol: R dataset pairs, standard and bagged
// fits per dataset, per-test-point overlap indicators at every level, and
// mean log predictive densities on held-out outcomes (one per test point per
// replicate, shared across arms).
inline ExperimentResult run_overlap_experiment(const ExperimentSpec& spec) {
  spec.validate();
  if (std::holds_alternative<GaussianLocationModel>(spec.model)) {
    throw std::invalid_argument("run_overlap_experiment: needs a regression model");
  }
  const SeedPath root(spec.root_seed);
  const long p = spec.test_point_count;
  const long r = spec.r;
  const std::size_t num_levels = spec.levels.size();
  const long m = spec.m_explicit.value_or(spec.dgp.n);

  const Eigen::MatrixXd z_test =
      gen_test_points(spec.dgp, p, root.child(detail::kTestPointBranch).child(0));

  enum Method { kStandard = 0, kBagged = 1, kBaggedMoment = 2 };
  const std::size_t cells = static_cast<std::size_t>(r) * static_cast<std::size_t>(p) * num_levels;
  std::vector<std::uint8_t> hits[3] = {std::vector<std::uint8_t>(cells, 0),
                                       std::vector<std::uint8_t>(cells, 0),
                                       std::vector<std::uint8_t>(cells, 0)};
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(r), 0);
  std::vector<double> mlpd_std(static_cast<std::size_t>(r), 0.0);
  std::vector<double> mlpd_bag(static_cast<std::size_t>(r), 0.0);

  parallel_for(r, spec.threads, [&](long k) {
    const SeedPath rep = root.child(detail::kReplicateBranch).child(static_cast<std::uint32_t>(k));
    const Dataset data1 = gen_regression_data(spec.dgp, rep.child(detail::kRegressors1),
                                              rep.child(detail::kNoise1));
    const Dataset data2 = gen_regression_data(spec.dgp, rep.child(detail::kRegressors2),
                                              rep.child(detail::kNoise2));
    const Eigen::VectorXd y_test = gen_outcomes(spec.dgp, z_test, rep.child(detail::kTestOutcomes));

    Model model1 = spec.model;
    Model model2 = spec.model;
    try {
      if (spec.estimate_sigma2) {
        model1 = FlatLinRegModel(residual_sigma2_hat(data1));
        model2 = FlatLinRegModel(residual_sigma2_hat(data2));
      }
      const PosteriorComponent std1 = fit_component(model1, data1);
      const PosteriorComponent std2 = fit_component(model2, data2);
      const BaggedPosterior bag1 =
          bag_monte_carlo(model1, data1, m, spec.b, rep.child(detail::kBag1));
      const BaggedPosterior bag2 =
          bag_monte_carlo(model2, data2, m, spec.b, rep.child(detail::kBag2));

      double lp_std = 0.0, lp_bag = 0.0;
      for (long i = 0; i < p; ++i) {
        const Eigen::VectorXd u = z_test.row(i).transpose();
        const ScalarComponent s1 = component_scalar(std1, u);
        const ScalarComponent s2 = component_scalar(std2, u);
        const ScalarMixture mix1 = scalar_mixture(bag1, u);
        const ScalarMixture mix2 = scalar_mixture(bag2, u);
        const GaussianScalar mm1 = moment_match(mix1);
        const GaussianScalar mm2 = moment_match(mix2);
        for (std::size_t li = 0; li < num_levels; ++li) {
          const double alpha = 1.0 - spec.levels[li];
          const std::size_t cell =
              (static_cast<std::size_t>(k) * static_cast<std::size_t>(p) +
               static_cast<std::size_t>(i)) *
                  num_levels +
              li;
          const auto std_ival = [alpha](const ScalarComponent& s) {
            return std::visit([alpha](const auto& c) { return central_interval(c, alpha); }, s);
          };
          hits[kStandard][cell] =
              intervals_overlap(std_ival(s1), std_ival(s2)) ? 1 : 0;
          hits[kBagged][cell] =
              intervals_overlap(
                  central_interval(mix1, alpha, BaggedIntervalMode::mixture_quantile),
                  central_interval(mix2, alpha, BaggedIntervalMode::mixture_quantile))
                  ? 1
                  : 0;
          hits[kBaggedMoment][cell] =
              intervals_overlap(central_interval(mm1, alpha), central_interval(mm2, alpha)) ? 1
                                                                                            : 0;
        }
        lp_std += 0.5 * (standard_predictive_log_density(model1, std1, u, y_test(i)) +
                         standard_predictive_log_density(model2, std2, u, y_test(i)));
        lp_bag += 0.5 * (bagged_predictive_log_density(bag1, model1, u, y_test(i)) +
                         bagged_predictive_log_density(bag2, model2, u, y_test(i)));
      }
      mlpd_std[static_cast<std::size_t>(k)] = lp_std / static_cast<double>(p);
      mlpd_bag[static_cast<std::size_t>(k)] = lp_bag / static_cast<double>(p);
      ok[static_cast<std::size_t>(k)] = 1;
    } catch (...) {
      if (!detail::skippable_replicate_failure(std::current_exception())) throw;
    }
  });

  long successes = 0;
  for (long k = 0; k < r; ++k) successes += ok[static_cast<std::size_t>(k)];
  if (successes == 0) {
    throw aggregate_failure_error("run_overlap_experiment: every replicate failed");
  }

  ExperimentResult result;
  result.failed_replicates = r - successes;
  OverlapReport* reports[3] = {&result.standard_report, &result.bagged_report,
                               &result.bagged_moment_report};
  std::map<double, double>* fractions[3] = {&result.violation_fraction_standard,
                                            &result.violation_fraction_bagged,
                                            &result.violation_fraction_bagged_moment};
  for (int method = 0; method < 3; ++method) {
    reports[method]->skipped_replicates = result.failed_replicates;
    for (std::size_t li = 0; li < num_levels; ++li) {
      (*fractions[method])[spec.levels[li]] = 0.0;
    }
    for (long i = 0; i < p; ++i) {
      for (std::size_t li = 0; li < num_levels; ++li) {
        long count = 0;
        for (long k = 0; k < r; ++k) {
          if (!ok[static_cast<std::size_t>(k)]) continue;
          const std::size_t cell =
              (static_cast<std::size_t>(k) * static_cast<std::size_t>(p) +
               static_cast<std::size_t>(i)) *
                  num_levels +
              li;
          count += hits[method][cell];
        }
        OverlapRow row;
        row.direction_id = std::to_string(i);
        row.level = spec.levels[li];
        row.overlap_prob = static_cast<double>(count) / static_cast<double>(successes);
        row.bound = row.level * row.level;
        row.replicates = successes;
        row.violated = row.overlap_prob < row.bound;
        if (row.violated) {
          (*fractions[method])[row.level] += 1.0 / static_cast<double>(p);
        }
        reports[method]->rows.push_back(std::move(row));
      }
    }
  }

  double sum_std = 0.0, sum_bag = 0.0;
  for (long k = 0; k < r; ++k) {
    if (!ok[static_cast<std::size_t>(k)]) continue;
    sum_std += mlpd_std[static_cast<std::size_t>(k)];
    sum_bag += mlpd_bag[static_cast<std::size_t>(k)];
    result.mlpd_diffs.push_back(mlpd_bag[static_cast<std::size_t>(k)] -
                                mlpd_std[static_cast<std::size_t>(k)]);
  }
  result.mlpd_standard = sum_std / static_cast<double>(successes);
  result.mlpd_bagged = sum_bag / static_cast<double>(successes);
  if (result.mlpd_diffs.size() >= 2) {
    result.mlpd_diff_ci = paired_t_interval(result.mlpd_diffs, 0.99);
  } else {
    result.mlpd_diff_ci = {result.mlpd_diffs.front(), result.mlpd_diffs.front()};
  }
  return result;
}

// One dataset's posterior summaries in the location-scenario comparison.
struct Figure1DatasetSummary {
  double standard_mean = 0.0;
  double standard_sd = 0.0;
  double standard_lower = 0.0;
  double standard_upper = 0.0;
  bool standard_covers = false;
  double bagged_mean = 0.0;
  double bagged_sd = 0.0;
  double bagged_lower = 0.0;
  double bagged_upper = 0.0;
  bool bagged_covers = false;
};

struct Figure1PairOverlap {
  long first = 0;
  long second = 0;
  bool standard_overlap = false;
  bool bagged_overlap = false;
};

struct Figure1Summary {
  std::vector<Figure1DatasetSummary> datasets;
  std::vector<Figure1PairOverlap> pairs;
  double standard_pairwise_rate = 0.0;
  double bagged_pairwise_rate = 0.0;
};

// Location-scenario contrast: several independent datasets, standard versus
// bagged central intervals, pairwise overlap booleans, and true-mean
// coverage.  The location model uses a flat prior with variance model_v.
inline Figure1Summary figure1_experiment(const LocationScenario& scenario, long n,
                                         long num_datasets, double alpha, const SeedPath& root,
                                         long b = 50, std::optional<long> m_explicit = {}) {
  scenario.validate();
  check_alpha(alpha);
  if (num_datasets < 2) {
    throw std::invalid_argument("figure1_experiment: need at least two datasets");
  }
  const long m = m_explicit.value_or(n);
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = scenario.model_v;
  const GaussianLocationModel model = GaussianLocationModel::flat_prior(v);
  Eigen::VectorXd u(1);
  u(0) = 1.0;

  Figure1Summary summary;
  std::vector<CredibleInterval> std_ivals;
  std::vector<CredibleInterval> bag_ivals;
  for (long k = 0; k < num_datasets; ++k) {
    const Dataset data = gen_location_data(scenario, n, root.child(0).child(static_cast<std::uint32_t>(k)));
    const GaussianPosterior post = gaussian_location_posterior(model, data);
    const BaggedPosterior bag = bag_monte_carlo(Model(model), data, m, b,
                                                root.child(1).child(static_cast<std::uint32_t>(k)));
    const GaussianScalar std_scalar = post.marginal(u);
    const GaussianScalar bag_scalar = moment_match(scalar_mixture(bag, u));
    const CredibleInterval si = central_interval(std_scalar, alpha);
    const CredibleInterval bi = central_interval(bag_scalar, alpha);

    Figure1DatasetSummary row;
    row.standard_mean = std_scalar.mean;
    row.standard_sd = std_scalar.sd;
    row.standard_lower = si.lower;
    row.standard_upper = si.upper;
    row.standard_covers = si.lower <= scenario.true_mean && scenario.true_mean <= si.upper;
    row.bagged_mean = bag_scalar.mean;
    row.bagged_sd = bag_scalar.sd;
    row.bagged_lower = bi.lower;
    row.bagged_upper = bi.upper;
    row.bagged_covers = bi.lower <= scenario.true_mean && scenario.true_mean <= bi.upper;
    summary.datasets.push_back(row);
    std_ivals.push_back(si);
    bag_ivals.push_back(bi);
  }

  long std_hits = 0, bag_hits = 0, pairs = 0;
  for (long i = 0; i < num_datasets; ++i) {
    for (long j = i + 1; j < num_datasets; ++j) {
      Figure1PairOverlap pair;
      pair.first = i;
      pair.second = j;
      pair.standard_overlap = intervals_overlap(std_ivals[static_cast<std::size_t>(i)],
                                                std_ivals[static_cast<std::size_t>(j)]);
      pair.bagged_overlap = intervals_overlap(bag_ivals[static_cast<std::size_t>(i)],
                                              bag_ivals[static_cast<std::size_t>(j)]);
      std_hits += pair.standard_overlap ? 1 : 0;
      bag_hits += pair.bagged_overlap ? 1 : 0;
      ++pairs;
      summary.pairs.push_back(pair);
    }
  }
  summary.standard_pairwise_rate = static_cast<double>(std_hits) / static_cast<double>(pairs);
  summary.bagged_pairwise_rate = static_cast<double>(bag_hits) / static_cast<double>(pairs);
  return summary;
}

}  // namespace bagbayes
