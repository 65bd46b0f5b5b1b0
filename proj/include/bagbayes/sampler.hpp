#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bagbayes/dataset.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/parallel.hpp"
#include "bagbayes/randstream.hpp"

namespace bagbayes {

// One MCMC run: samples row-per-draw plus the tuning parameters as adapted by
// the run.  acceptance_rate is diagnostic only; exact samplers may leave it NaN.
struct MCMCResult {
  Eigen::MatrixXd samples;
  Eigen::VectorXd beta;
  double acceptance_rate = std::numeric_limits<double>::quiet_NaN();
};

// Pluggable chain contract: (data, sample count, initial state, tuning
// parameters, stream) -> MCMCResult with exactly the requested number of rows.
using MCMCProcedure = std::function<MCMCResult(const Dataset&, long, const Eigen::VectorXd&,
                                               const Eigen::VectorXd&, Stream&)>;

struct BootstrapRunMetadata {
  SeedPath seed;
  Eigen::VectorXd initial_state;
  Eigen::VectorXd adapted_beta;
};

struct SamplerOutput {
  Eigen::MatrixXd standard_samples;
  Eigen::VectorXd standard_beta;
  Eigen::MatrixXd bagged_samples;
  std::vector<BootstrapRunMetadata> runs;
};

namespace detail {

inline void check_run_shape(const MCMCResult& result, long expected_rows, long expected_cols,
                            const std::string& which) {
  if (result.samples.rows() != expected_rows) {
    throw mcmc_contract_error("bayesbag_sample: " + which + " returned " +
                              std::to_string(result.samples.rows()) + " samples, requested " +
                              std::to_string(expected_rows));
  }
  if (result.samples.cols() != expected_cols) {
    throw mcmc_contract_error("bayesbag_sample: " + which + " returned dimension " +
                              std::to_string(result.samples.cols()) + ", expected " +
                              std::to_string(expected_cols));
  }
}

}  // namespace detail

// Long run on the full data, then b short runs on bootstrap datasets, each
// initialized from a uniformly drawn long-run sample and handed the long run's
// adapted tuning parameters.  discard_fraction drops that initial fraction of
// each short run; at the default 0 the bagged sample count is exactly b * t_flat.
// Substreams: long run (0); bootstrap run k owns (1, k, {0: counts, 1: initializer
// pick, 2: chain}), so runs are reproducible at any thread count.
inline SamplerOutput bayesbag_sample(const MCMCProcedure& mcmc, const Dataset& data, long t,
                                     long t_flat, long m, long b,
                                     const Eigen::VectorXd& theta_init,
                                     const Eigen::VectorXd& beta_init, const SeedPath& root,
                                     double discard_fraction = 0.0, int threads = 1) {
  if (!mcmc) throw std::invalid_argument("bayesbag_sample: mcmc procedure must be callable");
  if (t < 1) throw std::invalid_argument("bayesbag_sample: need at least one long-run sample");
  if (t_flat < 1) {
    throw std::invalid_argument("bayesbag_sample: need at least one short-run sample");
  }
  if (m < 1) throw std::invalid_argument("bayesbag_sample: bootstrap size must be positive");
  if (b < 0) throw std::invalid_argument("bayesbag_sample: bootstrap run count must be >= 0");
  if (!(discard_fraction >= 0.0 && discard_fraction < 1.0)) {
    throw std::invalid_argument("bayesbag_sample: discard fraction must lie in [0, 1)");
  }
  const long dim = theta_init.size();
  if (dim < 1) throw std::invalid_argument("bayesbag_sample: initial state must be nonempty");

  SamplerOutput out;
  {
    Stream long_stream(root.child(0));
    MCMCResult long_run = mcmc(data, t, theta_init, beta_init, long_stream);
    detail::check_run_shape(long_run, t, dim, "long run");
    out.standard_samples = std::move(long_run.samples);
    out.standard_beta = std::move(long_run.beta);
  }

  const long discard = static_cast<long>(std::floor(discard_fraction * static_cast<double>(t_flat)));
  const long retained = t_flat - discard;
  out.bagged_samples.resize(b * retained, dim);
  out.runs.resize(static_cast<std::size_t>(b));

  parallel_for(b, threads, [&](long k) {
    const SeedPath run_path = root.child(1).child(static_cast<std::uint32_t>(k));
    Stream count_stream(run_path.child(0));
    const std::vector<long> counts = draw_counts(data.rows(), m, count_stream);
    const Dataset boot = resample(data, counts);

    Stream pick_stream(run_path.child(1));
    const long pick = static_cast<long>(pick_stream.uniform_below(static_cast<std::uint64_t>(t)));
    const Eigen::VectorXd start = out.standard_samples.row(pick).transpose();

    Stream chain_stream(run_path.child(2));
    MCMCResult run = mcmc(boot, t_flat, start, out.standard_beta, chain_stream);
    detail::check_run_shape(run, t_flat, dim, "bootstrap run " + std::to_string(k));

    out.bagged_samples.middleRows(k * retained, retained) = run.samples.bottomRows(retained);
    out.runs[static_cast<std::size_t>(k)] =
        BootstrapRunMetadata{run_path, start, std::move(run.beta)};
  });
  return out;
}

using LogDensity = std::function<double(const Eigen::VectorXd&)>;
using LogDensityBuilder = std::function<LogDensity(const Dataset&)>;

// Random-walk Metropolis with spherical Gaussian proposals.  The proposal sd
// adapts toward 0.234 acceptance on the log scale over the first half of the
// run and is frozen for the second half; the adapted sd is returned as beta.
// Per step the draw order is fixed: dim proposal normals, then one uniform.
inline MCMCResult random_walk_metropolis(const LogDensity& log_density, double proposal_sd, long t,
                                         const Eigen::VectorXd& theta_init, Stream& stream) {
  if (!log_density) {
    throw std::invalid_argument("random_walk_metropolis: log density must be callable");
  }
  if (!(proposal_sd > 0.0) || !std::isfinite(proposal_sd)) {
    throw std::invalid_argument("random_walk_metropolis: proposal sd must be finite and positive");
  }
  if (t < 1) throw std::invalid_argument("random_walk_metropolis: need at least one sample");
  const long dim = theta_init.size();
  if (dim < 1) throw std::invalid_argument("random_walk_metropolis: state must be nonempty");

  Eigen::VectorXd state = theta_init;
  double state_lp = log_density(state);
  if (!std::isfinite(state_lp)) {
    throw std::invalid_argument(
        "random_walk_metropolis: log density is not finite at the initial state");
  }

  MCMCResult out;
  out.samples.resize(t, dim);
  double log_sd = std::log(proposal_sd);
  const long adapt_steps = t / 2;
  long accepted = 0;
  Eigen::VectorXd proposal(dim);
  for (long i = 0; i < t; ++i) {
    const double sd = std::exp(log_sd);
    for (long j = 0; j < dim; ++j) proposal(j) = state(j) + sd * stream.normal();
    const double u = stream.uniform01();
    const double prop_lp = log_density(proposal);
    bool accept = false;
    if (std::isfinite(prop_lp)) {
      accept = std::log(u) < prop_lp - state_lp;
    }
    if (accept) {
      state = proposal;
      state_lp = prop_lp;
      ++accepted;
    }
    if (i < adapt_steps) {
      log_sd += ((accept ? 1.0 : 0.0) - 0.234) / std::sqrt(static_cast<double>(i + 1));
    }
    out.samples.row(i) = state.transpose();
  }
  out.beta.resize(1);
  out.beta(0) = std::exp(log_sd);
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(t);
  return out;
}

// Adapts the random-walk kernel to the MCMCProcedure contract; the single
// tuning parameter is the proposal sd.  Each run re-adapts starting from the
// sd it was handed.
inline MCMCProcedure make_random_walk_metropolis(LogDensityBuilder builder) {
  if (!builder) {
    throw std::invalid_argument("make_random_walk_metropolis: builder must be callable");
  }
  return [builder = std::move(builder)](const Dataset& data, long t,
                                        const Eigen::VectorXd& theta_init,
                                        const Eigen::VectorXd& beta_init,
                                        Stream& stream) -> MCMCResult {
    if (beta_init.size() != 1) {
      throw std::invalid_argument(
          "random-walk kernel: tuning parameter must be a single proposal sd");
    }
    return random_walk_metropolis(builder(data), beta_init(0), t, theta_init, stream);
  };
}

}  // namespace bagbayes
