#pragma once

#include <stdexcept>
#include <string>

namespace bagbayes {

// Thrown when a matrix that must be (strictly) positive definite fails its
// Cholesky-based test.  The message carries the pivot ratio so callers can
// tell near-singularity from outright indefiniteness.
class rank_deficiency_error : public std::runtime_error {
 public:
  explicit rank_deficiency_error(const std::string& what)
      : std::runtime_error(what) {}
};

// Thrown when exact bag enumeration is requested but N^M exceeds the
// enumeration cap.  The remedy (Monte Carlo bagging) is part of the message.
class enumeration_too_large_error : public std::runtime_error {
 public:
  explicit enumeration_too_large_error(const std::string& what)
      : std::runtime_error(what) {}
};

// Thrown when a quantity that must be finite and well conditioned degenerates
// (non-finite moments, zero-width mixtures, undefined variances).
class numerical_degeneracy_error : public std::runtime_error {
 public:
  explicit numerical_degeneracy_error(const std::string& what)
      : std::runtime_error(what) {}
};

// Thrown when an aggregate procedure loses every one of its components
// (all bootstrap fits failed, all replicates failed).
class aggregate_failure_error : public std::runtime_error {
 public:
  explicit aggregate_failure_error(const std::string& what)
      : std::runtime_error(what) {}
};

// Thrown when a Markov chain run violates its contract (empty sample set,
// non-finite target density at the initial state, zero proposal scale).
class mcmc_contract_error : public std::runtime_error {
 public:
  explicit mcmc_contract_error(const std::string& what)
      : std::runtime_error(what) {}
};

// Thrown when a diagnostic needs more mixture components than are present.
class insufficient_components_error : public std::runtime_error {
 public:
  explicit insufficient_components_error(const std::string& what)
      : std::runtime_error(what) {}
};

// Thrown when a statistic needs more data points than were supplied.
class insufficient_data_error : public std::runtime_error {
 public:
  explicit insufficient_data_error(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace bagbayes
