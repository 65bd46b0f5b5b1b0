#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <limits>

#include "bagbayes/dataset.hpp"

using namespace bagbayes;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("dataset factories validate their inputs") {
  CHECK_THROWS_AS(Dataset::location(MatrixXd(0, 1)), std::invalid_argument);
  MatrixXd bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Dataset::location(bad), std::invalid_argument);

  MatrixXd z(2, 1);
  z << 1.0, 2.0;
  VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  CHECK_THROWS_AS(Dataset::regression(z, y), std::invalid_argument);
  VectorXd y2(2);
  y2 << 1.0, std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Dataset::regression(z, y2), std::invalid_argument);
}

TEST_CASE("dataset accessors enforce the kind") {
  MatrixXd x(2, 1);
  x << 1.0, 2.0;
  const Dataset loc = Dataset::location(x);
  CHECK_FALSE(loc.is_regression());
  CHECK(loc.rows() == 2);
  CHECK(loc.dim() == 1);
  CHECK_NOTHROW(loc.observations());
  CHECK_THROWS_AS(loc.regressors(), std::logic_error);
  CHECK_THROWS_AS(loc.outcomes(), std::logic_error);

  MatrixXd z(2, 2);
  z << 1.0, 0.0, 0.0, 1.0;
  VectorXd y(2);
  y << 3.0, 4.0;
  const Dataset reg = Dataset::regression(z, y);
  CHECK(reg.is_regression());
  CHECK_NOTHROW(reg.regressors());
  CHECK_NOTHROW(reg.outcomes());
  CHECK_THROWS_AS(reg.observations(), std::logic_error);
}

TEST_CASE("resample repeats rows by their counts, in order") {
  MatrixXd x(2, 1);
  x << 10.0, 20.0;
  const Dataset data = Dataset::location(x);

  const Dataset doubled = resample(data, {2, 0});
  REQUIRE(doubled.rows() == 2);
  CHECK(doubled.observations()(0, 0) == 10.0);
  CHECK(doubled.observations()(1, 0) == 10.0);

  MatrixXd z(3, 1);
  z << 1.0, 2.0, 3.0;
  VectorXd y(3);
  y << 5.0, 6.0, 7.0;
  const Dataset reg = Dataset::regression(z, y);
  const Dataset picked = resample(reg, {0, 1, 2});
  REQUIRE(picked.rows() == 3);
  CHECK(picked.regressors()(0, 0) == 2.0);
  CHECK(picked.regressors()(1, 0) == 3.0);
  CHECK(picked.regressors()(2, 0) == 3.0);
  CHECK(picked.outcomes()(0) == 6.0);
  CHECK(picked.outcomes()(1) == 7.0);
  CHECK(picked.outcomes()(2) == 7.0);
}

TEST_CASE("resample row count equals the sum of the counts") {
  MatrixXd x(4, 2);
  x.setRandom();
  const Dataset data = Dataset::location(x);
  CHECK(resample(data, {3, 0, 2, 1}).rows() == 6);
  CHECK(resample(data, {0, 1, 0, 0}).rows() == 1);
}

TEST_CASE("resample rejects malformed count vectors") {
  MatrixXd x(2, 1);
  x << 1.0, 2.0;
  const Dataset data = Dataset::location(x);
  CHECK_THROWS_AS(resample(data, {1}), std::invalid_argument);
  CHECK_THROWS_AS(resample(data, {1, -1}), std::invalid_argument);
  CHECK_THROWS_AS(resample(data, {0, 0}), std::invalid_argument);
}
