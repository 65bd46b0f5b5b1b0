#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace bagbayes {

// A dataset is either N observation vectors (location form) or N
// regressor/outcome pairs (regression form).  Both forms are immutable after
// construction and always hold at least one row of finite values.
class Dataset {
 public:
  enum class Kind { location, regression };

  static Dataset location(Eigen::MatrixXd x) {
    if (x.rows() < 1) throw std::invalid_argument("Dataset: need at least one row");
    if (!x.allFinite()) throw std::invalid_argument("Dataset: entries must be finite");
    Dataset d;
    d.kind_ = Kind::location;
    d.x_ = std::move(x);
    return d;
  }

  static Dataset regression(Eigen::MatrixXd z, Eigen::VectorXd y) {
    if (z.rows() < 1) throw std::invalid_argument("Dataset: need at least one row");
    if (z.rows() != y.size()) {
      throw std::invalid_argument("Dataset: regressor rows and outcomes must align");
    }
    if (!z.allFinite() || !y.allFinite()) {
      throw std::invalid_argument("Dataset: entries must be finite");
    }
    Dataset d;
    d.kind_ = Kind::regression;
    d.x_ = std::move(z);
    d.y_ = std::move(y);
    return d;
  }

  Kind kind() const { return kind_; }
  bool is_regression() const { return kind_ == Kind::regression; }
  Eigen::Index rows() const { return x_.rows(); }
  Eigen::Index dim() const { return x_.cols(); }

  // Location observations (location form only).
  const Eigen::MatrixXd& observations() const {
    require(Kind::location, "observations");
    return x_;
  }

  // Regressor matrix / outcome vector (regression form only).
  const Eigen::MatrixXd& regressors() const {
    require(Kind::regression, "regressors");
    return x_;
  }
  const Eigen::VectorXd& outcomes() const {
    require(Kind::regression, "outcomes");
    return y_;
  }

 private:
  Dataset() = default;
  void require(Kind k, const char* what) const {
    if (kind_ != k) {
      throw std::logic_error(std::string("Dataset: ") + what +
                             " not available for this dataset kind");
    }
  }

  Kind kind_ = Kind::location;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
};

// Materializes a bootstrap dataset: row i of `data` appears counts[i] times,
// in index order.  The resampled dataset must be non-empty.
inline Dataset resample(const Dataset& data, const std::vector<long>& counts) {
  if (static_cast<Eigen::Index>(counts.size()) != data.rows()) {
    throw std::invalid_argument("resample: counts length must equal the number of rows");
  }
  long total = 0;
  for (long c : counts) {
    if (c < 0) throw std::invalid_argument("resample: counts must be non-negative");
    total += c;
  }
  if (total < 1) throw std::invalid_argument("resample: resampled dataset would be empty");

  const Eigen::MatrixXd& src = data.is_regression() ? data.regressors() : data.observations();
  Eigen::MatrixXd out_x(total, src.cols());
  Eigen::VectorXd out_y;
  if (data.is_regression()) out_y.resize(total);

  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (long c = 0; c < counts[static_cast<std::size_t>(i)]; ++c) {
      out_x.row(row) = src.row(i);
      if (data.is_regression()) out_y(row) = data.outcomes()(i);
      ++row;
    }
  }
  return data.is_regression() ? Dataset::regression(std::move(out_x), std::move(out_y))
                              : Dataset::location(std::move(out_x));
}

}  // namespace bagbayes
