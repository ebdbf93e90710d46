#pragma once

#include "bimdiff/types.hpp"

#include <cmath>

namespace bimdiff {

/// Mean absolute error over all entries.
template <typename A, typename B>
double mae(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred) {
  check_shape(truth.rows() == pred.rows() && truth.cols() == pred.cols(), "mae operands");
  if (truth.size() == 0) throw DataError("mae of an empty block");
  return (truth.template cast<double>() - pred.template cast<double>()).cwiseAbs().sum() / static_cast<double>(truth.size());
}

/// Mean squared error over all entries.
template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& truth, const Eigen::MatrixBase<B>& pred) {
  check_shape(truth.rows() == pred.rows() && truth.cols() == pred.cols(), "mse operands");
  if (truth.size() == 0) throw DataError("mse of an empty block");
  return (truth.template cast<double>() - pred.template cast<double>()).squaredNorm() / static_cast<double>(truth.size());
}

/// Running MAE/MSE accumulator over observed entries (mask != 0).
struct ErrorAccumulator {
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  long count = 0;

  void add(const MatrixXd& truth, const MatrixXd& pred) {
    check_shape(truth.rows() == pred.rows() && truth.cols() == pred.cols(), "error accumulator operands");
    const MatrixXd diff = truth - pred;
    abs_sum += diff.cwiseAbs().sum();
    sq_sum += diff.squaredNorm();
    count += static_cast<long>(diff.size());
  }

  void add(const MatrixXd& truth, const MatrixXd& pred, const MatrixXd& observed) {
    check_shape(observed.rows() == truth.rows() && observed.cols() == truth.cols(), "observation mask");
    for (Eigen::Index c = 0; c < truth.cols(); ++c)
      for (Eigen::Index r = 0; r < truth.rows(); ++r) {
        if (observed(r, c) == 0.0) continue;
        const double e = truth(r, c) - pred(r, c);
        abs_sum += std::abs(e);
        sq_sum += e * e;
        ++count;
      }
  }

  double mae() const {
    if (count == 0) throw DataError("no observed entries");
    return abs_sum / static_cast<double>(count);
  }
  double mse() const {
    if (count == 0) throw DataError("no observed entries");
    return sq_sum / static_cast<double>(count);
  }
};

}  // namespace bimdiff
