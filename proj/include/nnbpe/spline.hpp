#pragma once

#include <Eigen/Dense>

namespace nnbpe {

/// Cubic interpolating spline with not-a-knot end conditions, fitted to
/// several curves sharing the same strictly increasing knots. Outside the
/// knot range the end polynomials are continued.
class CubicSpline {
 public:
  /// `values` has one row per knot and one column per curve. Needs >= 4 knots.
  CubicSpline(Eigen::VectorXd knots, Eigen::MatrixXd values);

  int n_curves() const { return static_cast<int>(values_.cols()); }

  /// Rows = query points, columns = curves.
  Eigen::MatrixXd evaluate(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd knots_;
  Eigen::MatrixXd values_;
  Eigen::MatrixXd second_;  // second derivatives at the knots
};

}  // namespace nnbpe
