#include "nnbpe/spline.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <vector>

#include "nnbpe/errors.hpp"

namespace nnbpe {

CubicSpline::CubicSpline(Eigen::VectorXd knots, Eigen::MatrixXd values)
    : knots_(std::move(knots)), values_(std::move(values)) {
  const Eigen::Index n = knots_.size();
  if (n < 4) throw InvalidArgument("cubic spline needs at least 4 knots");
  if (values_.rows() != n) throw InvalidArgument("cubic spline: one value row per knot required");
  for (Eigen::Index i = 1; i < n; ++i) {
    if (!(knots_(i) > knots_(i - 1))) throw InvalidArgument("cubic spline: knots must be strictly increasing");
  }
  const Eigen::VectorXd h = knots_.tail(n - 1) - knots_.head(n - 1);

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(3 * n));
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, values_.cols());

  // Third derivative continuous across the second and the second-to-last knot.
  entries.emplace_back(0, 0, h(1));
  entries.emplace_back(0, 1, -(h(0) + h(1)));
  entries.emplace_back(0, 2, h(0));
  entries.emplace_back(n - 1, n - 3, h(n - 2));
  entries.emplace_back(n - 1, n - 2, -(h(n - 3) + h(n - 2)));
  entries.emplace_back(n - 1, n - 1, h(n - 3));
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    entries.emplace_back(i, i - 1, h(i - 1));
    entries.emplace_back(i, i, 2.0 * (h(i - 1) + h(i)));
    entries.emplace_back(i, i + 1, h(i));
    rhs.row(i) = 6.0 * ((values_.row(i + 1) - values_.row(i)) / h(i) - (values_.row(i) - values_.row(i - 1)) / h(i - 1));
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw InvalidArgument("cubic spline: singular system");
  second_ = lu.solve(rhs);
}

Eigen::MatrixXd CubicSpline::evaluate(const Eigen::VectorXd& x) const {
  const Eigen::Index n = knots_.size();
  Eigen::MatrixXd out(x.size(), values_.cols());
  for (Eigen::Index q = 0; q < x.size(); ++q) {
    const auto it = std::upper_bound(knots_.data(), knots_.data() + n, x(q));
    const Eigen::Index i = std::clamp<Eigen::Index>((it - knots_.data()) - 1, 0, n - 2);
    const double h = knots_(i + 1) - knots_(i);
    const double a = knots_(i + 1) - x(q);
    const double b = x(q) - knots_(i);
    out.row(q) = second_.row(i) * (a * a * a / (6.0 * h)) + second_.row(i + 1) * (b * b * b / (6.0 * h)) +
                 (values_.row(i) / h - second_.row(i) * (h / 6.0)) * a +
                 (values_.row(i + 1) / h - second_.row(i + 1) * (h / 6.0)) * b;
  }
  return out;
}

}  // namespace nnbpe
