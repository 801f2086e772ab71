#include "nnbpe/calibration.hpp"

#include <cmath>
#include <string>

#include "nnbpe/errors.hpp"
#include "nnbpe/spline.hpp"

namespace nnbpe {

namespace {

LogPosterior flat_composer(const ThetaGrid& refined, const Eigen::MatrixXd& table) {
  Eigen::MatrixXd terms = table.cwiseMax(kCalibrationFloor).array().log().matrix();
  return LogPosterior(refined, Eigen::VectorXd::Zero(refined.size()), std::move(terms));
}

}  // namespace

CalibratedLikelihood::CalibratedLikelihood(ThetaGrid grid, OutcomeSet outcomes, FrequencyTable source,
                                           Eigen::MatrixXd table)
    : grid_(grid),
      refined_(grid.refined()),
      outcomes_(outcomes),
      source_(std::move(source)),
      table_(std::move(table)),
      composer_(flat_composer(refined_, table_)) {}

CalibratedLikelihood calibrate(const FrequencyTable& freqs, const ThetaGrid& grid) {
  if (freqs.n_points() != grid.size()) throw InvalidArgument("calibrate: frequency table does not match the grid");
  const int n_outcomes = freqs.n_outcomes();
  if (n_outcomes < 2) throw InvalidArgument("calibrate: need at least two outcomes");

  std::vector<int> support;
  for (int j = 0; j < grid.size(); ++j) {
    if (!freqs.empty[static_cast<std::size_t>(j)]) support.push_back(j);
  }
  if (support.size() < 4) {
    throw InvalidArgument("calibrate: cubic interpolation needs at least 4 nonempty grid columns, got " +
                          std::to_string(support.size()));
  }
  Eigen::VectorXd knots(static_cast<Eigen::Index>(support.size()));
  Eigen::MatrixXd values(knots.size(), n_outcomes);
  for (std::size_t i = 0; i < support.size(); ++i) {
    knots(static_cast<Eigen::Index>(i)) = grid.point(support[i]);
    values.row(static_cast<Eigen::Index>(i)) = freqs.freq.col(support[i]).transpose();
  }

  const ThetaGrid refined = grid.refined();
  Eigen::VectorXd xq(refined.size());
  for (int k = 0; k < refined.size(); ++k) xq(k) = refined.point(k);
  Eigen::MatrixXd table = CubicSpline(knots, values).evaluate(xq).transpose();

  std::vector<bool> observed(static_cast<std::size_t>(n_outcomes));
  for (int mu = 0; mu < n_outcomes; ++mu) observed[static_cast<std::size_t>(mu)] = (freqs.freq.row(mu).array() > 0.0).any();

  int clipped = 0;
  int refilled = 0;
  for (Eigen::Index k = 0; k < table.cols(); ++k) {
    for (int mu = 0; mu < n_outcomes; ++mu) {
      double& v = table(mu, k);
      // Rows of never-observed outcomes stay identically zero.
      if (!observed[static_cast<std::size_t>(mu)]) {
        v = 0.0;
      } else if (v < 0.0) {
        v = 0.0;
        ++clipped;
      }
    }
    const double total = table.col(k).sum();
    if (total > 0.0) {
      table.col(k) /= total;
    } else {
      ++refilled;
      int n_obs = 0;
      for (bool o : observed) n_obs += o ? 1 : 0;
      for (int mu = 0; mu < n_outcomes; ++mu) table(mu, k) = observed[static_cast<std::size_t>(mu)] ? 1.0 / n_obs : 0.0;
    }
  }

  CalibratedLikelihood cal(grid, OutcomeSet(n_outcomes - 1), freqs, std::move(table));
  cal.observed_ = std::move(observed);
  cal.clipped_entries_ = clipped;
  cal.refilled_columns_ = refilled;
  cal.floored_.resize(static_cast<std::size_t>(n_outcomes));
  for (int mu = 0; mu < n_outcomes; ++mu) {
    cal.floored_[static_cast<std::size_t>(mu)] = cal.table_.row(mu).minCoeff() < kCalibrationFloor;
  }
  return cal;
}

CalibratedLikelihood calibrate(const TrainingSet& ts) { return calibrate(empirical_frequencies(ts), ts.grid()); }

CalibrationPosterior calibration_posterior(const CalibratedLikelihood& cal, std::span<const int> sequence) {
  bool floored = false;
  for (int mu : sequence) {
    if (mu < 0 || mu >= cal.outcomes().size()) throw InvalidArgument("outcome index outside the outcome set");
    if (!cal.observed(mu)) {
      throw UnobservedOutcome("outcome mu=" + std::to_string(cal.outcomes().value(mu)) +
                                  " never occurred in the calibration data",
                              cal.outcomes().value(mu));
    }
    floored = floored || cal.floored(mu);
  }
  return {cal.composer().from_sequence(sequence), floored};
}

void write_calibration(std::ostream& os, const CalibratedLikelihood& cal, std::span<const std::string> metadata) {
  std::vector<std::string> lines(metadata.begin(), metadata.end());
  lines.push_back("interpolation: cubic spline, not-a-knot, onto " + std::to_string(cal.refined_grid().size()) +
                  " points");
  lines.push_back("columns renormalized after clipping: yes (" + std::to_string(cal.clipped_entries()) +
                  " negative entries clipped)");
  const auto pts = cal.refined_grid().points();
  write_likelihood_table(os, cal.outcomes(), pts, cal.table(), "calibrated", lines);
}

}  // namespace nnbpe
