#pragma once

// Calibration baseline: likelihoods taken from relative frequencies of the
// training data, smoothed by cubic interpolation onto a grid of twice the
// density, combined with a flat prior.

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnbpe/bayes.hpp"
#include "nnbpe/dataset.hpp"

namespace nnbpe {

class CalibratedLikelihood {
 public:
  const ThetaGrid& grid() const { return grid_; }
  const ThetaGrid& refined_grid() const { return refined_; }
  const OutcomeSet& outcomes() const { return outcomes_; }
  const FrequencyTable& source() const { return source_; }

  /// Smoothed P(mu | theta'_k), rows = outcomes, columns = refined grid.
  const Eigen::MatrixXd& table() const { return table_; }
  bool observed(int outcome) const { return observed_[static_cast<std::size_t>(outcome)]; }

  int clipped_entries() const { return clipped_entries_; }
  int refilled_columns() const { return refilled_columns_; }

  /// Flat-prior composer over the refined grid with log(max(P, 1e-12)) terms.
  const LogPosterior& composer() const { return composer_; }
  /// True when the outcome's row dips below the floor somewhere.
  bool floored(int outcome) const { return floored_[static_cast<std::size_t>(outcome)]; }

 private:
  friend CalibratedLikelihood calibrate(const FrequencyTable&, const ThetaGrid&);
  CalibratedLikelihood(ThetaGrid grid, OutcomeSet outcomes, FrequencyTable source, Eigen::MatrixXd table);

  ThetaGrid grid_;
  ThetaGrid refined_;
  OutcomeSet outcomes_;
  FrequencyTable source_;
  Eigen::MatrixXd table_;
  std::vector<bool> observed_;
  std::vector<bool> floored_;
  int clipped_entries_ = 0;
  int refilled_columns_ = 0;
  LogPosterior composer_;
};

inline constexpr double kCalibrationFloor = 1e-12;

/// Per-outcome not-a-knot cubic interpolation of the frequencies over the
/// nonempty grid columns, evaluated on the 2d-1 point grid, clipped at zero and
/// renormalized per column. Throws InvalidArgument with fewer than 4 nonempty columns.
CalibratedLikelihood calibrate(const FrequencyTable& freqs, const ThetaGrid& grid);
CalibratedLikelihood calibrate(const TrainingSet& ts);

struct CalibrationPosterior {
  GridDistribution posterior;  // on the refined grid
  bool floored = false;        // some factor was raised to the 1e-12 floor
};

/// Flat-prior Bayes product over the refined grid. Throws UnobservedOutcome for
/// an outcome absent from the calibration data.
CalibrationPosterior calibration_posterior(const CalibratedLikelihood& cal, std::span<const int> sequence);

/// Writes the smoothed table in the likelihood column format, tagged "calibrated".
void write_calibration(std::ostream& os, const CalibratedLikelihood& cal,
                       std::span<const std::string> metadata = {});

}  // namespace nnbpe
