#pragma once

// Monte-Carlo trial harness: seeded measurement sequences, posterior
// statistics per sequence length, and the SQL / CRB reference values.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nnbpe/bayes.hpp"
#include "nnbpe/calibration.hpp"
#include "nnbpe/spin_models.hpp"

namespace nnbpe {

/// A ready-to-use posterior backend. Implementations are immutable after
/// construction, so one instance may serve concurrent trials.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual std::string name() const = 0;
  /// Grid the backend was built for (the training grid).
  virtual const ThetaGrid& base_grid() const = 0;
  /// Posterior for per-outcome counts of a measurement sequence.
  virtual GridDistribution posterior(std::span<const int> counts) const = 0;
};

class NetworkEstimator : public Estimator {
 public:
  /// Composes network single-shot posteriors; `prior` is the training prior.
  NetworkEstimator(SingleShotTable table, const GridDistribution& prior);
  NetworkEstimator(const DenseNetwork& net, const OutcomeSet& outcomes, const GridDistribution& prior);

  std::string name() const override { return "network"; }
  const ThetaGrid& base_grid() const override { return table_.grid; }
  GridDistribution posterior(std::span<const int> counts) const override { return composer_.from_counts(counts); }
  const SingleShotTable& table() const { return table_; }

 private:
  SingleShotTable table_;
  LogPosterior composer_;
};

class CalibrationEstimator : public Estimator {
 public:
  explicit CalibrationEstimator(CalibratedLikelihood cal) : cal_(std::move(cal)) {}

  std::string name() const override { return "calibration"; }
  const ThetaGrid& base_grid() const override { return cal_.grid(); }
  /// Throws UnobservedOutcome when the counts include an outcome absent from the calibration data.
  GridDistribution posterior(std::span<const int> counts) const override;
  const CalibratedLikelihood& calibration() const { return cal_; }

 private:
  CalibratedLikelihood cal_;
};

/// Exact Bayes with the true likelihood on the grid; labelled "oracle".
class ExactOracleEstimator : public Estimator {
 public:
  ExactOracleEstimator(const LikelihoodModel& model, const GridDistribution& prior);

  std::string name() const override { return "oracle"; }
  const ThetaGrid& base_grid() const override { return grid_; }
  GridDistribution posterior(std::span<const int> counts) const override { return composer_.from_counts(counts); }

 private:
  ThetaGrid grid_;
  LogPosterior composer_;
};

struct TrialConfig {
  double theta_true = 0.0;
  std::vector<int> m_values;
  int n_trials = 1;
  std::uint64_t base_seed = 0;
  int threads = 0;  // 0: hardware concurrency

  void validate(const ThetaGrid& grid) const;
};

struct CellSummary {
  std::string backend;
  std::string state_kind;
  int n_qubits = 0;
  double theta_true = 0.0;
  int m = 0;
  int n_trials = 0;
  int n_failed = 0;
  double mean_variance = 0.0, se_variance = 0.0;
  double mean_bias = 0.0, se_bias = 0.0;
  double mean_mse = 0.0, se_mse = 0.0;
  double mean_estimate = 0.0;
  double sql = 0.0, crb = 0.0;
  std::string first_failure;  // message of the first failed trial, if any

  bool operator==(const CellSummary&) const = default;
};

struct TrialSummary {
  std::vector<CellSummary> cells;  // one per m, in TrialConfig order
};

/// Sequence for trial t at length m; shared by every backend so comparisons are paired.
std::uint64_t trial_seed(std::uint64_t base_seed, int m, int t);

/// Samples n_trials sequences per m from `model` at theta_true, runs the
/// estimator, and aggregates MAP estimate, posterior variance, bias and MSE.
/// Failed trials are counted and excluded from the means. Results do not
/// depend on the thread count.
TrialSummary run_trials(const LikelihoodModel& model, const Estimator& estimator, const TrialConfig& cfg);

struct Bounds {
  double sql = 0.0;  // 1 / (m N)
  double crb = 0.0;  // 1 / (m F(theta))
};

/// Throws InvalidArgument when F(theta) vanishes.
Bounds bounds(const LikelihoodModel& model, double theta, int m);

/// Rows ordered by theta_true, then m, then backend order.
std::vector<CellSummary> compare_backends(const LikelihoodModel& model, std::span<const Estimator* const> backends,
                                          std::span<const double> thetas, const std::vector<int>& m_values,
                                          int n_trials, std::uint64_t base_seed, int threads = 0);

/// n angles spread over [lo, hi], each moved to the nearest grid point plus
/// dtheta/3 so it lies on neither the grid nor its 2x refinement.
std::vector<double> offset_sweep(const ThetaGrid& grid, int n, double lo, double hi);

/// CSV with "# key: value" metadata lines, the mandatory header row, then one row per cell.
void write_csv(std::ostream& os, std::span<const CellSummary> rows, std::span<const std::string> metadata = {});

extern const char* const kCsvHeader;

}  // namespace nnbpe
