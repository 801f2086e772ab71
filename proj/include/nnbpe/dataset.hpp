#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "nnbpe/spin_models.hpp"

namespace nnbpe {

/// Uniform grid theta_j = theta_min + j * spacing, j = 0..d-1.
class ThetaGrid {
 public:
  ThetaGrid(int d, double theta_min, double theta_max);

  int size() const { return d_; }
  double min() const { return min_; }
  double max() const { return max_; }
  double spacing() const { return (max_ - min_) / (d_ - 1); }
  double point(int j) const { return min_ + j * spacing(); }
  std::vector<double> points() const;

  /// Grid with spacing halved (2d - 1 points) over the same domain.
  ThetaGrid refined() const { return ThetaGrid(2 * d_ - 1, min_, max_); }

  bool contains(double theta) const { return theta >= min_ && theta <= max_; }
  bool operator==(const ThetaGrid& other) const = default;

 private:
  int d_;
  double min_;
  double max_;
};

struct UniformAllocation {};
struct StepAllocation {
  int j_cut = 0;  // zero-based: points j < j_cut receive no data
};
struct CustomAllocation {
  std::vector<double> weights;
};
using AllocationShape = std::variant<UniformAllocation, StepAllocation, CustomAllocation>;

/// Normalized weights q_j and the integer per-point counts m_j they induce.
struct TrainingAllocation {
  std::vector<double> weights;
  std::vector<std::int64_t> counts;
  std::int64_t m_train = 0;
};

/// Distributes m_train measurements over the grid. Counts are obtained by
/// largest-remainder rounding of m_train * q_j (ties to the lowest index).
TrainingAllocation allocate(const ThetaGrid& grid, const AllocationShape& shape, std::int64_t m_train);

struct TrainingRecord {
  int outcome = 0;  // index into the OutcomeSet
  int label = 0;    // grid index
  bool operator==(const TrainingRecord&) const = default;
};

/// Labelled single-shot measurements plus their per-(outcome, label) counts.
class TrainingSet {
 public:
  TrainingSet(ThetaGrid grid, OutcomeSet outcomes, std::vector<TrainingRecord> records,
              std::optional<ModelDescriptor> model = std::nullopt, std::uint64_t seed = 0);

  const ThetaGrid& grid() const { return grid_; }
  const OutcomeSet& outcomes() const { return outcomes_; }
  const std::vector<TrainingRecord>& records() const { return records_; }
  const std::optional<ModelDescriptor>& model() const { return model_; }
  std::uint64_t seed() const { return seed_; }

  /// m_{mu, theta_j}: rows are outcomes, columns grid points.
  const Eigen::MatrixXd& counts() const { return counts_; }
  std::int64_t label_count(int j) const;
  std::size_t size() const { return records_.size(); }

 private:
  ThetaGrid grid_;
  OutcomeSet outcomes_;
  std::vector<TrainingRecord> records_;
  std::optional<ModelDescriptor> model_;
  std::uint64_t seed_;
  Eigen::MatrixXd counts_;
};

/// Draws alloc.counts[j] i.i.d. outcomes from P(mu | theta_j) for every j, then
/// shuffles the records. Reproducible for a fixed seed.
TrainingSet generate_training_set(const LikelihoodModel& model, const ThetaGrid& grid,
                                  const TrainingAllocation& alloc, std::uint64_t seed);

/// m i.i.d. outcome indices drawn from P(mu | theta_true).
std::vector<int> sample_sequence(const LikelihoodModel& model, double theta_true, int m,
                                 std::uint64_t seed);

/// Per-outcome occurrence counts of a sequence of outcome indices.
std::vector<int> outcome_counts(std::span<const int> sequence, int n_outcomes);

/// Relative frequencies f_{mu, j} = m_{mu, j} / m_j. Columns with m_j = 0 are
/// marked empty and left at zero.
struct FrequencyTable {
  Eigen::MatrixXd freq;
  std::vector<bool> empty;
  std::vector<std::int64_t> column_counts;

  int n_outcomes() const { return static_cast<int>(freq.rows()); }
  int n_points() const { return static_cast<int>(freq.cols()); }
};

FrequencyTable empirical_frequencies(const TrainingSet& ts);

/// Columnar text format, version 1:
///
///   # nnbpe-training-set v1
///   # grid: d=<int> theta_min=<double> theta_max=<double>
///   # outcomes: n_qubits=<int>
///   # model: <json descriptor or null>
///   # seed: <u64>
///   # records: <count>
///   mu_value<TAB>label_index
///   <mu><TAB><j>        (one row per record, in training order)
///
/// Doubles are printed with 17 significant digits. Extra "# key: value"
/// metadata lines may precede the column header and are ignored on read.
void write_training_set(std::ostream& os, const TrainingSet& ts,
                        std::span<const std::string> extra_metadata = {});
TrainingSet read_training_set(std::istream& is);

}  // namespace nnbpe
