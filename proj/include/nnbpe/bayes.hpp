#pragma once

// Bayesian machinery on a uniform theta grid: densities, the network-derived
// single-shot table, prior extraction, posterior composition for measurement
// sequences, point estimates and their uncertainties, and the exact-Bayes
// reference built from the true likelihood.

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnbpe/dataset.hpp"
#include "nnbpe/neuralnet.hpp"
#include "nnbpe/spin_models.hpp"

namespace nnbpe {

/// Nonnegative density on a grid, normalized as sum_j p_j * dtheta = 1.
class GridDistribution {
 public:
  /// Normalizes `values`; throws InvalidArgument on negative entries or zero mass.
  GridDistribution(ThetaGrid grid, Eigen::VectorXd values);

  static GridDistribution flat(const ThetaGrid& grid);

  const ThetaGrid& grid() const { return grid_; }
  const Eigen::VectorXd& density() const { return density_; }
  double operator[](int j) const { return density_(j); }
  int size() const { return grid_.size(); }

  /// Probability mass sum_j p_j dtheta of each grid point.
  Eigen::VectorXd masses() const { return density_ * grid_.spacing(); }
  double mean() const;

 private:
  ThetaGrid grid_;
  Eigen::VectorXd density_;
};

/// Integrated absolute difference sum_j |p_j - q_j| dtheta (in [0, 2]).
double l1_distance(const GridDistribution& p, const GridDistribution& q);

/// Network posteriors P(theta_j | mu) for every outcome (rows), plus a
/// likelihood estimate P(mu | theta_k) (rows = outcomes, columns = grid) once
/// one has been chosen.
struct SingleShotTable {
  ThetaGrid grid;
  OutcomeSet outcomes;
  Eigen::MatrixXd posterior;   // outcomes x d, each row a density
  Eigen::MatrixXd likelihood;  // outcomes x d, each column sums to 1; empty until chosen
  std::vector<std::string> warnings;

  GridDistribution row(int outcome) const;
};

/// Rows forward(net, mu) / dtheta for every outcome mu.
SingleShotTable single_shot_posteriors(const DenseNetwork& net, const OutcomeSet& outcomes, const ThetaGrid& grid);

enum class LikelihoodSource { ExactModel, EmpiricalFrequencies };

std::string to_string(LikelihoodSource source);
LikelihoodSource likelihood_source_from_string(const std::string& name);

/// Exact P(mu | theta_k) on the grid.
void choose_likelihood(SingleShotTable& table, const LikelihoodModel& model);

/// Relative frequencies m_{mu,k} / m_k; empty columns are filled with the
/// uniform 1/(N+1) and a warning is recorded. Throws if every column is empty.
void choose_likelihood(SingleShotTable& table, const FrequencyTable& freqs);

struct PriorOptions {
  double tolerance = 1e-12;     // successive L1 change that ends power iteration
  int max_iterations = 100000;  // power iteration cap
  int plateau_window = 1000;    // iterations without 1% improvement that count as a stall
  bool allow_fallback = true;   // shifted inverse iteration after a stall or the cap
  double accept_residual = 1e-9;
};

struct PriorResult {
  GridDistribution prior;
  double residual = 0.0;  // sum_j |((I - M) p)_j| dtheta after clipping/renormalization
  int iterations = 0;
  bool used_fallback = false;
};

/// Solves p = M p with M_jk = sum_mu P(theta_j | mu) P(mu | theta_k) dtheta,
/// i.e. the null vector of A = I - M, by power iteration from the flat density.
/// Negative entries are clipped and the result renormalized. Throws
/// ConvergenceError (carrying the residual) when no solution within
/// accept_residual is found.
PriorResult extract_prior(const SingleShotTable& table, const PriorOptions& options = {});

/// ||(I - M) p||, integrated L1 norm.
double prior_residual(const SingleShotTable& table, const GridDistribution& p);

/// Log-space accumulator for posteriors of the form
///   log p_j = base_j + sum_i term(mu_i)_j
/// where -inf entries mark grid points excluded from the support.
class LogPosterior {
 public:
  LogPosterior(ThetaGrid grid, Eigen::VectorXd log_base, Eigen::MatrixXd log_terms);

  const ThetaGrid& grid() const { return grid_; }
  int n_outcomes() const { return static_cast<int>(log_terms_.rows()); }

  /// Posterior for a sequence of outcome indices (summed term by term in sequence order).
  GridDistribution from_sequence(std::span<const int> sequence) const;
  /// Posterior for per-outcome counts.
  GridDistribution from_counts(std::span<const int> counts) const;
  /// Continues from an existing distribution instead of the base.
  GridDistribution update(const GridDistribution& start, std::span<const int> sequence) const;

 private:
  GridDistribution finish(Eigen::VectorXd log_p) const;
  void add_term(Eigen::VectorXd& log_p, int outcome, double weight) const;

  ThetaGrid grid_;
  Eigen::VectorXd log_base_;
  Eigen::MatrixXd log_terms_;  // outcomes x d
};

/// Network composition: base = log prior, term(mu) = log P(theta|mu) - log prior.
/// Points where the prior vanishes are excluded and stay exactly zero.
LogPosterior network_composer(const GridDistribution& prior, const SingleShotTable& table);

/// Exact Bayes: base = log prior, term(mu) = log P(mu | theta).
LogPosterior exact_composer(const GridDistribution& prior, const Eigen::MatrixXd& likelihood_table);

/// P(theta_j | mu_1..mu_m) = N * prior_j * prod_i P(theta_j | mu_i) / prior_j.
GridDistribution compose_posterior(const GridDistribution& prior, const SingleShotTable& table,
                                   std::span<const int> sequence);

/// Bayes rule with the model's true likelihoods on the prior's grid.
GridDistribution exact_posterior(const LikelihoodModel& model, const GridDistribution& prior,
                                 std::span<const int> sequence);

/// Single-shot table whose rows are exact posteriors for the given prior.
SingleShotTable exact_single_shot_table(const LikelihoodModel& model, const GridDistribution& prior);

struct MapEstimate {
  double theta = 0.0;
  int index = 0;
};

/// Grid point of maximal density; ties resolve to the lowest index.
MapEstimate map_estimate(const GridDistribution& post);

/// sum_j p_j (theta_hat - theta_j)^2 dtheta
double posterior_variance(const GridDistribution& post, double theta_hat);

/// sum_j p_j (theta_true - theta_j)^2 dtheta
double posterior_mse(const GridDistribution& post, double theta_true);

struct AsymptoticReference {
  GridDistribution distribution;
  bool grid_too_coarse = false;  // dtheta > 0.5 / sqrt(m F)
};

/// Gaussian of variance 1/(m F) centred on theta_true, discretized and renormalized.
AsymptoticReference asymptotic_reference(const ThetaGrid& grid, double theta_true, double m, double fisher);

/// Two-column text export: optional "# ..." metadata lines, a "theta<TAB>density"
/// header, then one row per grid point.
void write_distribution(std::ostream& os, const GridDistribution& dist,
                        std::span<const std::string> metadata = {});
GridDistribution read_distribution(std::istream& is);

}  // namespace nnbpe
