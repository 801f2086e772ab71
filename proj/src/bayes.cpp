#include "nnbpe/bayes.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "nnbpe/errors.hpp"

namespace nnbpe {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd safe_log(const Eigen::VectorXd& x) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = x(i) > 0.0 ? std::log(x(i)) : kNegInf;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// GridDistribution

GridDistribution::GridDistribution(ThetaGrid grid, Eigen::VectorXd values)
    : grid_(grid), density_(std::move(values)) {
  if (density_.size() != grid_.size()) throw InvalidArgument("GridDistribution: size does not match grid");
  for (Eigen::Index j = 0; j < density_.size(); ++j) {
    if (!(density_(j) >= 0.0) || !std::isfinite(density_(j))) {
      throw InvalidArgument("GridDistribution: entries must be finite and >= 0");
    }
  }
  const double mass = density_.sum() * grid_.spacing();
  if (!(mass > 0.0)) throw InvalidArgument("GridDistribution: zero total mass");
  density_ /= mass;
}

GridDistribution GridDistribution::flat(const ThetaGrid& grid) {
  return GridDistribution(grid, Eigen::VectorXd::Ones(grid.size()));
}

double GridDistribution::mean() const {
  double m = 0.0;
  for (int j = 0; j < size(); ++j) m += density_(j) * grid_.point(j);
  return m * grid_.spacing();
}

double l1_distance(const GridDistribution& p, const GridDistribution& q) {
  if (!(p.grid() == q.grid())) throw InvalidArgument("l1_distance: grids differ");
  return (p.density() - q.density()).cwiseAbs().sum() * p.grid().spacing();
}

// ---------------------------------------------------------------------------
// Single-shot table

GridDistribution SingleShotTable::row(int outcome) const {
  return GridDistribution(grid, posterior.row(outcome).transpose());
}

SingleShotTable single_shot_posteriors(const DenseNetwork& net, const OutcomeSet& outcomes, const ThetaGrid& grid) {
  if (net.output_dim() != grid.size()) {
    throw InvalidArgument("single_shot_posteriors: network output width does not match the grid");
  }
  SingleShotTable table{grid, outcomes, Eigen::MatrixXd(outcomes.size(), grid.size()), {}, {}};
  for (int k = 0; k < outcomes.size(); ++k) {
    table.posterior.row(k) = forward(net, outcomes.value(k)).transpose() / grid.spacing();
  }
  return table;
}

std::string to_string(LikelihoodSource source) {
  return source == LikelihoodSource::ExactModel ? "exact" : "empirical";
}

LikelihoodSource likelihood_source_from_string(const std::string& name) {
  if (name == "exact") return LikelihoodSource::ExactModel;
  if (name == "empirical") return LikelihoodSource::EmpiricalFrequencies;
  throw InvalidArgument("unknown likelihood source '" + name + "' (expected exact or empirical)");
}

void choose_likelihood(SingleShotTable& table, const LikelihoodModel& model) {
  if (!(model.outcomes() == table.outcomes)) throw InvalidArgument("choose_likelihood: outcome sets differ");
  const auto pts = table.grid.points();
  table.likelihood = model.table(pts);
}

void choose_likelihood(SingleShotTable& table, const FrequencyTable& freqs) {
  if (freqs.n_outcomes() != table.outcomes.size() || freqs.n_points() != table.grid.size()) {
    throw InvalidArgument("choose_likelihood: frequency table does not match the single-shot table");
  }
  int n_empty = 0;
  table.likelihood = freqs.freq;
  for (int j = 0; j < freqs.n_points(); ++j) {
    if (freqs.empty[static_cast<std::size_t>(j)]) {
      table.likelihood.col(j).setConstant(1.0 / table.outcomes.size());
      ++n_empty;
    }
  }
  if (n_empty == freqs.n_points()) throw InvalidArgument("choose_likelihood: every frequency column is empty");
  if (n_empty > 0) {
    table.warnings.push_back(std::to_string(n_empty) + " empty frequency column(s) filled with a uniform likelihood");
  }
}

// ---------------------------------------------------------------------------
// Prior extraction

namespace {

void require_likelihood(const SingleShotTable& table) {
  if (table.likelihood.rows() != table.outcomes.size() || table.likelihood.cols() != table.grid.size()) {
    throw InvalidArgument("extract_prior: likelihood estimate has not been chosen");
  }
}

// (M p)_j = sum_mu P(theta_j | mu) sum_k P(mu | theta_k) p_k dtheta
Eigen::VectorXd apply_m(const SingleShotTable& table, const Eigen::VectorXd& p) {
  const Eigen::VectorXd marginal = table.likelihood * p * table.grid.spacing();
  return table.posterior.transpose() * marginal;
}

void normalize_density(Eigen::VectorXd& p, double spacing) { p /= p.sum() * spacing; }

}  // namespace

double prior_residual(const SingleShotTable& table, const GridDistribution& p) {
  require_likelihood(table);
  return (p.density() - apply_m(table, p.density())).cwiseAbs().sum() * table.grid.spacing();
}

PriorResult extract_prior(const SingleShotTable& table, const PriorOptions& options) {
  require_likelihood(table);
  const double dtheta = table.grid.spacing();
  const int d = table.grid.size();
  Eigen::VectorXd p = Eigen::VectorXd::Constant(d, 1.0 / (d * dtheta));

  bool converged = false;
  int iterations = 0;
  double window_reference = std::numeric_limits<double>::infinity();
  while (iterations < options.max_iterations) {
    Eigen::VectorXd next = apply_m(table, p);
    normalize_density(next, dtheta);
    const double change = (next - p).cwiseAbs().sum() * dtheta;
    p.swap(next);
    ++iterations;
    if (change < options.tolerance) {
      converged = true;
      break;
    }
    if (iterations % options.plateau_window == 0) {
      if (change > 0.99 * window_reference) break;
      window_reference = change;
    }
  }

  bool used_fallback = false;
  if (!converged && options.allow_fallback) {
    // Shifted inverse iteration on A = I - M targets its zero eigenvalue directly.
    const Eigen::MatrixXd m = table.posterior.transpose() * table.likelihood * dtheta;
    Eigen::MatrixXd shifted = Eigen::MatrixXd::Identity(d, d) - m;
    shifted.diagonal().array() += 1e-10;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(shifted);
    for (int k = 0; k < 8; ++k) {
      p = lu.solve(p);
      normalize_density(p, dtheta);
    }
    used_fallback = true;
  }

  p = p.cwiseMax(0.0);
  if (!(p.sum() > 0.0) || !p.allFinite()) {
    throw ConvergenceError("extract_prior: iteration produced no usable density",
                           std::numeric_limits<double>::infinity());
  }
  GridDistribution prior(table.grid, p);
  const double residual = prior_residual(table, prior);
  if ((!converged || used_fallback) && !(residual <= options.accept_residual)) {
    throw ConvergenceError("extract_prior: no fixed point within tolerance after " + std::to_string(iterations) +
                               " iterations (residual " + std::to_string(residual) + ")",
                           residual);
  }
  return PriorResult{std::move(prior), residual, iterations, used_fallback};
}

// ---------------------------------------------------------------------------
// Log-space composition

LogPosterior::LogPosterior(ThetaGrid grid, Eigen::VectorXd log_base, Eigen::MatrixXd log_terms)
    : grid_(grid), log_base_(std::move(log_base)), log_terms_(std::move(log_terms)) {
  if (log_base_.size() != grid_.size() || log_terms_.cols() != grid_.size()) {
    throw InvalidArgument("LogPosterior: table shape does not match grid");
  }
}

void LogPosterior::add_term(Eigen::VectorXd& log_p, int outcome, double weight) const {
  if (outcome < 0 || outcome >= n_outcomes()) throw InvalidArgument("outcome index outside the outcome set");
  if (weight == 1.0) {
    log_p += log_terms_.row(outcome).transpose();
  } else {
    log_p += weight * log_terms_.row(outcome).transpose();
  }
}

GridDistribution LogPosterior::finish(Eigen::VectorXd log_p) const {
  const double top = log_p.maxCoeff();
  if (!(top > kNegInf) || std::isnan(top)) {
    throw DegeneratePosterior("posterior vanishes on every grid point");
  }
  for (Eigen::Index j = 0; j < log_p.size(); ++j) log_p(j) = std::exp(log_p(j) - top);
  return GridDistribution(grid_, std::move(log_p));
}

GridDistribution LogPosterior::from_sequence(std::span<const int> sequence) const {
  Eigen::VectorXd log_p = log_base_;
  for (int mu : sequence) add_term(log_p, mu, 1.0);
  return finish(std::move(log_p));
}

GridDistribution LogPosterior::from_counts(std::span<const int> counts) const {
  if (static_cast<int>(counts.size()) != n_outcomes()) throw InvalidArgument("counts length differs from outcome count");
  Eigen::VectorXd log_p = log_base_;
  for (int k = 0; k < n_outcomes(); ++k) {
    const int c = counts[static_cast<std::size_t>(k)];
    if (c < 0) throw InvalidArgument("negative outcome count");
    if (c > 0) add_term(log_p, k, static_cast<double>(c));
  }
  return finish(std::move(log_p));
}

GridDistribution LogPosterior::update(const GridDistribution& start, std::span<const int> sequence) const {
  if (!(start.grid() == grid_)) throw InvalidArgument("LogPosterior::update: grid mismatch");
  Eigen::VectorXd log_p = safe_log(start.density());
  for (int mu : sequence) add_term(log_p, mu, 1.0);
  return finish(std::move(log_p));
}

LogPosterior network_composer(const GridDistribution& prior, const SingleShotTable& table) {
  if (!(prior.grid() == table.grid)) throw InvalidArgument("compose_posterior: prior and table grids differ");
  const Eigen::VectorXd log_prior = safe_log(prior.density());
  Eigen::MatrixXd terms(table.posterior.rows(), table.posterior.cols());
  for (Eigen::Index k = 0; k < terms.rows(); ++k) {
    for (Eigen::Index j = 0; j < terms.cols(); ++j) {
      if (log_prior(j) == kNegInf) {
        terms(k, j) = 0.0;
      } else {
        const double post = table.posterior(k, j);
        terms(k, j) = post > 0.0 ? std::log(post) - log_prior(j) : kNegInf;
      }
    }
  }
  return LogPosterior(table.grid, log_prior, std::move(terms));
}

LogPosterior exact_composer(const GridDistribution& prior, const Eigen::MatrixXd& likelihood_table) {
  if (likelihood_table.cols() != prior.size()) throw InvalidArgument("exact_composer: table width differs from grid");
  Eigen::MatrixXd terms(likelihood_table.rows(), likelihood_table.cols());
  for (Eigen::Index k = 0; k < terms.rows(); ++k) terms.row(k) = safe_log(likelihood_table.row(k).transpose()).transpose();
  return LogPosterior(prior.grid(), safe_log(prior.density()), std::move(terms));
}

GridDistribution compose_posterior(const GridDistribution& prior, const SingleShotTable& table,
                                   std::span<const int> sequence) {
  return network_composer(prior, table).from_sequence(sequence);
}

GridDistribution exact_posterior(const LikelihoodModel& model, const GridDistribution& prior,
                                 std::span<const int> sequence) {
  const auto pts = prior.grid().points();
  return exact_composer(prior, model.table(pts)).from_sequence(sequence);
}

SingleShotTable exact_single_shot_table(const LikelihoodModel& model, const GridDistribution& prior) {
  const auto& grid = prior.grid();
  const auto pts = grid.points();
  SingleShotTable table{grid, model.outcomes(), Eigen::MatrixXd(model.outcomes().size(), grid.size()),
                        model.table(pts), {}};
  for (int k = 0; k < table.outcomes.size(); ++k) {
    const Eigen::VectorXd joint = table.likelihood.row(k).transpose().cwiseProduct(prior.density());
    const double evidence = joint.sum() * grid.spacing();
    if (evidence > 0.0) {
      table.posterior.row(k) = joint.transpose() / evidence;
    } else {
      table.posterior.row(k) = prior.density().transpose();
      table.warnings.push_back("outcome " + std::to_string(table.outcomes.value(k)) + " has zero evidence");
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Estimators

MapEstimate map_estimate(const GridDistribution& post) {
  int best = 0;
  for (int j = 1; j < post.size(); ++j) {
    if (post[j] > post[best]) best = j;
  }
  return {post.grid().point(best), best};
}

namespace {
double second_moment(const GridDistribution& post, double center) {
  double s = 0.0;
  for (int j = 0; j < post.size(); ++j) {
    const double diff = center - post.grid().point(j);
    s += post[j] * diff * diff;
  }
  return s * post.grid().spacing();
}
}  // namespace

double posterior_variance(const GridDistribution& post, double theta_hat) { return second_moment(post, theta_hat); }

double posterior_mse(const GridDistribution& post, double theta_true) { return second_moment(post, theta_true); }

AsymptoticReference asymptotic_reference(const ThetaGrid& grid, double theta_true, double m, double fisher) {
  const double precision = m * fisher;
  if (!(precision > 0.0) || !std::isfinite(precision)) {
    throw InvalidArgument("asymptotic_reference: m * F must be positive");
  }
  Eigen::VectorXd log_p(grid.size());
  for (int j = 0; j < grid.size(); ++j) {
    const double diff = grid.point(j) - theta_true;
    log_p(j) = -0.5 * precision * diff * diff;
  }
  const double top = log_p.maxCoeff();
  Eigen::VectorXd p = (log_p.array() - top).exp().matrix();
  return {GridDistribution(grid, std::move(p)), grid.spacing() > 0.5 / std::sqrt(precision)};
}

// ---------------------------------------------------------------------------
// Text export

void write_distribution(std::ostream& os, const GridDistribution& dist, std::span<const std::string> metadata) {
  for (const auto& line : metadata) os << "# " << line << "\n";
  os << "theta\tdensity\n";
  char buf[96];
  for (int j = 0; j < dist.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g\t%.17g\n", dist.grid().point(j), dist[j]);
    os << buf;
  }
  if (!os) throw DataError("failed to write distribution");
}

GridDistribution read_distribution(std::istream& is) {
  std::string line;
  while (std::getline(is, line) && line.rfind("#", 0) == 0) {
  }
  if (line != "theta\tdensity") throw DataError("distribution file: missing 'theta<TAB>density' header");
  std::vector<double> thetas, values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double t = 0.0, v = 0.0;
    if (std::sscanf(line.c_str(), "%lf\t%lf", &t, &v) != 2) throw DataError("distribution file: malformed row");
    thetas.push_back(t);
    values.push_back(v);
  }
  if (thetas.size() < 2) throw DataError("distribution file: needs at least two rows");
  const ThetaGrid grid(static_cast<int>(thetas.size()), thetas.front(), thetas.back());
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    if (std::abs(grid.point(static_cast<int>(j)) - thetas[j]) > 1e-9) {
      throw DataError("distribution file: theta column is not a uniform grid");
    }
  }
  return GridDistribution(grid, Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
}

}  // namespace nnbpe
