#include "nnbpe/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>

#include "nnbpe/errors.hpp"
#include "nnbpe/random.hpp"

namespace nnbpe {

const char* const kCsvHeader =
    "backend,state_kind,N,theta_true,m,n_trials,n_failed,mean_variance,se_variance,mean_bias,se_bias,mean_mse,"
    "se_mse,sql,crb";

NetworkEstimator::NetworkEstimator(SingleShotTable table, const GridDistribution& prior)
    : table_(std::move(table)), composer_(network_composer(prior, table_)) {}

NetworkEstimator::NetworkEstimator(const DenseNetwork& net, const OutcomeSet& outcomes, const GridDistribution& prior)
    : NetworkEstimator(single_shot_posteriors(net, outcomes, prior.grid()), prior) {}

GridDistribution CalibrationEstimator::posterior(std::span<const int> counts) const {
  if (static_cast<int>(counts.size()) != cal_.outcomes().size()) {
    throw InvalidArgument("counts length differs from outcome count");
  }
  for (int mu = 0; mu < cal_.outcomes().size(); ++mu) {
    if (counts[static_cast<std::size_t>(mu)] > 0 && !cal_.observed(mu)) {
      throw UnobservedOutcome("outcome mu=" + std::to_string(cal_.outcomes().value(mu)) +
                                  " never occurred in the calibration data",
                              cal_.outcomes().value(mu));
    }
  }
  return cal_.composer().from_counts(counts);
}

ExactOracleEstimator::ExactOracleEstimator(const LikelihoodModel& model, const GridDistribution& prior)
    : grid_(prior.grid()), composer_(exact_composer(prior, model.table(prior.grid().points()))) {}

void TrialConfig::validate(const ThetaGrid& grid) const {
  if (!grid.contains(theta_true)) throw InvalidArgument("evaluation.theta_true: outside the grid domain");
  if (n_trials < 1) throw InvalidArgument("evaluation.n_trials: must be >= 1");
  if (m_values.empty()) throw InvalidArgument("evaluation.m: list is empty");
  for (int m : m_values) {
    if (m < 0) throw InvalidArgument("evaluation.m: sequence lengths must be >= 0");
  }
  if (threads < 0) throw InvalidArgument("evaluation.threads: must be >= 0");
}

std::uint64_t trial_seed(std::uint64_t base_seed, int m, int t) {
  return mix_seed(base_seed, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(t));
}

Bounds bounds(const LikelihoodModel& model, double theta, int m) {
  if (m < 1) throw InvalidArgument("bounds: m must be >= 1");
  const double f = fisher_information(model, theta).value;
  if (!(f > 1e-12)) {
    throw InvalidArgument("bounds: Fisher information vanishes at theta=" + std::to_string(theta));
  }
  return {1.0 / (static_cast<double>(m) * model.n_qubits()), 1.0 / (static_cast<double>(m) * f)};
}

namespace {

struct TrialResult {
  bool ok = false;
  double estimate = 0.0, variance = 0.0, mse = 0.0;
  std::string error;
};

struct Job {
  int m;
  int t;
};

template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
  unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) body(i);
  };
  if (workers <= 1) {
    run();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& th : pool) th.join();
}

struct Moments {
  double mean = 0.0, se = 0.0;
};

Moments moments(const std::vector<double>& x) {
  if (x.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double sum = 0.0;
  for (double v : x) sum += v;
  const double mean = sum / static_cast<double>(x.size());
  if (x.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()))};
}

std::string state_label(const LikelihoodModel& model) {
  return model.descriptor() ? to_string(model.descriptor()->kind) : std::string("custom");
}

}  // namespace

TrialSummary run_trials(const LikelihoodModel& model, const Estimator& estimator, const TrialConfig& cfg) {
  cfg.validate(estimator.base_grid());

  std::vector<Job> jobs;
  for (int m : cfg.m_values) {
    for (int t = 0; t < cfg.n_trials; ++t) jobs.push_back({m, t});
  }
  const Eigen::VectorXd p = model.probabilities(cfg.theta_true);
  const CategoricalSampler sampler(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  const int n_outcomes = model.outcomes().size();

  std::vector<TrialResult> results(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    const Job job = jobs[i];
    TrialResult& r = results[i];
    try {
      Rng rng(trial_seed(cfg.base_seed, job.m, job.t));
      std::vector<int> counts(static_cast<std::size_t>(n_outcomes), 0);
      for (int k = 0; k < job.m; ++k) ++counts[static_cast<std::size_t>(sampler.sample(rng))];
      const GridDistribution post = estimator.posterior(counts);
      const MapEstimate est = map_estimate(post);
      r.estimate = est.theta;
      r.variance = posterior_variance(post, est.theta);
      r.mse = posterior_mse(post, cfg.theta_true);
      r.ok = true;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
  });

  TrialSummary summary;
  std::size_t offset = 0;
  for (int m : cfg.m_values) {
    CellSummary cell;
    cell.backend = estimator.name();
    cell.state_kind = state_label(model);
    cell.n_qubits = model.n_qubits();
    cell.theta_true = cfg.theta_true;
    cell.m = m;
    cell.n_trials = cfg.n_trials;
    std::vector<double> var, bias, mse, est;
    for (int t = 0; t < cfg.n_trials; ++t) {
      const TrialResult& r = results[offset + static_cast<std::size_t>(t)];
      if (!r.ok) {
        if (cell.n_failed == 0) cell.first_failure = r.error;
        ++cell.n_failed;
        continue;
      }
      var.push_back(r.variance);
      bias.push_back(r.estimate - cfg.theta_true);
      mse.push_back(r.mse);
      est.push_back(r.estimate);
    }
    offset += static_cast<std::size_t>(cfg.n_trials);
    const Moments v = moments(var), b = moments(bias), s = moments(mse);
    cell.mean_variance = v.mean;
    cell.se_variance = v.se;
    cell.mean_bias = b.mean;
    cell.se_bias = b.se;
    cell.mean_mse = s.mean;
    cell.se_mse = s.se;
    cell.mean_estimate = moments(est).mean;
    if (m >= 1) {
      cell.sql = 1.0 / (static_cast<double>(m) * model.n_qubits());
      const double f = fisher_information(model, cfg.theta_true).value;
      cell.crb = f > 1e-12 ? 1.0 / (static_cast<double>(m) * f) : std::numeric_limits<double>::infinity();
    } else {
      cell.sql = cell.crb = std::numeric_limits<double>::infinity();
    }
    summary.cells.push_back(std::move(cell));
  }
  return summary;
}

std::vector<CellSummary> compare_backends(const LikelihoodModel& model, std::span<const Estimator* const> backends,
                                          std::span<const double> thetas, const std::vector<int>& m_values,
                                          int n_trials, std::uint64_t base_seed, int threads) {
  if (backends.empty()) throw InvalidArgument("compare_backends: no backends");
  for (const Estimator* b : backends) {
    if (!(b->base_grid() == backends.front()->base_grid())) {
      throw InvalidArgument("compare_backends: backend '" + b->name() + "' uses a different grid than '" +
                            backends.front()->name() + "'");
    }
  }
  std::vector<CellSummary> rows;
  for (double theta : thetas) {
    std::vector<TrialSummary> per_backend;
    for (const Estimator* b : backends) {
      TrialConfig cfg{theta, m_values, n_trials, base_seed, threads};
      per_backend.push_back(run_trials(model, *b, cfg));
    }
    for (std::size_t k = 0; k < m_values.size(); ++k) {
      for (const auto& s : per_backend) rows.push_back(s.cells[k]);
    }
  }
  return rows;
}

std::vector<double> offset_sweep(const ThetaGrid& grid, int n, double lo, double hi) {
  if (n < 1) throw InvalidArgument("offset_sweep: n must be >= 1");
  if (!(hi >= lo)) throw InvalidArgument("offset_sweep: hi must be >= lo");
  const double shift = grid.spacing() / 3.0;
  std::vector<double> out;
  for (int i = 0; i < n; ++i) {
    const double target = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1);
    int j = static_cast<int>(std::lround((target - grid.min()) / grid.spacing()));
    j = std::clamp(j, 0, grid.size() - 2);
    out.push_back(grid.point(j) + shift);
  }
  return out;
}

void write_csv(std::ostream& os, std::span<const CellSummary> rows, std::span<const std::string> metadata) {
  for (const auto& line : metadata) os << "# " << line << "\n";
  os << kCsvHeader << "\n";
  char buf[512];
  for (const auto& c : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%.17g,%d,%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  c.backend.c_str(), c.state_kind.c_str(), c.n_qubits, c.theta_true, c.m, c.n_trials, c.n_failed,
                  c.mean_variance, c.se_variance, c.mean_bias, c.se_bias, c.mean_mse, c.se_mse, c.sql, c.crb);
    os << buf;
  }
  if (!os) throw DataError("failed to write CSV");
}

}  // namespace nnbpe
