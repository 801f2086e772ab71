// End-to-end acceptance runs. Each criterion trains from the shipped configs
// and prints one PASS/FAIL line; the exit status is nonzero if any fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nnbpe/bayes.hpp"
#include "nnbpe/calibration.hpp"
#include "nnbpe/config.hpp"
#include "nnbpe/errors.hpp"
#include "nnbpe/evaluation.hpp"
#include "nnbpe/random.hpp"

using namespace nnbpe;

namespace {

constexpr double pi = std::numbers::pi;

std::string config_dir = NNBPE_CONFIG_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig config(const std::string& name) { return load_config(config_dir + "/" + name + ".json"); }

GridDistribution allocation_prior(const RunConfig& cfg) {
  const auto alloc = allocate(cfg.grid, cfg.training.allocation, cfg.training.m_train);
  return GridDistribution(cfg.grid, Eigen::Map<const Eigen::VectorXd>(alloc.weights.data(), cfg.grid.size()));
}

struct Trained {
  LikelihoodModel model;
  TrainingSet data;
  TrainResult result;
};

// Network backend as `nnbpe evaluate` builds it: composition divides by the
// prior extracted from the network itself.
NetworkEstimator network_estimator(const RunConfig& cfg, const Trained& tr) {
  SingleShotTable table = single_shot_posteriors(tr.result.network, tr.model.outcomes(), cfg.grid);
  choose_likelihood(table, tr.model);
  const PriorResult prior = extract_prior(table);
  return NetworkEstimator(std::move(table), prior.prior);
}

// Same steps as `nnbpe gen-data` followed by `nnbpe train`.
Trained train_from(const RunConfig& cfg) {
  LikelihoodModel model(cfg.model);
  const auto& t = cfg.training;
  TrainingSet ts = generate_training_set(model, cfg.grid, allocate(cfg.grid, t.allocation, t.m_train), t.data_seed());
  const auto net_cfg = NetworkConfig::for_outcomes(t.hidden_layers, cfg.grid.size(), model.outcomes());
  TrainResult res = train(init(net_cfg, t.init_seed()), ts, t.train_spec());
  std::printf("  trained %s: %zu records, final loss %.5f\n", cfg.output.prefix.c_str(), ts.size(),
              res.epoch_loss.back());
  return {std::move(model), std::move(ts), std::move(res)};
}

// Single-shot posteriors: network vs exact Bayes with the training prior.
Verdict criterion1() {
  const RunConfig cfg = config("fig2_qubit");
  const Trained tr = train_from(cfg);
  const GridDistribution prior = allocation_prior(cfg);
  const SingleShotTable net = single_shot_posteriors(tr.result.network, tr.model.outcomes(), cfg.grid);
  const SingleShotTable exact = exact_single_shot_table(tr.model, prior);
  double worst = 0.0;
  std::string detail;
  for (int k = 0; k < tr.model.outcomes().size(); ++k) {
    const double l1 = l1_distance(net.row(k), exact.row(k));
    worst = std::max(worst, l1);
    detail += fmt("L1(mu=%g)=%.4f ", tr.model.outcomes().value(k), l1);
  }
  return {worst <= 0.15, detail + "(tol 0.15)"};
}

// Posterior variance and MAP bias of the network estimator at m = 50.
Verdict criterion2() {
  const RunConfig cfg = config("fig2_qubit");
  const Trained tr = train_from(cfg);
  const NetworkEstimator est = network_estimator(cfg, tr);
  const double theta = 0.6 * pi;
  const int m = 50;
  const auto s = run_trials(tr.model, est, {theta, {m}, 1000, cfg.evaluation->base_seed, 0}).cells.front();
  const double ratio = s.mean_variance * m;
  const double offset = std::abs(s.mean_estimate - theta);
  const double tol = 2 * cfg.grid.spacing();
  return {s.n_failed == 0 && ratio >= 0.8 && ratio <= 1.3 && offset <= tol,
          fmt("m*mean_variance=%.4f (want [0.8,1.3]), |mean MAP - theta|=%.5f (tol %.5f), failed=%d", ratio, offset,
              tol, s.n_failed)};
}

// Prior extraction for the three allocation shapes.
Verdict criterion3() {
  bool pass = true;
  std::string detail;
  for (const std::string name : {"flat", "step", "smooth"}) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = config("fig3_" + name);
    const Trained tr = train_from(cfg);
    SingleShotTable table = single_shot_posteriors(tr.result.network, tr.model.outcomes(), cfg.grid);
    choose_likelihood(table, tr.model);
    std::optional<PriorResult> found;
    try {
      found = extract_prior(table);
    } catch (const ConvergenceError& e) {
      pass = false;
      detail += name + ": " + e.what() + "; ";
      continue;
    }
    const PriorResult& res = *found;
    const GridDistribution target = allocation_prior(cfg);
    const double l1 = l1_distance(res.prior, target);
    bool ok = l1 <= 0.1 && res.residual <= 1e-9;
    detail += fmt("%s: L1=%.4f residual=%.2e", name.c_str(), l1, res.residual);
    if (name == "flat") {
      const double maxrel =
          ((res.prior.density() - target.density()).cwiseAbs().array() / target.density().array()).maxCoeff();
      ok = ok && maxrel <= 0.05;
      detail += fmt(" maxrel=%.4f", maxrel);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && secs <= 120.0;
    detail += fmt(" (%.0fs); ", secs);
    pass = pass && ok;
  }
  return {pass, detail + "tol L1 0.1, flat maxrel 0.05, residual 1e-9"};
}

// Bound saturation for CSS, TFS and depolarized TFS at N = 10.
Verdict criterion4() {
  bool pass = true;
  std::string detail;
  const double theta = 0.3 * pi;
  const std::vector<int> ms = {100, 1000};
  for (const std::string kind : {"css", "tfs", "dtfs"}) {
    const RunConfig cfg = config("fig4_" + kind + "_m1000");
    const Trained tr = train_from(cfg);
    const NetworkEstimator est = network_estimator(cfg, tr);
    const auto cells = run_trials(tr.model, est, {theta, ms, 1000, cfg.evaluation->base_seed, 0}).cells;
    const double tol = 2 * cfg.grid.spacing();
    for (const auto& c : cells) {
      const double sql = 1.0 / (10.0 * c.m);
      const double tfs = 1.0 / (60.0 * c.m);
      bool ok = c.n_failed == 0 && std::abs(c.mean_bias) <= tol;
      double ratio = 0.0;
      if (kind == "css") {
        ratio = c.mean_variance / sql;
        ok = ok && std::abs(ratio - 1.0) <= 0.3;
      } else if (kind == "tfs") {
        ratio = c.mean_variance / tfs;
        ok = ok && std::abs(ratio - 1.0) <= 0.3;
      } else {
        ratio = c.mean_variance / tfs;
        ok = ok && c.mean_variance >= tfs && c.mean_variance <= sql;
      }
      detail += fmt("%s m=%d var/ref=%.3f bias=%.1e%s; ", kind.c_str(), c.m, ratio, c.mean_bias, ok ? "" : " [x]");
      pass = pass && ok;
    }
  }
  return {pass, detail + "(css ref SQL, tfs/dtfs ref TFS-CRB)"};
}

struct SweepResult {
  std::vector<CellSummary> rows;  // network, calibration, oracle per angle
  int wins = 0;
  int points = 0;
  double mean_network = 0.0, mean_calibration = 0.0;
};

SweepResult oat_sweep(const std::string& name) {
  const RunConfig cfg = config(name);
  const Trained tr = train_from(cfg);
  const auto& e = *cfg.evaluation;
  const NetworkEstimator net = network_estimator(cfg, tr);
  const CalibrationEstimator cal(calibrate(tr.data));
  const ExactOracleEstimator oracle(tr.model, GridDistribution::flat(cfg.grid));
  const std::vector<const Estimator*> backends = {&net, &cal, &oracle};
  const auto thetas = offset_sweep(cfg.grid, e.sweep->n, e.sweep->theta_min, e.sweep->theta_max);
  SweepResult out;
  out.rows = compare_backends(tr.model, backends, thetas, e.sweep->m, e.n_trials, e.base_seed, e.threads.value_or(0));
  for (std::size_t i = 0; i + 2 < out.rows.size(); i += 3) {
    const auto &n = out.rows[i], &c = out.rows[i + 1], &o = out.rows[i + 2];
    const double dn = std::abs(n.mean_mse - o.mean_mse);
    // A calibration cell with failed trials has no usable mean; count it as a loss for calibration.
    const double dc = c.n_trials == c.n_failed ? INFINITY : std::abs(c.mean_mse - o.mean_mse);
    const bool win = dn < dc;
    out.wins += win;
    ++out.points;
    out.mean_network += n.mean_mse;
    out.mean_calibration += c.mean_mse;
    std::printf("  theta=%.5f network=%.4e calibration=%.4e (failed %d) oracle=%.4e %s\n", n.theta_true, n.mean_mse,
                c.mean_mse, c.n_failed, o.mean_mse, win ? "network" : "calibration");
  }
  out.mean_network /= out.points;
  out.mean_calibration /= out.points;
  return out;
}

Verdict criterion5() {
  const SweepResult s = oat_sweep("fig5_oat");
  return {10 * s.wins >= 7 * s.points, fmt("network closer to oracle on %d/%d sweep points (need 70%%)", s.wins, s.points)};
}

Verdict criterion6() {
  const SweepResult clean = oat_sweep("fig5_oat");
  const SweepResult noisy = oat_sweep("fig5_oat_noise");
  const bool degraded = noisy.mean_network > clean.mean_network && noisy.mean_calibration > clean.mean_calibration;
  return {degraded && 10 * noisy.wins >= 7 * noisy.points,
          fmt("network closer on %d/%d points (need 70%%); mean MSE network %.3e -> %.3e, calibration %.3e -> %.3e",
              noisy.wins, noisy.points, clean.mean_network, noisy.mean_network, clean.mean_calibration,
              noisy.mean_calibration)};
}

// Fast invariants, checked against independent computations where possible.
Verdict criterion7() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  {
    NetworkConfig nc = NetworkConfig::for_outcomes({6, 5}, 7, OutcomeSet(10));
    DenseNetwork net = init(nc, 11);
    Rng rng(5);
    for (int i = 0; i < net.parameters().size(); ++i) net.parameters()(i) += 0.1 * (rng.uniform() - 0.5);
    std::vector<Sample> batch;
    for (int i = 0; i < 12; ++i) batch.push_back({static_cast<double>(rng.below(11)) - 5.0, static_cast<int>(rng.below(7))});
    const Eigen::VectorXd g = gradient(net, batch);
    Eigen::VectorXd fd(g.size());
    const double h = 1e-5;
    for (int i = 0; i < g.size(); ++i) {
      DenseNetwork up = net, down = net;
      up.parameters()(i) += h;
      down.parameters()(i) -= h;
      fd(i) = (loss(up, batch) - loss(down, batch)) / (2 * h);
    }
    const double rel = (fd - g).norm() / std::max(g.norm(), 1e-300);
    expect(rel <= 1e-4, fmt("gradient rel err %.2e", rel));
  }

  for (int n : {1, 2, 10, 50}) {
    for (double th : {0.1, 1.3, 2.9}) {
      const Eigen::MatrixXd r = wigner_rotation(n, th);
      const double dev = (r * r.transpose() - Eigen::MatrixXd::Identity(n + 1, n + 1)).cwiseAbs().maxCoeff();
      expect(dev <= 1e-10, fmt("orthogonality N=%d dev %.2e", n, dev));
    }
  }

  std::vector<ModelDescriptor> models;
  {
    ModelDescriptor q;
    models.push_back(q);
    for (StateKind k : {StateKind::CSS, StateKind::TFS, StateKind::DepolarizedTFS, StateKind::OAT}) {
      ModelDescriptor d;
      d.kind = k;
      d.n_qubits = k == StateKind::OAT ? 50 : 10;
      if (k == StateKind::DepolarizedTFS) d.epsilon = 0.1;
      if (k == StateKind::OAT) d.chi_t = 0.3 * pi;
      models.push_back(d);
    }
    ModelDescriptor noisy = models.back();
    noisy.noise_sigma_sq = 0.25;
    models.push_back(noisy);
  }
  for (const auto& d : models) {
    const LikelihoodModel m(d);
    double worst = 0.0;
    for (int j = 0; j <= 100; ++j) worst = std::max(worst, std::abs(m.probabilities(pi * j / 100).sum() - 1.0));
    expect(worst <= 1e-10, fmt("normalization %s dev %.2e", to_string(d.kind).c_str(), worst));
  }

  {
    ModelDescriptor css, tfs;
    css.kind = StateKind::CSS;
    css.n_qubits = 10;
    tfs.kind = StateKind::TFS;
    tfs.n_qubits = 10;
    const double fq = fisher_information(LikelihoodModel(ModelDescriptor{}), 1.1).value;
    const double fc = fisher_information(LikelihoodModel(css), 0.3 * pi).value;
    const double ft = fisher_information(LikelihoodModel(tfs), 0.3 * pi).value;
    expect(std::abs(fq - 1) <= 1e-6, fmt("qubit Fisher %.8f", fq));
    expect(std::abs(fc - 10) <= 1e-4, fmt("CSS10 Fisher %.8f", fc));
    expect(std::abs(ft - 60) <= 1e-3, fmt("TFS10 Fisher %.8f", ft));
  }

  {
    ModelDescriptor d;
    d.kind = StateKind::CSS;
    d.n_qubits = 6;
    const LikelihoodModel m(d);
    const ThetaGrid g(120, 0.0, pi);
    const GridDistribution flat = GridDistribution::flat(g);
    // A trained-looking but deliberately imperfect single-shot table.
    NetworkConfig nc = NetworkConfig::for_outcomes({8}, g.size(), m.outcomes());
    const DenseNetwork net = init(nc, 3);
    const SingleShotTable table = single_shot_posteriors(net, m.outcomes(), g);
    const auto seq = sample_sequence(m, 1.0, 20, 17);
    std::vector<int> shuffled(seq.rbegin(), seq.rend());
    std::rotate(shuffled.begin(), shuffled.begin() + 7, shuffled.end());

    const auto whole = compose_posterior(flat, table, seq);
    const auto perm = compose_posterior(flat, table, shuffled);
    const std::vector<int> head(seq.begin(), seq.begin() + 9), tail(seq.begin() + 9, seq.end());
    const auto first = compose_posterior(flat, table, head);
    const auto chained = network_composer(flat, table).update(first, tail);
    const double dperm = (whole.masses() - perm.masses()).cwiseAbs().maxCoeff();
    const double dseq = (whole.masses() - chained.masses()).cwiseAbs().maxCoeff();
    expect(dperm <= 1e-10, fmt("permutation invariance %.2e", dperm));
    expect(dseq <= 1e-10, fmt("sequential consistency %.2e", dseq));

    // Direct products in linear space, m = 20.
    Eigen::VectorXd lin_net = Eigen::VectorXd::Ones(g.size());
    Eigen::VectorXd lin_exact = Eigen::VectorXd::Ones(g.size());
    for (int k : seq) {
      for (int j = 0; j < g.size(); ++j) {
        lin_net(j) *= table.posterior(k, j) / flat[j];
        lin_exact(j) *= m.probabilities(g.point(j))(k);
      }
    }
    lin_net /= lin_net.sum();
    lin_exact /= lin_exact.sum();
    const double dnet = (whole.masses() - lin_net).cwiseAbs().maxCoeff();
    const double dexact = (exact_posterior(m, flat, seq).masses() - lin_exact).cwiseAbs().maxCoeff();
    expect(dnet <= 1e-10, fmt("log vs linear (network) %.2e", dnet));
    expect(dexact <= 1e-10, fmt("log vs linear (exact) %.2e", dexact));
  }

  {
    const ThetaGrid g(30, 0.0, pi);
    const LikelihoodModel m{ModelDescriptor{}};
    const auto alloc = allocate(g, UniformAllocation{}, 6000);
    const TrainingSet ts1 = generate_training_set(m, g, alloc, 21);
    const TrainingSet ts2 = generate_training_set(m, g, alloc, 21);
    expect(ts1.records() == ts2.records(), "training set determinism");
    const auto nc = NetworkConfig::for_outcomes({4}, g.size(), m.outcomes());
    TrainSpec spec;
    spec.epochs = 2;
    spec.batch_size = 32;
    spec.seed = 4;
    const TrainResult a = train(init(nc, 9), ts1, spec);
    const TrainResult b = train(init(nc, 9), ts2, spec);
    expect(a.network.parameters() == b.network.parameters() && a.epoch_loss == b.epoch_loss, "training determinism");
    const NetworkEstimator est(a.network, m.outcomes(), GridDistribution::flat(g));
    const TrialConfig tc{1.2, {5, 40}, 200, 77, 1};
    TrialConfig tc4 = tc;
    tc4.threads = 4;
    const auto r1 = run_trials(m, est, tc).cells;
    const auto r2 = run_trials(m, est, tc).cells;
    const auto r4 = run_trials(m, est, tc4).cells;
    expect(r1 == r2 && r1 == r4, "trial determinism");
  }

  std::string detail = failures.empty() ? "all invariants hold" : "";
  for (const auto& f : failures) detail += f + "; ";
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance runs"};
  std::vector<int> selected;
  app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 7));
  app.add_option("--configs", config_dir, "Directory holding the run configs");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7};

  const std::vector<std::function<Verdict()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                          criterion5, criterion6, criterion7};
  // Wall-clock budgets in seconds.
  const double budget[] = {60, 120, 360, 900, 3600, 3600, 60};
  bool all = true;
  for (int c : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[c - 1]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= budget[c - 1];
    const bool pass = v.pass && in_time;
    std::printf("criterion %d: %s  %s [%.1fs of %.0fs budget%s]\n", c, pass ? "PASS" : "FAIL", v.detail.c_str(),
                secs, budget[c - 1], in_time ? "" : ", over budget");
    std::fflush(stdout);
    all = all && pass;
  }
  return all ? 0 : 1;
}
