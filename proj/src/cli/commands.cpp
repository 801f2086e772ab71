#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nnbpe/bayes.hpp"
#include "nnbpe/calibration.hpp"
#include "nnbpe/cli.hpp"
#include "nnbpe/config.hpp"
#include "nnbpe/errors.hpp"
#include "nnbpe/evaluation.hpp"

namespace nnbpe {

namespace fs = std::filesystem;

namespace {

// Raised for anything wrong with the config file or command-line values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool overwrite = false;
};

struct Context {
  RunConfig cfg;
  std::string hash;
  fs::path dir;
  bool overwrite = false;
  std::ostream* out = nullptr;
  std::ostream* log = nullptr;

  fs::path file(const std::string& suffix) const { return dir / (cfg.output.prefix + suffix); }
};

Context make_context(const Common& common, std::ostream& out, std::ostream& log) {
  Context ctx;
  try {
    ctx.cfg = load_config(common.config_path);
    if (common.seed) ctx.cfg.training.seed = *common.seed;
    if (!common.out_dir.empty()) ctx.cfg.output.directory = common.out_dir;
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  ctx.hash = config_hash(ctx.cfg);
  ctx.dir = ctx.cfg.output.directory;
  ctx.overwrite = common.overwrite;
  ctx.out = &out;
  ctx.log = &log;
  return ctx;
}

std::vector<std::string> metadata(const Context& ctx, const std::string& command) {
  const auto& t = ctx.cfg.training;
  std::vector<std::string> lines = {
      std::string("tool: nnbpe ") + kToolVersion,
      "command: " + command,
      "config_hash: " + ctx.hash,
      "training_seed: " + std::to_string(t.seed),
      "data_seed: " + std::to_string(t.data_seed()),
      "init_seed: " + std::to_string(t.init_seed()),
      "batch_seed: " + std::to_string(t.batch_seed()),
  };
  if (ctx.cfg.evaluation) lines.push_back("base_seed: " + std::to_string(ctx.cfg.evaluation->base_seed));
  return lines;
}

nlohmann::json metadata_json(const Context& ctx, const std::string& command) {
  const auto& t = ctx.cfg.training;
  nlohmann::json j;
  j["tool"] = std::string("nnbpe ") + kToolVersion;
  j["command"] = command;
  j["config_hash"] = ctx.hash;
  j["training_seed"] = t.seed;
  j["data_seed"] = t.data_seed();
  j["init_seed"] = t.init_seed();
  j["batch_seed"] = t.batch_seed();
  if (ctx.cfg.evaluation) j["base_seed"] = ctx.cfg.evaluation->base_seed;
  return j;
}

std::ofstream open_output(const Context& ctx, const fs::path& path, bool binary = false) {
  std::error_code ec;
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path(), ec);
  if (ec) throw DataError("cannot create directory for " + path.string() + ": " + ec.message());
  if (fs::exists(path) && !ctx.overwrite) {
    throw DataError(path.string() + " already exists (pass --overwrite to replace it)");
  }
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_input(const fs::path& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw DataError("cannot open " + path.string());
  return is;
}

TrainingSet load_dataset(const Context& ctx, const std::string& path) {
  const fs::path p = path.empty() ? ctx.file("_train.tsv") : fs::path(path);
  auto is = open_input(p);
  TrainingSet ts = read_training_set(is);
  if (!(ts.grid() == ctx.cfg.grid)) throw DataError("dataset " + p.string() + ": grid does not match the config grid");
  if (ts.outcomes().n_qubits() != ctx.cfg.model.n_qubits) {
    throw DataError("dataset " + p.string() + ": outcome set does not match the config model");
  }
  return ts;
}

DenseNetwork load_network(const Context& ctx, const std::string& path) {
  const fs::path p = path.empty() ? ctx.file("_net.ckpt") : fs::path(path);
  auto is = open_input(p, true);
  DenseNetwork net = load_checkpoint(is);
  if (net.output_dim() != ctx.cfg.grid.size()) {
    throw DataError("checkpoint " + p.string() + ": output width does not match the config grid");
  }
  return net;
}

GridDistribution allocation_prior(const RunConfig& cfg) {
  const auto alloc = allocate(cfg.grid, cfg.training.allocation, cfg.training.m_train);
  return GridDistribution(cfg.grid, Eigen::Map<const Eigen::VectorXd>(alloc.weights.data(), cfg.grid.size()));
}

PriorResult prior_from_network(const Context& ctx, const DenseNetwork& net, LikelihoodSource source,
                               const std::string& dataset_path) {
  const LikelihoodModel model(ctx.cfg.model);
  SingleShotTable table = single_shot_posteriors(net, model.outcomes(), ctx.cfg.grid);
  if (source == LikelihoodSource::ExactModel) {
    choose_likelihood(table, model);
  } else {
    choose_likelihood(table, empirical_frequencies(load_dataset(ctx, dataset_path)));
  }
  for (const auto& w : table.warnings) *ctx.log << "warning: " << w << "\n";
  return extract_prior(table);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const Context& ctx) {
  const LikelihoodModel model(ctx.cfg.model);
  const auto alloc = allocate(ctx.cfg.grid, ctx.cfg.training.allocation, ctx.cfg.training.m_train);
  const TrainingSet ts = generate_training_set(model, ctx.cfg.grid, alloc, ctx.cfg.training.data_seed());

  const fs::path path = ctx.file("_train.tsv");
  auto os = open_output(ctx, path);
  write_training_set(os, ts, metadata(ctx, "gen-data"));

  nlohmann::json side = metadata_json(ctx, "gen-data");
  side["model"] = ctx.cfg.model;
  side["grid"] = {{"d", ctx.cfg.grid.size()}, {"theta_min", ctx.cfg.grid.min()}, {"theta_max", ctx.cfg.grid.max()}};
  side["records"] = ts.size();
  side["counts_per_grid_point"] = alloc.counts;
  std::vector<std::int64_t> per_outcome(static_cast<std::size_t>(ts.outcomes().size()), 0);
  for (const auto& r : ts.records()) ++per_outcome[static_cast<std::size_t>(r.outcome)];
  side["counts_per_outcome"] = per_outcome;
  auto meta = open_output(ctx, ctx.file("_train.meta.json"));
  meta << side.dump(2) << "\n";
  *ctx.out << "wrote " << ts.size() << " records to " << path.string() << "\n";
}

void cmd_train(const Context& ctx, const std::string& dataset_path) {
  const TrainingSet ts = load_dataset(ctx, dataset_path);
  const auto& t = ctx.cfg.training;
  const auto net_cfg = NetworkConfig::for_outcomes(t.hidden_layers, ctx.cfg.grid.size(), ts.outcomes());
  const fs::path ckpt = ctx.file("_net.ckpt");
  if (fs::exists(ckpt) && !ctx.overwrite) throw DataError(ckpt.string() + " already exists (pass --overwrite to replace it)");

  TrainResult result = train(init(net_cfg, t.init_seed()), ts, t.train_spec());
  {
    auto os = open_output(ctx, ckpt, true);
    save_checkpoint(os, result.network, metadata_json(ctx, "train"));
    if (!os) throw DataError("failed to write " + ckpt.string());
  }
  auto loss = open_output(ctx, ctx.file("_loss.csv"));
  for (const auto& line : metadata(ctx, "train")) loss << "# " << line << "\n";
  loss << "epoch,loss\n";
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) loss << e + 1 << "," << fmt(result.epoch_loss[e]) << "\n";
  *ctx.out << "trained " << result.epoch_loss.size() << " epochs, final loss " << fmt(result.epoch_loss.back())
           << "; checkpoint " << ckpt.string() << "\n";
}

void cmd_prior(const Context& ctx, const std::string& checkpoint, const std::string& dataset,
               const std::string& source_flag) {
  LikelihoodSource source = LikelihoodSource::ExactModel;
  try {
    source = !source_flag.empty() ? likelihood_source_from_string(source_flag)
             : ctx.cfg.evaluation ? ctx.cfg.evaluation->source()
                                  : LikelihoodSource::ExactModel;
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("--likelihood-source: ") + e.what());
  }
  const DenseNetwork net = load_network(ctx, checkpoint);
  const PriorResult result = prior_from_network(ctx, net, source, dataset);
  auto lines = metadata(ctx, "prior");
  lines.push_back("likelihood_source: " + to_string(source));
  lines.push_back("residual_l1: " + fmt(result.residual));
  lines.push_back("iterations: " + std::to_string(result.iterations));
  lines.push_back(std::string("fallback_solver: ") + (result.used_fallback ? "yes" : "no"));
  const fs::path path = ctx.file("_prior.tsv");
  auto os = open_output(ctx, path);
  write_distribution(os, result.prior, lines);
  *ctx.out << "prior written to " << path.string() << " (residual " << fmt(result.residual) << ", "
           << result.iterations << " iterations)\n";
}

std::vector<int> read_sequence(const fs::path& path, const OutcomeSet& outcomes) {
  auto is = open_input(path);
  std::vector<int> seq;
  std::string line;
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError("sequence file: '" + tok + "' is not a number");
      }
      const auto k = outcomes.index_of(v);
      if (!k) throw DataError("sequence file: outcome " + tok + " is outside the model's outcome set");
      seq.push_back(*k);
    }
  }
  return seq;
}

struct EstimateArgs {
  std::string backend = "network";
  std::string checkpoint, dataset, prior_file, sequence_file, posterior_out;
  std::optional<double> theta_true;
  std::optional<int> m;
};

void cmd_estimate(const Context& ctx, const EstimateArgs& a, std::optional<std::uint64_t> seq_seed) {
  const LikelihoodModel model(ctx.cfg.model);
  const ThetaGrid& grid = ctx.cfg.grid;

  std::vector<int> seq;
  std::optional<double> theta_true = a.theta_true;
  if (!a.sequence_file.empty()) {
    seq = read_sequence(a.sequence_file, model.outcomes());
  } else if (a.theta_true && a.m) {
    if (*a.m < 0) throw ConfigError("--m: must be >= 0");
    if (!grid.contains(*a.theta_true)) throw ConfigError("--theta-true: outside the grid domain");
    seq = sample_sequence(model, *a.theta_true, *a.m, seq_seed.value_or(0));
  } else {
    throw ConfigError("estimate: pass --sequence FILE or both --theta-true and --m");
  }

  GridDistribution post = GridDistribution::flat(grid);
  bool floored = false;
  if (a.backend == "network" || a.backend == "oracle") {
    GridDistribution prior = GridDistribution::flat(grid);
    if (!a.prior_file.empty()) {
      auto is = open_input(a.prior_file);
      prior = read_distribution(is);
      if (!(prior.grid() == grid)) throw DataError("prior file: grid does not match the config grid");
    }
    if (a.backend == "network") {
      const DenseNetwork net = load_network(ctx, a.checkpoint);
      if (a.prior_file.empty()) {
        const auto* e = ctx.cfg.evaluation ? &*ctx.cfg.evaluation : nullptr;
        prior = !e || e->extracted_prior()
                    ? prior_from_network(ctx, net, e ? e->source() : LikelihoodSource::ExactModel, a.dataset).prior
                    : allocation_prior(ctx.cfg);
      }
      post = compose_posterior(prior, single_shot_posteriors(net, model.outcomes(), grid), seq);
    } else {
      post = exact_posterior(model, prior, seq);
    }
  } else if (a.backend == "calibration") {
    const CalibratedLikelihood cal = calibrate(load_dataset(ctx, a.dataset));
    auto res = calibration_posterior(cal, seq);
    post = std::move(res.posterior);
    floored = res.floored;
  } else {
    throw ConfigError("--backend: expected network, calibration or oracle");
  }

  const MapEstimate est = map_estimate(post);
  const double variance = posterior_variance(post, est.theta);
  nlohmann::json report = metadata_json(ctx, "estimate");
  report["backend"] = a.backend;
  report["m"] = seq.size();
  report["theta_hat"] = est.theta;
  report["posterior_variance"] = variance;
  if (theta_true) {
    report["theta_true"] = *theta_true;
    report["posterior_mse"] = posterior_mse(post, *theta_true);
  } else {
    report["posterior_mse"] = nullptr;
  }
  if (a.backend == "calibration") report["likelihood_floor_used"] = floored;

  *ctx.out << "theta_hat " << fmt(est.theta) << "\nposterior_variance " << fmt(variance) << "\n";
  if (theta_true) *ctx.out << "posterior_mse " << fmt(posterior_mse(post, *theta_true)) << "\n";
  auto os = open_output(ctx, ctx.file("_estimate.json"));
  os << report.dump(2) << "\n";
  if (!a.posterior_out.empty()) {
    auto lines = metadata(ctx, "estimate");
    lines.push_back("backend: " + a.backend);
    auto ps = open_output(ctx, a.posterior_out);
    write_distribution(ps, post, lines);
  }
}

struct Backends {
  std::vector<std::unique_ptr<Estimator>> owned;
  std::vector<const Estimator*> list;
};

Backends build_backends(const Context& ctx, const LikelihoodModel& model, std::vector<std::string> names,
                        const std::string& checkpoint, const std::string& dataset) {
  const auto& e = *ctx.cfg.evaluation;
  Backends b;
  for (const auto& name : names) {
    if (name == "network") {
      const DenseNetwork net = load_network(ctx, checkpoint);
      GridDistribution prior = e.extracted_prior() ? prior_from_network(ctx, net, e.source(), dataset).prior
                                                   : allocation_prior(ctx.cfg);
      b.owned.push_back(std::make_unique<NetworkEstimator>(net, model.outcomes(), prior));
    } else if (name == "calibration") {
      b.owned.push_back(std::make_unique<CalibrationEstimator>(calibrate(load_dataset(ctx, dataset))));
    } else {
      b.owned.push_back(std::make_unique<ExactOracleEstimator>(model, GridDistribution::flat(ctx.cfg.grid)));
    }
    b.list.push_back(b.owned.back().get());
  }
  return b;
}

const EvaluationConfig& require_evaluation(const Context& ctx) {
  if (!ctx.cfg.evaluation) throw ConfigError("evaluation: section required for this command");
  return *ctx.cfg.evaluation;
}

void report_failures(const Context& ctx, const std::vector<CellSummary>& rows) {
  for (const auto& r : rows) {
    if (r.n_failed > 0) {
      *ctx.log << "note: " << r.backend << " theta_true=" << fmt(r.theta_true) << " m=" << r.m << ": " << r.n_failed
               << "/" << r.n_trials << " trials failed (" << r.first_failure << ")\n";
    }
  }
}

void cmd_evaluate(const Context& ctx, const std::string& checkpoint, const std::string& dataset) {
  const auto& e = require_evaluation(ctx);
  const LikelihoodModel model(ctx.cfg.model);
  const Backends b = build_backends(ctx, model, e.backend_list(), checkpoint, dataset);
  std::vector<CellSummary> rows;
  for (const Estimator* est : b.list) {
    for (double theta : e.theta_true) {
      *ctx.log << "evaluate: " << est->name() << " theta_true=" << fmt(theta) << "\n";
      const TrialConfig tc{theta, e.m, e.n_trials, e.base_seed, e.threads.value_or(0)};
      auto s = run_trials(model, *est, tc);
      rows.insert(rows.end(), s.cells.begin(), s.cells.end());
    }
  }
  report_failures(ctx, rows);
  const fs::path path = ctx.file("_evaluation.csv");
  auto os = open_output(ctx, path);
  write_csv(os, rows, metadata(ctx, "evaluate"));
  *ctx.out << "wrote " << rows.size() << " rows to " << path.string() << "\n";
}

void cmd_compare(const Context& ctx, const std::string& checkpoint, const std::string& dataset) {
  const auto& e = require_evaluation(ctx);
  const LikelihoodModel model(ctx.cfg.model);
  auto names = e.backend_list();
  if (std::find(names.begin(), names.end(), "oracle") == names.end()) names.push_back("oracle");
  const Backends b = build_backends(ctx, model, names, checkpoint, dataset);
  const int threads = e.threads.value_or(0);

  auto rows = compare_backends(model, b.list, e.theta_true, e.m, e.n_trials, e.base_seed, threads);
  report_failures(ctx, rows);
  const fs::path path = ctx.file("_compare.csv");
  {
    auto os = open_output(ctx, path);
    write_csv(os, rows, metadata(ctx, "compare"));
  }
  *ctx.out << "wrote " << rows.size() << " rows to " << path.string() << "\n";

  if (e.sweep) {
    const auto thetas = offset_sweep(ctx.cfg.grid, e.sweep->n, e.sweep->theta_min, e.sweep->theta_max);
    auto sweep = compare_backends(model, b.list, thetas, e.sweep->m, e.n_trials, e.base_seed, threads);
    report_failures(ctx, sweep);
    auto lines = metadata(ctx, "compare");
    lines.push_back("sweep: theta_true offset by dtheta/3 from the training grid");
    const fs::path spath = ctx.file("_sweep.csv");
    auto os = open_output(ctx, spath);
    write_csv(os, sweep, lines);
    *ctx.out << "wrote " << sweep.size() << " rows to " << spath.string() << "\n";
  }
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Run configuration (JSON)")->required();
  sub->add_option("--out", c.out_dir, "Output directory (overrides output.directory)");
  sub->add_option("--seed", c.seed, "Seed (overrides training.seed; sequence seed for estimate)");
  sub->add_flag("--overwrite", c.overwrite, "Replace existing output files");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian parameter estimation with a neural-network classifier"};
  app.set_version_flag("--version", std::string("nnbpe ") + kToolVersion);
  app.require_subcommand(1);

  Common common;
  std::string dataset, checkpoint, source_flag;
  EstimateArgs est;

  auto* gen = app.add_subcommand("gen-data", "Sample a training set");
  add_common(gen, common);

  auto* tr = app.add_subcommand("train", "Train the network on a training set");
  add_common(tr, common);
  tr->add_option("--dataset", dataset, "Training set (default <out>/<prefix>_train.tsv)");

  auto* pr = app.add_subcommand("prior", "Extract the prior learned by a trained network");
  add_common(pr, common);
  pr->add_option("--checkpoint", checkpoint, "Network checkpoint (default <out>/<prefix>_net.ckpt)");
  pr->add_option("--dataset", dataset, "Training set, used for empirical likelihoods");
  pr->add_option("--likelihood-source", source_flag, "exact or empirical");

  auto* es = app.add_subcommand("estimate", "Estimate theta from one measurement sequence");
  add_common(es, common);
  es->add_option("--backend", est.backend, "network, calibration or oracle")->capture_default_str();
  es->add_option("--checkpoint", est.checkpoint, "Network checkpoint");
  es->add_option("--dataset", est.dataset, "Training set for the calibration backend");
  es->add_option("--prior", est.prior_file, "Prior distribution file");
  es->add_option("--sequence", est.sequence_file, "File of measured mu values");
  es->add_option("--theta-true", est.theta_true, "Simulate a sequence at this angle");
  es->add_option("--m", est.m, "Length of the simulated sequence");
  es->add_option("--posterior-out", est.posterior_out, "Also write the posterior curve here");

  auto* ev = app.add_subcommand("evaluate", "Run seeded trials for each configured backend");
  add_common(ev, common);
  ev->add_option("--checkpoint", checkpoint, "Network checkpoint");
  ev->add_option("--dataset", dataset, "Training set for the calibration backend");

  auto* cm = app.add_subcommand("compare", "Run aligned trials for several backends");
  add_common(cm, common);
  cm->add_option("--checkpoint", checkpoint, "Network checkpoint");
  cm->add_option("--dataset", dataset, "Training set for the calibration backend");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const Context ctx = make_context(common, out, err);
    if (gen->parsed()) cmd_gen_data(ctx);
    if (tr->parsed()) cmd_train(ctx, dataset);
    if (pr->parsed()) cmd_prior(ctx, checkpoint, dataset, source_flag);
    if (es->parsed()) cmd_estimate(ctx, est, common.seed);
    if (ev->parsed()) cmd_evaluate(ctx, checkpoint, dataset);
    if (cm->parsed()) cmd_compare(ctx, checkpoint, dataset);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConvergenceError& e) {
    err << "non-convergence: " << e.what() << " (residual " << fmt(e.residual()) << ")\n";
    return kExitNonConvergence;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const UnobservedOutcome& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace nnbpe
