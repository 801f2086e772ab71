#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "nnbpe/bayes.hpp"
#include "nnbpe/errors.hpp"
#include "nnbpe/random.hpp"

using namespace nnbpe;
using std::numbers::pi;

namespace {

const LikelihoodModel& qubit() {
  static const LikelihoodModel m{ModelDescriptor{}};
  return m;
}

LikelihoodModel model(StateKind kind, int n) {
  ModelDescriptor d;
  d.kind = kind;
  d.n_qubits = n;
  return LikelihoodModel(d);
}

double max_abs_diff(const GridDistribution& a, const GridDistribution& b) {
  return (a.density() - b.density()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("bayes_engine") {

TEST_CASE("grid distributions normalize") {
  const ThetaGrid g(11, 0.0, 1.0);
  const GridDistribution p(g, Eigen::VectorXd::Constant(11, 5.0));
  CHECK(p.masses().sum() == doctest::Approx(1.0));
  CHECK(p[3] == doctest::Approx(1.0 / (11 * 0.1)));
  CHECK_THROWS_AS(GridDistribution(g, Eigen::VectorXd::Zero(11)), InvalidArgument);
  Eigen::VectorXd neg = Eigen::VectorXd::Ones(11);
  neg(2) = -1.0;
  CHECK_THROWS_AS(GridDistribution(g, neg), InvalidArgument);
  CHECK(l1_distance(p, GridDistribution::flat(g)) == doctest::Approx(0.0));
}

TEST_CASE("an untrained uniform network gives flat single-shot rows") {
  DenseNetwork net(NetworkConfig{{3}, 25, 1.0, 0.0});
  const ThetaGrid g(25, 0.0, pi);
  const auto table = single_shot_posteriors(net, OutcomeSet(1), g);
  for (int k = 0; k < 2; ++k) {
    CHECK(table.row(k).density().isApprox(GridDistribution::flat(g).density(), 1e-12));
    CHECK(std::abs(table.posterior.row(k).sum() * g.spacing() - 1.0) <= 1e-9);
  }
}

TEST_CASE("likelihood choices") {
  const ThetaGrid g(6, 0.0, pi);
  SingleShotTable table = exact_single_shot_table(qubit(), GridDistribution::flat(g));
  choose_likelihood(table, qubit());
  for (int j = 0; j < 6; ++j) CHECK(table.likelihood(1, j) == doctest::Approx(std::pow(std::cos(g.point(j) / 2), 2)));

  FrequencyTable f;
  f.freq = Eigen::MatrixXd::Zero(2, 6);
  f.freq.col(2) << 0.25, 0.75;
  f.empty = {true, true, false, true, true, true};
  f.column_counts = {0, 0, 4, 0, 0, 0};
  choose_likelihood(table, f);
  CHECK(table.likelihood(0, 0) == doctest::Approx(0.5));
  CHECK(table.likelihood(1, 2) == doctest::Approx(0.75));
  CHECK_FALSE(table.warnings.empty());
  f.empty.assign(6, true);
  CHECK_THROWS_AS(choose_likelihood(table, f), InvalidArgument);
}

TEST_CASE("prior extraction recovers the prior behind exact posteriors") {
  const ThetaGrid g(60, 0.0, pi);
  const LikelihoodModel css = model(StateKind::CSS, 6);

  SUBCASE("flat") {
    SingleShotTable table = exact_single_shot_table(css, GridDistribution::flat(g));
    choose_likelihood(table, css);
    const PriorResult r = extract_prior(table);
    CHECK(max_abs_diff(r.prior, GridDistribution::flat(g)) * pi <= 1e-6);
    CHECK(r.residual <= 1e-9);
  }
  SUBCASE("step keeps zeros on the unsampled half") {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(60);
    w.tail(30).setOnes();
    const GridDistribution step(g, w);
    SingleShotTable table = exact_single_shot_table(css, step);
    choose_likelihood(table, css);
    const PriorResult r = extract_prior(table);
    CHECK(l1_distance(r.prior, step) <= 1e-6);
    CHECK(r.prior.density().head(30).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(r.residual <= 1e-9);
  }
  SUBCASE("smooth") {
    Eigen::VectorXd w(60);
    for (int j = 0; j < 60; ++j) w(j) = 0.2 + std::exp(-std::pow(g.point(j) - 1.2, 2) / 0.3);
    const GridDistribution q(g, w);
    SingleShotTable table = exact_single_shot_table(css, q);
    choose_likelihood(table, css);
    const PriorResult r = extract_prior(table);
    CHECK(l1_distance(r.prior, q) <= 1e-6);
    CHECK(prior_residual(table, r.prior) == doctest::Approx(r.residual));
  }
}

TEST_CASE("prior extraction reports non-convergence") {
  const ThetaGrid g(40, 0.0, pi);
  Eigen::VectorXd w(40);
  for (int j = 0; j < 40; ++j) w(j) = 1.0 + j;
  const LikelihoodModel css = model(StateKind::CSS, 10);
  SingleShotTable table = exact_single_shot_table(css, GridDistribution(g, w));
  choose_likelihood(table, css);

  PriorOptions strict;
  strict.max_iterations = 1;
  strict.allow_fallback = false;
  try {
    (void)extract_prior(table, strict);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > 1e-9);
  }

  PriorOptions rescue = strict;
  rescue.allow_fallback = true;
  const PriorResult r = extract_prior(table, rescue);
  CHECK(r.used_fallback);
  CHECK(r.residual <= 1e-9);
  CHECK(l1_distance(r.prior, GridDistribution(g, w)) <= 1e-6);
}

TEST_CASE("qubit posterior for counts {3, 7} matches the closed form") {
  const ThetaGrid g(100, 0.0, pi);
  const GridDistribution flat = GridDistribution::flat(g);
  const SingleShotTable table = exact_single_shot_table(qubit(), flat);
  std::vector<int> seq = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const GridDistribution post = compose_posterior(flat, table, seq);

  Eigen::VectorXd ref(100);
  for (int j = 0; j < 100; ++j) ref(j) = std::pow(std::cos(g.point(j) / 2), 6) * std::pow(std::sin(g.point(j) / 2), 14);
  const GridDistribution expected(g, ref);
  CHECK(max_abs_diff(post, expected) <= 1e-10);
  CHECK(max_abs_diff(exact_posterior(qubit(), flat, seq), expected) <= 1e-10);

  const double theta_star = 2 * std::acos(std::sqrt(0.3));
  CHECK(std::abs(map_estimate(post).theta - theta_star) <= g.spacing());
}

TEST_CASE("composition properties") {
  const LikelihoodModel tfs = model(StateKind::TFS, 10);
  const ThetaGrid g(300, 0.0, pi / 2);
  Eigen::VectorXd w(300);
  for (int j = 0; j < 300; ++j) w(j) = 1.0 + 0.5 * std::sin(3 * g.point(j));
  const GridDistribution prior(g, w);
  const SingleShotTable table = exact_single_shot_table(tfs, prior);
  const auto seq = sample_sequence(tfs, 0.4, 20, 17);

  SUBCASE("empty sequence returns the prior") {
    CHECK(max_abs_diff(compose_posterior(prior, table, {}), prior) <= 1e-12);
  }
  SUBCASE("permutation invariance") {
    auto shuffled = seq;
    Rng rng(4);
    rng.shuffle(shuffled);
    const auto a = compose_posterior(prior, table, seq);
    const auto b = compose_posterior(prior, table, shuffled);
    CHECK(max_abs_diff(a, b) <= 1e-10 * a.density().maxCoeff());
  }
  SUBCASE("sequential consistency") {
    const LogPosterior composer = network_composer(prior, table);
    const auto full = composer.from_sequence(seq);
    const auto half = composer.from_sequence(std::span(seq).first(10));
    const auto rest = composer.update(half, std::span(seq).subspan(10));
    CHECK(max_abs_diff(full, rest) <= 1e-10 * full.density().maxCoeff());
    const auto counts = outcome_counts(seq, 11);
    CHECK(max_abs_diff(full, composer.from_counts(counts)) <= 1e-10 * full.density().maxCoeff());
  }
  SUBCASE("log space equals linear space at m = 20") {
    Eigen::VectorXd lin = prior.density();
    for (int mu : seq) lin = lin.cwiseProduct(table.posterior.row(mu).transpose()).cwiseQuotient(prior.density());
    const GridDistribution expected(g, lin);
    const auto post = compose_posterior(prior, table, seq);
    CHECK(max_abs_diff(post, expected) <= 1e-10 * expected.density().maxCoeff());
  }
  SUBCASE("network composition with exact rows equals exact Bayes") {
    const auto a = compose_posterior(prior, table, seq);
    const auto b = exact_posterior(tfs, prior, seq);
    CHECK(max_abs_diff(a, b) <= 1e-9 * b.density().maxCoeff());
  }
}

TEST_CASE("long sequences do not underflow") {
  const ThetaGrid g(500, 0.0, pi);
  const auto flat = GridDistribution::flat(g);
  const auto seq = sample_sequence(qubit(), 1.3, 10000, 3);
  const auto post = compose_posterior(flat, exact_single_shot_table(qubit(), flat), seq);
  CHECK(post.density().allFinite());
  CHECK(std::abs(map_estimate(post).theta - 1.3) < 0.05);
}

TEST_CASE("zero-prior points stay zero and degenerate posteriors are rejected") {
  const ThetaGrid g(10, 0.0, pi);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(10);
  w(9) = 1.0;
  const GridDistribution point(g, w);
  const SingleShotTable table = exact_single_shot_table(qubit(), point);
  const std::vector<int> seq = {0, 0};
  const auto post = compose_posterior(point, table, seq);
  CHECK(post.density().head(9).isZero());
  // a single-shot row with no mass where the prior lives leaves no support
  SingleShotTable disjoint = table;
  disjoint.posterior.row(1).setZero();
  disjoint.posterior(1, 0) = 1.0 / g.spacing();
  const std::vector<int> up = {1};
  CHECK_THROWS_AS(compose_posterior(point, disjoint, up), DegeneratePosterior);
}

TEST_CASE("estimators") {
  const ThetaGrid g(2001, 0.0, pi);
  const auto ref = asymptotic_reference(g, 1.5, 100, 1.0);
  CHECK_FALSE(ref.grid_too_coarse);
  CHECK(posterior_variance(ref.distribution, 1.5) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(map_estimate(ref.distribution).theta == doctest::Approx(1.5).epsilon(1e-3));
  const double mean = ref.distribution.mean();
  CHECK(posterior_mse(ref.distribution, 1.2) ==
        doctest::Approx(posterior_variance(ref.distribution, mean) + (mean - 1.2) * (mean - 1.2)));
  CHECK(asymptotic_reference(ThetaGrid(10, 0.0, pi), 1.0, 1e4, 1.0).grid_too_coarse);

  Eigen::VectorXd tie = Eigen::VectorXd::Ones(5);
  CHECK(map_estimate(GridDistribution(ThetaGrid(5, 0.0, 1.0), tie)).index == 0);
}

TEST_CASE("distribution text round trip") {
  const ThetaGrid g(7, 0.0, 1.5);
  Eigen::VectorXd w(7);
  w << 1, 2, 3, 4, 3, 2, 1;
  const GridDistribution p(g, w);
  std::stringstream ss;
  const std::vector<std::string> meta = {"residual: 0"};
  write_distribution(ss, p, meta);
  CHECK(ss.str().rfind("# residual: 0\ntheta\tdensity\n", 0) == 0);
  const GridDistribution back = read_distribution(ss);
  CHECK(back.grid() == g);
  CHECK(max_abs_diff(back, p) <= 1e-15);
}

}
