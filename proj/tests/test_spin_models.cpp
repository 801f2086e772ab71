#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "nnbpe/errors.hpp"
#include "nnbpe/spin_models.hpp"
#include "oracles.hpp"

using namespace nnbpe;
using std::numbers::pi;

namespace {

ModelDescriptor descriptor(StateKind kind, int n) {
  ModelDescriptor d;
  d.kind = kind;
  d.n_qubits = n;
  if (kind == StateKind::DepolarizedTFS) d.epsilon = 0.1;
  if (kind == StateKind::OAT) d.chi_t = 0.3 * pi;
  return d;
}

// J_x built from ladder-operator matrix elements, independently of the library.
Eigen::MatrixXd jx_reference(int n) {
  const double j = n / 2.0;
  Eigen::MatrixXd jx = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int k = 0; k < n; ++k) {
    const double m = -j + k;
    const double v = 0.5 * std::sqrt(j * (j + 1) - m * (m + 1));
    jx(k + 1, k) = v;
    jx(k, k + 1) = v;
  }
  return jx;
}

}  // namespace

TEST_SUITE("spin_models") {

TEST_CASE("outcome set indexing") {
  const OutcomeSet o(4);
  CHECK(o.size() == 5);
  CHECK(o.value(0) == -2.0);
  CHECK(o.value(4) == 2.0);
  CHECK(o.index_of(0.0) == 2);
  CHECK_FALSE(o.index_of(0.5).has_value());
  const OutcomeSet odd(3);
  CHECK(odd.index_of(-1.5) == 0);
  CHECK(odd.index_of(1.5) == 3);
}

TEST_CASE("rotation matches the Wigner small-d closed form") {
  for (int n : {1, 2, 5, 10}) {
    for (double theta : {0.0, 0.3, 1.1 * pi / 2, 2.9}) {
      const Eigen::MatrixXd r = wigner_rotation(n, theta);
      for (int row = 0; row <= n; ++row) {
        for (int col = 0; col <= n; ++col) {
          CHECK(r(row, col) == doctest::Approx(oracle::wigner_d(n, 2 * row - n, 2 * col - n, theta)).epsilon(1e-11));
        }
      }
    }
  }
}

TEST_CASE("single-qubit rotation in the ascending basis") {
  const double t = 0.77, c = std::cos(t / 2), s = std::sin(t / 2);
  const Eigen::MatrixXd r = wigner_rotation(1, t);
  CHECK(r(0, 0) == doctest::Approx(c));
  CHECK(r(0, 1) == doctest::Approx(s));
  CHECK(r(1, 0) == doctest::Approx(-s));
  CHECK(r(1, 1) == doctest::Approx(c));
}

TEST_CASE("rotations are orthogonal") {
  for (int n : {1, 10, 50}) {
    const SpinRotation rot(n);
    for (double theta : {0.1, 1.3, 3.0}) {
      const Eigen::MatrixXd r = rot.matrix(theta);
      const double err = (r.transpose() * r - Eigen::MatrixXd::Identity(n + 1, n + 1)).cwiseAbs().maxCoeff();
      CHECK(err <= 1e-10);
    }
  }
}

TEST_CASE("qubit likelihood is cos^2(theta/2)") {
  const LikelihoodModel m(descriptor(StateKind::Qubit, 1));
  for (double theta : {0.0, 0.4, pi / 2, 2.5, pi}) {
    const Eigen::VectorXd p = m.probabilities(theta);
    CHECK(p(1) == doctest::Approx(std::pow(std::cos(theta / 2), 2)).epsilon(1e-12));
    CHECK(p(0) == doctest::Approx(std::pow(std::sin(theta / 2), 2)).epsilon(1e-12));
    CHECK(qubit_likelihood(theta).first == doctest::Approx(p(1)));
  }
}

TEST_CASE("coherent spin state is binomial") {
  const LikelihoodModel m(descriptor(StateKind::CSS, 10));
  for (double theta : {0.2, 0.3 * pi, 2.0}) {
    const auto ref = oracle::css_probabilities(10, theta);
    const Eigen::VectorXd p = m.probabilities(theta);
    for (int k = 0; k <= 10; ++k) CHECK(p(k) == doctest::Approx(ref[static_cast<std::size_t>(k)]).epsilon(1e-11));
  }
}

TEST_CASE("likelihoods are normalized") {
  for (auto [kind, n] : {std::pair{StateKind::Qubit, 1}, {StateKind::CSS, 10}, {StateKind::TFS, 10},
                         {StateKind::DepolarizedTFS, 10}, {StateKind::OAT, 50}}) {
    const LikelihoodModel m(descriptor(kind, n));
    for (double theta : {0.0, 0.7, 1.9, pi}) {
      const Eigen::VectorXd p = m.probabilities(theta);
      CHECK(std::abs(p.sum() - 1.0) <= 1e-10);
      CHECK(p.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("depolarized twin-Fock is linear in epsilon") {
  const LikelihoodModel tfs(descriptor(StateKind::TFS, 10));
  const LikelihoodModel dtfs(descriptor(StateKind::DepolarizedTFS, 10));
  for (double theta : {0.3, 1.2}) {
    const Eigen::VectorXd expected = 0.9 * tfs.probabilities(theta).array() + 0.1 / 11.0;
    CHECK((dtfs.probabilities(theta) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("one-axis twisting equals exp(-i chi_t Jx^2) applied to the down state") {
  const int n = 20;
  const double chi_t = 0.3 * pi;
  ModelDescriptor d = descriptor(StateKind::OAT, n);
  const LikelihoodModel m(d);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jx_reference(n));
  Eigen::VectorXcd phases(n + 1);
  for (int k = 0; k <= n; ++k) phases(k) = std::exp(std::complex<double>(0, -chi_t * std::pow(eig.eigenvalues()(k), 2)));
  const Eigen::MatrixXcd v = eig.eigenvectors().cast<std::complex<double>>();
  Eigen::VectorXcd down = Eigen::VectorXcd::Zero(n + 1);
  down(0) = 1.0;
  const Eigen::VectorXcd psi = v * phases.asDiagonal() * v.adjoint() * down;

  for (double theta : {0.25, 1.0, 0.6 * pi}) {
    Eigen::MatrixXd r(n + 1, n + 1);
    for (int a = 0; a <= n; ++a)
      for (int b = 0; b <= n; ++b) r(a, b) = oracle::wigner_d(n, 2 * a - n, 2 * b - n, theta);
    const Eigen::VectorXd expected = (r.cast<std::complex<double>>() * psi).cwiseAbs2();
    CHECK((m.probabilities(theta) - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("one-axis twisting distinguishes theta from pi - theta") {
  const LikelihoodModel m(descriptor(StateKind::OAT, 50));
  CHECK((m.probabilities(0.6) - m.probabilities(pi - 0.6)).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("detection noise matches a direct double sum") {
  ModelDescriptor d = descriptor(StateKind::TFS, 50);
  const LikelihoodModel clean(d);
  d.noise_sigma_sq = 0.25;
  const LikelihoodModel noisy(d);
  for (double theta : {0.4, 1.7}) {
    const Eigen::VectorXd p = clean.probabilities(theta);
    const auto ref = oracle::blur(std::vector<double>(p.data(), p.data() + p.size()), 0.25);
    const Eigen::VectorXd q = noisy.probabilities(theta);
    for (int k = 0; k <= 50; ++k) CHECK(std::abs(q(k) - ref[static_cast<std::size_t>(k)]) <= 1e-12);
    CHECK(std::abs(q.sum() - 1.0) <= 1e-10);
  }
}

TEST_CASE("Fisher information of the reference states") {
  const LikelihoodModel qubit(descriptor(StateKind::Qubit, 1));
  const LikelihoodModel css(descriptor(StateKind::CSS, 10));
  const LikelihoodModel tfs(descriptor(StateKind::TFS, 10));
  for (double theta : {0.3 * pi, 0.6 * pi, 1.0}) {
    CHECK(fisher_information(qubit, theta).value == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fisher_information(css, theta).value == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(fisher_information(tfs, theta).value == doctest::Approx(60.0).epsilon(1e-4));
  }
}

TEST_CASE("Fisher information is stable under step halving") {
  for (auto [kind, n] : {std::pair{StateKind::Qubit, 1}, {StateKind::CSS, 10}, {StateKind::TFS, 10},
                         {StateKind::DepolarizedTFS, 10}, {StateKind::OAT, 50}}) {
    const LikelihoodModel m(descriptor(kind, n));
    for (double theta : {0.5, 1.9}) {
      const double f1 = fisher_information(m, theta, 1e-5).value;
      const double f2 = fisher_information(m, theta, 5e-6).value;
      CHECK(std::abs(f1 - f2) <= 1e-3 * f1);
    }
  }
}

TEST_CASE("descriptor validation and round trip") {
  ModelDescriptor d = descriptor(StateKind::TFS, 5);
  CHECK_THROWS_WITH_AS(d.validate(), doctest::Contains("even"), InvalidArgument);
  d = descriptor(StateKind::OAT, 50);
  d.noise_sigma_sq = 0.25;
  const nlohmann::json j = d;
  CHECK(j.get<ModelDescriptor>() == d);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"kind":"css","n_qubits":4,"eps":0.1})").get<ModelDescriptor>(),
                  InvalidArgument);
  CHECK_THROWS_AS(state_kind_from_string("squeezed"), InvalidArgument);
}

TEST_CASE("likelihood table export") {
  const LikelihoodModel m(descriptor(StateKind::Qubit, 1));
  const std::vector<double> thetas = {0.0, pi};
  std::ostringstream os;
  write_likelihood_table(os, m.outcomes(), thetas, m.table(thetas), "exact");
  const std::string text = os.str();
  CHECK(text.rfind("# nnbpe-likelihood v1\n# source: exact\n", 0) == 0);
  CHECK(text.find("theta\tmu=-0.5\tmu=0.5\n0\t0\t1\n") != std::string::npos);
}

}
