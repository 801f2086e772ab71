#include "nnbpe/spin_models.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <complex>
#include <numbers>

#include "nnbpe/errors.hpp"

namespace nnbpe {

namespace {

constexpr double kFisherFloor = 1e-14;
constexpr double kFisherSlope = 1e-10;

Eigen::MatrixXd raising_operator(int n_qubits) {
  const int dim = n_qubits + 1;
  const double j = 0.5 * n_qubits;
  Eigen::MatrixXd jp = Eigen::MatrixXd::Zero(dim, dim);
  for (int k = 0; k + 1 < dim; ++k) {
    const double m = -j + k;
    jp(k + 1, k) = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
  }
  return jp;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidArgument(message);
}

}  // namespace

// ---------------------------------------------------------------------------
// OutcomeSet

OutcomeSet::OutcomeSet(int n_qubits) : n_qubits_(n_qubits) {
  require(n_qubits >= 1, "OutcomeSet: n_qubits must be >= 1");
  values_.reserve(static_cast<std::size_t>(n_qubits) + 1);
  for (int k = 0; k <= n_qubits; ++k) values_.push_back(-0.5 * n_qubits + k);
}

std::optional<int> OutcomeSet::index_of(double mu) const {
  const double k = mu + 0.5 * n_qubits_;
  const double rounded = std::round(k);
  if (!std::isfinite(k) || std::abs(k - rounded) > 1e-9 || rounded < 0 || rounded > n_qubits_) {
    return std::nullopt;
  }
  return static_cast<int>(rounded);
}

// ---------------------------------------------------------------------------
// SymmetricState

SymmetricState SymmetricState::pure(Eigen::VectorXcd amplitudes) {
  require(amplitudes.size() >= 2, "SymmetricState: need at least two amplitudes");
  SymmetricState s;
  s.n_qubits = static_cast<int>(amplitudes.size()) - 1;
  s.kind = Kind::PureVector;
  s.amplitudes = std::move(amplitudes);
  s.validate();
  return s;
}

SymmetricState SymmetricState::mixed(Eigen::MatrixXcd density) {
  require(density.rows() >= 2 && density.rows() == density.cols(),
          "SymmetricState: density matrix must be square with dimension >= 2");
  SymmetricState s;
  s.n_qubits = static_cast<int>(density.rows()) - 1;
  s.kind = Kind::DensityMatrix;
  s.density = std::move(density);
  s.validate();
  return s;
}

void SymmetricState::validate() const {
  const int dim = n_qubits + 1;
  if (kind == Kind::PureVector) {
    require(amplitudes.size() == dim, "SymmetricState: amplitude vector has wrong length");
    require(std::abs(amplitudes.squaredNorm() - 1.0) <= 1e-12,
            "SymmetricState: pure state is not normalized");
    return;
  }
  require(density.rows() == dim && density.cols() == dim,
          "SymmetricState: density matrix has wrong dimension");
  require(std::abs(density.trace() - std::complex<double>(1.0, 0.0)) <= 1e-12,
          "SymmetricState: density matrix trace differs from 1");
  require((density - density.adjoint()).cwiseAbs().maxCoeff() <= 1e-12,
          "SymmetricState: density matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(density, Eigen::EigenvaluesOnly);
  require(solver.eigenvalues().minCoeff() >= -1e-10,
          "SymmetricState: density matrix has a negative eigenvalue");
}

// ---------------------------------------------------------------------------
// Descriptors

std::string to_string(StateKind kind) {
  switch (kind) {
    case StateKind::Qubit: return "qubit";
    case StateKind::CSS: return "css";
    case StateKind::TFS: return "tfs";
    case StateKind::DepolarizedTFS: return "depolarized_tfs";
    case StateKind::OAT: return "oat";
  }
  return "unknown";
}

StateKind state_kind_from_string(const std::string& name) {
  if (name == "qubit") return StateKind::Qubit;
  if (name == "css") return StateKind::CSS;
  if (name == "tfs") return StateKind::TFS;
  if (name == "depolarized_tfs") return StateKind::DepolarizedTFS;
  if (name == "oat") return StateKind::OAT;
  throw InvalidArgument("unknown state kind '" + name +
                        "' (expected qubit, css, tfs, depolarized_tfs or oat)");
}

void ModelDescriptor::validate() const {
  require(n_qubits >= 1, "model.n_qubits: must be >= 1");
  if (kind == StateKind::Qubit) require(n_qubits == 1, "model.n_qubits: qubit model requires N = 1");
  if (kind == StateKind::TFS || kind == StateKind::DepolarizedTFS) {
    require(n_qubits % 2 == 0, "model.n_qubits: twin-Fock state requires an even number of qubits (got " +
                                   std::to_string(n_qubits) + ")");
  }
  if (kind == StateKind::DepolarizedTFS) {
    require(epsilon.has_value(), "model.epsilon: required for depolarized_tfs");
    require(*epsilon >= 0.0 && *epsilon <= 1.0, "model.epsilon: must lie in [0, 1]");
  } else {
    require(!epsilon.has_value(), "model.epsilon: only valid for depolarized_tfs");
  }
  if (kind == StateKind::OAT) {
    require(chi_t.has_value(), "model.chi_t: required for oat");
    require(std::isfinite(*chi_t), "model.chi_t: must be finite");
  } else {
    require(!chi_t.has_value(), "model.chi_t: only valid for oat");
  }
  if (noise_sigma_sq) {
    require(std::isfinite(*noise_sigma_sq) && *noise_sigma_sq >= 0.0,
            "model.noise_sigma_sq: must be a finite value >= 0");
  }
}

void to_json(nlohmann::json& j, const ModelDescriptor& d) {
  j = nlohmann::json::object();
  j["kind"] = to_string(d.kind);
  j["n_qubits"] = d.n_qubits;
  if (d.epsilon) j["epsilon"] = *d.epsilon;
  if (d.chi_t) j["chi_t"] = *d.chi_t;
  if (d.noise_sigma_sq) j["noise_sigma_sq"] = *d.noise_sigma_sq;
}

void from_json(const nlohmann::json& j, ModelDescriptor& d) {
  if (!j.is_object()) throw InvalidArgument("model: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "kind" && key != "n_qubits" && key != "epsilon" && key != "chi_t" &&
        key != "noise_sigma_sq") {
      throw InvalidArgument("model." + key + ": unknown key");
    }
  }
  try {
    d = ModelDescriptor{};
    d.kind = state_kind_from_string(j.at("kind").get<std::string>());
    d.n_qubits = j.at("n_qubits").get<int>();
    if (j.contains("epsilon")) d.epsilon = j.at("epsilon").get<double>();
    if (j.contains("chi_t")) d.chi_t = j.at("chi_t").get<double>();
    if (j.contains("noise_sigma_sq")) d.noise_sigma_sq = j.at("noise_sigma_sq").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model: ") + e.what());
  }
  d.validate();
}

// ---------------------------------------------------------------------------
// Rotations and states

std::pair<double, double> qubit_likelihood(double theta) {
  const double c = std::cos(0.5 * theta);
  const double up = c * c;
  return {up, 1.0 - up};
}

Eigen::MatrixXd spin_jx(int n_qubits) {
  const Eigen::MatrixXd jp = raising_operator(n_qubits);
  return 0.5 * (jp + jp.transpose());
}

Eigen::MatrixXcd spin_jy(int n_qubits) {
  const Eigen::MatrixXd jp = raising_operator(n_qubits);
  // (J+ - J-) / 2i
  return Eigen::MatrixXcd(jp - jp.transpose()) * std::complex<double>(0.0, -0.5);
}

Eigen::VectorXd spin_jz_diagonal(int n_qubits) {
  Eigen::VectorXd jz(n_qubits + 1);
  for (int k = 0; k <= n_qubits; ++k) jz(k) = -0.5 * n_qubits + k;
  return jz;
}

SpinRotation::SpinRotation(int n_qubits) : n_qubits_(n_qubits) {
  require(n_qubits >= 1, "SpinRotation: n_qubits must be >= 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(spin_jy(n_qubits));
  eigenvectors_ = solver.eigenvectors();
  eigenvalues_ = solver.eigenvalues();
}

Eigen::MatrixXd SpinRotation::matrix(double theta) const {
  const Eigen::VectorXcd phases =
      (eigenvalues_.cast<std::complex<double>>() * std::complex<double>(0.0, -theta)).array().exp();
  const Eigen::MatrixXcd r = eigenvectors_ * phases.asDiagonal() * eigenvectors_.adjoint();
  return r.real();
}

Eigen::VectorXcd SpinRotation::apply(double theta, const Eigen::VectorXcd& psi) const {
  const Eigen::VectorXcd phases =
      (eigenvalues_.cast<std::complex<double>>() * std::complex<double>(0.0, -theta)).array().exp();
  return eigenvectors_ * (phases.array() * (eigenvectors_.adjoint() * psi).array()).matrix();
}

Eigen::MatrixXd wigner_rotation(int n_qubits, double theta) {
  return SpinRotation(n_qubits).matrix(theta);
}

SymmetricState make_state(const ModelDescriptor& descriptor) {
  descriptor.validate();
  const int n = descriptor.n_qubits;
  const int dim = n + 1;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim);
  switch (descriptor.kind) {
    case StateKind::Qubit:
      psi(1) = 1.0;
      return SymmetricState::pure(psi);
    case StateKind::CSS:
      psi(0) = 1.0;
      return SymmetricState::pure(psi);
    case StateKind::TFS:
      psi(n / 2) = 1.0;
      return SymmetricState::pure(psi);
    case StateKind::DepolarizedTFS: {
      const double eps = *descriptor.epsilon;
      Eigen::MatrixXcd rho = Eigen::MatrixXcd::Identity(dim, dim) * (eps / dim);
      rho(n / 2, n / 2) += 1.0 - eps;
      return SymmetricState::mixed(rho);
    }
    case StateKind::OAT: {
      const SpinRotation rotation(n);
      psi(0) = 1.0;
      Eigen::VectorXcd x_polarized = rotation.apply(0.5 * std::numbers::pi, psi);
      const Eigen::VectorXd jz = spin_jz_diagonal(n);
      for (int k = 0; k < dim; ++k) {
        x_polarized(k) *= std::polar(1.0, -*descriptor.chi_t * jz(k) * jz(k));
      }
      Eigen::VectorXcd twisted = rotation.apply(-0.5 * std::numbers::pi, x_polarized);
      twisted.normalize();
      return SymmetricState::pure(twisted);
    }
  }
  throw InvalidArgument("make_state: unsupported state kind");
}

// ---------------------------------------------------------------------------
// Detection noise

namespace {

Eigen::MatrixXd noise_kernel(const OutcomeSet& outcomes, double sigma_sq) {
  const int n = outcomes.size();
  Eigen::MatrixXd kernel(n, n);
  for (int src = 0; src < n; ++src) {
    double norm = 0.0;
    for (int dst = 0; dst < n; ++dst) {
      const double diff = outcomes.value(dst) - outcomes.value(src);
      kernel(dst, src) = std::exp(-diff * diff / (2.0 * sigma_sq));
      norm += kernel(dst, src);
    }
    kernel.col(src) /= norm;
  }
  return kernel;
}

}  // namespace

Eigen::VectorXd apply_detection_noise(const Eigen::VectorXd& probs, const OutcomeSet& outcomes,
                                      double sigma_sq) {
  require(probs.size() == outcomes.size(), "apply_detection_noise: size mismatch");
  require(sigma_sq >= 0.0 && std::isfinite(sigma_sq), "apply_detection_noise: sigma_sq must be >= 0");
  if (sigma_sq == 0.0) return probs;
  return noise_kernel(outcomes, sigma_sq) * probs;
}

// ---------------------------------------------------------------------------
// LikelihoodModel

LikelihoodModel::LikelihoodModel(SymmetricState state, std::optional<DetectionNoise> noise)
    : state_(std::move(state)),
      noise_(noise),
      outcomes_(state_.n_qubits),
      rotation_(state_.n_qubits) {
  state_.validate();
  if (noise_) require(noise_->sigma_sq >= 0.0, "LikelihoodModel: sigma_sq must be >= 0");
  build();
}

LikelihoodModel::LikelihoodModel(const ModelDescriptor& descriptor)
    : state_(make_state(descriptor)),
      descriptor_(descriptor),
      outcomes_(descriptor.n_qubits),
      rotation_(descriptor.n_qubits) {
  if (descriptor.noise_sigma_sq) noise_ = DetectionNoise{*descriptor.noise_sigma_sq};
  build();
}

void LikelihoodModel::build() {
  if (noise_ && noise_->sigma_sq > 0.0) noise_kernel_ = noise_kernel(outcomes_, noise_->sigma_sq);
}

Eigen::VectorXd LikelihoodModel::probabilities(double theta) const {
  Eigen::VectorXd p;
  if (state_.kind == SymmetricState::Kind::PureVector) {
    p = rotation_.apply(theta, state_.amplitudes).cwiseAbs2();
  } else {
    const Eigen::MatrixXd r = rotation_.matrix(theta);
    const Eigen::MatrixXcd r_rho = r.cast<std::complex<double>>() * state_.density;
    p.resize(r.rows());
    for (Eigen::Index mu = 0; mu < r.rows(); ++mu) {
      p(mu) = (r_rho.row(mu).transpose().array() * r.row(mu).transpose().array()).sum().real();
    }
  }
  p = p.cwiseMax(0.0);
  p /= p.sum();
  if (noise_kernel_.size() > 0) p = noise_kernel_ * p;
  return p;
}

Eigen::MatrixXd LikelihoodModel::table(std::span<const double> thetas) const {
  Eigen::MatrixXd t(outcomes_.size(), static_cast<Eigen::Index>(thetas.size()));
  for (std::size_t k = 0; k < thetas.size(); ++k) t.col(static_cast<Eigen::Index>(k)) = probabilities(thetas[k]);
  return t;
}

Eigen::VectorXd likelihood(const LikelihoodModel& model, double theta) {
  return model.probabilities(theta);
}

FisherResult fisher_information(const LikelihoodModel& model, double theta, double h) {
  require(h > 0.0, "fisher_information: step must be > 0");
  const Eigen::VectorXd p = model.probabilities(theta);
  const Eigen::VectorXd dp = (model.probabilities(theta + h) - model.probabilities(theta - h)) / (2.0 * h);
  FisherResult result;
  for (Eigen::Index mu = 0; mu < p.size(); ++mu) {
    if (p(mu) < kFisherFloor) {
      if (std::abs(dp(mu)) < kFisherSlope) continue;
      ++result.divergent_terms;
    }
    result.value += dp(mu) * dp(mu) / std::max(p(mu), kFisherFloor);
  }
  return result;
}

void write_likelihood_table(std::ostream& os, const OutcomeSet& outcomes, std::span<const double> thetas,
                            const Eigen::MatrixXd& table, const std::string& source,
                            std::span<const std::string> metadata) {
  if (table.rows() != outcomes.size() || table.cols() != static_cast<Eigen::Index>(thetas.size())) {
    throw InvalidArgument("write_likelihood_table: table shape does not match outcomes and angles");
  }
  os << "# nnbpe-likelihood v1\n# source: " << source << "\n# outcomes: n_qubits=" << outcomes.n_qubits() << "\n";
  for (const auto& line : metadata) os << "# " << line << "\n";
  char buf[64];
  os << "theta";
  for (int k = 0; k < outcomes.size(); ++k) {
    std::snprintf(buf, sizeof buf, "\tmu=%g", outcomes.value(k));
    os << buf;
  }
  os << "\n";
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", thetas[j]);
    os << buf;
    for (int k = 0; k < outcomes.size(); ++k) {
      std::snprintf(buf, sizeof buf, "\t%.17g", table(k, static_cast<Eigen::Index>(j)));
      os << buf;
    }
    os << "\n";
  }
  if (!os) throw DataError("failed to write likelihood table");
}

}  // namespace nnbpe
