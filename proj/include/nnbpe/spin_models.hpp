#pragma once

// Exact probability models for collective-spin sensors in the symmetric
// (permutation-invariant) subspace of N qubits. Outcomes are J_z eigenvalues
// mu in {-N/2, ..., N/2}; the parameter enters through exp(-i theta J_y).

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace nnbpe {

/// Ordered J_z eigenvalues of an N-qubit register, index k <-> mu = -N/2 + k.
class OutcomeSet {
 public:
  explicit OutcomeSet(int n_qubits);

  int n_qubits() const { return n_qubits_; }
  int size() const { return n_qubits_ + 1; }
  double value(int index) const { return values_.at(static_cast<std::size_t>(index)); }
  std::span<const double> values() const { return values_; }
  double min() const { return values_.front(); }
  double max() const { return values_.back(); }

  /// Index of an outcome value; nullopt when mu is not a J_z eigenvalue.
  std::optional<int> index_of(double mu) const;

  bool operator==(const OutcomeSet& other) const { return n_qubits_ == other.n_qubits_; }

 private:
  int n_qubits_;
  std::vector<double> values_;
};

/// Pure vector or density matrix on the (N+1)-dimensional symmetric subspace.
struct SymmetricState {
  enum class Kind { PureVector, DensityMatrix };

  int n_qubits = 1;
  Kind kind = Kind::PureVector;
  Eigen::VectorXcd amplitudes;  // PureVector
  Eigen::MatrixXcd density;     // DensityMatrix

  static SymmetricState pure(Eigen::VectorXcd amplitudes);
  static SymmetricState mixed(Eigen::MatrixXcd density);

  /// Throws InvalidArgument when normalization / hermiticity / positivity fail.
  void validate() const;
};

enum class StateKind { Qubit, CSS, TFS, DepolarizedTFS, OAT };

std::string to_string(StateKind kind);
StateKind state_kind_from_string(const std::string& name);

/// Structured description of a likelihood model; the serialized record is
///   {"kind": ..., "n_qubits": N, "epsilon"?: e, "chi_t"?: x, "noise_sigma_sq"?: s}
struct ModelDescriptor {
  StateKind kind = StateKind::Qubit;
  int n_qubits = 1;
  std::optional<double> epsilon;         // DepolarizedTFS only
  std::optional<double> chi_t;           // OAT only
  std::optional<double> noise_sigma_sq;  // readout blur, omitted when absent

  void validate() const;
  bool operator==(const ModelDescriptor&) const = default;
};

void to_json(nlohmann::json& j, const ModelDescriptor& d);
void from_json(const nlohmann::json& j, ModelDescriptor& d);

/// Qubit state cos(theta/2)|up> + sin(theta/2)|down>: returns (P_up, P_down).
std::pair<double, double> qubit_likelihood(double theta);

/// Spectral decomposition of J_y for spin j = N/2, reused for every rotation angle.
class SpinRotation {
 public:
  explicit SpinRotation(int n_qubits);

  int n_qubits() const { return n_qubits_; }

  /// exp(-i theta J_y) in the J_z basis; real and orthogonal.
  Eigen::MatrixXd matrix(double theta) const;

  /// exp(-i theta J_y) applied to a state vector.
  Eigen::VectorXcd apply(double theta, const Eigen::VectorXcd& psi) const;

 private:
  int n_qubits_;
  Eigen::MatrixXcd eigenvectors_;
  Eigen::VectorXd eigenvalues_;
};

/// Matrix of exp(-i theta J_y) for spin N/2 in the J_z eigenbasis (mu ascending).
Eigen::MatrixXd wigner_rotation(int n_qubits, double theta);

/// Collective spin operators for spin N/2 in the J_z basis (mu ascending).
Eigen::MatrixXd spin_jx(int n_qubits);
Eigen::MatrixXcd spin_jy(int n_qubits);
Eigen::VectorXd spin_jz_diagonal(int n_qubits);

/// Builds the probe state for a descriptor.
///
/// Qubit: |up> (N = 1). CSS: |down>^N. TFS: mu = 0 Dicke state (N even).
/// DepolarizedTFS: (1 - eps)|TFS><TFS| + eps I/(N+1).
/// OAT: R(-pi/2) exp(-i chi_t J_z^2) R(pi/2) |down>^N with R = exp(-i theta J_y),
/// i.e. the x-polarized CSS twisted about z and realigned to -z before the
/// parameter rotation.
SymmetricState make_state(const ModelDescriptor& descriptor);

/// Applies Gaussian readout blur with variance sigma_sq (outcome units):
///   P'(mu) = sum_mu' C_mu' exp(-(mu - mu')^2 / 2 sigma_sq) P(mu'),
/// where C_mu' normalizes the kernel of each source outcome mu'.
Eigen::VectorXd apply_detection_noise(const Eigen::VectorXd& probs, const OutcomeSet& outcomes,
                                      double sigma_sq);

struct DetectionNoise {
  double sigma_sq = 0.0;
};

/// theta -> P(mu | theta) for a symmetric state measured in J_z, with optional blur.
class LikelihoodModel {
 public:
  LikelihoodModel(SymmetricState state, std::optional<DetectionNoise> noise = std::nullopt);
  explicit LikelihoodModel(const ModelDescriptor& descriptor);

  const OutcomeSet& outcomes() const { return outcomes_; }
  const SymmetricState& state() const { return state_; }
  const std::optional<DetectionNoise>& noise() const { return noise_; }
  const std::optional<ModelDescriptor>& descriptor() const { return descriptor_; }
  int n_qubits() const { return state_.n_qubits; }

  Eigen::VectorXd probabilities(double theta) const;

  /// Likelihood table, rows = outcomes, columns = the supplied angles.
  Eigen::MatrixXd table(std::span<const double> thetas) const;

 private:
  void build();

  SymmetricState state_;
  std::optional<DetectionNoise> noise_;
  std::optional<ModelDescriptor> descriptor_;
  OutcomeSet outcomes_;
  SpinRotation rotation_;
  Eigen::MatrixXd noise_kernel_;
};

Eigen::VectorXd likelihood(const LikelihoodModel& model, double theta);

struct FisherResult {
  double value = 0.0;
  int divergent_terms = 0;  // P < 1e-14 with |dP/dtheta| >= 1e-10
};

/// F(theta) = sum_mu (dP/dtheta)^2 / P with central differences of step h.
FisherResult fisher_information(const LikelihoodModel& model, double theta, double h = 1e-5);

/// Columnar likelihood export, version 1:
///
///   # nnbpe-likelihood v1
///   # source: <tag, e.g. exact or calibrated>
///   # outcomes: n_qubits=<int>
///   # <extra metadata lines>
///   theta<TAB>mu=<value><TAB>...
///   <theta><TAB><P(mu|theta)>...   (one row per angle)
void write_likelihood_table(std::ostream& os, const OutcomeSet& outcomes, std::span<const double> thetas,
                            const Eigen::MatrixXd& table, const std::string& source,
                            std::span<const std::string> metadata = {});

}  // namespace nnbpe
