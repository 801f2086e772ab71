#pragma once

// Dense feed-forward softmax classifier with a single scalar input and its
// mini-batch ADAM trainer. The output a_j over the d grid labels is read as
// a discretized posterior, a_j = P(theta_j | mu) * dtheta.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nnbpe/dataset.hpp"

namespace nnbpe {

struct NetworkConfig {
  std::vector<int> hidden_layers;  // ReLU widths
  int output_dim = 2;              // softmax width, equal to the grid size
  double input_scale = 1.0;        // the network sees input_scale * mu + input_offset
  double input_offset = 0.0;

  /// Config whose input scaling maps [outcomes.min(), outcomes.max()] onto [-1, 1].
  static NetworkConfig for_outcomes(std::vector<int> hidden_layers, int output_dim, const OutcomeSet& outcomes);

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

/// Weights and biases of every layer, stored contiguously: for each layer the
/// (out x in) weight matrix in column-major order followed by the bias vector.
class DenseNetwork {
 public:
  explicit DenseNetwork(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }
  int n_layers() const { return static_cast<int>(shapes_.size()); }
  int output_dim() const { return config_.output_dim; }

  Eigen::Map<const Eigen::MatrixXd> weights(int layer) const;
  Eigen::Map<Eigen::MatrixXd> weights(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);

  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }

  std::uint64_t seed = 0;
  int epochs_trained = 0;

 private:
  struct Shape {
    int in, out;
    Eigen::Index w_offset, b_offset;
  };
  NetworkConfig config_;
  std::vector<Shape> shapes_;
  Eigen::VectorXd params_;
};

/// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases.
DenseNetwork init(const NetworkConfig& config, std::uint64_t seed);

/// Softmax output for one measurement value. Throws InvalidArgument on non-finite mu.
Eigen::VectorXd forward(const DenseNetwork& net, double mu);

struct Sample {
  double mu = 0.0;
  int label = 0;
};

/// Mean categorical cross-entropy -log(max(a_label, 1e-12)) over the batch.
double loss(const DenseNetwork& net, std::span<const Sample> batch);

/// Exact gradient of loss() with respect to parameters(), same layout.
Eigen::VectorXd gradient(const DenseNetwork& net, std::span<const Sample> batch);

struct AdamParams {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainSpec {
  int epochs = 1;
  int batch_size = 32;
  AdamParams adam;
  std::uint64_t seed = 0;  // mini-batch order

  void validate() const;
};

struct TrainResult {
  DenseNetwork network;
  std::vector<double> epoch_loss;  // mean training loss of each epoch
};

/// Mini-batch ADAM on the training records; the final short batch of an epoch
/// is kept. Single-threaded and bit-reproducible for fixed seeds.
TrainResult train(DenseNetwork net, const TrainingSet& ts, const TrainSpec& spec);

/// Binary checkpoint, version 1:
///   line 1: "nnbpe-checkpoint v1"
///   line 2: JSON header {hidden_layers, output_dim, input_scale, input_offset,
///           seed, epochs_trained, n_parameters, byte_order, metadata}
///   then n_parameters IEEE-754 binary64 values, little-endian, in parameters() order.
void save_checkpoint(std::ostream& os, const DenseNetwork& net, const nlohmann::json& metadata = {});
DenseNetwork load_checkpoint(std::istream& is);

}  // namespace nnbpe
