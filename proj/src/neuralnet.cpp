#include "nnbpe/neuralnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define NNBPE_HAVE_MXCSR 1
#endif

#include "nnbpe/errors.hpp"
#include "nnbpe/random.hpp"

namespace nnbpe {

namespace {

constexpr double kLogClip = 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// Config and parameter layout

NetworkConfig NetworkConfig::for_outcomes(std::vector<int> hidden_layers, int output_dim, const OutcomeSet& outcomes) {
  NetworkConfig c;
  c.hidden_layers = std::move(hidden_layers);
  c.output_dim = output_dim;
  const double half_range = 0.5 * (outcomes.max() - outcomes.min());
  const double center = 0.5 * (outcomes.max() + outcomes.min());
  c.input_scale = 1.0 / half_range;
  c.input_offset = -center / half_range;
  return c;
}

void NetworkConfig::validate() const {
  if (output_dim < 2) throw InvalidArgument("network: output_dim must be >= 2");
  for (int w : hidden_layers) {
    if (w < 1) throw InvalidArgument("network: hidden layer widths must be >= 1");
  }
  if (!std::isfinite(input_scale) || !std::isfinite(input_offset) || input_scale == 0.0) {
    throw InvalidArgument("network: input scaling must be finite and non-zero");
  }
}

DenseNetwork::DenseNetwork(NetworkConfig config) : config_(std::move(config)) {
  config_.validate();
  Eigen::Index offset = 0;
  int in = 1;
  auto add = [&](int out) {
    Shape s{in, out, offset, offset + static_cast<Eigen::Index>(in) * out};
    offset = s.b_offset + out;
    shapes_.push_back(s);
    in = out;
  };
  for (int w : config_.hidden_layers) add(w);
  add(config_.output_dim);
  params_ = Eigen::VectorXd::Zero(offset);
}

Eigen::Map<const Eigen::MatrixXd> DenseNetwork::weights(int layer) const {
  const auto& s = shapes_.at(static_cast<std::size_t>(layer));
  return {params_.data() + s.w_offset, s.out, s.in};
}
Eigen::Map<Eigen::MatrixXd> DenseNetwork::weights(int layer) {
  const auto& s = shapes_.at(static_cast<std::size_t>(layer));
  return {params_.data() + s.w_offset, s.out, s.in};
}
Eigen::Map<const Eigen::VectorXd> DenseNetwork::bias(int layer) const {
  const auto& s = shapes_.at(static_cast<std::size_t>(layer));
  return {params_.data() + s.b_offset, s.out};
}
Eigen::Map<Eigen::VectorXd> DenseNetwork::bias(int layer) {
  const auto& s = shapes_.at(static_cast<std::size_t>(layer));
  return {params_.data() + s.b_offset, s.out};
}

DenseNetwork init(const NetworkConfig& config, std::uint64_t seed) {
  DenseNetwork net(config);
  Rng rng(seed);
  for (int l = 0; l < net.n_layers(); ++l) {
    auto w = net.weights(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = limit * (2.0 * rng.uniform() - 1.0);
    net.bias(l).setZero();
  }
  net.seed = seed;
  net.epochs_trained = 0;
  return net;
}

// ---------------------------------------------------------------------------
// Batched forward/backward over groups of identical inputs.
//
// Records sharing an input value share every activation, so a batch is
// evaluated once per distinct value. The output-layer error for a group g
// with n_g records is n_g * a_g - sum_{records in g} onehot(label), which is
// exactly the sum of the per-record errors.

namespace {

// Far-off softmax outputs and their ADAM moments sink into the subnormal
// range late in training, which slows x86 arithmetic by orders of
// magnitude. Flushing them to zero changes nothing measurable.
class FlushDenormals {
 public:
  FlushDenormals() {
#ifdef NNBPE_HAVE_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);  // FTZ | DAZ
#endif
  }
  ~FlushDenormals() {
#ifdef NNBPE_HAVE_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

class BatchEngine {
 public:
  explicit BatchEngine(const DenseNetwork& net, int max_groups) : grad_(net.config()) {
    const auto& cfg = net.config();
    const int n_layers = net.n_layers();
    z_.resize(static_cast<std::size_t>(n_layers));
    h_.resize(static_cast<std::size_t>(n_layers));
    delta_.resize(static_cast<std::size_t>(n_layers));
    for (int l = 0; l < n_layers; ++l) {
      const int width = l + 1 < n_layers ? cfg.hidden_layers[static_cast<std::size_t>(l)] : cfg.output_dim;
      z_[static_cast<std::size_t>(l)].resize(width, max_groups);
      h_[static_cast<std::size_t>(l)].resize(width, max_groups);
      delta_[static_cast<std::size_t>(l)].resize(width, max_groups);
    }
    x_.resize(1, max_groups);
  }

  /// Forward pass for `inputs` (raw mu values). Output probabilities in output().
  void forward(const DenseNetwork& net, std::span<const double> inputs) {
    groups_ = static_cast<Eigen::Index>(inputs.size());
    const auto& cfg = net.config();
    for (Eigen::Index g = 0; g < groups_; ++g) {
      x_(0, g) = cfg.input_scale * inputs[static_cast<std::size_t>(g)] + cfg.input_offset;
    }
    const int n_layers = net.n_layers();
    for (int l = 0; l < n_layers; ++l) {
      auto z = z_[static_cast<std::size_t>(l)].leftCols(groups_);
      if (l == 0) {
        z.noalias() = net.weights(l) * x_.leftCols(groups_);
      } else {
        z.noalias() = net.weights(l) * h_[static_cast<std::size_t>(l - 1)].leftCols(groups_);
      }
      z.colwise() += net.bias(l);
      auto h = h_[static_cast<std::size_t>(l)].leftCols(groups_);
      if (l + 1 < n_layers) {
        h = z.cwiseMax(0.0);
      } else {
        for (Eigen::Index g = 0; g < groups_; ++g) {
          const double zmax = z.col(g).maxCoeff();
          h.col(g) = (z.col(g).array() - zmax).exp();
          h.col(g) /= h.col(g).sum();
        }
      }
    }
  }

  auto output() const { return h_.back().leftCols(groups_); }

  /// Computes the gradient of (1/batch) * sum of record losses into gradient()
  /// and returns the summed record loss. Requires a prior forward() over the groups.
  double backward(const DenseNetwork& net, std::span<const int> group_sizes,
                  std::span<const std::pair<int, int>> group_labels, double batch_size) {
    const int n_layers = net.n_layers();
    auto& top = delta_.back();
    const auto a = h_.back().leftCols(groups_);
    double total_loss = 0.0;
    for (Eigen::Index g = 0; g < groups_; ++g) {
      top.col(g) = a.col(g) * static_cast<double>(group_sizes[static_cast<std::size_t>(g)]);
    }
    for (const auto& [g, label] : group_labels) {
      total_loss -= std::log(std::max(a(label, g), kLogClip));
      top(label, g) -= 1.0;
    }
    const double inv = 1.0 / batch_size;
    for (int l = n_layers - 1; l >= 0; --l) {
      auto delta = delta_[static_cast<std::size_t>(l)].leftCols(groups_);
      if (l + 1 < n_layers) {
        delta.noalias() = net.weights(l + 1).transpose() * delta_[static_cast<std::size_t>(l + 1)].leftCols(groups_);
        delta = delta.cwiseProduct((z_[static_cast<std::size_t>(l)].leftCols(groups_).array() > 0.0).cast<double>().matrix());
      }
      auto gw = grad_.weights(l);
      if (l == 0) {
        gw.noalias() = inv * (delta * x_.leftCols(groups_).transpose());
      } else {
        gw.noalias() = inv * (delta * h_[static_cast<std::size_t>(l - 1)].leftCols(groups_).transpose());
      }
      grad_.bias(l) = inv * delta.rowwise().sum();
    }
    return total_loss;
  }

  /// Every block is overwritten by backward(), parameters() layout.
  const Eigen::VectorXd& gradient() const { return grad_.parameters(); }

 private:
  DenseNetwork grad_;
  Eigen::Index groups_ = 0;
  Eigen::MatrixXd x_;
  std::vector<Eigen::MatrixXd> z_, h_, delta_;
};

struct GroupedBatch {
  std::vector<double> inputs;
  std::vector<int> sizes;
  std::vector<std::pair<int, int>> labels;  // (group, label) per record
};

GroupedBatch group_samples(std::span<const Sample> batch, int output_dim) {
  GroupedBatch gb;
  gb.inputs.reserve(batch.size());
  for (const auto& s : batch) {
    if (!std::isfinite(s.mu)) throw InvalidArgument("network input must be finite");
    if (s.label < 0 || s.label >= output_dim) throw InvalidArgument("sample label outside the output layer");
    gb.inputs.push_back(s.mu);
  }
  std::sort(gb.inputs.begin(), gb.inputs.end());
  gb.inputs.erase(std::unique(gb.inputs.begin(), gb.inputs.end()), gb.inputs.end());
  gb.sizes.assign(gb.inputs.size(), 0);
  gb.labels.reserve(batch.size());
  for (const auto& s : batch) {
    const auto g = static_cast<int>(std::lower_bound(gb.inputs.begin(), gb.inputs.end(), s.mu) - gb.inputs.begin());
    ++gb.sizes[static_cast<std::size_t>(g)];
    gb.labels.emplace_back(g, s.label);
  }
  return gb;
}

}  // namespace

Eigen::VectorXd forward(const DenseNetwork& net, double mu) {
  if (!std::isfinite(mu)) throw InvalidArgument("forward: measurement value must be finite");
  BatchEngine engine(net, 1);
  const double input[1] = {mu};
  engine.forward(net, input);
  return engine.output().col(0);
}

double loss(const DenseNetwork& net, std::span<const Sample> batch) {
  if (batch.empty()) throw InvalidArgument("loss: empty batch");
  const auto gb = group_samples(batch, net.output_dim());
  BatchEngine engine(net, static_cast<int>(gb.inputs.size()));
  engine.forward(net, gb.inputs);
  const auto a = engine.output();
  double total = 0.0;
  for (const auto& [g, label] : gb.labels) total -= std::log(std::max(a(label, g), kLogClip));
  return total / static_cast<double>(batch.size());
}

Eigen::VectorXd gradient(const DenseNetwork& net, std::span<const Sample> batch) {
  if (batch.empty()) throw InvalidArgument("gradient: empty batch");
  const auto gb = group_samples(batch, net.output_dim());
  BatchEngine engine(net, static_cast<int>(gb.inputs.size()));
  engine.forward(net, gb.inputs);
  engine.backward(net, gb.sizes, gb.labels, static_cast<double>(batch.size()));
  return engine.gradient();
}

// ---------------------------------------------------------------------------
// Training

void TrainSpec::validate() const {
  if (epochs < 1) throw InvalidArgument("training.epochs: must be >= 1");
  if (batch_size < 1) throw InvalidArgument("training.batch_size: must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw InvalidArgument("training.adam.learning_rate: must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw InvalidArgument("training.adam.beta1: must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw InvalidArgument("training.adam.beta2: must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw InvalidArgument("training.adam.epsilon: must be > 0");
}

TrainResult train(DenseNetwork net, const TrainingSet& ts, const TrainSpec& spec) {
  spec.validate();
  if (net.output_dim() != ts.grid().size()) {
    throw InvalidArgument("train: network output width does not match the training grid");
  }
  if (ts.size() == 0) throw InvalidArgument("train: empty training set");

  const FlushDenormals ftz;
  const auto& records = ts.records();
  const int n_outcomes = ts.outcomes().size();
  const int max_groups = std::min(n_outcomes, spec.batch_size);
  BatchEngine engine(net, max_groups);

  const Eigen::Index n_params = net.parameters().size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n_params), v = Eigen::VectorXd::Zero(n_params);
  double beta1_t = 1.0, beta2_t = 1.0;

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> group_of_outcome(static_cast<std::size_t>(n_outcomes));
  std::vector<double> inputs;
  std::vector<int> sizes;
  std::vector<std::pair<int, int>> labels;
  inputs.reserve(static_cast<std::size_t>(max_groups));
  labels.reserve(static_cast<std::size_t>(spec.batch_size));

  TrainResult result{net, {}};
  DenseNetwork& model = result.network;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(model.epochs_trained)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(spec.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(spec.batch_size));
      std::fill(group_of_outcome.begin(), group_of_outcome.end(), -1);
      inputs.clear();
      sizes.clear();
      labels.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& r = records[order[k]];
        int& g = group_of_outcome[static_cast<std::size_t>(r.outcome)];
        if (g < 0) {
          g = static_cast<int>(inputs.size());
          inputs.push_back(ts.outcomes().value(r.outcome));
          sizes.push_back(0);
        }
        ++sizes[static_cast<std::size_t>(g)];
        labels.emplace_back(g, r.label);
      }
      engine.forward(model, inputs);
      epoch_loss += engine.backward(model, sizes, labels, static_cast<double>(stop - start));

      // ADAM with bias-corrected moments.
      beta1_t *= spec.adam.beta1;
      beta2_t *= spec.adam.beta2;
      const double c1 = 1.0 / (1.0 - beta1_t);
      const double c2 = 1.0 / (1.0 - beta2_t);
      const double b1 = spec.adam.beta1, b2 = spec.adam.beta2;
      const double lr = spec.adam.learning_rate, eps = spec.adam.epsilon;
      double* p = model.parameters().data();
      double* mp = m.data();
      double* vp = v.data();
      const double* gp = engine.gradient().data();
      for (Eigen::Index i = 0; i < n_params; ++i) {
        mp[i] = b1 * mp[i] + (1.0 - b1) * gp[i];
        vp[i] = b2 * vp[i] + (1.0 - b2) * gp[i] * gp[i];
        p[i] -= lr * (mp[i] * c1) / (std::sqrt(vp[i] * c2) + eps);
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    ++model.epochs_trained;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(std::ostream& os, const DenseNetwork& net, const nlohmann::json& metadata) {
  const auto& cfg = net.config();
  nlohmann::json header;
  header["hidden_layers"] = cfg.hidden_layers;
  header["output_dim"] = cfg.output_dim;
  header["input_scale"] = cfg.input_scale;
  header["input_offset"] = cfg.input_offset;
  header["seed"] = net.seed;
  header["epochs_trained"] = net.epochs_trained;
  header["n_parameters"] = net.parameters().size();
  header["byte_order"] = "little-endian binary64";
  header["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  os << "nnbpe-checkpoint v1\n" << header.dump() << "\n";
  const auto& params = net.parameters();
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(params[i]);
    char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    os.write(bytes, 8);
  }
  if (!os) throw DataError("failed to write checkpoint");
}

DenseNetwork load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "nnbpe-checkpoint v1") {
    throw DataError("checkpoint: missing or unsupported format header");
  }
  if (!std::getline(is, line)) throw DataError("checkpoint: missing JSON header");
  nlohmann::json header;
  NetworkConfig cfg;
  std::int64_t n_params = 0;
  try {
    header = nlohmann::json::parse(line);
    cfg.hidden_layers = header.at("hidden_layers").get<std::vector<int>>();
    cfg.output_dim = header.at("output_dim").get<int>();
    cfg.input_scale = header.at("input_scale").get<double>();
    cfg.input_offset = header.at("input_offset").get<double>();
    n_params = header.at("n_parameters").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  DenseNetwork net(cfg);
  if (net.parameters().size() != n_params) throw DataError("checkpoint: parameter count does not match architecture");
  net.seed = header.value("seed", std::uint64_t{0});
  net.epochs_trained = header.value("epochs_trained", 0);
  auto& params = net.parameters();
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("checkpoint: truncated weight data");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    params[i] = std::bit_cast<double>(bits);
  }
  return net;
}

}  // namespace nnbpe
