#pragma once

// Declarative run configuration (JSON). Schema:
//
//   {
//     "model":    {"kind": "qubit|css|tfs|depolarized_tfs|oat", "n_qubits": N,
//                  "epsilon"?: e, "chi_t"?: x, "noise_sigma_sq"?: s},
//     "grid":     {"d": d, "theta_min": a, "theta_max": b},
//     "training": {"allocation": {"shape": "uniform"} | {"shape": "step", "j_cut": j}
//                                | {"shape": "custom", "weights": [...]},
//                  "m_train": M, "hidden_layers": [...], "epochs": E, "batch_size": B,
//                  "adam"?: {"learning_rate", "beta1", "beta2", "epsilon"},
//                  "seed": S},
//     "evaluation"?: {"theta_true": [...], "m": [...], "n_trials": T, "base_seed": S,
//                     "backends"?: ["network", "calibration", "oracle"],
//                     "likelihood_source"?: "exact|empirical",
//                     "network_prior"?: "allocation|extracted",
//                     "sweep"?: {"n": n, "theta_min": a, "theta_max": b, "m": [...]},
//                     "threads"?: n},
//     "output":   {"directory": "...", "prefix": "..."}
//   }
//
// Unknown keys anywhere are errors. Optional keys are re-emitted only when present.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnbpe/bayes.hpp"
#include "nnbpe/dataset.hpp"
#include "nnbpe/neuralnet.hpp"
#include "nnbpe/spin_models.hpp"

namespace nnbpe {

struct SweepConfig {
  int n = 1;
  double theta_min = 0.0;
  double theta_max = 0.0;
  std::vector<int> m;
};

struct EvaluationConfig {
  std::vector<double> theta_true;
  std::vector<int> m;
  int n_trials = 1;
  std::uint64_t base_seed = 0;
  std::optional<std::vector<std::string>> backends;
  std::optional<std::string> likelihood_source;
  std::optional<std::string> network_prior;
  std::optional<SweepConfig> sweep;
  std::optional<int> threads;

  std::vector<std::string> backend_list() const;
  LikelihoodSource source() const;
  bool extracted_prior() const { return network_prior.value_or("extracted") == "extracted"; }
};

struct TrainingConfig {
  AllocationShape allocation;
  std::int64_t m_train = 0;
  std::vector<int> hidden_layers;
  int epochs = 1;
  int batch_size = 32;
  std::optional<AdamParams> adam;
  std::uint64_t seed = 0;

  std::uint64_t data_seed() const;   // training-set sampling
  std::uint64_t init_seed() const;   // weight initialization
  std::uint64_t batch_seed() const;  // mini-batch order
  TrainSpec train_spec() const;
};

struct OutputConfig {
  std::string directory;
  std::string prefix;
};

struct RunConfig {
  ModelDescriptor model;
  ThetaGrid grid{2, 0.0, 1.0};
  TrainingConfig training;
  std::optional<EvaluationConfig> evaluation;
  OutputConfig output;

  /// Cross-field checks; throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Parses and validates; every error is an InvalidArgument with a field path.
RunConfig parse_config(const nlohmann::ordered_json& j);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

nlohmann::ordered_json serialize_config(const RunConfig& cfg);

/// FNV-1a 64 of the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace nnbpe
