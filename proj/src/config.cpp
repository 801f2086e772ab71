#include "nnbpe/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

#include "nnbpe/errors.hpp"
#include "nnbpe/random.hpp"

namespace nnbpe {

using ojson = nlohmann::ordered_json;

namespace {

class Section {
 public:
  Section(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument(path_ + ": expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& item : j_.items()) {
      bool known = false;
      for (const char* k : keys) known = known || item.key() == k;
      if (!known) throw InvalidArgument(field(item.key()) + ": unknown key");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string field(const std::string& key) const { return path_ + "." + key; }
  const ojson& at(const char* key) const {
    if (!j_.contains(key)) throw InvalidArgument(field(key) + ": required key missing");
    return j_.at(key);
  }
  Section sub(const char* key) const { return Section(at(key), field(key)); }

  std::int64_t integer(const char* key) const { return as_integer(at(key), field(key)); }
  std::uint64_t unsigned_integer(const char* key) const {
    const ojson& v = at(key);
    if (!v.is_number_unsigned()) throw InvalidArgument(field(key) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  double number(const char* key) const { return as_number(at(key), field(key)); }
  std::string string(const char* key) const {
    const ojson& v = at(key);
    if (!v.is_string()) throw InvalidArgument(field(key) + ": expected a string");
    return v.get<std::string>();
  }
  template <class T, class F>
  std::vector<T> list(const char* key, F convert) const {
    const ojson& v = at(key);
    if (!v.is_array()) throw InvalidArgument(field(key) + ": expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert(v[i], field(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  static std::int64_t as_integer(const ojson& v, const std::string& path) {
    if (!v.is_number_integer()) throw InvalidArgument(path + ": expected an integer");
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      throw InvalidArgument(path + ": integer out of range");
    }
    return v.get<std::int64_t>();
  }
  static double as_number(const ojson& v, const std::string& path) {
    if (!v.is_number()) throw InvalidArgument(path + ": expected a number");
    return v.get<double>();
  }

 private:
  const ojson& j_;
  std::string path_;
};

int to_int(std::int64_t v, const std::string& path) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw InvalidArgument(path + ": integer out of range");
  }
  return static_cast<int>(v);
}

int int_item(const ojson& v, const std::string& path) { return to_int(Section::as_integer(v, path), path); }
double number_item(const ojson& v, const std::string& path) { return Section::as_number(v, path); }
std::string string_item(const ojson& v, const std::string& path) {
  if (!v.is_string()) throw InvalidArgument(path + ": expected a string");
  return v.get<std::string>();
}

ModelDescriptor parse_model(const Section& s) {
  s.allow({"kind", "n_qubits", "epsilon", "chi_t", "noise_sigma_sq"});
  ModelDescriptor d;
  try {
    d.kind = state_kind_from_string(s.string("kind"));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(s.field("kind") + ": " + e.what());
  }
  d.n_qubits = to_int(s.integer("n_qubits"), s.field("n_qubits"));
  if (s.has("epsilon")) d.epsilon = s.number("epsilon");
  if (s.has("chi_t")) d.chi_t = s.number("chi_t");
  if (s.has("noise_sigma_sq")) d.noise_sigma_sq = s.number("noise_sigma_sq");
  return d;
}

AllocationShape parse_allocation(const Section& s) {
  const std::string shape = s.string("shape");
  if (shape == "uniform") {
    s.allow({"shape"});
    return UniformAllocation{};
  }
  if (shape == "step") {
    s.allow({"shape", "j_cut"});
    return StepAllocation{to_int(s.integer("j_cut"), s.field("j_cut"))};
  }
  if (shape == "custom") {
    s.allow({"shape", "weights"});
    return CustomAllocation{s.list<double>("weights", number_item)};
  }
  throw InvalidArgument(s.field("shape") + ": unknown shape '" + shape + "' (expected uniform, step or custom)");
}

TrainingConfig parse_training(const Section& s) {
  s.allow({"allocation", "m_train", "hidden_layers", "epochs", "batch_size", "adam", "seed"});
  TrainingConfig t;
  t.allocation = parse_allocation(s.sub("allocation"));
  t.m_train = s.integer("m_train");
  t.hidden_layers = s.list<int>("hidden_layers", int_item);
  t.epochs = to_int(s.integer("epochs"), s.field("epochs"));
  t.batch_size = to_int(s.integer("batch_size"), s.field("batch_size"));
  if (s.has("adam")) {
    const Section a = s.sub("adam");
    a.allow({"learning_rate", "beta1", "beta2", "epsilon"});
    AdamParams p;
    p.learning_rate = a.number("learning_rate");
    p.beta1 = a.number("beta1");
    p.beta2 = a.number("beta2");
    p.epsilon = a.number("epsilon");
    t.adam = p;
  }
  t.seed = s.unsigned_integer("seed");
  return t;
}

EvaluationConfig parse_evaluation(const Section& s) {
  s.allow({"theta_true", "m", "n_trials", "base_seed", "backends", "likelihood_source", "network_prior", "sweep",
           "threads"});
  EvaluationConfig e;
  e.theta_true = s.list<double>("theta_true", number_item);
  e.m = s.list<int>("m", int_item);
  e.n_trials = to_int(s.integer("n_trials"), s.field("n_trials"));
  e.base_seed = s.unsigned_integer("base_seed");
  if (s.has("backends")) e.backends = s.list<std::string>("backends", string_item);
  if (s.has("likelihood_source")) e.likelihood_source = s.string("likelihood_source");
  if (s.has("network_prior")) e.network_prior = s.string("network_prior");
  if (s.has("sweep")) {
    const Section w = s.sub("sweep");
    w.allow({"n", "theta_min", "theta_max", "m"});
    SweepConfig sw;
    sw.n = to_int(w.integer("n"), w.field("n"));
    sw.theta_min = w.number("theta_min");
    sw.theta_max = w.number("theta_max");
    sw.m = w.list<int>("m", int_item);
    e.sweep = sw;
  }
  if (s.has("threads")) e.threads = to_int(s.integer("threads"), s.field("threads"));
  return e;
}

// Reports a module precondition failure under the config field that caused it.
template <class F>
void check(const std::string& path, F&& f) {
  try {
    f();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    throw InvalidArgument(msg.rfind(path, 0) == 0 ? msg : path + ": " + msg);
  }
}

}  // namespace

std::vector<std::string> EvaluationConfig::backend_list() const {
  return backends.value_or(std::vector<std::string>{"network", "oracle"});
}

LikelihoodSource EvaluationConfig::source() const {
  return likelihood_source_from_string(likelihood_source.value_or("exact"));
}

std::uint64_t TrainingConfig::data_seed() const { return mix_seed(seed, 0); }
std::uint64_t TrainingConfig::init_seed() const { return mix_seed(seed, 1); }
std::uint64_t TrainingConfig::batch_seed() const { return mix_seed(seed, 2); }

TrainSpec TrainingConfig::train_spec() const {
  TrainSpec spec;
  spec.epochs = epochs;
  spec.batch_size = batch_size;
  spec.adam = adam.value_or(AdamParams{});
  spec.seed = batch_seed();
  return spec;
}

void RunConfig::validate() const {
  check("model", [&] { model.validate(); });
  check("training.allocation", [&] { allocate(grid, training.allocation, training.m_train); });
  check("training", [&] { training.train_spec().validate(); });
  check("training.hidden_layers", [&] {
    NetworkConfig{training.hidden_layers, grid.size(), 1.0, 0.0}.validate();
  });
  if (evaluation) {
    const auto& e = *evaluation;
    for (std::size_t i = 0; i < e.theta_true.size(); ++i) {
      if (!grid.contains(e.theta_true[i])) {
        throw InvalidArgument("evaluation.theta_true[" + std::to_string(i) + "]: outside [theta_min, theta_max]");
      }
    }
    for (std::size_t i = 0; i < e.m.size(); ++i) {
      if (e.m[i] < 0) throw InvalidArgument("evaluation.m[" + std::to_string(i) + "]: must be >= 0");
    }
    if (e.n_trials < 1) throw InvalidArgument("evaluation.n_trials: must be >= 1");
    for (const auto& b : e.backend_list()) {
      if (b != "network" && b != "calibration" && b != "oracle") {
        throw InvalidArgument("evaluation.backends: unknown backend '" + b + "' (expected network, calibration or oracle)");
      }
    }
    check("evaluation.likelihood_source", [&] { (void)e.source(); });
    if (e.network_prior && *e.network_prior != "allocation" && *e.network_prior != "extracted") {
      throw InvalidArgument("evaluation.network_prior: expected allocation or extracted");
    }
    if (e.sweep) {
      if (e.sweep->n < 1) throw InvalidArgument("evaluation.sweep.n: must be >= 1");
      if (!grid.contains(e.sweep->theta_min) || !grid.contains(e.sweep->theta_max) ||
          e.sweep->theta_max < e.sweep->theta_min) {
        throw InvalidArgument("evaluation.sweep: range must be ordered and inside the grid");
      }
      for (int m : e.sweep->m) {
        if (m < 0) throw InvalidArgument("evaluation.sweep.m: must be >= 0");
      }
    }
    if (e.threads && *e.threads < 0) throw InvalidArgument("evaluation.threads: must be >= 0");
  }
  if (output.directory.empty()) throw InvalidArgument("output.directory: must not be empty");
  if (output.prefix.empty() || output.prefix.find('/') != std::string::npos) {
    throw InvalidArgument("output.prefix: must be a non-empty file name prefix");
  }
}

RunConfig parse_config(const ojson& j) {
  const Section root(j, "config");
  root.allow({"model", "grid", "training", "evaluation", "output"});
  RunConfig cfg;
  cfg.model = parse_model(Section(root.at("model"), "model"));
  {
    const Section g(root.at("grid"), "grid");
    g.allow({"d", "theta_min", "theta_max"});
    const int d = to_int(g.integer("d"), "grid.d");
    cfg.grid = ThetaGrid(d, g.number("theta_min"), g.number("theta_max"));
  }
  cfg.training = parse_training(Section(root.at("training"), "training"));
  if (root.has("evaluation")) cfg.evaluation = parse_evaluation(Section(root.at("evaluation"), "evaluation"));
  {
    const Section o(root.at("output"), "output");
    o.allow({"directory", "prefix"});
    cfg.output = {o.string("directory"), o.string("prefix")};
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_text(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw InvalidArgument(std::string("config: not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ojson serialize_config(const RunConfig& cfg) {
  ojson j;
  ojson& model = j["model"];
  model["kind"] = to_string(cfg.model.kind);
  model["n_qubits"] = cfg.model.n_qubits;
  if (cfg.model.epsilon) model["epsilon"] = *cfg.model.epsilon;
  if (cfg.model.chi_t) model["chi_t"] = *cfg.model.chi_t;
  if (cfg.model.noise_sigma_sq) model["noise_sigma_sq"] = *cfg.model.noise_sigma_sq;

  j["grid"] = {{"d", cfg.grid.size()}, {"theta_min", cfg.grid.min()}, {"theta_max", cfg.grid.max()}};

  const auto& t = cfg.training;
  ojson& tr = j["training"];
  if (std::holds_alternative<UniformAllocation>(t.allocation)) {
    tr["allocation"] = {{"shape", "uniform"}};
  } else if (const auto* step = std::get_if<StepAllocation>(&t.allocation)) {
    tr["allocation"] = {{"shape", "step"}, {"j_cut", step->j_cut}};
  } else {
    tr["allocation"] = {{"shape", "custom"}, {"weights", std::get<CustomAllocation>(t.allocation).weights}};
  }
  tr["m_train"] = t.m_train;
  tr["hidden_layers"] = t.hidden_layers;
  tr["epochs"] = t.epochs;
  tr["batch_size"] = t.batch_size;
  if (t.adam) {
    tr["adam"] = {{"learning_rate", t.adam->learning_rate},
                  {"beta1", t.adam->beta1},
                  {"beta2", t.adam->beta2},
                  {"epsilon", t.adam->epsilon}};
  }
  tr["seed"] = t.seed;

  if (cfg.evaluation) {
    const auto& e = *cfg.evaluation;
    ojson& ev = j["evaluation"];
    ev["theta_true"] = e.theta_true;
    ev["m"] = e.m;
    ev["n_trials"] = e.n_trials;
    ev["base_seed"] = e.base_seed;
    if (e.backends) ev["backends"] = *e.backends;
    if (e.likelihood_source) ev["likelihood_source"] = *e.likelihood_source;
    if (e.network_prior) ev["network_prior"] = *e.network_prior;
    if (e.sweep) {
      ev["sweep"] = {{"n", e.sweep->n},
                     {"theta_min", e.sweep->theta_min},
                     {"theta_max", e.sweep->theta_max},
                     {"m", e.sweep->m}};
    }
    if (e.threads) ev["threads"] = *e.threads;
  }
  j["output"] = {{"directory", cfg.output.directory}, {"prefix", cfg.output.prefix}};
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  const std::string text = serialize_config(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace nnbpe
