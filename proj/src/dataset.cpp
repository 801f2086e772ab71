#include "nnbpe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "nnbpe/errors.hpp"
#include "nnbpe/random.hpp"

namespace nnbpe {

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ThetaGrid::ThetaGrid(int d, double theta_min, double theta_max) : d_(d), min_(theta_min), max_(theta_max) {
  if (d < 2) throw InvalidArgument("grid.d: must be >= 2");
  if (!std::isfinite(theta_min) || !std::isfinite(theta_max) || !(theta_max > theta_min)) {
    throw InvalidArgument("grid: theta_max must exceed theta_min");
  }
}

std::vector<double> ThetaGrid::points() const {
  std::vector<double> pts(static_cast<std::size_t>(d_));
  for (int j = 0; j < d_; ++j) pts[static_cast<std::size_t>(j)] = point(j);
  return pts;
}

TrainingAllocation allocate(const ThetaGrid& grid, const AllocationShape& shape, std::int64_t m_train) {
  const int d = grid.size();
  if (m_train < 0) throw InvalidArgument("allocate: m_train must be >= 0");
  std::vector<double> w(static_cast<std::size_t>(d), 0.0);

  if (std::holds_alternative<UniformAllocation>(shape)) {
    if (m_train < d) throw InvalidArgument("allocate: uniform allocation needs m_train >= d");
    std::fill(w.begin(), w.end(), 1.0);
  } else if (const auto* step = std::get_if<StepAllocation>(&shape)) {
    if (step->j_cut < 0 || step->j_cut >= d) {
      throw InvalidArgument("allocate: step j_cut must lie in [0, d)");
    }
    std::fill(w.begin() + step->j_cut, w.end(), 1.0);
  } else {
    const auto& custom = std::get<CustomAllocation>(shape);
    if (static_cast<int>(custom.weights.size()) != d) {
      throw InvalidArgument("allocate: custom weights must have one entry per grid point");
    }
    for (double x : custom.weights) {
      if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument("allocate: weights must be finite and >= 0");
    }
    w = custom.weights;
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw InvalidArgument("allocate: weights sum to zero");
  for (double& x : w) x /= total;

  TrainingAllocation alloc;
  alloc.weights = w;
  alloc.m_train = m_train;
  alloc.counts.resize(static_cast<std::size_t>(d));
  std::vector<double> remainder(static_cast<std::size_t>(d));
  std::int64_t assigned = 0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double exact = static_cast<double>(m_train) * w[j];
    alloc.counts[j] = static_cast<std::int64_t>(std::floor(exact));
    remainder[j] = exact - static_cast<double>(alloc.counts[j]);
    assigned += alloc.counts[j];
  }
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < m_train; ++k, ++assigned) ++alloc.counts[order[k % order.size()]];
  return alloc;
}

// ---------------------------------------------------------------------------

TrainingSet::TrainingSet(ThetaGrid grid, OutcomeSet outcomes, std::vector<TrainingRecord> records,
                         std::optional<ModelDescriptor> model, std::uint64_t seed)
    : grid_(grid), outcomes_(outcomes), records_(std::move(records)), model_(std::move(model)), seed_(seed) {
  counts_ = Eigen::MatrixXd::Zero(outcomes_.size(), grid_.size());
  for (const auto& r : records_) {
    if (r.outcome < 0 || r.outcome >= outcomes_.size()) throw DataError("training set: outcome index out of range");
    if (r.label < 0 || r.label >= grid_.size()) throw DataError("training set: label index out of range");
    counts_(r.outcome, r.label) += 1.0;
  }
}

std::int64_t TrainingSet::label_count(int j) const {
  return static_cast<std::int64_t>(counts_.col(j).sum());
}

TrainingSet generate_training_set(const LikelihoodModel& model, const ThetaGrid& grid,
                                  const TrainingAllocation& alloc, std::uint64_t seed) {
  if (static_cast<int>(alloc.counts.size()) != grid.size()) {
    throw InvalidArgument("generate_training_set: allocation does not match the grid");
  }
  Rng rng(seed);
  std::vector<TrainingRecord> records;
  records.reserve(static_cast<std::size_t>(alloc.m_train));
  for (int j = 0; j < grid.size(); ++j) {
    const auto count = alloc.counts[static_cast<std::size_t>(j)];
    if (count == 0) continue;
    const Eigen::VectorXd p = model.probabilities(grid.point(j));
    const CategoricalSampler sampler(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    for (std::int64_t i = 0; i < count; ++i) records.push_back({sampler.sample(rng), j});
  }
  rng.shuffle(records);
  return TrainingSet(grid, model.outcomes(), std::move(records), model.descriptor(), seed);
}

std::vector<int> sample_sequence(const LikelihoodModel& model, double theta_true, int m, std::uint64_t seed) {
  if (m < 0) throw InvalidArgument("sample_sequence: m must be >= 0");
  const Eigen::VectorXd p = model.probabilities(theta_true);
  const CategoricalSampler sampler(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
  Rng rng(seed);
  std::vector<int> seq(static_cast<std::size_t>(m));
  for (int& mu : seq) mu = sampler.sample(rng);
  return seq;
}

std::vector<int> outcome_counts(std::span<const int> sequence, int n_outcomes) {
  std::vector<int> counts(static_cast<std::size_t>(n_outcomes), 0);
  for (int mu : sequence) {
    if (mu < 0 || mu >= n_outcomes) throw InvalidArgument("outcome index out of range");
    ++counts[static_cast<std::size_t>(mu)];
  }
  return counts;
}

FrequencyTable empirical_frequencies(const TrainingSet& ts) {
  FrequencyTable table;
  table.freq = ts.counts();
  table.empty.assign(static_cast<std::size_t>(ts.grid().size()), false);
  table.column_counts.assign(static_cast<std::size_t>(ts.grid().size()), 0);
  for (int j = 0; j < ts.grid().size(); ++j) {
    const double total = table.freq.col(j).sum();
    table.column_counts[static_cast<std::size_t>(j)] = static_cast<std::int64_t>(total);
    if (total == 0.0) {
      table.empty[static_cast<std::size_t>(j)] = true;
    } else {
      table.freq.col(j) /= total;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Text format

void write_training_set(std::ostream& os, const TrainingSet& ts, std::span<const std::string> extra_metadata) {
  os << "# nnbpe-training-set v1\n";
  os << "# grid: d=" << ts.grid().size() << " theta_min=" << fmt17(ts.grid().min())
     << " theta_max=" << fmt17(ts.grid().max()) << "\n";
  os << "# outcomes: n_qubits=" << ts.outcomes().n_qubits() << "\n";
  os << "# model: " << (ts.model() ? nlohmann::json(*ts.model()).dump() : std::string("null")) << "\n";
  os << "# seed: " << ts.seed() << "\n";
  os << "# records: " << ts.size() << "\n";
  for (const auto& line : extra_metadata) os << "# " << line << "\n";
  os << "mu_value\tlabel_index\n";
  // Outcome values are half-integers, exact in %g form.
  std::vector<std::string> mu_text;
  for (double v : ts.outcomes().values()) mu_text.push_back(fmt17(v));
  for (const auto& r : ts.records()) {
    os << mu_text[static_cast<std::size_t>(r.outcome)] << '\t' << r.label << '\n';
  }
  if (!os) throw DataError("failed to write training set");
}

namespace {

std::string header_value(const std::string& line, const std::string& key) {
  const std::string prefix = "# " + key + ":";
  if (line.rfind(prefix, 0) != 0) throw DataError("training set: expected header '" + prefix + "'");
  auto value = line.substr(prefix.size());
  const auto first = value.find_first_not_of(' ');
  return first == std::string::npos ? std::string() : value.substr(first);
}

double field_double(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  if (pos == std::string::npos) throw DataError("training set: missing field " + key);
  return std::stod(text.substr(pos + key.size() + 1));
}

}  // namespace

TrainingSet read_training_set(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "# nnbpe-training-set v1") {
    throw DataError("training set: missing or unsupported format header");
  }
  try {
    std::getline(is, line);
    const auto grid_text = header_value(line, "grid");
    const ThetaGrid grid(static_cast<int>(field_double(grid_text, "d")), field_double(grid_text, "theta_min"),
                         field_double(grid_text, "theta_max"));
    std::getline(is, line);
    const OutcomeSet outcomes(static_cast<int>(field_double(header_value(line, "outcomes"), "n_qubits")));
    std::getline(is, line);
    const auto model_json = nlohmann::json::parse(header_value(line, "model"));
    std::optional<ModelDescriptor> model;
    if (!model_json.is_null()) model = model_json.get<ModelDescriptor>();
    std::getline(is, line);
    const std::uint64_t seed = std::stoull(header_value(line, "seed"));
    std::getline(is, line);
    const std::size_t n_records = std::stoull(header_value(line, "records"));

    while (std::getline(is, line) && line.rfind("#", 0) == 0) {
    }
    if (line != "mu_value\tlabel_index") throw DataError("training set: missing column header");

    std::vector<TrainingRecord> records;
    records.reserve(n_records);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw DataError("training set: malformed row '" + line + "'");
      const double mu = std::stod(line.substr(0, tab));
      const int label = std::stoi(line.substr(tab + 1));
      const auto index = outcomes.index_of(mu);
      if (!index) throw DataError("training set: value " + line.substr(0, tab) + " is not a valid outcome");
      records.push_back({*index, label});
    }
    if (records.size() != n_records) throw DataError("training set: record count does not match header");
    return TrainingSet(grid, outcomes, std::move(records), model, seed);
  } catch (const std::invalid_argument&) {
    throw DataError("training set: malformed number");
  } catch (const std::out_of_range&) {
    throw DataError("training set: number out of range");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("training set: bad model descriptor: ") + e.what());
  }
}

}  // namespace nnbpe
