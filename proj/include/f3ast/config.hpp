#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "f3ast/availability.hpp"
#include "f3ast/data_models.hpp"
#include "f3ast/fedtrain.hpp"
#include "f3ast/selection.hpp"

namespace f3ast::harness {

/// Every problem found while validating a config, reported together.
class ConfigError : public InvalidInputError {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

enum class DatasetKind { SyntheticIid, SyntheticAlpha, File };

std::string_view to_string(DatasetKind kind);

struct DatasetConfig {
  DatasetKind kind = DatasetKind::SyntheticAlpha;
  data::TaskKind task = data::TaskKind::Softmax;
  double alpha = 1.0;
  double beta = 1.0;
  std::size_t num_clients = 100;
  std::size_t num_samples = 10'000;
  std::size_t samples_per_client = 0;
  /// Unset: 100 for synthetic_iid, 60 for synthetic_alpha.
  std::optional<int> dim;
  int num_classes = 10;
  double validation_fraction = 0.2;
  double l2_reg = 1e-4;
  bool intercept = true;
  std::string path;
};

/// "two_client_example" selects the enumerated two-client fixture; every
/// other name is a built-in independent model.
struct AvailabilityConfig {
  bool two_client_example = false;
  availability::AvailabilityModel model;
};

struct ServerConfig {
  fedtrain::ServerOptimizer::Kind kind = fedtrain::ServerOptimizer::Kind::Sgd;
  /// Unset: 1.0 for sgd, 0.01 for adam.
  std::optional<double> lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ScheduleConfig {
  fedtrain::LearningRateSchedule::Kind kind = fedtrain::LearningRateSchedule::Kind::Constant;
  double eta0 = 0.05;
  double mu = 1.0;
  /// Smoothness constant L; gamma = max(8 L / mu, E).
  double smoothness = 1.0;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  AvailabilityConfig availability;
  availability::CapacitySchedule capacity = availability::CapacitySchedule::constant(10);
  std::vector<selection::PolicyKind> policies{selection::PolicyKind::F3ast};
  /// Power-of-Choice candidate count d; unset means 2 * capacity.
  std::optional<int> poc_candidates;
  ServerConfig server;
  int local_steps = 5;
  std::size_t batch_size = 20;
  ScheduleConfig learning_rate;
  double beta = selection::ParticipationRate::kDefaultBeta;
  double r_min = selection::ParticipationRate::kDefaultFloor;
  /// Initial F3AST rate for every client; unset means 1/N.
  std::optional<double> r_init;
  selection::CorrelationMode correlation = selection::CorrelationMode::Uncorrelated;
  std::int64_t rounds = 1000;
  int eval_every = 10;
  int rates_every = 0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path output_dir = "results";
  bool record_wall_clock = false;
  int summary_window = 100;
  /// Rate-convergence burn-in; unset means ceil(10 / beta).
  std::optional<std::int64_t> burn_in;
  double rate_tolerance = 0.02;
  /// Client weights for selection-only runs; empty means the dataset's p.
  std::vector<double> client_weights;

  int effective_dim() const;
  double effective_server_lr() const;
  std::int64_t effective_burn_in() const;
  int effective_poc_candidates() const;
};

/// Parses and validates. Unknown keys and every constraint violation are
/// collected into one ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> policy;
};

/// `--seed` replaces the seed list, `--policy` the policy list, `--out` the
/// output directory.
void apply_overrides(ExperimentConfig& config, const CliOverrides& overrides);

}  // namespace f3ast::harness
