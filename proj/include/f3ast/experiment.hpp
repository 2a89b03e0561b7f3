#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "f3ast/availability.hpp"
#include "f3ast/config.hpp"
#include "f3ast/data_models.hpp"
#include "f3ast/fedtrain.hpp"
#include "f3ast/selection.hpp"

namespace f3ast::harness {

/// Dataset for one seed, generated from the seed's data stream (or loaded).
data::FederatedDataset build_dataset(const ExperimentConfig& config, std::uint64_t seed);

/// Client weights used for selection: `client_weights` when given, otherwise
/// the dataset's p.
std::vector<double> selection_weights(const ExperimentConfig& config, const data::FederatedDataset* dataset);

/// Availability process for `seed`. Draws only from the seed's availability
/// streams, so every policy sees the same configurations.
std::unique_ptr<availability::ConfigurationSource> build_source(const ExperimentConfig& config,
                                                                std::span<const double> weights, std::uint64_t seed);

/// Exact configuration distribution, for the oracle and the fixed policy.
/// Throws UnsupportedOracleError for time-varying or too-large models.
availability::ConfigurationDistribution enumerable_distribution(const ExperimentConfig& config,
                                                                std::span<const double> weights, std::uint64_t seed);

selection::ClientSelector build_selector(const ExperimentConfig& config, selection::PolicyKind policy,
                                         std::span<const double> weights, std::uint64_t seed);

/// All T rounds of one (policy, seed) pair.
std::vector<fedtrain::RoundRecord> run_single(const ExperimentConfig& config, selection::PolicyKind policy,
                                              std::uint64_t seed, const data::FederatedDataset& dataset);

std::filesystem::path csv_name(selection::PolicyKind policy, std::uint64_t seed);

/// Final-window means over the last `window` evaluated rounds, computed from
/// values as written to the CSV.
nlohmann::json window_summary(const std::vector<fedtrain::RoundRecord>& records, int window);

/// Runs every (policy, seed) pair, writes `<policy>_seed<k>.csv` files and
/// summary.json into the output directory, and returns the summary.
nlohmann::json run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

struct RateReport {
  std::vector<double> optimal;
  std::vector<double> time_average;
  double gap = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::int64_t rounds = 0;
  std::int64_t burn_in = 0;
  double seconds = 0.0;
};

/// Selection loop only (F3AST, no training): time-averaged r(t) after the
/// burn-in versus the oracle optimum, in sup norm.
RateReport run_rate_convergence(const ExperimentConfig& config);

nlohmann::json to_json(const RateReport& report);

}  // namespace f3ast::harness
