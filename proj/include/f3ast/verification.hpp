#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "f3ast/rate_region.hpp"

namespace f3ast::harness {

/// Rate-region summary of an enumerable model: r*, H(r*), the policy that
/// achieves it, the proportional-sampling rate, and membership of `queries`.
nlohmann::json oracle_report(const rate_region::RateRegionModel& model, std::span<const double> weights,
                             selection::CorrelationMode mode, const std::vector<std::vector<double>>& queries = {});

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Property suite behind `verify`: rate convergence, exact unbiasedness and
/// variance identities, variance bounds, greedy optimality, oracle
/// consistency, the update-norm bound and run determinism.
std::vector<CheckResult> run_verification_suite(std::uint64_t seed, std::ostream* log = nullptr);

}  // namespace f3ast::harness
