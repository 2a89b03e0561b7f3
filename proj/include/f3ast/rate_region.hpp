#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "f3ast/availability.hpp"
#include "f3ast/selection.hpp"

namespace f3ast::rate_region {

using availability::ConfigurationDistribution;
using selection::HObjective;
using selection::PolicyTable;

/// The achievable long-term participation region R of an enumerable
/// configuration distribution. R is only reachable through its linear
/// maximization oracle; it is never materialized as facets.
class RateRegionModel {
 public:
  explicit RateRegionModel(ConfigurationDistribution dist);

  const ConfigurationDistribution& distribution() const { return dist_; }
  std::size_t num_clients() const { return dist_.num_clients; }
  std::size_t num_outcomes() const { return dist_.outcomes.size(); }
  PolicyTable::Key key(std::size_t outcome) const;

  /// Every S subset of A_C with |S| <= K_C, the empty set first.
  std::vector<ClientMask> feasible_sets(std::size_t outcome) const;

 private:
  ConfigurationDistribution dist_;
};

/// r = sum_C pi(C) sum_S f_{C,S} 1_S.
std::vector<double> rate_of_policy(const RateRegionModel& model, const PolicyTable& table);

/// Deterministic table picking, per configuration, the set maximizing g . 1_S
/// (positive components only, top K by g, ties to the lowest id).
PolicyTable greedy_policy(const RateRegionModel& model, std::span<const double> direction);

/// argmax_{r in R} g . r, an extreme point of R.
std::vector<double> linear_max_oracle(const RateRegionModel& model, std::span<const double> direction);

struct OptimalRate {
  std::vector<double> rate;
  double objective = 0.0;
  /// Frank-Wolfe duality gap at termination; bounds H(rate) - min_R H.
  double duality_gap = 0.0;
  int iterations = 0;
  /// Clients with p_k > 0 that no configuration ever lets the server pick.
  /// H is unbounded for them; they are excluded and pinned at rate 0.
  std::vector<ClientId> excluded;
  /// Static policy achieving `rate` (mixture of the active greedy vertices).
  PolicyTable policy;
};

/// min_{r in R} H(r) by away-step Frank-Wolfe over the linear oracle, run to
/// duality gap <= tol. H is evaluated with rates floored at r_min.
OptimalRate optimal_rate(const RateRegionModel& model, const HObjective& obj, double tol = 1e-9,
                         double r_min = selection::ParticipationRate::kDefaultFloor, int max_iterations = 200'000);

struct Membership {
  bool inside = false;
  /// Distance from the query to the closest point of R found.
  double distance = 0.0;
  std::vector<double> closest;
  /// Unit g with g . r - max_{r' in R} g . r' = margin > tol when outside.
  std::optional<std::vector<double>> separating_direction;
  double margin = 0.0;
};

/// rho(T) = sum_C pi(C) min(|T n A_C|, K_C). R is the polymatroid
/// {r >= 0 : r(T) <= rho(T) for every T}.
double rank(const RateRegionModel& model, ClientMask subset);

/// Decides r in R within tol. Small models check every rank inequality
/// exactly (margin measured along the unit normal 1_T / sqrt|T|); larger ones
/// fall back to Frank-Wolfe projection of r onto R.
Membership membership(const RateRegionModel& model, std::span<const double> rate, double tol = 1e-6,
                      int max_iterations = 200'000);

struct SelectionCovariance {
  Eigen::MatrixXd sigma;
  std::vector<double> rate;
};

/// Exact covariance of the selection indicator X under `table`.
SelectionCovariance selection_covariance(const RateRegionModel& model, const PolicyTable& table);

/// Tr(Y Y^T Sigma) for Y with rows (p_k / r_k) v_k; the 1/eta^2 factor is the
/// caller's.
double sampling_variance_exact(const Eigen::MatrixXd& y, const SelectionCovariance& cov);

struct VarianceBounds {
  /// 4 E^2 G^2 (sum_k p_k / r_k - 1); holds for every policy.
  double general = 0.0;
  /// 4 E^2 G^2 (sum_k p_k^2 / r_k + sum_k p_k^2); uncorrelated availability.
  double uncorrelated = 0.0;
};

VarianceBounds variance_bounds(std::span<const double> weights, std::span<const double> rate, int local_steps,
                               double grad_bound);

/// Exact policy table of sequential without-replacement sampling proportional
/// to p (the FedAvg selection rule) on every configuration.
PolicyTable proportional_policy(const RateRegionModel& model, std::span<const double> weights);

/// Convex combination of two tables over the same configurations.
PolicyTable mix_policies(const RateRegionModel& model, const PolicyTable& a, const PolicyTable& b, double weight_a);

}  // namespace f3ast::rate_region
