#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "f3ast/availability.hpp"
#include "f3ast/rng.hpp"
#include "f3ast/types.hpp"

namespace f3ast::selection {

using availability::ConfigurationSample;

enum class CorrelationMode { Uncorrelated, PositivelyCorrelated };

std::string_view to_string(CorrelationMode mode);
CorrelationMode parse_correlation_mode(std::string_view name);

/// Variance surrogate H(r) = sum_k p_k^2 / r_k (uncorrelated availability) or
/// sum_k p_k / r_k (positively correlated availability).
struct HObjective {
  std::vector<double> weights;
  CorrelationMode mode = CorrelationMode::Uncorrelated;

  /// Throws unless weights are non-negative and sum to 1 (within 1e-9).
  void validate() const;
  /// Coefficient c_k in H(r) = sum_k c_k / r_k.
  double coefficient(std::size_t k) const;
};

double h_value(const HObjective& obj, std::span<const double> rate);
std::vector<double> h_gradient(const HObjective& obj, std::span<const double> rate);

/// Exponentially smoothed participation rate r(t), kept in [r_min, 1]^N.
class ParticipationRate {
 public:
  static constexpr double kDefaultBeta = 0.001;
  static constexpr double kDefaultFloor = 1e-4;

  /// Uniform initialization r(0) = 1/N.
  ParticipationRate(std::size_t num_clients, double beta = kDefaultBeta, double r_min = kDefaultFloor);
  ParticipationRate(std::vector<double> initial, double beta = kDefaultBeta, double r_min = kDefaultFloor);

  /// r <- (1 - beta) r + beta 1_S, then clamp below at r_min.
  void smooth_update(const ClientSet& selected);

  std::span<const double> values() const { return rate_; }
  double operator[](std::size_t k) const { return rate_[k]; }
  std::size_t size() const { return rate_.size(); }
  double beta() const { return beta_; }
  double floor() const { return floor_; }

 private:
  std::vector<double> rate_;
  double beta_;
  double floor_;
};

struct SelectionResult {
  ClientSet selected;
  std::optional<std::vector<double>> utilities;
};

/// Greedy argmax of -grad H(r) . 1_S over feasible S: the min(K, |A|)
/// available clients with the largest utility, ties to the lowest id.
SelectionResult f3ast_select(const HObjective& obj, const ParticipationRate& rate, const ConfigurationSample& config);

/// Sequential draws without replacement, each proportional to p over the
/// remaining available clients. Zero mass over the available set selects nothing.
SelectionResult fedavg_select(std::span<const double> weights, const ConfigurationSample& config, Rng& rng);

/// Current local loss F_k(w) of a client, queried by Power-of-Choice.
using LossProvider = std::function<double(ClientId)>;

/// Power-of-Choice: draw min(d, |A|) candidates as fedavg_select does, then
/// keep the M with the highest loss (ties to the lowest id).
SelectionResult poc_select(std::span<const double> weights, const ConfigurationSample& config,
                           const LossProvider& losses, int candidates, int keep, Rng& rng);

/// Static configuration-dependent policy: for each configuration (A, K), a
/// distribution over feasible subsets S of A with |S| <= K.
class PolicyTable {
 public:
  struct Key {
    ClientMask available = 0;
    int capacity = 0;
    auto operator<=>(const Key&) const = default;
  };
  struct Entry {
    ClientMask subset = 0;
    double probability = 0.0;
  };

  /// Validates feasibility and normalization (1e-9); replaces an existing row.
  void set(Key key, std::vector<Entry> entries);
  const std::vector<Entry>* find(Key key) const;
  const std::vector<Entry>& at(Key key) const;
  std::size_t size() const { return rows_.size(); }
  const std::vector<std::pair<Key, std::vector<Entry>>>& rows() const { return rows_; }

 private:
  std::vector<std::pair<Key, std::vector<Entry>>> rows_;  // sorted by key
};

SelectionResult fixed_policy_select(const PolicyTable& table, const ConfigurationSample& config, Rng& rng);

// ---------------------------------------------------------------------------

enum class PolicyKind { F3ast, FedAvg, PowerOfChoice, Fixed };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);

/// Stateful selector owned by one simulation loop. For F3AST the rate is
/// updated inside select(), before clients train.
class ClientSelector {
 public:
  static ClientSelector f3ast(HObjective objective, ParticipationRate rate);
  static ClientSelector fedavg(std::vector<double> weights);
  static ClientSelector power_of_choice(std::vector<double> weights, int candidates, int keep);
  /// `rates` must be the exact long-term rate achieved by `table`.
  static ClientSelector fixed(PolicyTable table, std::vector<double> rates);

  SelectionResult select(const ConfigurationSample& config, Rng& rng, const LossProvider& losses);

  PolicyKind kind() const { return kind_; }
  /// Rate used for de-biasing: r(t) for F3AST, the table's rate for Fixed.
  std::span<const double> rates() const;
  double rate_floor() const;
  const std::optional<ParticipationRate>& participation() const { return rate_; }

 private:
  PolicyKind kind_ = PolicyKind::FedAvg;
  std::vector<double> weights_;
  std::optional<HObjective> objective_;
  std::optional<ParticipationRate> rate_;
  std::optional<PolicyTable> table_;
  std::vector<double> fixed_rates_;
  int candidates_ = 0;
  int keep_ = 0;
};

}  // namespace f3ast::selection
