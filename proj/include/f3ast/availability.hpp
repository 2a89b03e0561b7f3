#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "f3ast/rng.hpp"
#include "f3ast/types.hpp"

namespace f3ast::availability {

enum class AvailabilityKind { Always, Scarce, HomeDevices, Smartphones, Uneven };

std::string_view to_string(AvailabilityKind kind);
AvailabilityKind parse_availability_kind(std::string_view name);

/// Parameters of one of the five built-in availability processes. Every
/// built-in model is independent across clients and rounds; only the
/// per-client probability (and, for Smartphones, its time modulation) differs.
struct AvailabilityModel {
  AvailabilityKind kind = AvailabilityKind::Always;
  double scarce_q = 0.2;
  double lognormal_sigma = 0.5;
  double sine_amplitude = 0.4;
  double sine_offset = 0.5;
  int period_steps = 24;
  /// Target mean of q for Uneven (q_k = min(1, c / p_k)).
  double uneven_mean = 0.5;
  /// Filled by derive_client_probs; length N once derived.
  std::vector<double> per_client_q;

  /// Defaults used in the experiments: lognormal sigma 0.5 for HomeDevices
  /// and 0.25 for Smartphones.
  static AvailabilityModel with_defaults(AvailabilityKind kind);

  void validate() const;
};

/// Realization of one round's configuration: who is reachable, and how many
/// of them the server may pick.
struct ConfigurationSample {
  std::int64_t round = 0;
  ClientSet available;
  int capacity = 0;
};

struct CapacitySchedule {
  enum class Kind { Constant, PerRoundList };
  Kind kind = Kind::Constant;
  int constant_k = 10;
  /// Indexed by round; cycles when t runs past the end.
  std::vector<int> schedule;

  static CapacitySchedule constant(int k);
  static CapacitySchedule per_round(std::vector<int> values);

  int at(std::int64_t t) const;
  void validate() const;
};

/// Per-client availability probabilities for `model` given client weights p
/// (p only matters for Uneven; its length fixes N for every kind).
std::vector<double> derive_client_probs(const AvailabilityModel& model, std::span<const double> weights,
                                        std::uint64_t seed);

/// Sine modulation f_t of the Smartphones model; 1 for every other kind.
double time_modulation(const AvailabilityModel& model, std::int64_t t);

/// Availability probability of client k at round t (requires per_client_q).
double availability_probability(const AvailabilityModel& model, ClientId k, std::int64_t t);

/// Draws one configuration. Consumes exactly N uniform draws from `rng`
/// regardless of the model so streams stay aligned across kinds.
ConfigurationSample sample_round(const AvailabilityModel& model, const CapacitySchedule& capacity,
                                 std::int64_t t, Rng& rng);

// ---------------------------------------------------------------------------
// Enumerable configuration distributions (oracle fixtures)

struct ConfigurationOutcome {
  ClientMask available = 0;
  int capacity = 0;
  double probability = 0.0;
};

/// Finite, stationary distribution over configurations. Patterns are distinct
/// (available, capacity) pairs and probabilities sum to 1 within 1e-12.
struct ConfigurationDistribution {
  std::size_t num_clients = 0;
  std::vector<ConfigurationOutcome> outcomes;

  void validate() const;
  /// P(client k available).
  std::vector<double> marginals() const;
};

/// The two-client fixture: P(A1=1)=0.375, P(A2=1)=0.8, independent, K=1.
ConfigurationDistribution two_client_example();

/// All 2^N availability patterns of independent Bernoulli(q_k) clients with a
/// constant capacity. N must be at most 16.
ConfigurationDistribution enumerate_independent(std::span<const double> q, int capacity);

// ---------------------------------------------------------------------------
// Configuration processes driving a simulation

class ConfigurationSource {
 public:
  virtual ~ConfigurationSource() = default;
  virtual ConfigurationSample next(std::int64_t t) = 0;
  virtual std::size_t num_clients() const = 0;
};

/// One of the five built-in models with its own availability stream.
class IndependentAvailability final : public ConfigurationSource {
 public:
  IndependentAvailability(AvailabilityModel model, CapacitySchedule capacity, Rng rng);

  ConfigurationSample next(std::int64_t t) override;
  std::size_t num_clients() const override { return model_.per_client_q.size(); }
  const AvailabilityModel& model() const { return model_; }

 private:
  AvailabilityModel model_;
  CapacitySchedule capacity_;
  Rng rng_;
};

/// i.i.d. draws from an enumerable distribution (e.g. the two-client fixture).
class EnumeratedConfigurations final : public ConfigurationSource {
 public:
  EnumeratedConfigurations(ConfigurationDistribution dist, Rng rng);

  ConfigurationSample next(std::int64_t t) override;
  std::size_t num_clients() const override { return dist_.num_clients; }
  const ConfigurationDistribution& distribution() const { return dist_; }

 private:
  ConfigurationDistribution dist_;
  std::vector<double> cumulative_;
  Rng rng_;
};

/// User-supplied Markov chain over configurations. Rows of `transition` are
/// probability vectors over `states`.
class MarkovConfigurationChain final : public ConfigurationSource {
 public:
  struct State {
    ClientSet available;
    int capacity = 0;
  };

  MarkovConfigurationChain(std::size_t num_clients, std::vector<State> states,
                           std::vector<std::vector<double>> transition, std::size_t initial_state, Rng rng);

  ConfigurationSample next(std::int64_t t) override;
  std::size_t num_clients() const override { return num_clients_; }

  /// Stationary distribution by power iteration (requires an irreducible,
  /// aperiodic chain and N <= 32).
  ConfigurationDistribution stationary_distribution(double tol = 1e-14, int max_iter = 1'000'000) const;

 private:
  std::size_t num_clients_;
  std::vector<State> states_;
  std::vector<std::vector<double>> transition_;
  std::size_t current_;
  Rng rng_;
};

}  // namespace f3ast::availability
