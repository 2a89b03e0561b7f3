#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "f3ast/availability.hpp"
#include "f3ast/data_models.hpp"
#include "f3ast/rng.hpp"
#include "f3ast/selection.hpp"

namespace f3ast::fedtrain {

using ModelParams = Eigen::VectorXd;

/// Client step size. InverseTime gives eta_(t,i) = 2 / (mu (gamma + tE + i)).
struct LearningRateSchedule {
  enum class Kind { Constant, InverseTime };
  Kind kind = Kind::Constant;
  double eta0 = 0.05;
  double mu = 1.0;
  double gamma = 1.0;

  static LearningRateSchedule constant(double eta);
  /// gamma = max(8 L / mu, E).
  static LearningRateSchedule inverse_time(double mu, double smoothness, int local_steps);

  double rate(std::int64_t round, int step, int local_steps) const;
  void validate() const;
};

std::string_view to_string(LearningRateSchedule::Kind kind);
LearningRateSchedule::Kind parse_schedule_kind(std::string_view name);

struct ClientUpdate {
  ClientId client = 0;
  /// v_k = w^(E) - w.
  Eigen::VectorXd delta;
  std::size_t samples_seen = 0;
  /// Largest stochastic-gradient norm met during the E steps.
  double max_grad_norm = 0.0;
};

/// E mini-batch SGD steps from `w` on the client's training split. Batches are
/// drawn without replacement within a step; batch_size >= n uses every sample.
ClientUpdate client_local_sgd(const data::GlmSpec& spec, const ModelParams& w, ClientId client,
                              const data::ClientDataset& train, int local_steps, const LearningRateSchedule& schedule,
                              std::int64_t round, std::size_t batch_size, Rng& rng);

struct AggregateUpdate {
  Eigen::VectorXd delta;
  ClientSet contributing;
};

/// Delta = sum_k (p_k / r_k) v_k. Rates below `r_min` for a contributing
/// client are an internal invariant violation (std::logic_error).
AggregateUpdate aggregate_debias(std::span<const ClientUpdate> updates, std::span<const double> weights,
                                 std::span<const double> rates, Eigen::Index dim, double r_min = 0.0);

/// sum_k p_k v_k / sum_k p_k over the selected clients (zero when the mass is 0).
AggregateUpdate aggregate_weighted_mean(std::span<const ClientUpdate> updates, std::span<const double> weights,
                                        Eigen::Index dim);

/// Unweighted mean of the selected updates.
AggregateUpdate aggregate_mean(std::span<const ClientUpdate> updates, Eigen::Index dim);

enum class AggregationRule { Debiased, WeightedMean, Mean };

std::string_view to_string(AggregationRule rule);
/// Debiased for F3AST and fixed policies, WeightedMean for FedAvg, Mean for PoC.
AggregationRule default_aggregation(selection::PolicyKind policy);

class ServerOptimizer {
 public:
  enum class Kind { Sgd, Adam };

  /// w <- w + lr * Delta. lr = 1 recovers plain model averaging.
  static ServerOptimizer sgd(double lr = 1.0);
  static ServerOptimizer adam(double lr = 0.01, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one server update and advances the step counter.
  ModelParams step(const ModelParams& w, const AggregateUpdate& update);

  Kind kind() const { return kind_; }
  double lr() const { return lr_; }
  std::int64_t steps() const { return steps_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }

 private:
  Kind kind_ = Kind::Sgd;
  double lr_ = 1.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t steps_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

std::string_view to_string(ServerOptimizer::Kind kind);
ServerOptimizer::Kind parse_server_kind(std::string_view name);

struct RoundRecord {
  std::int64_t round = 0;
  ClientSet selected;
  std::size_t num_available = 0;
  int capacity = 0;
  /// Nothing was selected, so the model and the server optimizer are untouched.
  bool skipped = false;
  std::optional<data::Metrics> per_sample;
  std::optional<data::Metrics> per_user;
  std::optional<std::vector<double>> rates;
  double wall_clock_seconds = 0.0;
  double max_update_norm = 0.0;
  /// 2 eta_(t,E) E G with G the largest gradient norm seen this round.
  double update_norm_bound = 0.0;
};

struct TrainerOptions {
  int local_steps = 5;
  std::size_t batch_size = 20;
  LearningRateSchedule schedule;
  AggregationRule aggregation = AggregationRule::Debiased;
  /// Evaluate after rounds t with (t + 1) % eval_every == 0; 0 disables.
  int eval_every = 10;
  /// Snapshot the de-biasing rates with the same rule; 0 disables.
  int rates_every = 0;
};

/// Runs the round loop for one (policy, seed) pair. The configuration source
/// and the policy stream are owned here; batching streams are derived per
/// (round, client) from `seed`.
class FederatedTrainer {
 public:
  FederatedTrainer(const data::FederatedDataset& dataset, data::GlmSpec spec, selection::ClientSelector selector,
                   std::unique_ptr<availability::ConfigurationSource> source, ServerOptimizer server,
                   TrainerOptions options, std::uint64_t seed);

  RoundRecord run_round();

  const ModelParams& model() const { return w_; }
  void set_model(ModelParams w);
  std::int64_t round() const { return round_; }
  const selection::ClientSelector& selector() const { return selector_; }
  const ServerOptimizer& server() const { return server_; }
  const data::GlmSpec& spec() const { return spec_; }

 private:
  const data::FederatedDataset& dataset_;
  data::GlmSpec spec_;
  selection::ClientSelector selector_;
  std::unique_ptr<availability::ConfigurationSource> source_;
  ServerOptimizer server_;
  TrainerOptions options_;
  std::uint64_t seed_;
  Rng policy_rng_;
  ModelParams w_;
  std::int64_t round_ = 0;
};

}  // namespace f3ast::fedtrain
