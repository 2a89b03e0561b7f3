#include "f3ast/fedtrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

namespace f3ast::fedtrain {

LearningRateSchedule LearningRateSchedule::constant(double eta) {
  LearningRateSchedule s;
  s.kind = Kind::Constant;
  s.eta0 = eta;
  return s;
}

LearningRateSchedule LearningRateSchedule::inverse_time(double mu, double smoothness, int local_steps) {
  LearningRateSchedule s;
  s.kind = Kind::InverseTime;
  s.mu = mu;
  s.gamma = std::max(8.0 * smoothness / mu, static_cast<double>(local_steps));
  return s;
}

double LearningRateSchedule::rate(std::int64_t round, int step, int local_steps) const {
  if (kind == Kind::Constant) return eta0;
  return 2.0 / (mu * (gamma + static_cast<double>(round) * local_steps + step));
}

void LearningRateSchedule::validate() const {
  if (kind == Kind::Constant && !(eta0 > 0.0)) throw InvalidInputError("constant learning rate must be > 0");
  if (kind == Kind::InverseTime && !(mu > 0.0 && gamma > 0.0))
    throw InvalidInputError("inverse-time schedule needs mu > 0 and gamma > 0");
}

std::string_view to_string(LearningRateSchedule::Kind kind) {
  return kind == LearningRateSchedule::Kind::Constant ? "constant" : "inverse_time";
}

LearningRateSchedule::Kind parse_schedule_kind(std::string_view name) {
  if (name == "constant") return LearningRateSchedule::Kind::Constant;
  if (name == "inverse_time") return LearningRateSchedule::Kind::InverseTime;
  throw InvalidInputError("unknown learning-rate schedule '" + std::string(name) + "'");
}

ClientUpdate client_local_sgd(const data::GlmSpec& spec, const ModelParams& w, ClientId client,
                              const data::ClientDataset& train, int local_steps, const LearningRateSchedule& schedule,
                              std::int64_t round, std::size_t batch_size, Rng& rng) {
  if (local_steps < 0) throw InvalidInputError("local steps must be >= 0");
  if (train.size() == 0) throw InvalidInputError("client " + std::to_string(client) + " has no training data");
  if (batch_size == 0) throw InvalidInputError("batch size must be >= 1");

  ClientUpdate out;
  out.client = client;
  ModelParams local = w;
  const std::size_t n = train.size();
  const std::size_t m = std::min(batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int i = 0; i < local_steps; ++i) {
    if (m < n) {
      for (std::size_t j = 0; j < m; ++j) {
        const auto pick = j + static_cast<std::size_t>(uniform_index(rng, n - j));
        std::swap(order[j], order[pick]);
      }
    }
    const auto lg = data::loss_and_grad(spec, local, train, std::span<const std::size_t>(order.data(), m));
    if (!lg.grad.allFinite() || !std::isfinite(lg.loss)) {
      std::ostringstream msg;
      msg << "non-finite gradient at client " << client << ", round " << round << ", local step " << i
          << " (loss " << lg.loss << ", |w| " << local.norm() << ")";
      throw NonFiniteError(msg.str());
    }
    out.max_grad_norm = std::max(out.max_grad_norm, lg.grad.norm());
    local -= schedule.rate(round, i, local_steps) * lg.grad;
    out.samples_seen += m;
  }
  out.delta = local - w;
  return out;
}

AggregateUpdate aggregate_debias(std::span<const ClientUpdate> updates, std::span<const double> weights,
                                 std::span<const double> rates, Eigen::Index dim, double r_min) {
  AggregateUpdate out{Eigen::VectorXd::Zero(dim), {}};
  for (const auto& u : updates) {
    if (u.delta.size() != dim) throw DimensionMismatchError("client update has the wrong dimension");
    const double r = rates[u.client];
    if (!(r > 0.0) || r < r_min) throw std::logic_error("de-biasing rate below the floor for client " + std::to_string(u.client));
    out.delta += (weights[u.client] / r) * u.delta;
    out.contributing.push_back(u.client);
  }
  return out;
}

AggregateUpdate aggregate_weighted_mean(std::span<const ClientUpdate> updates, std::span<const double> weights,
                                        Eigen::Index dim) {
  AggregateUpdate out{Eigen::VectorXd::Zero(dim), {}};
  double mass = 0.0;
  for (const auto& u : updates) {
    if (u.delta.size() != dim) throw DimensionMismatchError("client update has the wrong dimension");
    out.delta += weights[u.client] * u.delta;
    mass += weights[u.client];
    out.contributing.push_back(u.client);
  }
  if (mass > 0.0) {
    out.delta /= mass;
  } else {
    out.delta.setZero();
  }
  return out;
}

AggregateUpdate aggregate_mean(std::span<const ClientUpdate> updates, Eigen::Index dim) {
  AggregateUpdate out{Eigen::VectorXd::Zero(dim), {}};
  for (const auto& u : updates) {
    if (u.delta.size() != dim) throw DimensionMismatchError("client update has the wrong dimension");
    out.delta += u.delta;
    out.contributing.push_back(u.client);
  }
  if (!updates.empty()) out.delta /= static_cast<double>(updates.size());
  return out;
}

std::string_view to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::Debiased: return "debiased";
    case AggregationRule::WeightedMean: return "weighted_mean";
    case AggregationRule::Mean: return "mean";
  }
  return "unknown";
}

AggregationRule default_aggregation(selection::PolicyKind policy) {
  switch (policy) {
    case selection::PolicyKind::F3ast:
    case selection::PolicyKind::Fixed: return AggregationRule::Debiased;
    case selection::PolicyKind::FedAvg: return AggregationRule::WeightedMean;
    case selection::PolicyKind::PowerOfChoice: return AggregationRule::Mean;
  }
  return AggregationRule::Debiased;
}

// ---------------------------------------------------------------------------

ServerOptimizer ServerOptimizer::sgd(double lr) {
  if (!(lr > 0.0)) throw InvalidInputError("server learning rate must be > 0");
  ServerOptimizer s;
  s.kind_ = Kind::Sgd;
  s.lr_ = lr;
  return s;
}

ServerOptimizer ServerOptimizer::adam(double lr, double beta1, double beta2, double eps) {
  if (!(lr > 0.0)) throw InvalidInputError("server learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InvalidInputError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw InvalidInputError("Adam epsilon must be > 0");
  ServerOptimizer s;
  s.kind_ = Kind::Adam;
  s.lr_ = lr;
  s.beta1_ = beta1;
  s.beta2_ = beta2;
  s.eps_ = eps;
  return s;
}

ModelParams ServerOptimizer::step(const ModelParams& w, const AggregateUpdate& update) {
  if (update.delta.size() != w.size()) throw DimensionMismatchError("aggregate update and model differ in dimension");
  ++steps_;
  if (kind_ == Kind::Sgd) return w + lr_ * update.delta;

  if (m_.size() == 0) {
    m_ = Eigen::VectorXd::Zero(w.size());
    v_ = Eigen::VectorXd::Zero(w.size());
  }
  if (m_.size() != w.size()) throw DimensionMismatchError("Adam moments and model differ in dimension");
  m_ = beta1_ * m_ + (1.0 - beta1_) * update.delta;
  v_ = beta2_ * v_ + (1.0 - beta2_) * update.delta.cwiseProduct(update.delta);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const Eigen::ArrayXd m_hat = m_.array() / c1;
  const Eigen::ArrayXd v_hat = v_.array() / c2;
  return w + (lr_ * m_hat / (v_hat.sqrt() + eps_)).matrix();
}

std::string_view to_string(ServerOptimizer::Kind kind) { return kind == ServerOptimizer::Kind::Sgd ? "sgd" : "adam"; }

ServerOptimizer::Kind parse_server_kind(std::string_view name) {
  if (name == "sgd") return ServerOptimizer::Kind::Sgd;
  if (name == "adam") return ServerOptimizer::Kind::Adam;
  throw InvalidInputError("unknown server optimizer '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

FederatedTrainer::FederatedTrainer(const data::FederatedDataset& dataset, data::GlmSpec spec,
                                   selection::ClientSelector selector,
                                   std::unique_ptr<availability::ConfigurationSource> source, ServerOptimizer server,
                                   TrainerOptions options, std::uint64_t seed)
    : dataset_(dataset),
      spec_(spec),
      selector_(std::move(selector)),
      source_(std::move(source)),
      server_(std::move(server)),
      options_(options),
      seed_(seed),
      policy_rng_(make_stream(seed, Stream::Policy)),
      w_(Eigen::VectorXd::Zero(spec.num_params())) {
  if (!source_) throw InvalidInputError("trainer needs a configuration source");
  if (source_->num_clients() != dataset_.num_clients())
    throw DimensionMismatchError("availability process and dataset disagree on the number of clients");
  if (options_.local_steps < 0) throw InvalidInputError("local steps must be >= 0");
  if (options_.batch_size == 0) throw InvalidInputError("batch size must be >= 1");
  options_.schedule.validate();
}

void FederatedTrainer::set_model(ModelParams w) {
  if (w.size() != spec_.num_params()) throw DimensionMismatchError("model has the wrong dimension");
  w_ = std::move(w);
}

RoundRecord FederatedTrainer::run_round() {
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t t = round_;
  RoundRecord rec;
  rec.round = t;

  const auto config = source_->next(t);
  rec.num_available = config.available.size();
  rec.capacity = config.capacity;

  selection::LossProvider losses = [&](ClientId k) {
    return data::full_loss_and_grad(spec_, w_, dataset_.clients.at(k).train).loss;
  };
  auto selected = selector_.select(config, policy_rng_, losses);
  rec.selected = selected.selected;
  rec.skipped = rec.selected.empty();

  if (!rec.skipped) {
    std::vector<ClientUpdate> updates;
    updates.reserve(rec.selected.size());
    double g_round = 0.0;
    for (ClientId k : rec.selected) {
      Rng batching = make_stream(seed_, Stream::Batching, static_cast<std::uint64_t>(t), k);
      updates.push_back(client_local_sgd(spec_, w_, k, dataset_.clients[k].train, options_.local_steps,
                                         options_.schedule, t, options_.batch_size, batching));
      rec.max_update_norm = std::max(rec.max_update_norm, updates.back().delta.norm());
      g_round = std::max(g_round, updates.back().max_grad_norm);
    }
    rec.update_norm_bound = 2.0 * options_.schedule.rate(t, options_.local_steps, options_.local_steps) *
                            options_.local_steps * g_round;

    AggregateUpdate agg;
    switch (options_.aggregation) {
      case AggregationRule::Debiased:
        agg = aggregate_debias(updates, dataset_.weights, selector_.rates(), w_.size(), selector_.rate_floor());
        break;
      case AggregationRule::WeightedMean:
        agg = aggregate_weighted_mean(updates, dataset_.weights, w_.size());
        break;
      case AggregationRule::Mean:
        agg = aggregate_mean(updates, w_.size());
        break;
    }
    if (!agg.delta.allFinite()) throw NonFiniteError("aggregate update is not finite at round " + std::to_string(t));
    w_ = server_.step(w_, agg);
  }

  const auto due = [t](int every) { return every > 0 && (t + 1) % every == 0; };
  if (due(options_.eval_every)) {
    rec.per_sample = data::evaluate(spec_, w_, dataset_, data::EvalMode::PerSample);
    rec.per_user = data::evaluate(spec_, w_, dataset_, data::EvalMode::PerUser);
  }
  if (due(options_.rates_every)) {
    const auto r = selector_.rates();
    if (!r.empty()) rec.rates = std::vector<double>(r.begin(), r.end());
  }
  ++round_;
  rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace f3ast::fedtrain
