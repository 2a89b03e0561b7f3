#include "f3ast/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include "f3ast/csv.hpp"
#include "f3ast/rate_region.hpp"

namespace f3ast::harness {

namespace {

constexpr std::size_t kMaxEnumerableClients = 16;

bool has_metric(const fedtrain::RoundRecord& r) { return r.per_sample.has_value() && r.per_user.has_value(); }

}  // namespace

data::FederatedDataset build_dataset(const ExperimentConfig& config, std::uint64_t seed) {
  const auto& d = config.dataset;
  switch (d.kind) {
    case DatasetKind::SyntheticIid: {
      data::SyntheticIidOptions o;
      o.num_clients = d.num_clients;
      o.num_samples = d.num_samples;
      o.dim = config.effective_dim();
      o.task = d.task;
      o.num_classes = d.num_classes;
      o.validation_fraction = d.validation_fraction;
      return data::generate_synthetic_iid(seed, o);
    }
    case DatasetKind::SyntheticAlpha: {
      data::SyntheticAlphaOptions o;
      o.alpha = d.alpha;
      o.beta = d.beta;
      o.num_clients = d.num_clients;
      o.samples_per_client = d.samples_per_client;
      o.dim = config.effective_dim();
      o.num_classes = d.num_classes;
      o.validation_fraction = d.validation_fraction;
      return data::generate_synthetic_alpha(seed, o);
    }
    case DatasetKind::File:
      return data::load_dataset(d.path);
  }
  throw InvalidInputError("unknown dataset kind");
}

std::vector<double> selection_weights(const ExperimentConfig& config, const data::FederatedDataset* dataset) {
  if (!config.client_weights.empty()) {
    if (dataset && dataset->num_clients() != config.client_weights.size())
      throw ConfigError({"client_weights: length differs from the dataset's client count"});
    return config.client_weights;
  }
  if (dataset) return dataset->weights;
  if (config.availability.two_client_example) return {0.5, 0.5};
  throw InvalidInputError("client weights need either client_weights or a dataset");
}

std::unique_ptr<availability::ConfigurationSource> build_source(const ExperimentConfig& config,
                                                                std::span<const double> weights, std::uint64_t seed) {
  if (config.availability.two_client_example) {
    if (weights.size() != 2) throw ConfigError({"availability: the two-client fixture needs exactly two clients"});
    return std::make_unique<availability::EnumeratedConfigurations>(availability::two_client_example(),
                                                                    make_stream(seed, Stream::Availability));
  }
  auto model = config.availability.model;
  model.per_client_q = availability::derive_client_probs(model, weights, seed);
  return std::make_unique<availability::IndependentAvailability>(std::move(model), config.capacity,
                                                                 make_stream(seed, Stream::Availability));
}

availability::ConfigurationDistribution enumerable_distribution(const ExperimentConfig& config,
                                                                std::span<const double> weights, std::uint64_t seed) {
  if (config.availability.two_client_example) {
    if (weights.size() != 2) throw ConfigError({"availability: the two-client fixture needs exactly two clients"});
    return availability::two_client_example();
  }
  const auto& model = config.availability.model;
  if (model.kind == availability::AvailabilityKind::Smartphones)
    throw UnsupportedOracleError("the smartphones model is time-varying and has no stationary enumeration");
  if (config.capacity.kind != availability::CapacitySchedule::Kind::Constant)
    throw UnsupportedOracleError("the oracle needs a constant capacity");
  if (weights.size() > kMaxEnumerableClients)
    throw UnsupportedOracleError("the oracle enumerates at most " + std::to_string(kMaxEnumerableClients) +
                                 " independent clients, got " + std::to_string(weights.size()));
  const auto q = availability::derive_client_probs(model, weights, seed);
  return availability::enumerate_independent(q, config.capacity.constant_k);
}

selection::ClientSelector build_selector(const ExperimentConfig& config, selection::PolicyKind policy,
                                         std::span<const double> weights, std::uint64_t seed) {
  std::vector<double> p(weights.begin(), weights.end());
  switch (policy) {
    case selection::PolicyKind::F3ast: {
      selection::HObjective obj{p, config.correlation};
      auto rate = config.r_init
                      ? selection::ParticipationRate(std::vector<double>(p.size(), *config.r_init), config.beta,
                                                     config.r_min)
                      : selection::ParticipationRate(p.size(), config.beta, config.r_min);
      return selection::ClientSelector::f3ast(std::move(obj), std::move(rate));
    }
    case selection::PolicyKind::FedAvg:
      return selection::ClientSelector::fedavg(std::move(p));
    case selection::PolicyKind::PowerOfChoice: {
      const int keep = config.capacity.kind == availability::CapacitySchedule::Kind::Constant
                           ? config.capacity.constant_k
                           : *std::max_element(config.capacity.schedule.begin(), config.capacity.schedule.end());
      return selection::ClientSelector::power_of_choice(std::move(p), config.effective_poc_candidates(), keep);
    }
    case selection::PolicyKind::Fixed: {
      const rate_region::RateRegionModel model(enumerable_distribution(config, p, seed));
      const auto opt = rate_region::optimal_rate(model, {p, config.correlation}, 1e-9, config.r_min);
      auto rates = rate_region::rate_of_policy(model, opt.policy);
      return selection::ClientSelector::fixed(opt.policy, std::move(rates));
    }
  }
  throw InvalidInputError("unknown policy");
}

std::vector<fedtrain::RoundRecord> run_single(const ExperimentConfig& config, selection::PolicyKind policy,
                                              std::uint64_t seed, const data::FederatedDataset& dataset) {
  const auto weights = selection_weights(config, &dataset);
  const auto spec = data::GlmSpec::for_dataset(dataset, config.dataset.l2_reg, config.dataset.intercept);

  fedtrain::TrainerOptions options;
  options.local_steps = config.local_steps;
  options.batch_size = config.batch_size;
  options.aggregation = fedtrain::default_aggregation(policy);
  options.eval_every = config.eval_every;
  options.rates_every = config.rates_every;
  const auto& lr = config.learning_rate;
  options.schedule = lr.kind == fedtrain::LearningRateSchedule::Kind::Constant
                         ? fedtrain::LearningRateSchedule::constant(lr.eta0)
                         : fedtrain::LearningRateSchedule::inverse_time(lr.mu, lr.smoothness, config.local_steps);
  auto server = config.server.kind == fedtrain::ServerOptimizer::Kind::Sgd
                    ? fedtrain::ServerOptimizer::sgd(config.effective_server_lr())
                    : fedtrain::ServerOptimizer::adam(config.effective_server_lr(), config.server.beta1,
                                                      config.server.beta2, config.server.eps);

  fedtrain::FederatedTrainer trainer(dataset, spec, build_selector(config, policy, weights, seed),
                                     build_source(config, weights, seed), std::move(server), options, seed);
  std::vector<fedtrain::RoundRecord> records;
  records.reserve(static_cast<std::size_t>(config.rounds));
  for (std::int64_t t = 0; t < config.rounds; ++t) records.push_back(trainer.run_round());
  return records;
}

std::filesystem::path csv_name(selection::PolicyKind policy, std::uint64_t seed) {
  return std::string(selection::to_string(policy)) + "_seed" + std::to_string(seed) + ".csv";
}

nlohmann::json window_summary(const std::vector<fedtrain::RoundRecord>& records, int window) {
  std::vector<const fedtrain::RoundRecord*> evaluated;
  std::size_t skipped = 0;
  for (const auto& r : records) {
    if (has_metric(r)) evaluated.push_back(&r);
    if (r.skipped) ++skipped;
  }
  const std::size_t used = std::min(evaluated.size(), static_cast<std::size_t>(window));
  nlohmann::json j;
  j["rounds"] = records.size();
  j["skipped_rounds"] = skipped;
  j["evaluated_rounds"] = evaluated.size();
  j["window"] = used;
  const char* names[] = {"per_sample_loss", "per_sample_accuracy", "per_user_loss", "per_user_accuracy"};
  for (int m = 0; m < 4; ++m) {
    if (used == 0) {
      j[names[m]] = nullptr;
      continue;
    }
    double sum = 0.0;
    for (std::size_t i = evaluated.size() - used; i < evaluated.size(); ++i) {
      const auto& r = *evaluated[i];
      const auto& metrics = m < 2 ? *r.per_sample : *r.per_user;
      sum += round_trip(m % 2 == 0 ? metrics.loss : metrics.accuracy);
    }
    j[names[m]] = sum / static_cast<double>(used);
  }
  return j;
}

nlohmann::json run_experiment(const ExperimentConfig& config, std::ostream* log) {
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + config.output_dir.string() + ": " + ec.message());

  nlohmann::json summary;
  summary["config"] = to_json(config);
  auto& runs = summary["runs"] = nlohmann::json::array();
  for (const auto seed : config.seeds) {
    const auto dataset = build_dataset(config, seed);
    for (const auto policy : config.policies) {
      const auto start = std::chrono::steady_clock::now();
      const auto records = run_single(config, policy, seed, dataset);
      const auto path = config.output_dir / csv_name(policy, seed);
      write_round_csv(path, records, config.record_wall_clock);
      auto entry = window_summary(records, config.summary_window);
      entry["policy"] = selection::to_string(policy);
      entry["seed"] = seed;
      entry["csv"] = csv_name(policy, seed).string();
      runs.push_back(entry);
      if (log) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        *log << selection::to_string(policy) << " seed " << seed << ": " << records.size() << " rounds in "
             << format_number(secs) << " s -> " << path.string() << '\n';
      }
    }
  }

  auto& per_policy = summary["policies"] = nlohmann::json::object();
  for (const auto policy : config.policies) {
    const std::string name(selection::to_string(policy));
    nlohmann::json agg;
    for (const char* metric : {"per_sample_loss", "per_sample_accuracy", "per_user_loss", "per_user_accuracy"}) {
      double sum = 0.0;
      int count = 0;
      for (const auto& run : runs) {
        if (run["policy"] == name && !run[metric].is_null()) {
          sum += run[metric].get<double>();
          ++count;
        }
      }
      agg[metric] = count ? nlohmann::json(sum / count) : nlohmann::json(nullptr);
    }
    agg["seeds"] = config.seeds.size();
    per_policy[name] = agg;
  }

  const auto path = config.output_dir / "summary.json";
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << summary.dump(2) << '\n';
  if (!os) throw std::runtime_error("failed writing " + path.string());
  return summary;
}

RateReport run_rate_convergence(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = config.seeds.front();
  std::optional<data::FederatedDataset> dataset;
  if (config.client_weights.empty() && !config.availability.two_client_example) dataset = build_dataset(config, seed);
  const auto weights = selection_weights(config, dataset ? &*dataset : nullptr);

  const rate_region::RateRegionModel model(enumerable_distribution(config, weights, seed));
  const selection::HObjective obj{weights, config.correlation};
  const auto opt = rate_region::optimal_rate(model, obj, 1e-9, config.r_min);

  RateReport report;
  report.optimal = opt.rate;
  report.rounds = config.rounds;
  report.burn_in = config.effective_burn_in();
  report.tolerance = config.rate_tolerance;
  if (report.rounds <= report.burn_in)
    throw ConfigError({"rounds: must exceed the burn-in (" + std::to_string(report.burn_in) + ")"});

  auto selector = build_selector(config, selection::PolicyKind::F3ast, weights, seed);
  auto source = build_source(config, weights, seed);
  Rng policy_rng = make_stream(seed, Stream::Policy);
  const selection::LossProvider no_losses;
  std::vector<double> sum(weights.size(), 0.0);
  for (std::int64_t t = 0; t < report.rounds; ++t) {
    selector.select(source->next(t), policy_rng, no_losses);
    if (t < report.burn_in) continue;
    const auto r = selector.rates();
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += r[k];
  }
  const auto averaged = static_cast<double>(report.rounds - report.burn_in);
  report.time_average.resize(sum.size());
  for (std::size_t k = 0; k < sum.size(); ++k) {
    report.time_average[k] = sum[k] / averaged;
    report.gap = std::max(report.gap, std::abs(report.time_average[k] - report.optimal[k]));
  }
  report.pass = report.gap <= report.tolerance;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

nlohmann::json to_json(const RateReport& report) {
  return {{"optimal_rate", report.optimal}, {"time_average_rate", report.time_average},
          {"sup_gap", report.gap},          {"tolerance", report.tolerance},
          {"pass", report.pass},            {"rounds", report.rounds},
          {"burn_in", report.burn_in},      {"seconds", report.seconds}};
}

}  // namespace f3ast::harness
