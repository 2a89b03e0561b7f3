#include "f3ast/verification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>

#include "f3ast/csv.hpp"
#include "f3ast/experiment.hpp"

namespace f3ast::harness {

namespace {

using rate_region::RateRegionModel;
using selection::PolicyTable;

nlohmann::json policy_json(const PolicyTable& table) {
  auto rows = nlohmann::json::array();
  for (const auto& [key, entries] : table.rows()) {
    auto e = nlohmann::json::array();
    for (const auto& entry : entries) {
      if (entry.probability > 0.0) e.push_back({{"subset", from_mask(entry.subset)}, {"probability", entry.probability}});
    }
    rows.push_back({{"available", from_mask(key.available)}, {"capacity", key.capacity}, {"entries", e}});
  }
  return rows;
}

std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  double total = 0.0;
  for (auto& x : p) {
    x = -std::log(1.0 - uniform01(rng));
    total += x;
  }
  for (auto& x : p) x /= total;
  return p;
}

/// Small independent-availability instance with N <= 3.
struct Instance {
  RateRegionModel model;
  std::vector<double> weights;
  PolicyTable table;
  std::vector<double> rate;
  Eigen::MatrixXd updates;  // rows v_k
};

Instance random_instance(Rng& rng, int max_clients) {
  const auto n = 1 + uniform_index(rng, static_cast<std::uint64_t>(max_clients));
  std::vector<double> q(n);
  for (auto& x : q) x = 0.05 + 0.95 * uniform01(rng);
  const int capacity = 1 + static_cast<int>(uniform_index(rng, n));
  RateRegionModel model(availability::enumerate_independent(q, capacity));
  auto weights = random_simplex(n, rng);
  const auto opt = rate_region::optimal_rate(model, {weights, selection::CorrelationMode::Uncorrelated}, 1e-10);
  const auto prop = rate_region::proportional_policy(model, weights);
  auto table = rate_region::mix_policies(model, opt.policy, prop, uniform01(rng));
  auto rate = rate_region::rate_of_policy(model, table);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = standard_normal(rng);
  return {std::move(model), std::move(weights), std::move(table), std::move(rate), std::move(v)};
}

/// Visits every (probability, selected set) pair of a table on a model.
void for_each_selection(const RateRegionModel& model, const PolicyTable& table,
                        const std::function<void(double, ClientMask)>& visit) {
  for (std::size_t o = 0; o < model.num_outcomes(); ++o) {
    const double pc = model.distribution().outcomes[o].probability;
    for (const auto& e : table.at(model.key(o))) visit(pc * e.probability, e.subset);
  }
}

Eigen::VectorXd debiased(const Instance& inst, ClientMask subset) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(inst.updates.cols());
  for (ClientId k : from_mask(subset)) d += (inst.weights[k] / inst.rate[k]) * inst.updates.row(k).transpose();
  return d;
}

Eigen::VectorXd full_average(const Instance& inst) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(inst.updates.cols());
  for (Eigen::Index k = 0; k < inst.updates.rows(); ++k) v += inst.weights[static_cast<std::size_t>(k)] * inst.updates.row(k).transpose();
  return v;
}

Eigen::MatrixXd scaled_updates(const Instance& inst) {
  Eigen::MatrixXd y = inst.updates;
  for (Eigen::Index k = 0; k < y.rows(); ++k) y.row(k) *= inst.weights[static_cast<std::size_t>(k)] / inst.rate[static_cast<std::size_t>(k)];
  return y;
}

CheckResult timed(const std::string& name, const std::function<CheckResult()>& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

CheckResult check_rate_convergence(std::uint64_t seed) {
  ExperimentConfig c;
  c.availability.two_client_example = true;
  c.client_weights = {0.5, 0.5};
  c.rounds = 50'000;
  c.seeds = {seed};
  const auto report = run_rate_convergence(c);
  return {"", report.pass,
          "gap " + format_number(report.gap) + " (tolerance " + format_number(report.tolerance) + ")", 0.0};
}

CheckResult check_unbiased(Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = random_instance(rng, 3);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(inst.updates.cols());
    for_each_selection(inst.model, inst.table, [&](double prob, ClientMask s) { mean += prob * debiased(inst, s); });
    worst = std::max(worst, (mean - full_average(inst)).norm());
  }
  return {"", worst <= 1e-12, "max |E[Delta] - vbar| = " + format_number(worst), 0.0};
}

CheckResult check_variance_identity(Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = random_instance(rng, 3);
    const Eigen::VectorXd vbar = full_average(inst);
    double direct = 0.0;
    for_each_selection(inst.model, inst.table,
                       [&](double prob, ClientMask s) { direct += prob * (debiased(inst, s) - vbar).squaredNorm(); });
    const auto cov = rate_region::selection_covariance(inst.model, inst.table);
    const double formula = rate_region::sampling_variance_exact(scaled_updates(inst), cov);
    worst = std::max(worst, std::abs(direct - formula) / std::max(1.0, std::abs(direct)));
  }
  return {"", worst <= 1e-10, "max relative mismatch " + format_number(worst), 0.0};
}

CheckResult check_variance_bounds(Rng& rng) {
  int violations = 0;
  int uncorrelated_checked = 0;
  for (int i = 0; i < 100; ++i) {
    auto inst = random_instance(rng, 3);
    const int local_steps = 1 + static_cast<int>(uniform_index(rng, 5));
    double g = 0.0;
    for (Eigen::Index k = 0; k < inst.updates.rows(); ++k) g = std::max(g, inst.updates.row(k).norm());
    g /= 2.0 * local_steps;  // |v_k| <= 2 E G with the step size folded into v
    const auto cov = rate_region::selection_covariance(inst.model, inst.table);
    const double var = rate_region::sampling_variance_exact(scaled_updates(inst), cov);
    const auto b = rate_region::variance_bounds(inst.weights, inst.rate, local_steps, g);
    const double slack = 1e-9 * (1.0 + b.general);
    if (var > b.general + slack) ++violations;
    const Eigen::MatrixXd off = cov.sigma - Eigen::MatrixXd(cov.sigma.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() <= 1e-12) {
      ++uncorrelated_checked;
      if (var > b.uncorrelated + 1e-9 * (1.0 + b.uncorrelated)) ++violations;
    }
  }
  return {"", violations == 0,
          std::to_string(violations) + " violations (" + std::to_string(uncorrelated_checked) +
              " instances with uncorrelated selection)",
          0.0};
}

CheckResult check_greedy(Rng& rng) {
  int disagreements = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const auto n = 1 + uniform_index(rng, 12);
    std::vector<double> p = random_simplex(n, rng);
    std::vector<double> r(n);
    for (auto& x : r) x = 0.01 + 0.99 * uniform01(rng);
    availability::ConfigurationSample config;
    config.capacity = static_cast<int>(uniform_index(rng, 5));
    for (ClientId k = 0; k < n; ++k) {
      if (uniform01(rng) < 0.6) config.available.push_back(k);
    }
    const selection::HObjective obj{p, selection::CorrelationMode::Uncorrelated};
    const selection::ParticipationRate rate(r);
    const auto got = selection::f3ast_select(obj, rate, config).selected;

    const auto grad = selection::h_gradient(obj, r);
    const ClientMask avail = to_mask(config.available);
    double best = -1.0;
    ClientMask best_set = 0;
    for (ClientMask s = avail;; s = (s - 1) & avail) {
      if (popcount(s) <= config.capacity) {
        double u = 0.0;
        for (ClientId k : from_mask(s)) u -= grad[k];
        if (u > best + 1e-15 || (std::abs(u - best) <= 1e-15 && popcount(s) > popcount(best_set))) {
          best = u;
          best_set = s;
        }
      }
      if (s == 0) break;
    }
    double got_u = 0.0;
    for (ClientId k : got) got_u -= grad[k];
    if (std::abs(got_u - best) > 1e-12 * std::max(1.0, best)) ++disagreements;
  }
  return {"", disagreements == 0, std::to_string(disagreements) + " of " + std::to_string(trials) + " disagree", 0.0};
}

CheckResult check_region(Rng& rng) {
  const RateRegionModel fixture(availability::two_client_example());
  const std::vector<double> p{0.5, 0.5};
  const auto opt = rate_region::optimal_rate(fixture, {p, selection::CorrelationMode::Uncorrelated});
  bool ok = rate_region::membership(fixture, opt.rate).inside;
  ok = ok && rate_region::membership(fixture, std::vector<double>{0.375, 0.0}).inside;
  ok = ok && rate_region::membership(fixture, std::vector<double>{0.375, 0.5}).inside;
  ok = ok && !rate_region::membership(fixture, std::vector<double>{0.5, 0.5}).inside;
  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = random_instance(rng, 3);
    const selection::HObjective obj{inst.weights, selection::CorrelationMode::Uncorrelated};
    const auto best = rate_region::optimal_rate(inst.model, obj, 1e-10);
    if (!rate_region::membership(inst.model, best.rate).inside) ++failures;
    if (selection::h_value(obj, best.rate) > selection::h_value(obj, inst.rate) + 1e-8) ++failures;
  }
  return {"", ok && failures == 0,
          std::string(ok ? "fixture points classified" : "fixture misclassified") + ", " + std::to_string(failures) +
              " random failures",
          0.0};
}

ExperimentConfig small_training_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.dataset.kind = DatasetKind::SyntheticAlpha;
  c.dataset.num_clients = 12;
  c.dataset.samples_per_client = 60;
  c.dataset.dim = 10;
  c.availability.model = availability::AvailabilityModel::with_defaults(availability::AvailabilityKind::HomeDevices);
  c.capacity = availability::CapacitySchedule::constant(3);
  c.learning_rate.kind = fedtrain::LearningRateSchedule::Kind::InverseTime;
  c.learning_rate.mu = 0.5;
  c.learning_rate.smoothness = 2.0;
  c.rounds = 300;
  c.eval_every = 50;
  c.seeds = {seed};
  return c;
}

CheckResult check_update_norm(std::uint64_t seed) {
  const auto c = small_training_config(seed);
  const auto dataset = build_dataset(c, seed);
  int violations = 0;
  for (const auto& rec : run_single(c, selection::PolicyKind::F3ast, seed, dataset)) {
    if (rec.max_update_norm > rec.update_norm_bound * (1.0 + 1e-9)) ++violations;
  }
  return {"", violations == 0, std::to_string(violations) + " violations over " + std::to_string(c.rounds) + " rounds",
          0.0};
}

CheckResult check_determinism(std::uint64_t seed) {
  const auto c = small_training_config(seed);
  auto render = [&] {
    const auto dataset = build_dataset(c, seed);
    std::string out;
    for (const auto& rec : run_single(c, selection::PolicyKind::FedAvg, seed, dataset)) out += round_csv_row(rec, false) + "\n";
    return out;
  };
  const bool same = render() == render();
  return {"", same, same ? "identical round records" : "round records differ", 0.0};
}

}  // namespace

nlohmann::json oracle_report(const RateRegionModel& model, std::span<const double> weights,
                             selection::CorrelationMode mode, const std::vector<std::vector<double>>& queries) {
  const std::vector<double> p(weights.begin(), weights.end());
  const selection::HObjective obj{p, mode};
  const auto opt = rate_region::optimal_rate(model, obj);
  const auto prop = rate_region::rate_of_policy(model, rate_region::proportional_policy(model, p));

  nlohmann::json j;
  j["num_clients"] = model.num_clients();
  j["num_configurations"] = model.num_outcomes();
  j["weights"] = p;
  j["correlation"] = selection::to_string(mode);
  j["availability_marginals"] = model.distribution().marginals();
  j["optimal_rate"] = opt.rate;
  j["objective"] = opt.objective;
  j["duality_gap"] = opt.duality_gap;
  j["iterations"] = opt.iterations;
  j["excluded_clients"] = opt.excluded;
  j["optimal_policy"] = policy_json(opt.policy);
  j["proportional_rate"] = prop;
  bool positive = std::all_of(prop.begin(), prop.end(), [](double r) { return r > 0.0; });
  j["proportional_objective"] = positive ? nlohmann::json(selection::h_value(obj, prop)) : nlohmann::json(nullptr);
  auto& q = j["queries"] = nlohmann::json::array();
  for (const auto& r : queries) {
    const auto m = rate_region::membership(model, r);
    nlohmann::json e{{"rate", r}, {"inside", m.inside}, {"distance", m.distance}};
    if (m.separating_direction) {
      e["separating_direction"] = *m.separating_direction;
      e["margin"] = m.margin;
    }
    q.push_back(e);
  }
  return j;
}

std::vector<CheckResult> run_verification_suite(std::uint64_t seed, std::ostream* log) {
  Rng rng = make_stream(seed, Stream::Policy, 0x5eed);
  std::vector<std::pair<std::string, std::function<CheckResult()>>> checks{
      {"rate_convergence", [&] { return check_rate_convergence(seed); }},
      {"unbiased_enumeration", [&] { return check_unbiased(rng); }},
      {"variance_identity", [&] { return check_variance_identity(rng); }},
      {"variance_bounds", [&] { return check_variance_bounds(rng); }},
      {"greedy_optimality", [&] { return check_greedy(rng); }},
      {"region_oracle", [&] { return check_region(rng); }},
      {"update_norm_bound", [&] { return check_update_norm(seed); }},
      {"determinism", [&] { return check_determinism(seed); }},
  };
  std::vector<CheckResult> results;
  for (const auto& [name, body] : checks) {
    results.push_back(timed(name, body));
    if (log) {
      const auto& r = results.back();
      *log << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " [" << format_number(r.seconds)
           << " s]\n";
    }
  }
  return results;
}

}  // namespace f3ast::harness
