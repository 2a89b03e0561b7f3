#include "f3ast/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace f3ast::selection {

namespace {

void check_rate_domain(std::span<const double> rate, std::size_t n) {
  if (rate.size() != n) throw DimensionMismatchError("rate and weight vectors differ in length");
  for (double r : rate) {
    if (!(r > 0.0)) throw std::domain_error("H(r) requires every r_k > 0");
  }
}

/// Indices of `pool` sorted by (score desc, id asc), truncated to `count`.
ClientSet top_by_score(ClientSet pool, std::size_t count, const std::function<double(ClientId)>& score) {
  count = std::min(count, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count), pool.end(),
                    [&](ClientId a, ClientId b) {
                      const double sa = score(a);
                      const double sb = score(b);
                      if (sa != sb) return sa > sb;
                      return a < b;
                    });
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Sequential weighted sampling without replacement.
ClientSet weighted_without_replacement(std::span<const double> weights, const ClientSet& pool, std::size_t count,
                                       Rng& rng) {
  ClientSet remaining;
  for (ClientId k : pool) {
    if (k >= weights.size()) throw InvalidInputError("available client outside the weight vector");
    if (weights[k] > 0.0) remaining.push_back(k);
  }
  ClientSet chosen;
  count = std::min(count, remaining.size());
  while (chosen.size() < count) {
    double total = 0.0;
    for (ClientId k : remaining) total += weights[k];
    double u = uniform01(rng) * total;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (u < weights[remaining[i]]) {
        pick = i;
        break;
      }
      u -= weights[remaining[i]];
    }
    chosen.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::size_t selectable(const ConfigurationSample& config) {
  return std::min(config.available.size(), static_cast<std::size_t>(std::max(config.capacity, 0)));
}

}  // namespace

std::string_view to_string(CorrelationMode mode) {
  return mode == CorrelationMode::Uncorrelated ? "uncorrelated" : "positively_correlated";
}

CorrelationMode parse_correlation_mode(std::string_view name) {
  if (name == "uncorrelated") return CorrelationMode::Uncorrelated;
  if (name == "positively_correlated") return CorrelationMode::PositivelyCorrelated;
  throw InvalidInputError("unknown correlation mode '" + std::string(name) + "'");
}

void HObjective::validate() const {
  if (weights.empty()) throw InvalidInputError("objective needs at least one client weight");
  double total = 0.0;
  for (double p : weights) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInputError("client weights must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInputError("client weights must sum to 1");
}

double HObjective::coefficient(std::size_t k) const {
  return mode == CorrelationMode::Uncorrelated ? weights[k] * weights[k] : weights[k];
}

double h_value(const HObjective& obj, std::span<const double> rate) {
  check_rate_domain(rate, obj.weights.size());
  double h = 0.0;
  for (std::size_t k = 0; k < rate.size(); ++k) h += obj.coefficient(k) / rate[k];
  return h;
}

std::vector<double> h_gradient(const HObjective& obj, std::span<const double> rate) {
  check_rate_domain(rate, obj.weights.size());
  std::vector<double> g(rate.size());
  for (std::size_t k = 0; k < rate.size(); ++k) g[k] = -obj.coefficient(k) / (rate[k] * rate[k]);
  return g;
}

// ---------------------------------------------------------------------------

ParticipationRate::ParticipationRate(std::size_t num_clients, double beta, double r_min)
    : ParticipationRate(std::vector<double>(num_clients, num_clients ? 1.0 / static_cast<double>(num_clients) : 0.0),
                        beta, r_min) {}

ParticipationRate::ParticipationRate(std::vector<double> initial, double beta, double r_min)
    : rate_(std::move(initial)), beta_(beta), floor_(r_min) {
  if (rate_.empty()) throw InvalidInputError("participation rate needs at least one client");
  if (!(beta_ > 0.0 && beta_ < 1.0)) throw InvalidInputError("beta must lie in (0, 1)");
  if (!(floor_ > 0.0 && floor_ <= 1.0)) throw InvalidInputError("r_min must lie in (0, 1]");
  for (auto& r : rate_) {
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidInputError("initial rate must lie in [0, 1]");
    r = std::max(r, floor_);
  }
}

void ParticipationRate::smooth_update(const ClientSet& selected) {
  for (auto& r : rate_) r *= 1.0 - beta_;
  for (ClientId k : selected) rate_.at(k) += beta_;
  for (auto& r : rate_) r = std::clamp(r, floor_, 1.0);
}

// ---------------------------------------------------------------------------

SelectionResult f3ast_select(const HObjective& obj, const ParticipationRate& rate, const ConfigurationSample& config) {
  const auto grad = h_gradient(obj, rate.values());
  std::vector<double> utility(grad.size());
  std::transform(grad.begin(), grad.end(), utility.begin(), [](double g) { return -g; });
  SelectionResult out;
  out.selected = top_by_score(config.available, selectable(config), [&](ClientId k) { return utility.at(k); });
  out.utilities = std::move(utility);
  return out;
}

SelectionResult fedavg_select(std::span<const double> weights, const ConfigurationSample& config, Rng& rng) {
  return {weighted_without_replacement(weights, config.available, selectable(config), rng), std::nullopt};
}

SelectionResult poc_select(std::span<const double> weights, const ConfigurationSample& config,
                           const LossProvider& losses, int candidates, int keep, Rng& rng) {
  if (keep < 0 || candidates < keep) throw InvalidInputError("Power-of-Choice requires d >= M >= 0");
  const auto pool =
      weighted_without_replacement(weights, config.available, static_cast<std::size_t>(candidates), rng);
  const auto m = std::min(static_cast<std::size_t>(keep), static_cast<std::size_t>(std::max(config.capacity, 0)));
  if (m == 0 || pool.empty()) return {};
  std::vector<double> loss(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) loss[i] = losses(pool[i]);
  auto score = [&](ClientId k) {
    return loss[static_cast<std::size_t>(std::lower_bound(pool.begin(), pool.end(), k) - pool.begin())];
  };
  return {top_by_score(pool, m, score), std::nullopt};
}

// ---------------------------------------------------------------------------

void PolicyTable::set(Key key, std::vector<Entry> entries) {
  if (key.capacity < 0) throw InvalidInputError("policy row has negative capacity");
  double total = 0.0;
  for (const auto& e : entries) {
    if (!(e.probability >= 0.0) || !std::isfinite(e.probability))
      throw InvalidInputError("policy probabilities must be >= 0");
    if (!is_subset(e.subset, key.available)) throw InvalidInputError("policy selects an unavailable client");
    if (popcount(e.subset) > key.capacity) throw InvalidInputError("policy subset exceeds the capacity");
    total += e.probability;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInputError("policy probabilities for a configuration must sum to 1");
  auto it = std::lower_bound(rows_.begin(), rows_.end(), key,
                             [](const auto& row, const Key& k) { return row.first < k; });
  if (it != rows_.end() && it->first == key) {
    it->second = std::move(entries);
  } else {
    rows_.insert(it, {key, std::move(entries)});
  }
}

const std::vector<PolicyTable::Entry>* PolicyTable::find(Key key) const {
  auto it = std::lower_bound(rows_.begin(), rows_.end(), key,
                             [](const auto& row, const Key& k) { return row.first < k; });
  if (it == rows_.end() || !(it->first == key)) return nullptr;
  return &it->second;
}

const std::vector<PolicyTable::Entry>& PolicyTable::at(Key key) const {
  if (const auto* row = find(key)) return *row;
  throw PolicyIncompleteError("policy table has no entry for configuration available=" +
                              std::to_string(key.available) + " capacity=" + std::to_string(key.capacity));
}

SelectionResult fixed_policy_select(const PolicyTable& table, const ConfigurationSample& config, Rng& rng) {
  const auto& row = table.at({to_mask(config.available), config.capacity});
  double u = uniform01(rng);
  ClientMask chosen = row.back().subset;
  for (const auto& e : row) {
    if (u < e.probability) {
      chosen = e.subset;
      break;
    }
    u -= e.probability;
  }
  return {from_mask(chosen), std::nullopt};
}

// ---------------------------------------------------------------------------

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::F3ast: return "f3ast";
    case PolicyKind::FedAvg: return "fedavg";
    case PolicyKind::PowerOfChoice: return "poc";
    case PolicyKind::Fixed: return "fixed";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
  for (auto kind : {PolicyKind::F3ast, PolicyKind::FedAvg, PolicyKind::PowerOfChoice, PolicyKind::Fixed}) {
    if (name == to_string(kind)) return kind;
  }
  throw InvalidInputError("unknown policy '" + std::string(name) + "'");
}

ClientSelector ClientSelector::f3ast(HObjective objective, ParticipationRate rate) {
  objective.validate();
  if (objective.weights.size() != rate.size()) throw DimensionMismatchError("objective and rate differ in length");
  ClientSelector s;
  s.kind_ = PolicyKind::F3ast;
  s.weights_ = objective.weights;
  s.objective_ = std::move(objective);
  s.rate_ = std::move(rate);
  return s;
}

ClientSelector ClientSelector::fedavg(std::vector<double> weights) {
  ClientSelector s;
  s.kind_ = PolicyKind::FedAvg;
  s.weights_ = std::move(weights);
  return s;
}

ClientSelector ClientSelector::power_of_choice(std::vector<double> weights, int candidates, int keep) {
  if (keep < 0 || candidates < keep) throw InvalidInputError("Power-of-Choice requires d >= M >= 0");
  ClientSelector s;
  s.kind_ = PolicyKind::PowerOfChoice;
  s.weights_ = std::move(weights);
  s.candidates_ = candidates;
  s.keep_ = keep;
  return s;
}

ClientSelector ClientSelector::fixed(PolicyTable table, std::vector<double> rates) {
  ClientSelector s;
  s.kind_ = PolicyKind::Fixed;
  s.table_ = std::move(table);
  s.fixed_rates_ = std::move(rates);
  return s;
}

SelectionResult ClientSelector::select(const ConfigurationSample& config, Rng& rng, const LossProvider& losses) {
  switch (kind_) {
    case PolicyKind::F3ast: {
      auto result = f3ast_select(*objective_, *rate_, config);
      rate_->smooth_update(result.selected);
      return result;
    }
    case PolicyKind::FedAvg:
      return fedavg_select(weights_, config, rng);
    case PolicyKind::PowerOfChoice:
      return poc_select(weights_, config, losses, candidates_, keep_, rng);
    case PolicyKind::Fixed:
      return fixed_policy_select(*table_, config, rng);
  }
  return {};
}

std::span<const double> ClientSelector::rates() const {
  if (rate_) return rate_->values();
  return fixed_rates_;
}

double ClientSelector::rate_floor() const { return rate_ ? rate_->floor() : 0.0; }

}  // namespace f3ast::selection
