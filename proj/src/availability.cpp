#include "f3ast/availability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace f3ast::availability {

namespace {

constexpr double kProbabilityTol = 1e-12;

bool is_probability(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

std::vector<double> cumulative_of(const std::vector<ConfigurationOutcome>& outcomes) {
  std::vector<double> cum;
  cum.reserve(outcomes.size());
  double acc = 0.0;
  for (const auto& o : outcomes) {
    acc += o.probability;
    cum.push_back(acc);
  }
  return cum;
}

std::size_t draw_index(const std::vector<double>& cumulative, Rng& rng) {
  const double u = uniform01(rng) * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace

std::string_view to_string(AvailabilityKind kind) {
  switch (kind) {
    case AvailabilityKind::Always: return "always";
    case AvailabilityKind::Scarce: return "scarce";
    case AvailabilityKind::HomeDevices: return "home_devices";
    case AvailabilityKind::Smartphones: return "smartphones";
    case AvailabilityKind::Uneven: return "uneven";
  }
  return "unknown";
}

AvailabilityKind parse_availability_kind(std::string_view name) {
  for (auto kind : {AvailabilityKind::Always, AvailabilityKind::Scarce, AvailabilityKind::HomeDevices,
                    AvailabilityKind::Smartphones, AvailabilityKind::Uneven}) {
    if (name == to_string(kind)) return kind;
  }
  throw InvalidInputError("unknown availability model '" + std::string(name) + "'");
}

AvailabilityModel AvailabilityModel::with_defaults(AvailabilityKind kind) {
  AvailabilityModel m;
  m.kind = kind;
  m.lognormal_sigma = kind == AvailabilityKind::Smartphones ? 0.25 : 0.5;
  return m;
}

void AvailabilityModel::validate() const {
  if (!is_probability(scarce_q)) throw InvalidInputError("scarce_q must lie in [0, 1]");
  if (!(lognormal_sigma > 0.0) || !std::isfinite(lognormal_sigma))
    throw InvalidInputError("lognormal_sigma must be positive");
  if (!std::isfinite(sine_amplitude) || !std::isfinite(sine_offset))
    throw InvalidInputError("sine parameters must be finite");
  if (period_steps < 1) throw InvalidInputError("period_steps must be >= 1");
  if (!(uneven_mean > 0.0 && uneven_mean <= 1.0)) throw InvalidInputError("uneven_mean must lie in (0, 1]");
  for (double q : per_client_q) {
    if (!is_probability(q)) throw InvalidInputError("per-client availability outside [0, 1]");
  }
}

CapacitySchedule CapacitySchedule::constant(int k) {
  CapacitySchedule c;
  c.kind = Kind::Constant;
  c.constant_k = k;
  return c;
}

CapacitySchedule CapacitySchedule::per_round(std::vector<int> values) {
  CapacitySchedule c;
  c.kind = Kind::PerRoundList;
  c.schedule = std::move(values);
  return c;
}

int CapacitySchedule::at(std::int64_t t) const {
  if (kind == Kind::Constant) return constant_k;
  const auto n = static_cast<std::int64_t>(schedule.size());
  return schedule[static_cast<std::size_t>(t % n)];
}

void CapacitySchedule::validate() const {
  if (kind == Kind::Constant) {
    if (constant_k < 0) throw InvalidInputError("capacity must be >= 0");
    return;
  }
  if (schedule.empty()) throw InvalidInputError("per-round capacity schedule is empty");
  if (std::any_of(schedule.begin(), schedule.end(), [](int k) { return k < 0; }))
    throw InvalidInputError("capacity schedule entries must be >= 0");
}

std::vector<double> derive_client_probs(const AvailabilityModel& model, std::span<const double> weights,
                                        std::uint64_t seed) {
  model.validate();
  const std::size_t n = weights.size();
  if (n == 0) throw InvalidInputError("availability model needs at least one client");

  switch (model.kind) {
    case AvailabilityKind::Always:
      return std::vector<double>(n, 1.0);
    case AvailabilityKind::Scarce:
      return std::vector<double>(n, model.scarce_q);
    case AvailabilityKind::HomeDevices:
    case AvailabilityKind::Smartphones: {
      Rng rng = make_stream(seed, Stream::AvailabilityParams);
      std::vector<double> t(n);
      for (auto& x : t) x = std::exp(model.lognormal_sigma * standard_normal(rng));
      const auto top = static_cast<std::size_t>(std::max_element(t.begin(), t.end()) - t.begin());
      const double b = t[top];
      std::vector<double> q(n);
      for (std::size_t k = 0; k < n; ++k) {
        q[k] = t[k] / b;
        // A tie with the maximum keeps a single q == 1 at the lowest index.
        if (k != top && q[k] >= 1.0) q[k] = std::nextafter(1.0, 0.0);
      }
      q[top] = 1.0;
      return q;
    }
    case AvailabilityKind::Uneven: {
      for (double p : weights) {
        if (!(p > 0.0) || !std::isfinite(p))
          throw InvalidInputError("uneven availability requires every client weight p_k > 0");
      }
      auto mean_for = [&](double c) {
        double s = 0.0;
        for (double p : weights) s += std::min(1.0, c / p);
        return s / static_cast<double>(n);
      };
      double lo = 0.0;
      double hi = *std::max_element(weights.begin(), weights.end());
      for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (mean_for(mid) < model.uneven_mean ? lo : hi) = mid;
      }
      const double c = hi;
      std::vector<double> q(n);
      for (std::size_t k = 0; k < n; ++k) q[k] = std::min(1.0, c / weights[k]);
      return q;
    }
  }
  throw InvalidInputError("unhandled availability model");
}

double time_modulation(const AvailabilityModel& model, std::int64_t t) {
  if (model.kind != AvailabilityKind::Smartphones) return 1.0;
  const auto phase = static_cast<double>(t % model.period_steps) / static_cast<double>(model.period_steps);
  const double f = model.sine_amplitude * std::sin(2.0 * std::numbers::pi * phase) + model.sine_offset;
  return std::clamp(f, 0.0, 1.0);
}

double availability_probability(const AvailabilityModel& model, ClientId k, std::int64_t t) {
  return time_modulation(model, t) * model.per_client_q.at(k);
}

ConfigurationSample sample_round(const AvailabilityModel& model, const CapacitySchedule& capacity,
                                 std::int64_t t, Rng& rng) {
  ConfigurationSample s;
  s.round = t;
  s.capacity = capacity.at(t);
  const double f = time_modulation(model, t);
  const auto n = static_cast<ClientId>(model.per_client_q.size());
  for (ClientId k = 0; k < n; ++k) {
    const double u = uniform01(rng);
    if (u < f * model.per_client_q[k]) s.available.push_back(k);
  }
  return s;
}

// ---------------------------------------------------------------------------

void ConfigurationDistribution::validate() const {
  if (num_clients == 0 || num_clients > kMaxMaskClients)
    throw InvalidInputError("configuration distribution needs 1..32 clients");
  if (outcomes.empty()) throw InvalidInputError("configuration distribution has no outcomes");
  const ClientMask universe =
      num_clients == kMaxMaskClients ? ~ClientMask{0} : (ClientMask{1} << num_clients) - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    if (!(o.probability >= 0.0) || !std::isfinite(o.probability))
      throw InvalidInputError("configuration probability must be >= 0");
    if (o.capacity < 0) throw InvalidInputError("configuration capacity must be >= 0");
    if (!is_subset(o.available, universe)) throw InvalidInputError("available set outside [0, N)");
    for (std::size_t j = 0; j < i; ++j) {
      if (outcomes[j].available == o.available && outcomes[j].capacity == o.capacity)
        throw InvalidInputError("duplicate configuration pattern");
    }
    total += o.probability;
  }
  if (std::abs(total - 1.0) > kProbabilityTol) throw InvalidInputError("configuration probabilities must sum to 1");
}

std::vector<double> ConfigurationDistribution::marginals() const {
  std::vector<double> m(num_clients, 0.0);
  for (const auto& o : outcomes) {
    for (ClientId k : from_mask(o.available)) m[k] += o.probability;
  }
  return m;
}

ConfigurationDistribution two_client_example() {
  ConfigurationDistribution d;
  d.num_clients = 2;
  d.outcomes = {
      {0b11, 1, 0.3},
      {0b01, 1, 0.075},
      {0b10, 1, 0.5},
      {0b00, 1, 0.125},
  };
  return d;
}

ConfigurationDistribution enumerate_independent(std::span<const double> q, int capacity) {
  const std::size_t n = q.size();
  if (n == 0 || n > 16) throw UnsupportedOracleError("independent enumeration supports 1..16 clients");
  if (capacity < 0) throw InvalidInputError("capacity must be >= 0");
  for (double x : q) {
    if (!is_probability(x)) throw InvalidInputError("availability probability outside [0, 1]");
  }
  ConfigurationDistribution d;
  d.num_clients = n;
  const ClientMask count = ClientMask{1} << n;
  for (ClientMask mask = 0; mask < count; ++mask) {
    double pr = 1.0;
    for (std::size_t k = 0; k < n; ++k) pr *= (mask >> k) & 1U ? q[k] : 1.0 - q[k];
    if (pr > 0.0) d.outcomes.push_back({mask, capacity, pr});
  }
  // Renormalize away the rounding of the 2^N products.
  double total = 0.0;
  for (const auto& o : d.outcomes) total += o.probability;
  for (auto& o : d.outcomes) o.probability /= total;
  return d;
}

// ---------------------------------------------------------------------------

IndependentAvailability::IndependentAvailability(AvailabilityModel model, CapacitySchedule capacity, Rng rng)
    : model_(std::move(model)), capacity_(std::move(capacity)), rng_(rng) {
  model_.validate();
  capacity_.validate();
  if (model_.per_client_q.empty()) throw InvalidInputError("availability model has no derived client probabilities");
}

ConfigurationSample IndependentAvailability::next(std::int64_t t) { return sample_round(model_, capacity_, t, rng_); }

EnumeratedConfigurations::EnumeratedConfigurations(ConfigurationDistribution dist, Rng rng)
    : dist_(std::move(dist)), rng_(rng) {
  dist_.validate();
  cumulative_ = cumulative_of(dist_.outcomes);
}

ConfigurationSample EnumeratedConfigurations::next(std::int64_t t) {
  const auto& o = dist_.outcomes[draw_index(cumulative_, rng_)];
  return {t, from_mask(o.available), o.capacity};
}

MarkovConfigurationChain::MarkovConfigurationChain(std::size_t num_clients, std::vector<State> states,
                                                   std::vector<std::vector<double>> transition,
                                                   std::size_t initial_state, Rng rng)
    : num_clients_(num_clients),
      states_(std::move(states)),
      transition_(std::move(transition)),
      current_(initial_state),
      rng_(rng) {
  if (states_.empty()) throw InvalidInputError("Markov chain has no states");
  if (transition_.size() != states_.size()) throw DimensionMismatchError("transition matrix must be square");
  if (current_ >= states_.size()) throw InvalidInputError("initial state out of range");
  for (auto& s : states_) {
    std::sort(s.available.begin(), s.available.end());
    if (s.capacity < 0) throw InvalidInputError("capacity must be >= 0");
    if (!s.available.empty() && s.available.back() >= num_clients_)
      throw InvalidInputError("available set outside [0, N)");
  }
  for (auto& row : transition_) {
    if (row.size() != states_.size()) throw DimensionMismatchError("transition matrix must be square");
    double total = 0.0;
    for (double x : row) {
      if (!(x >= 0.0)) throw InvalidInputError("transition probabilities must be >= 0");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidInputError("transition rows must sum to 1");
  }
}

ConfigurationSample MarkovConfigurationChain::next(std::int64_t t) {
  const auto& row = transition_[current_];
  double u = uniform01(rng_);
  std::size_t next = row.size() - 1;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (u < row[j]) {
      next = j;
      break;
    }
    u -= row[j];
  }
  current_ = next;
  return {t, states_[current_].available, states_[current_].capacity};
}

ConfigurationDistribution MarkovConfigurationChain::stationary_distribution(double tol, int max_iter) const {
  if (num_clients_ > kMaxMaskClients) throw UnsupportedOracleError("stationary distribution needs N <= 32");
  const std::size_t m = states_.size();
  std::vector<double> pi(m, 1.0 / static_cast<double>(m));
  std::vector<double> nxt(m);
  for (int it = 0; it < max_iter; ++it) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) nxt[j] += pi[i] * transition_[i][j];
    }
    double diff = 0.0;
    for (std::size_t j = 0; j < m; ++j) diff = std::max(diff, std::abs(nxt[j] - pi[j]));
    pi.swap(nxt);
    if (diff < tol) break;
  }
  ConfigurationDistribution d;
  d.num_clients = num_clients_;
  for (std::size_t i = 0; i < m; ++i) {
    const ClientMask mask = to_mask(states_[i].available);
    auto it = std::find_if(d.outcomes.begin(), d.outcomes.end(), [&](const ConfigurationOutcome& o) {
      return o.available == mask && o.capacity == states_[i].capacity;
    });
    if (it == d.outcomes.end()) {
      d.outcomes.push_back({mask, states_[i].capacity, pi[i]});
    } else {
      it->probability += pi[i];
    }
  }
  const double total = std::accumulate(d.outcomes.begin(), d.outcomes.end(), 0.0,
                                       [](double a, const ConfigurationOutcome& o) { return a + o.probability; });
  for (auto& o : d.outcomes) o.probability /= total;
  return d;
}

}  // namespace f3ast::availability
