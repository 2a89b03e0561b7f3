#include "f3ast/rate_region.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

namespace f3ast::rate_region {

namespace {

/// Largest 2^N * |configurations| for which membership enumerates subsets.
constexpr std::uint64_t kExactMembershipBudget = std::uint64_t{1} << 26;

/// Clients with positive direction component, by (g desc, id asc).
std::vector<ClientId> greedy_order(std::span<const double> direction) {
  std::vector<ClientId> order;
  for (std::size_t k = 0; k < direction.size(); ++k) {
    if (direction[k] > 0.0) order.push_back(static_cast<ClientId>(k));
  }
  std::stable_sort(order.begin(), order.end(), [&](ClientId a, ClientId b) { return direction[a] > direction[b]; });
  return order;
}

ClientMask greedy_subset(const std::vector<ClientId>& order, ClientMask available, int capacity) {
  ClientMask chosen = 0;
  int taken = 0;
  for (ClientId k : order) {
    if (taken >= capacity) break;
    if ((available >> k) & 1U) {
      chosen |= ClientMask{1} << k;
      ++taken;
    }
  }
  return chosen;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Vertex {
  std::vector<double> point;
  std::vector<double> direction;
  double weight = 0.0;
};

/// Away-step Frank-Wolfe state over vertices produced by the linear oracle.
class ActiveSet {
 public:
  explicit ActiveSet(std::size_t n) : n_(n) {}

  std::vector<Vertex>& vertices() { return vertices_; }
  const std::vector<Vertex>& vertices() const { return vertices_; }

  std::size_t find_or_add(const std::vector<double>& point, std::span<const double> direction) {
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
      bool same = true;
      for (std::size_t k = 0; k < n_ && same; ++k) same = std::abs(vertices_[i].point[k] - point[k]) <= 1e-15;
      if (same) return i;
    }
    vertices_.push_back({point, std::vector<double>(direction.begin(), direction.end()), 0.0});
    return vertices_.size() - 1;
  }

  std::vector<double> point() const {
    std::vector<double> x(n_, 0.0);
    for (const auto& v : vertices_) {
      for (std::size_t k = 0; k < n_; ++k) x[k] += v.weight * v.point[k];
    }
    return x;
  }

  void prune() {
    std::erase_if(vertices_, [](const Vertex& v) { return v.weight <= 0.0; });
    double total = 0.0;
    for (const auto& v : vertices_) total += v.weight;
    for (auto& v : vertices_) v.weight /= total;
  }

 private:
  std::size_t n_;
  std::vector<Vertex> vertices_;
};

struct StepChoice {
  std::vector<double> d;
  double max_step = 1.0;
  bool away = false;
  std::size_t vertex = 0;
};

/// Chooses between the Frank-Wolfe direction s - x and the away direction
/// x - v, v the active vertex worst for the gradient.
StepChoice choose_step(const ActiveSet& active, const std::vector<double>& x, const std::vector<double>& grad,
                       std::size_t fw_vertex) {
  const auto& verts = active.vertices();
  const auto& s = verts[fw_vertex].point;
  std::size_t away = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < verts.size(); ++i) {
    if (verts[i].weight <= 0.0) continue;
    const double val = dot(grad, verts[i].point);
    if (val > worst) {
      worst = val;
      away = i;
    }
  }
  const std::size_t n = x.size();
  StepChoice fw;
  fw.d.resize(n);
  for (std::size_t k = 0; k < n; ++k) fw.d[k] = s[k] - x[k];
  fw.vertex = fw_vertex;
  const double fw_slope = -dot(grad, fw.d);

  StepChoice aw;
  aw.away = true;
  aw.vertex = away;
  aw.d.resize(n);
  for (std::size_t k = 0; k < n; ++k) aw.d[k] = x[k] - verts[away].point[k];
  const double alpha = verts[away].weight;
  aw.max_step = alpha >= 1.0 ? 0.0 : alpha / (1.0 - alpha);
  const double away_slope = -dot(grad, aw.d);

  if (fw_slope >= away_slope || aw.max_step <= 0.0) return fw;
  return aw;
}

void apply_step(ActiveSet& active, const StepChoice& step, double gamma) {
  auto& verts = active.vertices();
  if (!step.away) {
    for (auto& v : verts) v.weight *= 1.0 - gamma;
    verts[step.vertex].weight += gamma;
  } else {
    for (auto& v : verts) v.weight *= 1.0 + gamma;
    verts[step.vertex].weight -= gamma;
    if (gamma >= step.max_step) verts[step.vertex].weight = 0.0;
  }
  active.prune();
}

PolicyTable policy_from_active(const RateRegionModel& model, const ActiveSet& active) {
  std::vector<PolicyTable> tables;
  for (const auto& v : active.vertices()) tables.push_back(greedy_policy(model, v.direction));
  PolicyTable out;
  for (std::size_t c = 0; c < model.num_outcomes(); ++c) {
    const auto key = model.key(c);
    std::map<ClientMask, double> merged;
    for (std::size_t i = 0; i < tables.size(); ++i) {
      for (const auto& e : tables[i].at(key)) merged[e.subset] += active.vertices()[i].weight * e.probability;
    }
    std::vector<PolicyTable::Entry> entries;
    for (const auto& [subset, prob] : merged) entries.push_back({subset, prob});
    out.set(key, std::move(entries));
  }
  return out;
}

}  // namespace

RateRegionModel::RateRegionModel(ConfigurationDistribution dist) : dist_(std::move(dist)) { dist_.validate(); }

PolicyTable::Key RateRegionModel::key(std::size_t outcome) const {
  const auto& o = dist_.outcomes.at(outcome);
  return {o.available, o.capacity};
}

std::vector<ClientMask> RateRegionModel::feasible_sets(std::size_t outcome) const {
  const auto& o = dist_.outcomes.at(outcome);
  std::vector<ClientMask> sets;
  // Enumerate submasks of A (including the empty set) in increasing order.
  ClientMask sub = 0;
  do {
    if (popcount(sub) <= o.capacity) sets.push_back(sub);
    sub = (sub - o.available) & o.available;
  } while (sub != 0);
  return sets;
}

std::vector<double> rate_of_policy(const RateRegionModel& model, const PolicyTable& table) {
  std::vector<double> r(model.num_clients(), 0.0);
  for (std::size_t c = 0; c < model.num_outcomes(); ++c) {
    const double pi = model.distribution().outcomes[c].probability;
    for (const auto& e : table.at(model.key(c))) {
      for (ClientId k : from_mask(e.subset)) r[k] += pi * e.probability;
    }
  }
  return r;
}

PolicyTable greedy_policy(const RateRegionModel& model, std::span<const double> direction) {
  if (direction.size() != model.num_clients()) throw DimensionMismatchError("direction has wrong length");
  const auto order = greedy_order(direction);
  PolicyTable table;
  for (std::size_t c = 0; c < model.num_outcomes(); ++c) {
    const auto key = model.key(c);
    table.set(key, {{greedy_subset(order, key.available, key.capacity), 1.0}});
  }
  return table;
}

std::vector<double> linear_max_oracle(const RateRegionModel& model, std::span<const double> direction) {
  if (direction.size() != model.num_clients()) throw DimensionMismatchError("direction has wrong length");
  const auto order = greedy_order(direction);
  std::vector<double> r(model.num_clients(), 0.0);
  for (const auto& o : model.distribution().outcomes) {
    const ClientMask s = greedy_subset(order, o.available, o.capacity);
    for (ClientId k : from_mask(s)) r[k] += o.probability;
  }
  return r;
}

OptimalRate optimal_rate(const RateRegionModel& model, const HObjective& obj, double tol, double r_min,
                         int max_iterations) {
  obj.validate();
  const std::size_t n = model.num_clients();
  if (obj.weights.size() != n) throw DimensionMismatchError("objective weights have wrong length");

  OptimalRate result;
  std::vector<double> coef(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> e(n, 0.0);
    e[k] = 1.0;
    const bool selectable = linear_max_oracle(model, e)[k] > 0.0;
    if (obj.weights[k] > 0.0 && !selectable) {
      result.excluded.push_back(static_cast<ClientId>(k));
    } else if (obj.weights[k] > 0.0) {
      coef[k] = obj.coefficient(k);
    }
  }

  ActiveSet active(n);
  bool any = false;
  for (std::size_t k = 0; k < n; ++k) {
    if (coef[k] <= 0.0) continue;
    std::vector<double> e(n, 0.0);
    e[k] = 1.0;
    active.vertices()[active.find_or_add(linear_max_oracle(model, e), e)].weight += 1.0;
    any = true;
  }
  if (!any) {
    std::vector<double> none(n, -1.0);
    active.vertices()[active.find_or_add(linear_max_oracle(model, none), none)].weight = 1.0;
  }
  active.prune();

  auto gradient = [&](const std::vector<double>& x) {
    std::vector<double> g(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      if (coef[k] > 0.0) g[k] = -coef[k] / (x[k] * x[k]);
    }
    return g;
  };
  // phi'(gamma) for phi(gamma) = H(x + gamma d); +inf outside the domain.
  auto slope = [&](const std::vector<double>& x, const std::vector<double>& d, double gamma) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (coef[k] <= 0.0) continue;
      const double xk = x[k] + gamma * d[k];
      if (xk <= 0.0) return std::numeric_limits<double>::infinity();
      s -= coef[k] * d[k] / (xk * xk);
    }
    return s;
  };

  std::vector<double> x = active.point();
  double gap = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < max_iterations; ++it) {
    const auto g = gradient(x);
    std::vector<double> neg(n);
    for (std::size_t k = 0; k < n; ++k) neg[k] = -g[k];
    const auto s = linear_max_oracle(model, neg);
    gap = 0.0;
    for (std::size_t k = 0; k < n; ++k) gap += g[k] * (x[k] - s[k]);
    if (gap <= tol) break;

    const std::size_t sv = active.find_or_add(s, neg);
    const auto step = choose_step(active, x, g, sv);
    double lo = 0.0;
    double hi = step.max_step;
    double gamma;
    if (slope(x, step.d, hi) <= 0.0) {
      gamma = hi;
    } else {
      for (int b = 0; b < 200; ++b) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (slope(x, step.d, mid) > 0.0 ? hi : lo) = mid;
      }
      gamma = lo;
    }
    apply_step(active, step, gamma);
    x = active.point();
  }

  result.rate = x;
  result.iterations = it;
  result.duality_gap = gap;
  result.objective = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (coef[k] > 0.0) result.objective += coef[k] / std::max(x[k], r_min);
  }
  result.policy = policy_from_active(model, active);
  return result;
}

namespace {

/// Frank-Wolfe projection of r onto R with away steps.
Membership fw_projection(const RateRegionModel& model, std::span<const double> rate, double tol, int max_iterations) {
  const std::size_t n = model.num_clients();

  ActiveSet active(n);
  std::vector<double> none(n, -1.0);
  active.vertices()[active.find_or_add(linear_max_oracle(model, none), none)].weight = 1.0;

  Membership out;
  std::vector<double> x = active.point();
  for (int it = 0; it < max_iterations; ++it) {
    std::vector<double> resid(n);
    for (std::size_t k = 0; k < n; ++k) resid[k] = rate[k] - x[k];
    const double dist = std::sqrt(dot(resid, resid));
    out.distance = dist;
    out.closest = x;
    if (dist <= tol) {
      out.inside = true;
      return out;
    }
    std::vector<double> unit(n);
    for (std::size_t k = 0; k < n; ++k) unit[k] = resid[k] / dist;
    const auto s = linear_max_oracle(model, unit);
    const double margin = dot(unit, rate) - dot(unit, s);
    if (margin > tol) {
      out.inside = false;
      out.margin = margin;
      out.separating_direction = unit;
      return out;
    }
    std::vector<double> grad(n);
    for (std::size_t k = 0; k < n; ++k) grad[k] = -resid[k];
    const std::size_t sv = active.find_or_add(s, unit);
    const auto step = choose_step(active, x, grad, sv);
    const double dd = dot(step.d, step.d);
    if (dd <= 0.0) break;
    const double gamma = std::clamp(dot(resid, step.d) / dd, 0.0, step.max_step);
    if (gamma <= 0.0) break;
    apply_step(active, step, gamma);
    x = active.point();
  }
  out.inside = out.distance <= tol;
  return out;
}

}  // namespace

Membership membership(const RateRegionModel& model, std::span<const double> rate, double tol, int max_iterations) {
  const std::size_t n = model.num_clients();
  if (rate.size() != n) throw DimensionMismatchError("rate has wrong length");
  if ((std::uint64_t{1} << n) * model.num_outcomes() > kExactMembershipBudget)
    return fw_projection(model, rate, tol, max_iterations);

  // R is a polymatroid: r is inside iff r >= 0 and r(T) <= rho(T) for all T.
  double margin = 0.0;
  std::vector<double> direction;
  for (std::size_t k = 0; k < n; ++k) {
    if (-rate[k] > margin) {
      margin = -rate[k];
      direction.assign(n, 0.0);
      direction[k] = -1.0;
    }
  }
  const auto full = static_cast<ClientMask>((std::uint64_t{1} << n) - 1);
  for (ClientMask t = 1; t != 0 && t <= full; ++t) {
    double r_t = 0.0;
    for (ClientId k : from_mask(t)) r_t += rate[k];
    const double m = (r_t - rank(model, t)) / std::sqrt(static_cast<double>(popcount(t)));
    if (m > margin) {
      margin = m;
      direction.assign(n, 0.0);
      for (ClientId k : from_mask(t)) direction[k] = 1.0 / std::sqrt(static_cast<double>(popcount(t)));
    }
    if (t == full) break;
  }
  if (margin <= tol) {
    Membership out;
    out.inside = true;
    out.closest.assign(rate.begin(), rate.end());
    return out;
  }
  auto out = fw_projection(model, rate, tol, max_iterations);
  out.inside = false;
  out.distance = std::max(out.distance, margin);
  out.separating_direction = direction;
  out.margin = margin;
  return out;
}

double rank(const RateRegionModel& model, ClientMask subset) {
  double rho = 0.0;
  for (const auto& o : model.distribution().outcomes) {
    rho += o.probability * std::min(popcount(subset & o.available), o.capacity);
  }
  return rho;
}

SelectionCovariance selection_covariance(const RateRegionModel& model, const PolicyTable& table) {
  const auto n = static_cast<Eigen::Index>(model.num_clients());
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t c = 0; c < model.num_outcomes(); ++c) {
    const double pi = model.distribution().outcomes[c].probability;
    for (const auto& e : table.at(model.key(c))) {
      const auto members = from_mask(e.subset);
      for (ClientId i : members) {
        for (ClientId j : members) second(i, j) += pi * e.probability;
      }
    }
  }
  SelectionCovariance cov;
  cov.rate.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd r(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    r(k) = second(k, k);
    cov.rate[static_cast<std::size_t>(k)] = r(k);
  }
  cov.sigma = second - r * r.transpose();
  return cov;
}

double sampling_variance_exact(const Eigen::MatrixXd& y, const SelectionCovariance& cov) {
  if (y.rows() != cov.sigma.rows()) throw DimensionMismatchError("update matrix rows must equal the client count");
  return (y.transpose() * cov.sigma * y).trace();
}

VarianceBounds variance_bounds(std::span<const double> weights, std::span<const double> rate, int local_steps,
                               double grad_bound) {
  if (weights.size() != rate.size()) throw DimensionMismatchError("weights and rate differ in length");
  double inv = 0.0;
  double inv_sq = 0.0;
  double sq = 0.0;
  for (std::size_t k = 0; k < rate.size(); ++k) {
    if (!(rate[k] > 0.0)) throw std::domain_error("variance bounds require every r_k > 0");
    inv += weights[k] / rate[k];
    inv_sq += weights[k] * weights[k] / rate[k];
    sq += weights[k] * weights[k];
  }
  const double scale = 4.0 * local_steps * local_steps * grad_bound * grad_bound;
  return {scale * (inv - 1.0), scale * (inv_sq + sq)};
}

PolicyTable proportional_policy(const RateRegionModel& model, std::span<const double> weights) {
  if (weights.size() != model.num_clients()) throw DimensionMismatchError("weights have wrong length");
  PolicyTable table;
  for (std::size_t c = 0; c < model.num_outcomes(); ++c) {
    const auto key = model.key(c);
    ClientSet pool;
    for (ClientId k : from_mask(key.available)) {
      if (weights[k] > 0.0) pool.push_back(k);
    }
    const int draws = std::min(key.capacity, static_cast<int>(pool.size()));
    std::map<ClientMask, double> probs;
    std::function<void(ClientMask, double, int)> recurse = [&](ClientMask chosen, double prob, int left) {
      if (left == 0) {
        probs[chosen] += prob;
        return;
      }
      double total = 0.0;
      for (ClientId k : pool) {
        if (!((chosen >> k) & 1U)) total += weights[k];
      }
      for (ClientId k : pool) {
        if ((chosen >> k) & 1U) continue;
        recurse(chosen | (ClientMask{1} << k), prob * weights[k] / total, left - 1);
      }
    };
    recurse(0, 1.0, draws);
    std::vector<PolicyTable::Entry> entries;
    for (const auto& [subset, prob] : probs) entries.push_back({subset, prob});
    table.set(key, std::move(entries));
  }
  return table;
}

PolicyTable mix_policies(const RateRegionModel& model, const PolicyTable& a, const PolicyTable& b, double weight_a) {
  if (!(weight_a >= 0.0 && weight_a <= 1.0)) throw InvalidInputError("mixing weight must lie in [0, 1]");
  PolicyTable out;
  for (std::size_t c = 0; c < model.num_outcomes(); ++c) {
    const auto key = model.key(c);
    std::map<ClientMask, double> merged;
    for (const auto& e : a.at(key)) merged[e.subset] += weight_a * e.probability;
    for (const auto& e : b.at(key)) merged[e.subset] += (1.0 - weight_a) * e.probability;
    std::vector<PolicyTable::Entry> entries;
    for (const auto& [subset, prob] : merged) entries.push_back({subset, prob});
    out.set(key, std::move(entries));
  }
  return out;
}

}  // namespace f3ast::rate_region
