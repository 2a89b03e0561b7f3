// Acceptance checks, one line per criterion. Every reference value is
// recomputed here (grid search, enumeration, brute force, Monte Carlo) rather
// than taken from the library paths being judged.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "f3ast/config.hpp"
#include "f3ast/csv.hpp"
#include "f3ast/experiment.hpp"
#include "f3ast/plot.hpp"
#include "f3ast/rate_region.hpp"

namespace fs = std::filesystem;
using namespace f3ast;
using namespace f3ast::harness;
using availability::ConfigurationDistribution;
using selection::PolicyTable;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("f3ast_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig shipped_config(const std::string& name, const fs::path& out) {
  auto c = load_config(fs::path(F3AST_CONFIG_DIR) / name);
  c.output_dir = out;
  return c;
}

std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::vector<double> p(n);
  for (auto& x : p) x = 0.05 + uniform01(rng);
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& x : p) x /= s;
  return p;
}

// ---------------------------------------------------------------------------
// Enumeration helpers written against the definitions, not the library.

struct Instance {
  ConfigurationDistribution dist;
  PolicyTable table;
};

std::vector<ClientMask> subsets_within(ClientMask available, int capacity) {
  std::vector<ClientMask> out;
  for (ClientMask s = available;; s = (s - 1) & available) {
    if (std::popcount(s) <= capacity) out.push_back(s);
    if (s == 0) break;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

ConfigurationDistribution independent(const std::vector<double>& q, int capacity) {
  ConfigurationDistribution d;
  d.num_clients = q.size();
  const ClientMask count = ClientMask{1} << q.size();
  for (ClientMask m = 0; m < count; ++m) {
    double pr = 1.0;
    for (std::size_t k = 0; k < q.size(); ++k) pr *= (m >> k & 1U) ? q[k] : 1.0 - q[k];
    d.outcomes.push_back({m, capacity, pr});
  }
  return d;
}

PolicyTable random_table(const ConfigurationDistribution& d, Rng& rng) {
  PolicyTable t;
  for (const auto& o : d.outcomes) {
    std::vector<PolicyTable::Entry> row;
    double total = 0.0;
    for (auto s : subsets_within(o.available, o.capacity)) {
      const double w = 0.05 + uniform01(rng);
      row.push_back({s, w});
      total += w;
    }
    for (auto& e : row) e.probability /= total;
    t.set({o.available, o.capacity}, row);
  }
  return t;
}

// Each available client is kept independently with probability s_k.
PolicyTable thinning_table(const ConfigurationDistribution& d, const std::vector<double>& s) {
  PolicyTable t;
  for (const auto& o : d.outcomes) {
    std::vector<PolicyTable::Entry> row;
    for (auto sub : subsets_within(o.available, 64)) {
      double pr = 1.0;
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (!(o.available >> k & 1U)) continue;
        pr *= (sub >> k & 1U) ? s[k] : 1.0 - s[k];
      }
      row.push_back({sub, pr});
    }
    t.set({o.available, o.capacity}, row);
  }
  return t;
}

std::vector<double> enumerated_rate(const Instance& in) {
  std::vector<double> r(in.dist.num_clients, 0.0);
  for (const auto& o : in.dist.outcomes) {
    for (const auto& e : in.table.at({o.available, o.capacity}))
      for (std::size_t k = 0; k < r.size(); ++k)
        if (e.subset >> k & 1U) r[k] += o.probability * e.probability;
  }
  return r;
}

fedtrain::AggregateUpdate debiased(ClientMask subset, const std::vector<Eigen::VectorXd>& v,
                                   const std::vector<double>& p, const std::vector<double>& r) {
  std::vector<fedtrain::ClientUpdate> ups;
  for (std::size_t k = 0; k < v.size(); ++k)
    if (subset >> k & 1U) ups.push_back({static_cast<ClientId>(k), v[k], 0, 0.0});
  return fedtrain::aggregate_debias(ups, p, r, v.front().size());
}

struct Moments {
  Eigen::VectorXd mean;
  double variance = 0.0;  // E||Delta - vbar||^2
};

Moments enumerate_delta(const Instance& in, const std::vector<Eigen::VectorXd>& v, const std::vector<double>& p,
                        const std::vector<double>& r, const Eigen::VectorXd& vbar) {
  Moments m{Eigen::VectorXd::Zero(vbar.size()), 0.0};
  for (const auto& o : in.dist.outcomes) {
    for (const auto& e : in.table.at({o.available, o.capacity})) {
      const double w = o.probability * e.probability;
      const Eigen::VectorXd d = debiased(e.subset, v, p, r).delta;
      m.mean += w * d;
      m.variance += w * (d - vbar).squaredNorm();
    }
  }
  return m;
}

Eigen::VectorXd weighted_mean(const std::vector<Eigen::VectorXd>& v, const std::vector<double>& p) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.front().size());
  for (std::size_t k = 0; k < v.size(); ++k) out += p[k] * v[k];
  return out;
}

std::vector<Eigen::VectorXd> random_updates(std::size_t n, int dim, Rng& rng) {
  std::vector<Eigen::VectorXd> v(n, Eigen::VectorXd(dim));
  for (auto& x : v)
    for (int i = 0; i < dim; ++i) x(i) = standard_normal(rng);
  return v;
}

PolicyTable policy_b() {
  PolicyTable t;
  t.set({0b11, 1}, {{0b01, 1.0}});
  t.set({0b01, 1}, {{0b01, 1.0}});
  t.set({0b10, 1}, {{0b10, 1.0}});
  t.set({0b00, 1}, {{0b00, 1.0}});
  return t;
}

// ---------------------------------------------------------------------------

Outcome rate_convergence() {
  // Oracle: H(r) = 0.25/r1 + 0.25/r2 over r1 <= 0.375, r2 <= 0.8,
  // r1 + r2 <= 0.875 on a 1e-3 grid.
  double best = 1e300;
  std::vector<double> star(2);
  for (int i = 1; i <= 1000; ++i) {
    for (int j = 1; j <= 1000; ++j) {
      const double r1 = i * 1e-3, r2 = j * 1e-3;
      if (r1 > 0.375 + 1e-12 || r2 > 0.8 + 1e-12 || r1 + r2 > 0.875 + 1e-12) continue;
      const double h = 0.25 / r1 + 0.25 / r2;
      if (h < best) {
        best = h;
        star = {r1, r2};
      }
    }
  }
  const auto config = shipped_config("two_client_rates.json", scratch("rates"));
  const auto report = run_rate_convergence(config);
  double gap = 0.0;
  for (std::size_t k = 0; k < 2; ++k) gap = std::max(gap, std::abs(report.time_average[k] - star[k]));
  const bool pass = gap <= 0.02 && report.seconds < 10.0 && report.rounds == 50000;
  return {pass, "grid r*=(" + fmt("%.3f", star[0]) + ", " + fmt("%.3f", star[1]) + ") avg=(" +
                    fmt("%.4f", report.time_average[0]) + ", " + fmt("%.4f", report.time_average[1]) +
                    ") sup gap " + fmt("%.4f", gap) + " <= 0.02, " + fmt("%.2f", report.seconds) + " s < 10 s"};
}

Outcome unbiasedness() {
  Rng rng = make_stream(21, Stream::Policy);
  double worst = 0.0;
  int fixtures = 0;
  // the two-client fixture under policy b, then random N <= 3 instances
  std::vector<Instance> instances{{availability::two_client_example(), policy_b()}};
  std::vector<std::vector<double>> weights{{0.5, 0.5}};
  for (int i = 0; i < 60; ++i) {
    const std::size_t n = 1 + i % 3;
    std::vector<double> q(n);
    for (auto& x : q) x = 0.2 + 0.8 * uniform01(rng);
    const auto dist = independent(q, 1 + static_cast<int>(uniform_index(rng, n)));
    instances.push_back({dist, random_table(dist, rng)});
    weights.push_back(random_simplex(n, rng));
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& in = instances[i];
    const auto r = enumerated_rate(in);
    const auto v = random_updates(in.dist.num_clients, 4, rng);
    const auto vbar = weighted_mean(v, weights[i]);
    const auto m = enumerate_delta(in, v, weights[i], r, vbar);
    worst = std::max(worst, (m.mean - vbar).norm());
    ++fixtures;
  }

  // Monte Carlo on the fixture, 1e5 draws, 4 standard errors per coordinate.
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> r{0.375, 0.5};
  const auto v = random_updates(2, 3, rng);
  const auto vbar = weighted_mean(v, p);
  availability::EnumeratedConfigurations source(availability::two_client_example(),
                                                make_stream(21, Stream::Availability));
  const auto table = policy_b();
  const int draws = 100000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  for (int t = 0; t < draws; ++t) {
    const auto sel = selection::fixed_policy_select(table, source.next(t), rng).selected;
    const Eigen::VectorXd d = debiased(to_mask(sel), v, p, r).delta;
    sum += d;
    sq += d.cwiseProduct(d);
  }
  double worst_z = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double mean = sum(i) / draws;
    const double se = std::sqrt((sq(i) / draws - mean * mean) / draws);
    worst_z = std::max(worst_z, std::abs(mean - vbar(i)) / se);
  }
  const bool pass = worst <= 1e-12 && worst_z <= 4.0;
  return {pass, std::to_string(fixtures) + " enumerated fixtures, max ||E[D]-vbar|| " + fmt("%.2e", worst) +
                    " <= 1e-12; Monte Carlo 1e5 draws max |z| " + fmt("%.2f", worst_z) + " <= 4"};
}

Outcome variance_formula() {
  Rng rng = make_stream(31, Stream::Policy);
  const std::vector<double> p{0.5, 0.3, 0.2};
  const auto dist = independent({0.5, 0.7, 0.9}, 2);
  const Instance in{dist, random_table(dist, rng)};
  const auto r = enumerated_rate(in);
  const auto v = random_updates(3, 5, rng);
  const auto vbar = weighted_mean(v, p);
  const double exact = enumerate_delta(in, v, p, r, vbar).variance;

  const rate_region::RateRegionModel model(dist);
  const auto cov = rate_region::selection_covariance(model, in.table);
  Eigen::MatrixXd y(3, 5);
  for (int k = 0; k < 3; ++k) y.row(k) = p[k] / r[k] * v[k].transpose();
  const double trace = rate_region::sampling_variance_exact(y, cov);

  availability::EnumeratedConfigurations source(dist, make_stream(31, Stream::Availability));
  const int draws = 1000000;
  double acc = 0.0;
  for (int t = 0; t < draws; ++t) {
    const auto sel = selection::fixed_policy_select(in.table, source.next(t), rng).selected;
    acc += (debiased(to_mask(sel), v, p, r).delta - vbar).squaredNorm();
  }
  const double mc = acc / draws;
  const double rel = std::abs(mc - trace) / trace;
  const double exact_err = std::abs(exact - trace);
  const bool pass = rel <= 0.02 && exact_err <= 1e-10;
  return {pass, "Tr(YY'S)=" + fmt("%.6f", trace) + ", Monte Carlo 1e6 " + fmt("%.6f", mc) + " (rel " +
                    fmt("%.4f", rel) + " <= 0.02), enumeration diff " + fmt("%.1e", exact_err) + " <= 1e-10"};
}

Outcome variance_bounds() {
  Rng rng = make_stream(41, Stream::Policy);
  int violations = 0, diagonal = 0;
  double closest = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + inst % 2;
    std::vector<double> q(n);
    for (auto& x : q) x = 0.2 + 0.8 * uniform01(rng);
    const auto p = random_simplex(n, rng);
    const bool thinning = inst % 2 == 0;
    Instance in;
    if (thinning) {
      in.dist = independent(q, static_cast<int>(n));
      std::vector<double> s(n);
      for (auto& x : s) x = 0.2 + 0.8 * uniform01(rng);
      in.table = thinning_table(in.dist, s);
    } else {
      in.dist = independent(q, 1 + static_cast<int>(uniform_index(rng, n)));
      in.table = random_table(in.dist, rng);
    }
    const auto r = enumerated_rate(in);

    // Real local SGD on small least-squares clients; G is the largest
    // stochastic gradient norm met.
    const int dim = 3, local_steps = 3;
    const auto sched = fedtrain::LearningRateSchedule::inverse_time(0.5, 2.0, local_steps);
    const std::int64_t round = static_cast<std::int64_t>(uniform_index(rng, 50));
    data::GlmSpec spec{data::TaskKind::LeastSquares, dim, 1, 1e-3, true};
    Eigen::VectorXd w(spec.num_params());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = standard_normal(rng);
    std::vector<Eigen::VectorXd> v;
    double g = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      data::ClientDataset d;
      d.features.resize(12, dim);
      d.targets.resize(12);
      for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < dim; ++j) d.features(i, j) = standard_normal(rng);
        d.targets(i) = d.features.row(i).sum() + static_cast<double>(k);
      }
      Rng batching = make_stream(41, Stream::Batching, static_cast<std::uint64_t>(inst), k);
      auto u = fedtrain::client_local_sgd(spec, w, static_cast<ClientId>(k), d, local_steps, sched, round, 4, batching);
      g = std::max(g, u.max_grad_norm);
      v.push_back(u.delta);
    }
    const auto vbar = weighted_mean(v, p);
    const double eta = sched.rate(round, local_steps, local_steps);
    // Sampling variance in the bound's units (divided by eta^2).
    const double var = enumerate_delta(in, v, p, r, vbar).variance / (eta * eta);

    double inv = 0.0, inv_sq = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      inv += p[k] / r[k];
      inv_sq += p[k] * p[k] / r[k];
      sq += p[k] * p[k];
    }
    const double scale = 4.0 * local_steps * local_steps * g * g;
    const double general = scale * (inv - 1.0);
    const double uncorrelated = scale * (inv_sq + sq);
    const auto lib = rate_region::variance_bounds(p, r, local_steps, g);
    if (std::abs(lib.general - general) > 1e-9 * general || std::abs(lib.uncorrelated - uncorrelated) > 1e-9 * uncorrelated)
      ++violations;
    if (var > general * (1 + 1e-9)) ++violations;
    closest = std::max(closest, var / general);
    // Independent selection has a diagonal covariance; only then does the
    // uncorrelated refinement apply.
    if (thinning) {
      ++diagonal;
      if (var > uncorrelated * (1 + 1e-9)) ++violations;
      closest = std::max(closest, var / uncorrelated);
    }
  }
  return {violations == 0, "100 instances (" + std::to_string(diagonal) + " with independent selection), " +
                               std::to_string(violations) + " violations, max variance/bound " + fmt("%.3f", closest)};
}

Outcome greedy_optimality() {
  Rng rng = make_stream(51, Stream::Policy);
  int agree = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 1 + uniform_index(rng, 12);
    const int k = static_cast<int>(uniform_index(rng, 5));
    const auto mode = inst % 2 ? selection::CorrelationMode::Uncorrelated : selection::CorrelationMode::PositivelyCorrelated;
    const auto p = random_simplex(n, rng);
    std::vector<double> r(n);
    for (auto& x : r) x = 0.001 + 0.999 * uniform01(rng);
    ClientSet avail;
    for (ClientId c = 0; c < n; ++c)
      if (uniform01(rng) < 0.75) avail.push_back(c);

    // utility -dH/dr_k = c_k / r_k^2
    std::vector<double> u(n);
    for (std::size_t c = 0; c < n; ++c) {
      const double coef = mode == selection::CorrelationMode::Uncorrelated ? p[c] * p[c] : p[c];
      u[c] = coef / (r[c] * r[c]);
    }
    ClientMask best = 0;
    double best_value = -1.0;
    const ClientMask am = to_mask(avail);
    for (auto s : subsets_within(am, k)) {
      double value = 0.0;
      for (std::size_t c = 0; c < n; ++c)
        if (s >> c & 1U) value += u[c];
      if (value > best_value) {
        best_value = value;
        best = s;
      }
    }
    const auto got = selection::f3ast_select({p, mode}, selection::ParticipationRate(r), {0, avail, k}).selected;
    agree += to_mask(got) == best;
  }
  return {agree == 1000, std::to_string(agree) + "/1000 instances equal the brute-force argmax"};
}

Outcome oracle_consistency() {
  Rng rng = make_stream(61, Stream::Policy);
  int failures = 0, compared = 0;
  double worst_gap = 0.0;
  std::vector<std::pair<ConfigurationDistribution, std::vector<double>>> models{
      {availability::two_client_example(), {0.5, 0.5}}};
  for (int i = 0; i < 4; ++i) {
    std::vector<double> q(3);
    for (auto& x : q) x = 0.1 + 0.9 * uniform01(rng);
    models.push_back({independent(q, 1 + i % 2), random_simplex(3, rng)});
  }
  for (const auto& [dist, p] : models) {
    const rate_region::RateRegionModel model(dist);
    for (auto mode : {selection::CorrelationMode::Uncorrelated, selection::CorrelationMode::PositivelyCorrelated}) {
      const selection::HObjective obj{p, mode};
      const auto opt = rate_region::optimal_rate(model, obj);
      if (!rate_region::membership(model, opt.rate, 1e-6).inside) ++failures;
      const double h_star = selection::h_value(obj, opt.rate);
      for (int j = 0; j < 100; ++j) {
        const Instance in{dist, random_table(dist, rng)};
        const double h = selection::h_value(obj, enumerated_rate(in));
        worst_gap = std::min(worst_gap, h - h_star);
        if (h_star > h + 1e-9) ++failures;
        ++compared;
      }
    }
  }
  const rate_region::RateRegionModel fixture(availability::two_client_example());
  const bool ra = rate_region::membership(fixture, std::vector<double>{0.375, 0.0}).inside;
  const bool rb = rate_region::membership(fixture, std::vector<double>{0.375, 0.5}).inside;
  const bool out = !rate_region::membership(fixture, std::vector<double>{0.5, 0.5}).inside;
  const bool pass = failures == 0 && compared == 1000 && ra && rb && out;
  return {pass, std::to_string(compared) + " random achievable rates, " + std::to_string(failures) +
                    " failures (min H(r)-H(r*) " + fmt("%.2e", worst_gap) + "); r^a " + (ra ? "inside" : "OUTSIDE") +
                    ", r^b " + (rb ? "inside" : "OUTSIDE") + ", (0.5,0.5) " + (out ? "outside" : "INSIDE")};
}

// Exact ridge optimum from the normal equations.
Eigen::VectorXd ridge_optimum(const data::GlmSpec& spec, const data::FederatedDataset& d) {
  const Eigen::Index n = spec.num_params();
  Eigen::MatrixXd a = spec.l2_reg * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < d.num_clients(); ++k) {
    const auto& tr = d.clients[k].train;
    Eigen::MatrixXd x(tr.size(), n);
    x.leftCols(spec.dim) = tr.features;
    x.col(spec.dim).setOnes();
    const double w = d.weights[k] / static_cast<double>(tr.size());
    a += w * x.transpose() * x;
    b += w * x.transpose() * tr.targets;
  }
  return a.llt().solve(b);
}

Outcome ridge_convergence() {
  const auto start = std::chrono::steady_clock::now();
  const auto config = shipped_config("ridge_convergence.json", scratch("ridge"));
  const std::int64_t t1 = config.rounds;
  double sub_t = 0.0, sub_2t = 0.0;
  for (const auto seed : config.seeds) {
    const auto dataset = build_dataset(config, seed);
    const auto spec = data::GlmSpec::for_dataset(dataset, config.dataset.l2_reg, config.dataset.intercept);
    const double f_star = data::global_train_loss(spec, ridge_optimum(spec, dataset), dataset);
    const auto weights = selection_weights(config, &dataset);
    fedtrain::TrainerOptions options;
    options.local_steps = config.local_steps;
    options.batch_size = config.batch_size;
    options.schedule = fedtrain::LearningRateSchedule::inverse_time(config.learning_rate.mu,
                                                                    config.learning_rate.smoothness, config.local_steps);
    options.eval_every = 0;
    fedtrain::FederatedTrainer trainer(dataset, spec, build_selector(config, selection::PolicyKind::F3ast, weights, seed),
                                       build_source(config, weights, seed), fedtrain::ServerOptimizer::sgd(), options,
                                       seed);
    for (std::int64_t t = 0; t < 2 * t1; ++t) {
      trainer.run_round();
      if (t + 1 == t1) sub_t += data::global_train_loss(spec, trainer.model(), dataset) - f_star;
    }
    sub_2t += data::global_train_loss(spec, trainer.model(), dataset) - f_star;
  }
  const auto n = static_cast<double>(config.seeds.size());
  sub_t /= n;
  sub_2t /= n;
  const double ratio = sub_t / sub_2t;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool pass = ratio >= 1.25 && ratio <= 2.6 && secs < 60.0;
  return {pass, "F(w_T)-F* " + fmt("%.3e", sub_t) + " at T=" + std::to_string(t1) + ", " + fmt("%.3e", sub_2t) +
                    " at 2T; ratio " + fmt("%.3f", ratio) + " in [1.25, 2.6], " + fmt("%.1f", secs) + " s < 60 s"};
}

Outcome directional() {
  const auto start = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = true;
  for (const char* name : {"smartphones", "uneven"}) {
    auto config = shipped_config(std::string(name) + ".json", scratch(name));
    const auto summary = run_experiment(config);
    // Mean over seeds of the final-window accuracy, recomputed from the CSVs.
    auto policy_accuracy = [&](const std::string& policy) {
      double total = 0.0;
      for (const auto seed : config.seeds) {
        const auto table = read_csv(config.output_dir / (policy + "_seed" + std::to_string(seed) + ".csv"));
        const int col = table.column("per_sample_accuracy");
        std::vector<double> values;
        for (std::size_t i = 0; i < table.rows.size(); ++i)
          if (auto v = parse_cell(table, i, col, config.output_dir)) values.push_back(*v);
        const std::size_t used = std::min<std::size_t>(values.size(), static_cast<std::size_t>(config.summary_window));
        total += std::accumulate(values.end() - static_cast<std::ptrdiff_t>(used), values.end(), 0.0) /
                 static_cast<double>(used);
      }
      return total / static_cast<double>(config.seeds.size());
    };
    const double f = policy_accuracy("f3ast");
    const double a = policy_accuracy("fedavg");
    const bool ok = f >= a + 0.02 && summary["policies"]["f3ast"]["seeds"] == 3 && config.rounds == 500;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + name + " f3ast " + fmt("%.3f", f) + " vs fedavg " +
              fmt("%.3f", a) + " (" + fmt("%+.3f", f - a) + ")";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  pass = pass && secs < 300.0;
  return {pass, detail + ", need >= +0.020; " + fmt("%.1f", secs) + " s < 300 s"};
}

Outcome update_norm_bound() {
  nlohmann::json j = {
      {"dataset", {{"kind", "synthetic_alpha"}, {"num_clients", 30}, {"samples_per_client", 60}, {"dim", 20}}},
      {"availability", {{"model", "home_devices"}}},
      {"capacity", 5},
      {"policy", "f3ast"},
      {"local_steps", 5},
      {"batch_size", 10},
      {"learning_rate", {{"kind", "inverse_time"}, {"mu", 0.5}, {"smoothness", 2.0}}},
      {"rounds", 1000},
      {"eval_every", 0},
      {"seeds", {7}}};
  const auto config = parse_config(j);
  const auto dataset = build_dataset(config, 7);
  const auto records = run_single(config, selection::PolicyKind::F3ast, 7, dataset);
  const auto sched = fedtrain::LearningRateSchedule::inverse_time(0.5, 2.0, 5);
  int violations = 0, checked = 0;
  double worst = 0.0, g_all = 0.0;
  for (const auto& r : records) {
    if (r.skipped) continue;
    ++checked;
    if (r.max_update_norm > r.update_norm_bound * (1 + 1e-9)) ++violations;
    worst = std::max(worst, r.max_update_norm / r.update_norm_bound);
    // recover this round's G from the reported bound
    g_all = std::max(g_all, r.update_norm_bound / (2.0 * sched.rate(r.round, 5, 5) * 5));
  }
  // Same check with one G for the whole run, as the bound is usually stated.
  for (const auto& r : records) {
    if (!r.skipped && r.max_update_norm > 2.0 * sched.rate(r.round, 5, 5) * 5 * g_all * (1 + 1e-9)) ++violations;
  }
  return {violations == 0 && checked > 900, std::to_string(checked) + " trained rounds, " + std::to_string(violations) +
                                                " violations, max ||v||/bound " + fmt("%.3f", worst)};
}

Outcome determinism() {
  nlohmann::json j = {
      {"dataset", {{"kind", "synthetic_alpha"}, {"num_clients", 12}, {"samples_per_client", 40}, {"dim", 8}}},
      {"availability", {{"model", "smartphones"}}},
      {"capacity", 3},
      {"policy", {"f3ast", "fedavg", "poc"}},
      {"local_steps", 2},
      {"rounds", 60},
      {"eval_every", 5},
      {"rates_every", 20},
      {"seeds", {3}}};
  int differing = 0, compared = 0;
  std::vector<fs::path> dirs{scratch("det_a"), scratch("det_b")};
  for (const auto& dir : dirs) {
    auto config = parse_config(j);
    config.output_dir = dir;
    run_experiment(config);
  }
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    if (entry.path().extension() != ".csv") continue;
    csvs.push_back(entry.path());
    ++compared;
    if (slurp(entry.path()) != slurp(dirs[1] / entry.path().filename())) ++differing;
  }
  std::sort(csvs.begin(), csvs.end());
  const auto pa = emit_plots(csvs, dirs[0] / "plots");
  const auto pb = emit_plots(csvs, dirs[1] / "plots");
  for (const auto& p : pa.written)
    if (slurp(p) != slurp(dirs[1] / "plots" / p.filename())) ++differing;

  // golden plots from fixed inputs
  const fs::path in = fs::path(F3AST_DATA_DIR) / "plots";
  const auto out = scratch("golden");
  const auto g = emit_plots({in / "f3ast_seed0.csv", in / "f3ast_seed1.csv", in / "fedavg_seed0.csv"}, out);
  int golden_mismatch = 0;
  for (const auto& p : g.written)
    if (slurp(p) != slurp(fs::path(F3AST_GOLDEN_DIR) / p.filename())) ++golden_mismatch;
  const bool pass = compared == 3 && differing == 0 && g.written.size() == 4 && golden_mismatch == 0 &&
                    pa.written.size() == pb.written.size();
  return {pass, std::to_string(compared) + " CSV pairs, " + std::to_string(pa.written.size()) + " plot pairs, " +
                    std::to_string(differing) + " differ; " + std::to_string(g.written.size()) + " golden plots, " +
                    std::to_string(golden_mismatch) + " mismatches"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "rate convergence", rate_convergence},     {2, "unbiased aggregation", unbiasedness},
      {3, "variance formula", variance_formula},     {4, "variance bounds", variance_bounds},
      {5, "greedy optimality", greedy_optimality},   {6, "region oracle consistency", oracle_consistency},
      {7, "ridge convergence shape", ridge_convergence}, {8, "directional comparison", directional},
      {9, "update-norm bound", update_norm_bound},   {10, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
