#include "f3ast/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace f3ast::harness {

namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "; " : "") << items[i];
  return os.str();
}

/// Walks a config tree, recording problems instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& what) { errors.push_back(path + ": " + what); }

  /// Reports keys of `obj` outside `allowed`. Returns false if obj is not an object.
  bool object(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
      fail(path.empty() ? "<root>" : path, "expected an object");
      return false;
    }
    std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items()) {
      if (!known.count(key)) fail(child(path, key), "unknown key");
    }
    return true;
  }

  template <typename T>
  bool get(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return false;
    try {
      out = obj.at(key).get<T>();
      return true;
    } catch (const json::exception&) {
      fail(child(path, key), "wrong type");
      return false;
    }
  }

  template <typename T>
  bool get(const json& obj, const char* key, const std::string& path, std::optional<T>& out) {
    if (!obj.contains(key) || obj.at(key).is_null()) return false;
    T value{};
    if (!get(obj, key, path, value)) return false;
    out = value;
    return true;
  }

  /// Parses a named enumeration via `parse`, which throws on unknown names.
  template <typename T, typename Parse>
  void name(const json& obj, const char* key, const std::string& path, T& out, Parse parse) {
    std::string s;
    if (!get(obj, key, path, s)) return;
    try {
      out = parse(s);
    } catch (const std::exception& e) {
      fail(child(path, key), e.what());
    }
  }

  void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) fail(path, what);
  }

  static std::string child(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
};

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "synthetic_iid") return DatasetKind::SyntheticIid;
  if (name == "synthetic_alpha") return DatasetKind::SyntheticAlpha;
  if (name == "file") return DatasetKind::File;
  throw InvalidInputError("unknown dataset kind '" + std::string(name) + "'");
}

void read_dataset(Reader& rd, const json& j, DatasetConfig& d) {
  const std::string p = "dataset";
  if (!rd.object(j, p,
                 {"kind", "task", "alpha", "beta", "num_clients", "num_samples", "samples_per_client", "dim",
                  "num_classes", "validation_fraction", "l2_reg", "intercept", "path"}))
    return;
  rd.name(j, "kind", p, d.kind, parse_dataset_kind);
  rd.name(j, "task", p, d.task, data::parse_task_kind);
  rd.get(j, "alpha", p, d.alpha);
  rd.get(j, "beta", p, d.beta);
  rd.get(j, "num_clients", p, d.num_clients);
  rd.get(j, "num_samples", p, d.num_samples);
  rd.get(j, "samples_per_client", p, d.samples_per_client);
  rd.get(j, "dim", p, d.dim);
  rd.get(j, "num_classes", p, d.num_classes);
  rd.get(j, "validation_fraction", p, d.validation_fraction);
  rd.get(j, "l2_reg", p, d.l2_reg);
  rd.get(j, "intercept", p, d.intercept);
  rd.get(j, "path", p, d.path);

  rd.require(d.alpha >= 0.0, p + ".alpha", "must be >= 0");
  rd.require(d.beta >= 0.0, p + ".beta", "must be >= 0");
  rd.require(d.num_clients >= 1, p + ".num_clients", "must be >= 1");
  rd.require(!d.dim || *d.dim >= 1, p + ".dim", "must be >= 1");
  rd.require(d.num_classes >= 2, p + ".num_classes", "must be >= 2");
  rd.require(d.validation_fraction > 0.0 && d.validation_fraction < 1.0, p + ".validation_fraction",
             "must lie in (0, 1)");
  rd.require(d.l2_reg >= 0.0, p + ".l2_reg", "must be >= 0");
  if (d.kind == DatasetKind::SyntheticIid) {
    rd.require(d.num_samples % std::max<std::size_t>(d.num_clients, 1) == 0, p + ".num_samples",
               "must be a multiple of num_clients");
    rd.require(d.num_samples / std::max<std::size_t>(d.num_clients, 1) >= 2, p + ".num_samples",
               "needs at least two samples per client");
  }
  if (d.kind == DatasetKind::SyntheticAlpha) {
    rd.require(d.task == data::TaskKind::Softmax, p + ".task", "synthetic_alpha is a softmax dataset");
    rd.require(d.samples_per_client == 0 || d.samples_per_client >= 2, p + ".samples_per_client",
               "must be 0 (heterogeneous) or >= 2");
  }
  if (d.kind == DatasetKind::File) rd.require(!d.path.empty(), p + ".path", "required for kind 'file'");
}

void read_availability(Reader& rd, const json& j, AvailabilityConfig& a) {
  const std::string p = "availability";
  if (!rd.object(j, p,
                 {"model", "scarce_q", "lognormal_sigma", "sine_amplitude", "sine_offset", "period_steps",
                  "uneven_mean"}))
    return;
  std::string model;
  if (rd.get(j, "model", p, model)) {
    if (model == "two_client_example") {
      a.two_client_example = true;
    } else {
      try {
        a.model = availability::AvailabilityModel::with_defaults(availability::parse_availability_kind(model));
      } catch (const std::exception& e) {
        rd.fail(p + ".model", e.what());
      }
    }
  }
  auto& m = a.model;
  rd.get(j, "scarce_q", p, m.scarce_q);
  rd.get(j, "lognormal_sigma", p, m.lognormal_sigma);
  rd.get(j, "sine_amplitude", p, m.sine_amplitude);
  rd.get(j, "sine_offset", p, m.sine_offset);
  rd.get(j, "period_steps", p, m.period_steps);
  rd.get(j, "uneven_mean", p, m.uneven_mean);
  try {
    m.validate();
  } catch (const std::exception& e) {
    rd.fail(p, e.what());
  }
}

void read_capacity(Reader& rd, const json& j, availability::CapacitySchedule& c) {
  try {
    if (j.is_number_integer()) {
      c = availability::CapacitySchedule::constant(j.get<int>());
    } else if (j.is_array()) {
      c = availability::CapacitySchedule::per_round(j.get<std::vector<int>>());
    } else {
      rd.fail("capacity", "expected an integer or a list of integers");
      return;
    }
    c.validate();
  } catch (const std::exception& e) {
    rd.fail("capacity", e.what());
  }
}

void read_policies(Reader& rd, const json& j, std::vector<selection::PolicyKind>& out) {
  std::vector<std::string> names;
  if (j.is_string()) {
    names.push_back(j.get<std::string>());
  } else if (j.is_array() && std::all_of(j.begin(), j.end(), [](const json& x) { return x.is_string(); })) {
    names = j.get<std::vector<std::string>>();
  } else {
    rd.fail("policy", "expected a policy name or a list of names");
    return;
  }
  if (names.empty()) rd.fail("policy", "at least one policy is required");
  out.clear();
  for (const auto& n : names) {
    try {
      const auto kind = selection::parse_policy_kind(n);
      if (std::find(out.begin(), out.end(), kind) != out.end()) {
        rd.fail("policy", "duplicate policy '" + n + "'");
      } else {
        out.push_back(kind);
      }
    } catch (const std::exception& e) {
      rd.fail("policy", e.what());
    }
  }
}

void read_server(Reader& rd, const json& j, ServerConfig& s) {
  const std::string p = "server_optimizer";
  if (!rd.object(j, p, {"kind", "lr", "beta1", "beta2", "eps"})) return;
  rd.name(j, "kind", p, s.kind, fedtrain::parse_server_kind);
  rd.get(j, "lr", p, s.lr);
  rd.get(j, "beta1", p, s.beta1);
  rd.get(j, "beta2", p, s.beta2);
  rd.get(j, "eps", p, s.eps);
  rd.require(!s.lr || *s.lr > 0.0, p + ".lr", "must be > 0");
  rd.require(s.beta1 >= 0.0 && s.beta1 < 1.0, p + ".beta1", "must lie in [0, 1)");
  rd.require(s.beta2 >= 0.0 && s.beta2 < 1.0, p + ".beta2", "must lie in [0, 1)");
  rd.require(s.eps > 0.0, p + ".eps", "must be > 0");
}

void read_schedule(Reader& rd, const json& j, ScheduleConfig& s) {
  const std::string p = "learning_rate";
  if (!rd.object(j, p, {"kind", "eta0", "mu", "smoothness"})) return;
  rd.name(j, "kind", p, s.kind, fedtrain::parse_schedule_kind);
  rd.get(j, "eta0", p, s.eta0);
  rd.get(j, "mu", p, s.mu);
  rd.get(j, "smoothness", p, s.smoothness);
  rd.require(s.eta0 > 0.0, p + ".eta0", "must be > 0");
  rd.require(s.mu > 0.0, p + ".mu", "must be > 0");
  rd.require(s.smoothness > 0.0, p + ".smoothness", "must be > 0");
}

int max_capacity(const availability::CapacitySchedule& c) {
  if (c.kind == availability::CapacitySchedule::Kind::Constant) return c.constant_k;
  return c.schedule.empty() ? 0 : *std::max_element(c.schedule.begin(), c.schedule.end());
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : InvalidInputError("invalid config: " + join(violations)), violations_(std::move(violations)) {}

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::SyntheticIid: return "synthetic_iid";
    case DatasetKind::SyntheticAlpha: return "synthetic_alpha";
    case DatasetKind::File: return "file";
  }
  return "unknown";
}

int ExperimentConfig::effective_dim() const {
  if (dataset.dim) return *dataset.dim;
  return dataset.kind == DatasetKind::SyntheticIid ? 100 : 60;
}

double ExperimentConfig::effective_server_lr() const {
  if (server.lr) return *server.lr;
  return server.kind == fedtrain::ServerOptimizer::Kind::Sgd ? 1.0 : 0.01;
}

std::int64_t ExperimentConfig::effective_burn_in() const {
  if (burn_in) return *burn_in;
  return static_cast<std::int64_t>(std::ceil(10.0 / beta - 1e-9));
}

int ExperimentConfig::effective_poc_candidates() const {
  if (poc_candidates) return *poc_candidates;
  return 2 * max_capacity(capacity);
}

ExperimentConfig parse_config(const json& j) {
  Reader rd;
  ExperimentConfig c;
  if (!rd.object(j, "",
                 {"dataset", "availability", "capacity", "policy", "poc_candidates", "server_optimizer",
                  "local_steps", "batch_size", "learning_rate", "beta", "r_min", "r_init", "correlation", "rounds",
                  "eval_every", "rates_every", "seeds", "output_dir", "record_wall_clock", "summary_window",
                  "burn_in", "rate_tolerance", "client_weights"}))
    throw ConfigError(rd.errors);

  if (j.contains("dataset")) read_dataset(rd, j["dataset"], c.dataset);
  if (j.contains("availability")) read_availability(rd, j["availability"], c.availability);
  if (j.contains("capacity")) read_capacity(rd, j["capacity"], c.capacity);
  if (j.contains("policy")) read_policies(rd, j["policy"], c.policies);
  if (j.contains("server_optimizer")) read_server(rd, j["server_optimizer"], c.server);
  if (j.contains("learning_rate")) read_schedule(rd, j["learning_rate"], c.learning_rate);
  rd.get(j, "poc_candidates", "", c.poc_candidates);
  rd.get(j, "local_steps", "", c.local_steps);
  rd.get(j, "batch_size", "", c.batch_size);
  rd.get(j, "beta", "", c.beta);
  rd.get(j, "r_min", "", c.r_min);
  rd.get(j, "r_init", "", c.r_init);
  rd.name(j, "correlation", "", c.correlation, selection::parse_correlation_mode);
  rd.get(j, "rounds", "", c.rounds);
  rd.get(j, "eval_every", "", c.eval_every);
  rd.get(j, "rates_every", "", c.rates_every);
  rd.get(j, "seeds", "", c.seeds);
  std::string out;
  if (rd.get(j, "output_dir", "", out)) c.output_dir = out;
  rd.get(j, "record_wall_clock", "", c.record_wall_clock);
  rd.get(j, "summary_window", "", c.summary_window);
  rd.get(j, "burn_in", "", c.burn_in);
  rd.get(j, "rate_tolerance", "", c.rate_tolerance);
  rd.get(j, "client_weights", "", c.client_weights);

  rd.require(c.local_steps >= 0, "local_steps", "must be >= 0");
  rd.require(c.batch_size >= 1, "batch_size", "must be >= 1");
  rd.require(c.beta > 0.0 && c.beta < 1.0, "beta", "must lie in (0, 1)");
  rd.require(c.r_min > 0.0 && c.r_min <= 1.0, "r_min", "must lie in (0, 1]");
  rd.require(!c.r_init || (*c.r_init > 0.0 && *c.r_init <= 1.0), "r_init", "must lie in (0, 1]");
  rd.require(c.rounds >= 0, "rounds", "must be >= 0");
  rd.require(c.eval_every >= 0, "eval_every", "must be >= 0");
  rd.require(c.rates_every >= 0, "rates_every", "must be >= 0");
  rd.require(!c.seeds.empty(), "seeds", "at least one seed is required");
  rd.require(c.summary_window >= 1, "summary_window", "must be >= 1");
  rd.require(!c.burn_in || *c.burn_in >= 0, "burn_in", "must be >= 0");
  rd.require(c.rate_tolerance > 0.0, "rate_tolerance", "must be > 0");
  rd.require(!c.poc_candidates || *c.poc_candidates >= 0, "poc_candidates", "must be >= 0");
  if (!c.client_weights.empty()) {
    double total = 0.0;
    bool ok = true;
    for (double p : c.client_weights) {
      ok = ok && p >= 0.0 && std::isfinite(p);
      total += p;
    }
    rd.require(ok && std::abs(total - 1.0) <= 1e-9, "client_weights", "must be non-negative and sum to 1");
  }
  if (c.availability.two_client_example) {
    rd.require(c.client_weights.empty() || c.client_weights.size() == 2, "client_weights",
               "the two-client fixture needs exactly two weights");
  }
  const bool has_poc =
      std::find(c.policies.begin(), c.policies.end(), selection::PolicyKind::PowerOfChoice) != c.policies.end();
  if (has_poc && rd.errors.empty()) {
    rd.require(c.effective_poc_candidates() >= max_capacity(c.capacity), "poc_candidates",
               "must be at least the capacity");
  }
  if (!rd.errors.empty()) throw ConfigError(rd.errors);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError({path.string() + ": cannot open config file"});
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  const auto& d = c.dataset;
  j["dataset"] = {{"kind", to_string(d.kind)},
                  {"task", data::to_string(d.task)},
                  {"alpha", d.alpha},
                  {"beta", d.beta},
                  {"num_clients", d.num_clients},
                  {"num_samples", d.num_samples},
                  {"samples_per_client", d.samples_per_client},
                  {"dim", c.effective_dim()},
                  {"num_classes", d.num_classes},
                  {"validation_fraction", d.validation_fraction},
                  {"l2_reg", d.l2_reg},
                  {"intercept", d.intercept},
                  {"path", d.path}};
  const auto& m = c.availability.model;
  j["availability"] = {{"model", c.availability.two_client_example ? std::string("two_client_example")
                                                                    : std::string(availability::to_string(m.kind))},
                       {"scarce_q", m.scarce_q},
                       {"lognormal_sigma", m.lognormal_sigma},
                       {"sine_amplitude", m.sine_amplitude},
                       {"sine_offset", m.sine_offset},
                       {"period_steps", m.period_steps},
                       {"uneven_mean", m.uneven_mean}};
  if (c.capacity.kind == availability::CapacitySchedule::Kind::Constant) {
    j["capacity"] = c.capacity.constant_k;
  } else {
    j["capacity"] = c.capacity.schedule;
  }
  auto& policies = j["policy"] = json::array();
  for (auto p : c.policies) policies.push_back(selection::to_string(p));
  if (c.poc_candidates) j["poc_candidates"] = *c.poc_candidates;
  j["server_optimizer"] = {{"kind", fedtrain::to_string(c.server.kind)},
                           {"lr", c.effective_server_lr()},
                           {"beta1", c.server.beta1},
                           {"beta2", c.server.beta2},
                           {"eps", c.server.eps}};
  j["local_steps"] = c.local_steps;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = {{"kind", fedtrain::to_string(c.learning_rate.kind)},
                        {"eta0", c.learning_rate.eta0},
                        {"mu", c.learning_rate.mu},
                        {"smoothness", c.learning_rate.smoothness}};
  j["beta"] = c.beta;
  j["r_min"] = c.r_min;
  j["r_init"] = c.r_init ? json(*c.r_init) : json(nullptr);
  j["correlation"] = selection::to_string(c.correlation);
  j["rounds"] = c.rounds;
  j["eval_every"] = c.eval_every;
  j["rates_every"] = c.rates_every;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  j["record_wall_clock"] = c.record_wall_clock;
  j["summary_window"] = c.summary_window;
  j["burn_in"] = c.effective_burn_in();
  j["rate_tolerance"] = c.rate_tolerance;
  j["client_weights"] = c.client_weights;
  return j;
}

void apply_overrides(ExperimentConfig& config, const CliOverrides& overrides) {
  if (overrides.seed) config.seeds = {*overrides.seed};
  if (overrides.out) config.output_dir = *overrides.out;
  if (overrides.policy) {
    try {
      config.policies = {selection::parse_policy_kind(*overrides.policy)};
    } catch (const std::exception& e) {
      throw ConfigError({std::string("--policy: ") + e.what()});
    }
  }
}

}  // namespace f3ast::harness
