#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "f3ast/config.hpp"
#include "f3ast/csv.hpp"
#include "f3ast/experiment.hpp"
#include "f3ast/plot.hpp"
#include "f3ast/verification.hpp"

namespace {

using namespace f3ast;
using namespace f3ast::harness;

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kValidationError = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> policy;
  std::vector<std::string> rates;
  std::vector<std::string> csvs;
};

ExperimentConfig load(const Options& o, bool required) {
  ExperimentConfig c;
  if (!o.config.empty()) {
    c = load_config(o.config);
  } else if (required) {
    throw ConfigError({"--config is required"});
  }
  CliOverrides ov;
  ov.seed = o.seed;
  if (o.out) ov.out = *o.out;
  ov.policy = o.policy;
  apply_overrides(c, ov);
  return c;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

std::vector<double> parse_rate(const std::string& text) {
  std::vector<double> r;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw InvalidInputError("--rate: cannot parse '" + text + "'");
    r.push_back(x);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return r;
}

int cmd_run(const Options& o) {
  const auto config = load(o, true);
  run_experiment(config, &std::cerr);
  std::cout << (config.output_dir / "summary.json").string() << '\n';
  return kOk;
}

int cmd_rates(const Options& o) {
  const auto config = load(o, true);
  const auto report = run_rate_convergence(config);
  const auto j = to_json(report);
  std::cout << j.dump(2) << '\n';
  if (o.out) write_json(std::filesystem::path(*o.out) / "rates.json", j);
  return report.pass ? kOk : kRuntimeError;
}

int cmd_oracle(const Options& o) {
  const auto config = load(o, false);
  std::vector<double> weights;
  availability::ConfigurationDistribution dist;
  if (o.config.empty()) {
    weights = {0.5, 0.5};
    dist = availability::two_client_example();
  } else {
    std::optional<data::FederatedDataset> dataset;
    if (config.client_weights.empty() && !config.availability.two_client_example)
      dataset = build_dataset(config, config.seeds.front());
    weights = selection_weights(config, dataset ? &*dataset : nullptr);
    dist = enumerable_distribution(config, weights, config.seeds.front());
  }
  std::vector<std::vector<double>> queries;
  for (const auto& r : o.rates) queries.push_back(parse_rate(r));
  const rate_region::RateRegionModel model(std::move(dist));
  const auto j = oracle_report(model, weights, config.correlation, queries);
  std::cout << j.dump(2) << '\n';
  if (o.out) write_json(std::filesystem::path(*o.out) / "oracle.json", j);
  return kOk;
}

int cmd_plot(const Options& o) {
  if (o.csvs.empty()) throw InvalidInputError("plot needs at least one CSV file");
  const std::filesystem::path out = o.out ? *o.out : std::string("plots");
  std::vector<std::filesystem::path> paths(o.csvs.begin(), o.csvs.end());
  const auto outcome = emit_plots(paths, out);
  for (const auto& n : outcome.notices) std::cerr << "notice: " << n << '\n';
  for (const auto& p : outcome.written) std::cout << p.string() << '\n';
  return kOk;
}

int cmd_verify(const Options& o) {
  const auto results = run_verification_suite(o.seed.value_or(0), &std::cout);
  const bool ok = std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass; });
  return ok ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated client-selection simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", o.config, "Experiment config (JSON)");
    if (config_required) opt->required();
    sub->add_option("--seed", o.seed, "Replace the seed list with one seed");
    sub->add_option("--out", o.out, "Output directory");
  };

  auto* run = app.add_subcommand("run", "Run an experiment and write CSV + summary.json");
  add_common(run, true);
  run->add_option("--policy", o.policy, "Run a single policy (f3ast, fedavg, poc, fixed)");

  auto* rates = app.add_subcommand("rates", "Check F3AST rate convergence against the oracle optimum");
  add_common(rates, true);

  auto* oracle = app.add_subcommand("oracle", "Rate-region computations on an enumerable model");
  add_common(oracle, false);
  oracle->add_option("--rate", o.rates, "Membership query, comma-separated rates (repeatable)");

  auto* plot = app.add_subcommand("plot", "Render SVG plots from round CSVs");
  plot->add_option("--out", o.out, "Output directory (default: plots)");
  plot->add_option("csv", o.csvs, "Round CSV files")->required();

  auto* verify = app.add_subcommand("verify", "Run the property verification suite");
  verify->add_option("--seed", o.seed, "Master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationError;
  }

  try {
    if (*run) return cmd_run(o);
    if (*rates) return cmd_rates(o);
    if (*oracle) return cmd_oracle(o);
    if (*plot) return cmd_plot(o);
    if (*verify) return cmd_verify(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << '\n';
    return kValidationError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
