#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "f3ast/config.hpp"
#include "f3ast/csv.hpp"
#include "f3ast/experiment.hpp"
#include "f3ast/plot.hpp"

using namespace f3ast;
using namespace f3ast::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("f3ast_harness_" + name);
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

void spit(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

// Compares against tests/golden/<name>; F3AST_UPDATE_GOLDEN=1 rewrites it.
void check_golden(const std::string& name, const std::string& actual) {
  const fs::path golden = fs::path(F3AST_GOLDEN_DIR) / name;
  if (std::getenv("F3AST_UPDATE_GOLDEN")) spit(golden, actual);
  REQUIRE(fs::exists(golden));
  CHECK(slurp(golden) == actual);
}

nlohmann::json small_run(const fs::path& out) {
  return {{"dataset", {{"kind", "synthetic_alpha"}, {"num_clients", 8}, {"samples_per_client", 40}, {"dim", 5}}},
          {"availability", {{"model", "home_devices"}}},
          {"capacity", 3},
          {"policy", {"f3ast", "fedavg", "poc"}},
          {"local_steps", 2},
          {"learning_rate", {{"kind", "constant"}, {"eta0", 0.05}}},
          {"rounds", 40},
          {"eval_every", 5},
          {"rates_every", 10},
          {"seeds", {4, 5}},
          {"summary_window", 3},
          {"output_dir", out.string()}};
}

const std::vector<std::string> kMetrics{"per_sample_loss", "per_sample_accuracy", "per_user_loss",
                                        "per_user_accuracy"};

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config defaults and round trip") {
    const auto c = parse_config(nlohmann::json::object());
    CHECK(c.rounds == 1000);
    CHECK(c.effective_dim() == 60);
    CHECK(c.effective_server_lr() == 1.0);
    CHECK(c.effective_burn_in() == 10000);
    CHECK(c.effective_poc_candidates() == 20);

    const auto j = small_run("x");
    const auto parsed = parse_config(j);
    CHECK(parsed.policies.size() == 3);
    CHECK(parsed.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(to_json(parse_config(to_json(parsed))) == to_json(parsed));
  }

  TEST_CASE("config errors are collected") {
    nlohmann::json j = {{"rounds", -1},
                        {"bogus", 1},
                        {"capacity", "ten"},
                        {"policy", {"f3ast", "f3ast"}},
                        {"availability", {{"model", "sometimes"}}}};
    try {
      parse_config(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.violations().size() >= 5);
      std::string all;
      for (const auto& v : e.violations()) all += v + "\n";
      CHECK(all.find("bogus") != std::string::npos);
      CHECK(all.find("rounds") != std::string::npos);
      CHECK(all.find("capacity") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config({{"policy", "poc"}, {"poc_candidates", 3}, {"capacity", 5}}), ConfigError);
    CHECK_THROWS_AS(parse_config({{"dataset", {{"kind", "file"}}}}), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), std::exception);
  }

  TEST_CASE("cli overrides") {
    auto c = parse_config(small_run("x"));
    apply_overrides(c, {7, fs::path("elsewhere"), std::string("fedavg")});
    CHECK(c.seeds == std::vector<std::uint64_t>{7});
    CHECK(c.output_dir == fs::path("elsewhere"));
    CHECK(c.policies == std::vector<selection::PolicyKind>{selection::PolicyKind::FedAvg});
  }

  TEST_CASE("number formatting") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1.0 / 3.0) == "0.333333333");
    CHECK(format_number(12345678901.0) == "1.23456789e+10");
    CHECK(round_trip(1.0 / 3.0) == 0.333333333);
  }

  TEST_CASE("zero rounds writes a header-only CSV") {
    const auto dir = scratch("empty");
    auto j = small_run(dir);
    j["rounds"] = 0;
    j["policy"] = "fedavg";
    j["seeds"] = {1};
    const auto summary = run_experiment(parse_config(j));
    const auto text = slurp(dir / "fedavg_seed1.csv");
    std::string header;
    for (const auto& h : round_csv_header(false)) header += (header.empty() ? "" : ",") + h;
    CHECK(text == header + "\n");
    CHECK(summary["runs"][0]["rounds"] == 0);
    CHECK(summary["runs"][0]["per_sample_accuracy"].is_null());
  }

  TEST_CASE("runs are byte-identical, streams paired, summary matches the CSV") {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    const auto summary = run_experiment(parse_config(small_run(a)));
    run_experiment(parse_config(small_run(b)));
    for (const char* policy : {"f3ast", "fedavg", "poc"}) {
      for (int seed : {4, 5}) {
        const std::string name = std::string(policy) + "_seed" + std::to_string(seed) + ".csv";
        CHECK(slurp(a / name) == slurp(b / name));
      }
    }
    CHECK(slurp(a / "summary.json").size() > 0);

    // Every policy sees the same availability sequence for a seed.
    const auto f = read_csv(a / "f3ast_seed4.csv");
    const auto g = read_csv(a / "fedavg_seed4.csv");
    const int avail = f.column("num_available");
    REQUIRE(avail >= 0);
    REQUIRE(f.rows.size() == 40);
    for (std::size_t i = 0; i < f.rows.size(); ++i) CHECK(f.rows[i][avail] == g.rows[i][avail]);
    CHECK(slurp(a / "f3ast_seed4.csv") != slurp(a / "f3ast_seed5.csv"));

    // Recompute the final-window means from the CSV text.
    for (const auto& run : summary["runs"]) {
      const auto table = read_csv(a / run["csv"].get<std::string>());
      for (const auto& metric : kMetrics) {
        const int col = table.column(metric);
        std::vector<double> values;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
          if (auto v = parse_cell(table, i, col, a)) values.push_back(*v);
        }
        REQUIRE(values.size() == 8);
        double sum = 0.0;
        for (std::size_t i = values.size() - 3; i < values.size(); ++i) sum += values[i];
        CHECK(std::abs(sum / 3.0 - run[metric].get<double>()) <= 1e-9);
      }
    }
    const int rates = f.column("rates");
    for (std::size_t i = 0; i < f.rows.size(); ++i) CHECK(f.rows[i][rates].empty() == ((i + 1) % 10 != 0));
  }

  TEST_CASE("malformed CSV reports the line") {
    const auto dir = scratch("badcsv");
    spit(dir / "bad.csv", "round,per_sample_accuracy\n0,0.5\n1,0.6,7\n");
    try {
      read_csv(dir / "bad.csv");
      FAIL("expected CsvParseError");
    } catch (const CsvParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("bad.csv") != std::string::npos);
    }
    spit(dir / "junk.csv", "round,per_sample_accuracy\n0,abc\n");
    const auto t = read_csv(dir / "junk.csv");
    CHECK_THROWS_AS(parse_cell(t, 0, 1, dir / "junk.csv"), CsvParseError);
    CHECK_THROWS_AS(read_csv(dir / "missing.csv"), std::exception);
  }

  TEST_CASE("plots: legends, notices and golden output") {
    const auto dir = scratch("plots");
    const fs::path in = fs::path(F3AST_DATA_DIR) / "plots";
    const std::vector<fs::path> inputs{in / "f3ast_seed0.csv", in / "f3ast_seed1.csv", in / "fedavg_seed0.csv"};
    const auto outcome = emit_plots(inputs, dir / "out");
    CHECK(outcome.written.size() == 4);
    CHECK(outcome.notices.empty());
    const auto svg = slurp(dir / "out" / "per_sample_accuracy.svg");
    CHECK(svg.find(">f3ast<") != std::string::npos);
    CHECK(svg.find(">fedavg<") != std::string::npos);
    for (const auto& metric : kMetrics) check_golden(metric + ".svg", slurp(dir / "out" / (metric + ".svg")));

    const auto again = emit_plots(inputs, dir / "out2");
    CHECK(slurp(dir / "out2" / "per_user_loss.svg") == slurp(dir / "out" / "per_user_loss.svg"));

    // no evaluated rounds: every metric is skipped with a notice
    std::vector<fedtrain::RoundRecord> bare(3);
    for (int t = 0; t < 3; ++t) bare[t].round = t;
    write_round_csv(dir / "poc_seed0.csv", bare, false);
    const auto none = emit_plots({dir / "poc_seed0.csv"}, dir / "out3");
    CHECK(none.written.empty());
    CHECK(none.notices.size() == 4);
    CHECK(none.notices[0].find("plot omitted") != std::string::npos);

    CHECK(series_label("runs/fedavg_seed12.csv") == "fedavg");
    CHECK(series_label("runs/custom.csv") == "custom");
  }

  TEST_CASE("render_svg golden") {
    const std::vector<Series> series{{"alpha", {{0, 0.5}, {1, 0.75}, {2, 0.7}, {3, 0.9}}},
                                     {"beta", {{0, 0.4}, {1, 0.5}, {2, 0.65}, {3, 0.6}}}};
    const auto svg = render_svg("accuracy", "round", "value", series);
    CHECK(svg == render_svg("accuracy", "round", "value", series));
    check_golden("render_two_series.svg", svg);
  }

  TEST_CASE("rate convergence on the two-client fixture") {
    nlohmann::json j = {{"availability", {{"model", "two_client_example"}}}, {"rounds", 50000}, {"capacity", 1}};
    const auto report = run_rate_convergence(parse_config(j));
    CHECK(report.pass);
    CHECK(report.optimal[0] == doctest::Approx(0.375).epsilon(1e-4));
    CHECK(report.optimal[1] == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(report.gap <= 0.02);
    CHECK(report.burn_in == 10000);
  }

  TEST_CASE("rate convergence: always available with K >= N") {
    nlohmann::json j = {{"availability", {{"model", "always"}}},
                        {"capacity", 4},
                        {"rounds", 20000},
                        {"client_weights", {0.1, 0.2, 0.3, 0.4}}};
    const auto report = run_rate_convergence(parse_config(j));
    for (double r : report.optimal) CHECK(r == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(report.gap <= 0.001 * 4);
  }

  TEST_CASE("rate convergence: symmetric scarce model") {
    nlohmann::json j = {{"availability", {{"model", "scarce"}, {"scarce_q", 0.2}}},
                        {"capacity", 1},
                        {"rounds", 60000},
                        {"client_weights", {0.2, 0.2, 0.2, 0.2, 0.2}}};
    const auto report = run_rate_convergence(parse_config(j));
    for (double r : report.optimal) CHECK(r == doctest::Approx(report.optimal[0]).epsilon(1e-6));
    const auto [lo, hi] = std::minmax_element(report.time_average.begin(), report.time_average.end());
    CHECK(*hi - *lo <= 0.02);
    CHECK(report.pass);
  }

  TEST_CASE("unsupported oracle models") {
    nlohmann::json j = {{"availability", {{"model", "smartphones"}}}, {"client_weights", {0.5, 0.5}}};
    CHECK_THROWS_AS(run_rate_convergence(parse_config(j)), UnsupportedOracleError);
  }
}
