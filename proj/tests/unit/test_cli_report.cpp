#include "carbonshift/cli_report.hpp"
#include "carbonshift/csv.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace carbonshift;
using namespace carbonshift::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name)
{
  const fs::path dir = fs::temp_directory_path() / ("carbonshift_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig triangle_config(const fs::path& out)
{
  RunConfig c;
  c.case_path = fixture::data("three_bus_congested");
  c.modifications.dc_buses = {1, 2, 3};
  c.modifications.total_dc_load = 60.0;
  c.modifications.cap_max = 30.0;
  c.modifications.shift_base = 20.0;
  c.strategies = {sim::StrategyKind::baseline, sim::StrategyKind::lambda_shift, sim::StrategyKind::opt_shift};
  c.epsilon = 0.5;
  c.output_dir = out;
  return c;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args)
{
  const std::string cmd = std::string(CARBONSHIFT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("configs survive a JSON round trip")
{
  auto c = triangle_config("out/tri");
  c.gamma = 0.25;
  c.alpha = 0.5;
  c.pair_limits = {{std::nullopt, 5.0, 5.0}, {5.0, std::nullopt, std::nullopt}, {0.0, 1.0, std::nullopt}};
  c.sweep = SweepConfig{sim::SweepParameter::gamma, {0.0, 0.5, 5.0}};
  c.steps = 7;
  c.first_step = 2;
  c.max_failures = 3;
  c.diagnostic = true;
  c.emission_factors["coal"] = 1.0;
  c.tolerances.time_limit_s = 12.5;
  c.bilevel_method = BilevelMethod::value_function;
  CHECK(parse_config(to_json(c)) == c);
  CHECK(parse_config_text(to_json(c).dump()) == c);

  const auto ref = reference_config(fixture::rts_bundle());
  CHECK(parse_config(to_json(ref)) == ref);
  CHECK(ref.modifications.dc_buses == std::vector<int>{103, 107, 204, 322});
  CHECK(ref.modifications.total_dc_load == 1000.0);
  CHECK(ref.modifications.pmax_scale == 1.5);

  // minimal document: everything but the case falls back to defaults
  const auto m = parse_config_text(R"({"case": {"path": "x"}})");
  CHECK(m.case_path == "x");
  CHECK(m.epsilon == 0.2);
  CHECK(m.strategies == std::vector<sim::StrategyKind>{sim::StrategyKind::baseline});
  CHECK(parse_config_text(R"({"case": {"path": "x"}, "strategies": "opt_shift"})").strategies
        == std::vector<sim::StrategyKind>{sim::StrategyKind::opt_shift});
}

TEST_CASE("malformed configs are parse errors")
{
  CHECK_THROWS_AS(parse_config_text("{\"case\": "), ParseError);
  CHECK_THROWS_AS(parse_config_text(R"({"case": {"path": "x"}, "gama": 1})"), ParseError);
  CHECK_THROWS_AS(parse_config_text(R"({"case": {"path": "x"}, "params": {"epsilon": "big"}})"), ParseError);
  CHECK_THROWS_AS(parse_config_text(R"({"case": {"path": "x"}, "strategies": ["fastest"]})"), ParseError);
  CHECK_THROWS_AS(parse_config_text(R"({"case": {"path": "x", "format": "xlsx"}})"), ParseError);
  CHECK_THROWS_AS(parse_config_text(R"({"params": {}})"), ParseError);
  CHECK_THROWS_AS(parse_config_text(R"({"case": {"path": "x"}, "window": {"steps": -3}})"), ParseError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ParseError);
  try {
    parse_config_text(R"({"case": {"path": "x"}, "gama": 1})");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("gama") != std::string::npos);
  }
}

TEST_CASE("validation errors name the offending field")
{
  auto c = triangle_config("unused");
  validate_config(c);
  c.epsilon = -1.0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("epsilon out of range"), ValidationError);
  std::ostringstream out, err;
  CHECK(cmd_validate(c, out, err) == kExitValidation);
  CHECK(err.str().find("epsilon out of range") != std::string::npos);

  c = triangle_config("unused");
  c.case_path = fixture::data("no_such_case");
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("case path does not exist"), ValidationError);
  c = triangle_config("unused");
  c.modifications.dc_buses = {1, 1};
  CHECK_THROWS_AS(validate_config(c), ValidationError);
  c = triangle_config("unused");
  c.sweep = SweepConfig{sim::SweepParameter::alpha, {0.0, 1.5}};
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("alpha out of range"), ValidationError);
  c = triangle_config("unused");
  c.modifications.dc_buses = {1, 2, 99};
  std::ostringstream o2, e2;
  CHECK(cmd_validate(c, o2, e2) == kExitValidation);
}

TEST_CASE("validate summarises the RTS week")
{
  const auto c = load_config(fs::path(CARBONSHIFT_RTS_BUNDLE).string() + ".json");
  std::ostringstream out, err;
  REQUIRE(cmd_validate(c, out, err) == kExitOk);
  CHECK(out.str().find("73 buses / 120 lines / 158 generators / 4 data centers / 2,016 steps") != std::string::npos);
  CHECK(out.str().find("ok\n") != std::string::npos);
  // the case path in the written config is relative to the config file
  const auto raw = json::parse(slurp(fs::path(CARBONSHIFT_RTS_BUNDLE).string() + ".json"));
  CHECK(fs::path(raw["case"]["path"].get<std::string>()).is_relative());
  CHECK(fs::equivalent(c.case_path, fixture::rts_bundle()));
}

TEST_CASE("lmce tables")
{
  RunConfig one;
  one.case_path = fixture::data("one_bus");
  std::ostringstream out, err;
  REQUIRE(cmd_lmce(one, 0, out, err) == kExitOk);
  const auto t = csv::parse(out.str());
  REQUIRE(t.rows.size() == 1);
  CHECK(t.number(0, t.require("lambda_co2")) == doctest::Approx(0.5));

  std::ostringstream o3, e3;
  REQUIRE(cmd_lmce(triangle_config("unused"), 0, o3, e3) == kExitOk);
  const auto t3 = csv::parse(o3.str());
  REQUIRE(t3.rows.size() == 3);
  const auto lmp = t3.require("lmp");
  CHECK(t3.number(0, lmp) != t3.number(2, lmp));
  std::ostringstream o4, e4;
  CHECK(cmd_lmce(triangle_config("unused"), 1000, o4, e4) == kExitValidation);
}

TEST_CASE("run writes steps, summaries and the table")
{
  const auto dir = scratch("run");
  auto c = triangle_config(dir);
  std::ostringstream out, err;
  REQUIRE(cmd_run(c, out, err) == kExitOk);
  CHECK(out.str().find("Strategy") != std::string::npos);
  CHECK(out.str().find("Total shifts (MW)") != std::string::npos);
  double base_co2 = 0.0;
  for (const std::string s : {"baseline", "lambda_shift", "opt_shift"}) {
    CAPTURE(s);
    const auto steps = csv::read_strict(dir / s / "steps.csv", steps_csv_columns(3));
    CHECK(steps.rows.size() == 12);
    const auto summary = json::parse(slurp(dir / s / "summary.json"));
    CHECK_NOTHROW(validate_summary(summary));
    CHECK(summary["strategy"] == s);
    CHECK(summary["steps"] == 12);
    double co2 = 0.0, shift = 0.0;
    for (std::size_t r = 0; r < steps.rows.size(); ++r) {
      co2 += steps.number(r, steps.require("co2"));
      shift += steps.number(r, steps.require("shift_abs"));
    }
    CHECK(co2 == doctest::Approx(summary["total_co2"].get<double>()).epsilon(1e-9));
    CHECK(shift == doctest::Approx(summary["total_shift_mw"].get<double>()).epsilon(1e-9).scale(1.0));
    if (s == "baseline") {
      CHECK(summary["total_shift_mw"].get<double>() == 0.0);
      base_co2 = summary["total_co2"].get<double>();
    } else {
      CHECK(summary["total_co2"].get<double>() < base_co2);
    }
  }
  const auto table = csv::read_strict(dir / "table.csv", {"strategy", "total_cost", "total_co2", "total_shift_mw"});
  CHECK(table.rows.size() == 3);

  // repeated strategies get distinct directories
  c.strategies = {sim::StrategyKind::baseline, sim::StrategyKind::baseline};
  c.output_dir = dir / "twice";
  std::ostringstream o2, e2;
  REQUIRE(cmd_run(c, o2, e2) == kExitOk);
  CHECK(fs::exists(dir / "twice" / "baseline_2" / "summary.json"));
}

TEST_CASE("failing runs keep partial output and exit 4")
{
  const auto dir = scratch("fail");
  auto c = triangle_config(dir);
  c.strategies = {sim::StrategyKind::baseline};
  c.modifications.total_dc_load = 90.0;
  c.modifications.cap_max = 300.0;
  c.modifications.pmax_scale = 0.55;  // 110 MW per unit cannot cover 240 MW
  c.max_failures = 1;
  std::ostringstream out, err;
  CHECK(cmd_run(c, out, err) == kExitNumerical);
  CHECK(fs::exists(dir / "baseline" / "steps.csv"));
  CHECK(err.str().find("partial") != std::string::npos);
}

TEST_CASE("gamma and alpha sweeps")
{
  const auto dir = scratch("sweep");
  auto c = triangle_config(dir);
  c.strategies = {sim::StrategyKind::baseline, sim::StrategyKind::lambda_shift};
  c.sweep = SweepConfig{sim::SweepParameter::gamma, {0.0, 0.5, 1.0, 1.5, 5.0}};
  std::ostringstream out, err;
  REQUIRE(cmd_sweep(c, out, err) == kExitOk);
  const auto s = csv::read_strict(dir / "sweep.csv", sweep_csv_columns(sim::SweepParameter::gamma));
  REQUIRE(s.rows.size() == 5);
  for (std::size_t r = 0; r < 5; ++r) CHECK(s.cell(r, s.require("error")).empty());
  CHECK(fs::exists(dir / "lambda_shift_gamma=0.5" / "summary.json"));
  CHECK(fs::exists(dir / "baseline" / "steps.csv"));
  CHECK_FALSE(fs::exists(dir / "frontier.csv"));

  const auto adir = scratch("alpha");
  c = triangle_config(adir);
  c.strategies = {sim::StrategyKind::opt_shift};
  c.sweep = SweepConfig{sim::SweepParameter::alpha, {0.0, 0.5, 1.0}};
  std::ostringstream o2, e2;
  REQUIRE(cmd_sweep(c, o2, e2) == kExitOk);
  const auto f = csv::read_strict(adir / "frontier.csv", {"alpha", "total_cost", "total_co2"});
  REQUIRE(f.rows.size() == 3);
  CHECK(f.number(0, 0) == 0.0);
  CHECK(f.number(0, 2) <= f.number(2, 2) + 1e-9);
  CHECK(f.number(2, 1) <= f.number(0, 1) + 1e-6);

  c.sweep.reset();
  std::ostringstream o3, e3;
  CHECK(cmd_sweep(c, o3, e3) == kExitValidation);
}

TEST_CASE("summary schema check")
{
  sim::SimulationReport rep;
  auto j = summary_json(rep);
  CHECK_NOTHROW(validate_summary(j));
  j.erase("served_mwh");
  CHECK_THROWS_WITH_AS(validate_summary(j), doctest::Contains("served_mwh"), ValidationError);
  j = summary_json(rep);
  j["steps"] = "many";
  CHECK_THROWS_AS(validate_summary(j), ValidationError);
  j = summary_json(rep);
  j["strategy"] = "random";
  CHECK_THROWS_AS(validate_summary(j), ValidationError);
}

TEST_CASE("command-line exit codes")
{
  const auto dir = scratch("exit");
  auto c = triangle_config(dir / "out");
  {
    std::ofstream f(dir / "good.json");
    f << to_json(c).dump(2);
  }
  c.epsilon = -1.0;
  {
    std::ofstream f(dir / "bad_eps.json");
    f << to_json(c).dump(2);
  }
  {
    std::ofstream f(dir / "broken.json");
    f << "{ not json";
  }
  CHECK(run_cli("validate " + (dir / "good.json").string()) == 0);
  CHECK(run_cli("validate " + (dir / "bad_eps.json").string()) == 3);
  CHECK(run_cli("validate " + (dir / "broken.json").string()) == 2);
  CHECK(run_cli("validate " + (dir / "missing.json").string()) == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("lmce " + (dir / "good.json").string() + " -t 3") == 0);
  CHECK(run_cli("dataset /nonexistent.m " + (dir / "ds").string()) == 3);
}
