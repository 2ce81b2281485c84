#include "carbonshift/errors.hpp"
#include "carbonshift/grid_model.hpp"
#include "carbonshift/rts_dataset.hpp"
#include "fixtures.hpp"

#include <doctest.h>

using namespace carbonshift;

TEST_CASE("RTS bundle has the reference dimensions")
{
  const auto c = load_case(fixture::rts_bundle(), CaseFormat::rts_csv);
  CHECK(c->num_buses() == 73);
  CHECK(c->num_lines() == 120);
  CHECK(c->num_generators() == 158);
  CHECK(c->num_data_centers() == 0);
}

TEST_CASE("MATPOWER RTS file has the reference dimensions")
{
  const auto c = load_case(fixture::rts_matpower(), CaseFormat::matpower_m);
  CHECK(c->num_buses() == 73);
  CHECK(c->num_lines() == 120);
  CHECK(c->num_generators() == 158);
}

TEST_CASE("three-bus CSV and MATPOWER files describe the same case")
{
  const auto a = fixture::congested();
  // The .m file has no intensities; they come from the fuel table.
  EmissionTable table = default_emission_table();
  table["gas_cc"] = 0.3;
  const auto b = load_case(fixture::data("three_bus_congested.m"), CaseFormat::matpower_m, table);
  REQUIRE(a->num_buses() == 3);
  REQUIRE(b->num_buses() == 3);
  REQUIRE(a->num_lines() == b->num_lines());
  for (std::size_t l = 0; l < a->num_lines(); ++l) {
    CHECK(a->lines()[l].susceptance == doctest::Approx(b->lines()[l].susceptance));
    CHECK(a->lines()[l].flow_limit == doctest::Approx(b->lines()[l].flow_limit));
  }
  REQUIRE(a->num_generators() == b->num_generators());
  for (std::size_t g = 0; g < a->num_generators(); ++g) {
    CHECK(a->generators()[g].cost == doctest::Approx(b->generators()[g].cost));
    CHECK(a->generators()[g].carbon_intensity == doctest::Approx(b->generators()[g].carbon_intensity));
    CHECK(a->generators()[g].p_max == doctest::Approx(b->generators()[g].p_max));
  }
  CHECK(a->reference_index() == 0);
  CHECK(a->lines()[0].susceptance == doctest::Approx(1000.0));
}

TEST_CASE("malformed case files are rejected")
{
  CHECK_THROWS_AS(fixture::csv_case("dangling_gen"), ValidationError);
  CHECK_THROWS_AS(fixture::csv_case("bad_number"), ParseError);
  CHECK_THROWS_AS(fixture::csv_case("does_not_exist"), ParseError);
}

TEST_CASE("case modifications")
{
  const auto raw = load_case(fixture::rts_bundle(), CaseFormat::rts_csv);
  CaseModifications m;
  m.dc_buses = {103, 107, 204, 322};
  m.total_dc_load = 1000.0;
  m.pmax_scale = 1.5;
  const auto c = apply_case_modifications(*raw, m);
  REQUIRE(c->num_data_centers() == 4);
  double total = 0.0;
  for (const auto& d : c->data_centers()) {
    CHECK(d.initial_load == 250.0);
    CHECK(d.shift_base == 250.0);
    CHECK(d.cap_max == 300.0);
    total += d.initial_load;
  }
  CHECK(total == 1000.0);
  for (std::size_t g = 0; g < c->num_generators(); ++g) {
    CHECK(c->generators()[g].p_min == 0.0);
    CHECK(c->generators()[g].p_max == doctest::Approx(1.5 * raw->generators()[g].p_max));
  }

  SUBCASE("identity scaling")
  {
    CaseModifications id;
    id.zero_pmin = false;
    const auto same = apply_case_modifications(*raw, id);
    CHECK(same->num_data_centers() == 0);
    for (std::size_t g = 0; g < raw->num_generators(); ++g) {
      CHECK(same->generators()[g].p_max == raw->generators()[g].p_max);
      CHECK(same->generators()[g].p_min == raw->generators()[g].p_min);
    }
  }

  SUBCASE("unknown bus")
  {
    CaseModifications bad = m;
    bad.dc_buses = {9999};
    CHECK_THROWS_AS(apply_case_modifications(*raw, bad), ValidationError);
  }
}

TEST_CASE("snapshot")
{
  const auto c = fixture::rts_reference();
  const auto ts = load_time_series(fixture::rts_bundle(), *c);
  REQUIRE(ts.steps() == 2016);
  CHECK(ts.step_minutes == 5);

  const auto loads = initial_dc_loads(*c);
  const auto s = snapshot(c, ts, 0, loads);
  const auto zero = snapshot(c, ts, 0, Eigen::VectorXd::Zero(4));
  for (Eigen::Index i = 0; i < s.bus_load.size(); ++i) CHECK(zero.bus_load[i] == ts.bus_load(0, i));
  for (auto b : c->data_center_bus_indices()) {
    const auto i = static_cast<Eigen::Index>(b);
    CHECK(s.bus_load[i] - zero.bus_load[i] == doctest::Approx(250.0));
  }
  CHECK(s.bus_load.sum() - zero.bus_load.sum() == doctest::Approx(1000.0));

  const auto again = snapshot(c, ts, 0, loads);
  CHECK(again.bus_load == s.bus_load);
  CHECK(again.p_max == s.p_max);

  CHECK_THROWS_AS(snapshot(c, ts, ts.steps(), loads), IndexError);
  Eigen::VectorXd over = loads;
  over[0] = 301.0;
  CHECK_THROWS_AS(snapshot(c, ts, 0, over), DomainError);
  CHECK_THROWS_AS(snapshot(c, ts, 0, Eigen::VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("regional load series on the three-bus fixture")
{
  const auto c = fixture::congested();
  const auto ts = load_time_series(fixture::data("three_bus_congested"), *c);
  REQUIRE(ts.steps() == 12);
  CHECK(ts.step_minutes == 5);
  CHECK(ts.timestamps.front() == "2020-06-01 00:00:00");
  // All of region A's static load sits at bus 3.
  CHECK(ts.bus_load(0, 2) == doctest::Approx(150.0));
  CHECK(ts.bus_load(0, 0) == 0.0);
  CHECK(ts.bus_load.col(2).maxCoeff() > 170.0);
}

TEST_CASE("year horizon and load accounting")
{
  const auto mp = load_case(fixture::rts_matpower(), CaseFormat::matpower_m);
  const auto rc = rts::convert_matpower_case(*mp);
  rts::SyntheticOptions o;
  o.days = 365;
  const auto data = rts::synthesize(*rc, o);
  CHECK(data.timestamps.size() == 105120);
  CHECK(data.timestamps.back() == "2020-12-30 23:55:00");

  const auto c = fixture::rts_reference();
  const auto ts = load_time_series(fixture::rts_bundle(), *c);
  const auto acc = served_load(ts, *c);
  CHECK(acc.steps == 2016);
  CHECK(acc.mwh == doctest::Approx(acc.mw_sum * 5.0 / 60.0));
  // Served load includes the data centers' 1000 MW.
  CHECK(acc.mw_sum == doctest::Approx(ts.bus_load.sum() + 1000.0 * 2016));
}

TEST_CASE("unit families of the RTS generators")
{
  const auto mp = load_case(fixture::rts_matpower(), CaseFormat::matpower_m);
  const auto rc = rts::convert_matpower_case(*mp);
  std::map<std::string, int> fuels;
  for (const auto& g : rc->generators()) ++fuels[g.fuel];
  CHECK(fuels["nuclear"] == 1);
  CHECK(fuels["coal"] > 0);
  CHECK(fuels["solar"] > 0);
  CHECK(fuels["wind"] == 4);
  for (const auto& g : rc->generators())
    CHECK(g.carbon_intensity == default_emission_table().at(g.fuel));
}
