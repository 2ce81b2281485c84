#include "carbonshift/dcopf.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace carbonshift;

namespace {

DispatchSolution solve_static(const CaseRef& c, const Eigen::VectorXd& dc = Eigen::VectorXd(0))
{
  return solve_dcopf(snapshot(c, constant_series(*c, 1), 0, dc.size() ? dc : initial_dc_loads(*c)));
}

CaseRef single_bus(std::vector<Generator> gens, double load)
{
  Bus b;
  b.id = 1;
  b.is_reference = true;
  b.base_load = load;
  return std::make_shared<NetworkCase>(std::vector<Bus>{b}, std::vector<Line>{}, std::move(gens),
                                       std::vector<DataCenter>{});
}

Generator unit(const std::string& id, double cost, double g, double pmax)
{
  Generator x;
  x.id = id;
  x.bus = 1;
  x.fuel = "gas_cc";
  x.cost = cost;
  x.carbon_intensity = g;
  x.p_max = pmax;
  return x;
}

}  // namespace

TEST_CASE("congested triangle: dispatch, prices and flows")
{
  const auto c = fixture::congested();
  const auto s = solve_static(c);
  CHECK(s.generation[0] == doctest::Approx(90.0));
  CHECK(s.generation[1] == doctest::Approx(60.0));
  CHECK(s.objective == doctest::Approx(10 * 90 + 30 * 60));
  CHECK(s.nodal_prices[0] == doctest::Approx(10.0));
  CHECK(s.nodal_prices[1] == doctest::Approx(30.0));
  CHECK(s.nodal_prices[2] == doctest::Approx(50.0));
  CHECK(s.line_flows[1] == doctest::Approx(80.0));
  CHECK(s.emissions == doctest::Approx(0.95 * 90 + 0.3 * 60));
  CHECK(s.emissions == doctest::Approx(emissions_of(s, *c)));
  CHECK(s.angles[static_cast<Eigen::Index>(c->reference_index())] == 0.0);
  CHECK_FALSE(s.degenerate());
  CHECK(lp::check_kkt(build_dcopf(snapshot(c, constant_series(*c, 1), 0, Eigen::VectorXd(0))), s.lp).ok());

  // Flow convention: flow(from -> to) = -b (theta_from - theta_to) with b = base/x in MW/rad.
  const auto flows = compute_line_flows(*c, s.angles);
  CHECK((flows - s.line_flows).norm() < 1e-9);
  const double b = c->lines()[1].susceptance;
  CHECK(s.line_flows[1] == doctest::Approx(-b * (s.angles[0] - s.angles[2])));
}

TEST_CASE("uncongested triangle and single bus have a flat price")
{
  const auto u = solve_static(fixture::csv_case("three_bus"));
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(u.nodal_prices[i] == doctest::Approx(10.0));
  CHECK(u.generation[0] == doctest::Approx(150.0));
  CHECK(u.generation[1] == doctest::Approx(0.0));

  const auto one = solve_static(fixture::csv_case("one_bus"));
  CHECK(one.nodal_prices[0] == doctest::Approx(20.0));
  CHECK(one.generation[0] == doctest::Approx(100.0));
}

TEST_CASE("DC OPF optimum equals the vertex-enumeration optimum")
{
  for (double load : {20.0, 100.0, 150.0, 190.0, 230.0}) {
    CAPTURE(load);
    const auto c = fixture::congested();
    auto ts = constant_series(*c, 1);
    ts.bus_load(0, 2) = load;
    const auto snap = snapshot(c, ts, 0, Eigen::VectorXd(0));
    const auto p = build_dcopf(snap);
    const auto v = oracle::enumerate_vertices(p);
    if (!v.feasible) {
      CHECK_THROWS_AS(solve_dcopf(snap), InfeasibleDispatch);
      continue;
    }
    const auto s = solve_dcopf(snap);
    CHECK(s.objective == doctest::Approx(v.objective).epsilon(1e-9));
    CHECK(lp::check_kkt(p, s.lp).ok());
  }
}

TEST_CASE("infeasible dispatch reports the shedding needed")
{
  const auto c = single_bus({unit("a", 10, 0.5, 100), unit("b", 20, 0.5, 100)}, 250.0);
  try {
    solve_static(c);
    FAIL("expected InfeasibleDispatch");
  } catch (const InfeasibleDispatch& e) {
    CHECK(e.shed_fraction() == doctest::Approx(0.2));
  }

  // Bus 3 receives D/3 + P_A/3 over line 1-3 with P_A >= D - 200, so at most 220 MW.
  const auto t = fixture::congested();
  auto ts = constant_series(*t, 1);
  ts.bus_load(0, 2) = 300.0;
  try {
    solve_dcopf(snapshot(t, ts, 0, Eigen::VectorXd(0)));
    FAIL("expected InfeasibleDispatch");
  } catch (const InfeasibleDispatch& e) {
    CHECK(e.shed_fraction() == doctest::Approx(80.0 / 300.0));
  }
}

TEST_CASE("lexicographic re-solve picks the cleaner of tied dispatches")
{
  const auto c = single_bus({unit("dirty", 20, 0.9, 80), unit("clean", 20, 0.2, 80)}, 100.0);
  const auto snap = snapshot(c, constant_series(*c, 1), 0, Eigen::VectorXd(0));
  const auto s = solve_dcopf_lexicographic(snap, c->generator_carbon());
  CHECK(s.generation[1] == doctest::Approx(80.0));
  CHECK(s.generation[0] == doctest::Approx(20.0));
  CHECK(s.objective == doctest::Approx(2000.0));
  CHECK(s.emissions == doctest::Approx(0.9 * 20 + 0.2 * 80));
  CHECK(lp::check_kkt(build_dcopf(snap), s.lp).ok());

  const auto worst = solve_dcopf_lexicographic(snap, -c->generator_carbon());
  CHECK(worst.generation[0] == doctest::Approx(80.0));
}

TEST_CASE("CSV and MATPOWER fixtures dispatch identically")
{
  EmissionTable table = default_emission_table();
  table["gas_cc"] = 0.3;
  const auto m = load_case(fixture::data("three_bus_congested.m"), CaseFormat::matpower_m, table);
  const auto a = solve_static(fixture::congested());
  const auto b = solve_static(m);
  CHECK((a.generation - b.generation).norm() < 1e-9);
  CHECK((a.nodal_prices - b.nodal_prices).norm() < 1e-9);
}

TEST_CASE("to_json carries the dispatch")
{
  const auto c = fixture::congested();
  const auto j = to_json(solve_static(c), *c);
  CHECK(j["objective"].get<double>() == doctest::Approx(2700.0));
  CHECK(j["buses"][2]["lmp"].get<double>() == doctest::Approx(50.0));
  CHECK(j["generators"].size() == 2);
}
