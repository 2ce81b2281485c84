#include "carbonshift/simulator.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace carbonshift;
using namespace carbonshift::sim;

namespace {

struct Triangle
{
  // caps of 30 MW keep bus 3 within what the congested line can deliver
  CaseRef net = fixture::congested_with_dcs(60.0, 30.0, 20.0);
  TimeSeries ts = load_time_series(fixture::data("three_bus_congested"), *net);
};

const Triangle& triangle()
{
  static const Triangle t;
  return t;
}

struct Rts
{
  CaseRef net = fixture::rts_reference();
  TimeSeries ts = load_time_series(fixture::rts_bundle(), *net);
};

const Rts& rts()
{
  static const Rts r;
  return r;
}

RunOptions window(std::size_t first, std::size_t steps)
{
  RunOptions o;
  o.first_step = first;
  o.steps = steps;
  return o;
}

void check_conservation(const SimulationReport& rep, const NetworkCase& net, double eps)
{
  const auto& dcs = net.data_centers();
  const double total = initial_dc_loads(net).sum();
  for (std::size_t n = 0; n < rep.steps.size(); ++n) {
    const auto& r = rep.steps[n];
    CAPTURE(r.t);
    CHECK(std::abs(r.dc_loads.sum() - total) < 1e-6);
    CHECK(std::abs(r.delta_pd.sum()) < 1e-7);
    for (std::size_t i = 0; i < dcs.size(); ++i) {
      const auto j = static_cast<Eigen::Index>(i);
      CHECK(r.dc_loads[j] >= -1e-9);
      CHECK(r.dc_loads[j] <= dcs[i].cap_max + 1e-9);
      CHECK(std::abs(r.delta_pd[j]) <= eps * dcs[i].shift_base + 1e-7);
    }
    CHECK(r.transfer_mw >= r.half_abs_mw - 1e-7);
    // the shift decided at t is what the next step starts from
    if (n + 1 < rep.steps.size() && !(r.flags & (kClamped | kInfeasible)))
      CHECK((rep.steps[n + 1].dc_loads - r.dc_loads - r.delta_pd).cwiseAbs().maxCoeff() < 1e-9);
  }
}

}  // namespace

TEST_CASE("baseline never shifts and totals add up")
{
  const auto& T = triangle();
  const auto rep = run(T.net, T.ts, Strategy::baseline());
  REQUIRE(rep.steps.size() == T.ts.steps());
  CHECK(rep.total_shift_mw == 0.0);
  double cost = 0.0, co2 = 0.0;
  const double hours = T.ts.step_minutes / 60.0;
  for (const auto& r : rep.steps) {
    CHECK(r.delta_pd.cwiseAbs().maxCoeff() == 0.0);
    const auto sol = solve_dcopf(snapshot(T.net, T.ts, r.t, initial_dc_loads(*T.net)));
    CHECK(r.cost == doctest::Approx(sol.objective * hours).epsilon(1e-9));
    CHECK(r.co2 == doctest::Approx(sol.emissions * hours).epsilon(1e-9));
    cost += r.cost;
    co2 += r.co2;
  }
  CHECK(rep.total_cost == doctest::Approx(cost).epsilon(1e-12));
  CHECK(rep.total_co2 == doctest::Approx(co2).epsilon(1e-12));
  const auto served = served_load(T.ts, *T.net);
  CHECK(rep.served_mw_sum == doctest::Approx(served.mw_sum).epsilon(1e-12));
  CHECK(rep.served_mwh == doctest::Approx(served.mwh).epsilon(1e-12));
}

TEST_CASE("shifting strategies conserve data-center load on the triangle")
{
  const auto& T = triangle();
  ShiftParams p;
  p.epsilon = 0.5;
  const auto base = run(T.net, T.ts, Strategy::baseline());
  for (const auto& s : {Strategy::lambda_shift(p), Strategy::opt_shift(p)}) {
    CAPTURE(to_string(s.kind));
    const auto rep = run(T.net, T.ts, s);
    check_conservation(rep, *T.net, p.epsilon);
    CHECK(rep.served_mw_sum == doctest::Approx(base.served_mw_sum).epsilon(1e-12));
    CHECK(rep.total_shift_mw > 0.0);
    CHECK(rep.total_co2 < base.total_co2);
    CHECK(rep.infeasible_steps == 0);
  }
}

TEST_CASE("lambda-shift on RTS snapshots conserves load and is reproducible")
{
  const auto& R = rts();
  ShiftParams p;
  const auto opt = window(100, 12);
  const auto a = run(R.net, R.ts, Strategy::lambda_shift(p), opt);
  const auto b = run(R.net, R.ts, Strategy::lambda_shift(p), opt);
  REQUIRE(a.steps.size() == 12);
  CHECK(a.steps.front().t == 100);
  check_conservation(a, *R.net, p.epsilon);
  CHECK(a.total_cost == b.total_cost);
  CHECK(a.total_co2 == b.total_co2);
  for (std::size_t n = 0; n < a.steps.size(); ++n) CHECK((a.steps[n].delta_pd - b.steps[n].delta_pd).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.steps.front().timestamp == R.ts.timestamps[100]);
}

TEST_CASE("diagnostic mode records counterfactuals without changing the trajectory")
{
  const auto& T = triangle();
  ShiftParams p;
  p.epsilon = 0.5;
  RunOptions o;
  const auto plain = run(T.net, T.ts, Strategy::lambda_shift(p), o);
  CHECK_THROWS_AS(accuracy_diagnostics(plain), ValidationError);
  o.diagnostic = true;
  const auto diag = run(T.net, T.ts, Strategy::lambda_shift(p), o);
  CHECK(diag.total_cost == doctest::Approx(plain.total_cost).epsilon(1e-12));
  CHECK(diag.total_co2 == doctest::Approx(plain.total_co2).epsilon(1e-12));
  for (const auto& r : plain.steps) CHECK(std::isnan(r.act_dco2));
  for (std::size_t n = 0; n + 1 < diag.steps.size(); ++n) {
    const auto& r = diag.steps[n];
    CHECK_FALSE(std::isnan(r.act_dco2));
    // counterfactual: next step's dispatch with and without this shift
    const auto& next = diag.steps[n + 1];
    const auto with = solve_dcopf(snapshot(T.net, T.ts, next.t, next.dc_loads));
    const auto without = solve_dcopf(snapshot(T.net, T.ts, next.t, r.dc_loads));
    CHECK(r.act_dco2 == doctest::Approx(with.emissions - without.emissions).epsilon(1e-9));
  }
  CHECK(std::isnan(diag.steps.back().act_dco2));
  const auto points = accuracy_diagnostics(diag);
  CHECK_FALSE(points.empty());
  for (const auto& pt : points) CHECK(std::isfinite(pt.actual));
}

TEST_CASE("opt-shift cadence")
{
  const auto& T = triangle();
  ShiftParams p;
  p.epsilon = 0.5;
  RunOptions o;
  o.cadence = 3;
  const auto rep = run(T.net, T.ts, Strategy::opt_shift(p), o);
  bool any = false;
  for (const auto& r : rep.steps) {
    if (r.t % 3 != 0) CHECK(r.delta_pd.cwiseAbs().maxCoeff() == 0.0);
    any = any || r.delta_pd.cwiseAbs().maxCoeff() > 0.0;
  }
  CHECK(any);
  o.cadence = 0;
  CHECK_THROWS_AS(run(T.net, T.ts, Strategy::opt_shift(p), o), DomainError);
}

TEST_CASE("infeasible steps are flagged and skipped, or abort with max_failures")
{
  const auto& T = triangle();
  TimeSeries ts = T.ts;
  // the triangle can deliver at most 400 MW
  ts.bus_load(3, 2) = 500.0;
  ts.bus_load(4, 2) = 500.0;
  ShiftParams p;
  p.epsilon = 0.5;
  std::size_t calls = 0;
  RunOptions o;
  o.on_step = [&](const StepRecord&) { ++calls; };
  const auto rep = run(T.net, ts, Strategy::lambda_shift(p), o);
  CHECK(calls == ts.steps());
  CHECK(rep.infeasible_steps == 2);
  CHECK((rep.steps[3].flags & kInfeasible) != 0);
  CHECK((rep.steps[4].flags & kInfeasible) != 0);
  CHECK(rep.steps[3].cost == 0.0);
  CHECK(rep.steps[3].delta_pd.cwiseAbs().maxCoeff() == 0.0);
  // loads carry over unchanged
  CHECK((rep.steps[5].dc_loads - rep.steps[3].dc_loads).cwiseAbs().maxCoeff() == 0.0);
  CHECK(describe_flags(rep.steps[3].flags).find("infeasible") != std::string::npos);

  o.max_failures = 2;
  calls = 0;
  try {
    run(T.net, ts, Strategy::lambda_shift(p), o);
    FAIL("expected StepFailure");
  } catch (const StepFailure& e) {
    CHECK(e.step() == 4);
    CHECK(calls == 4);
  }
}

TEST_CASE("input checks")
{
  const auto& T = triangle();
  RunOptions o;
  o.initial_loads = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(run(T.net, T.ts, Strategy::baseline(), o), DimensionError);
  o.initial_loads = Eigen::VectorXd::Constant(3, 100.0);  // above cap_max
  CHECK_THROWS_AS(run(T.net, T.ts, Strategy::baseline(), o), DomainError);
  o.initial_loads.reset();
  o.first_step = T.ts.steps() + 1;
  CHECK_THROWS_AS(run(T.net, T.ts, Strategy::baseline(), o), IndexError);
  ShiftParams bad;
  bad.epsilon = -0.1;
  CHECK_THROWS(run(T.net, T.ts, Strategy::lambda_shift(bad)));
}

TEST_CASE("sweeps keep going past failing values and build the frontier")
{
  const auto& T = triangle();
  ShiftParams p;
  p.epsilon = 0.5;
  const auto entries = sweep(T.net, T.ts, Strategy::lambda_shift(p), SweepParameter::gamma, {0.0, 0.5, -1.0, 5.0});
  REQUIRE(entries.size() == 4);
  CHECK(entries[2].error.find("gamma") != std::string::npos);
  CHECK_FALSE(entries[2].report);
  for (std::size_t i : {0u, 1u, 3u}) {
    REQUIRE(entries[i].report);
    CHECK(entries[i].strategy.params.gamma == entries[i].value);
  }
  // a heavier penalty moves less load
  CHECK(entries[3].report->total_half_abs_mw <= entries[1].report->total_half_abs_mw + 1e-9);
  CHECK(entries[1].report->total_half_abs_mw <= entries[0].report->total_half_abs_mw + 1e-9);

  // the sweep matches individual runs, threaded or not
  const auto serial = sweep(T.net, T.ts, Strategy::opt_shift(p), SweepParameter::alpha, {1.0, 0.0, 0.5}, {}, 1);
  const auto threaded = sweep(T.net, T.ts, Strategy::opt_shift(p), SweepParameter::alpha, {1.0, 0.0, 0.5}, {}, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(serial[i].report);
    REQUIRE(threaded[i].report);
    CHECK(serial[i].report->total_co2 == threaded[i].report->total_co2);
  }
  auto q = p;
  q.alpha = 0.5;
  CHECK(run(T.net, T.ts, Strategy::opt_shift(q)).total_co2 == serial[2].report->total_co2);
  const auto f = frontier(serial);
  REQUIRE(f.size() == 3);
  CHECK(f[0].alpha == 0.0);
  CHECK(f[2].alpha == 1.0);
  CHECK(f[0].total_co2 <= f[2].total_co2 + 1e-9);
}

TEST_CASE("names")
{
  for (auto k : {StrategyKind::baseline, StrategyKind::lambda_shift, StrategyKind::opt_shift})
    CHECK(parse_strategy(to_string(k)) == k);
  CHECK_THROWS_AS(parse_strategy("greedy"), ValidationError);
  for (auto s : {SweepParameter::gamma, SweepParameter::epsilon, SweepParameter::alpha})
    CHECK(parse_sweep_parameter(to_string(s)) == s);
  CHECK(describe_flags(kDegenerate | kClamped) == "degenerate|clamped");
  CHECK(describe_flags(0).empty());
}
