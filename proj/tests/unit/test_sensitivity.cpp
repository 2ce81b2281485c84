#include "carbonshift/csv.hpp"
#include "carbonshift/sensitivity.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace carbonshift;

namespace {

Snapshot static_snapshot(const CaseRef& c) { return snapshot(c, constant_series(*c, 1), 0, initial_dc_loads(*c)); }

Snapshot add_load(Snapshot s, const Eigen::VectorXd& delta)
{
  s.bus_load += delta;
  return s;
}

}  // namespace

TEST_CASE("congested triangle sensitivities")
{
  const auto c = fixture::congested();
  const auto snap = static_snapshot(c);
  const auto sol = solve_dcopf(snap);
  const auto b = build_bundle(sol, *c);
  CHECK_FALSE(b.degenerate);
  CHECK(b.rows.size() == 5);

  const Eigen::Vector3d lam_co2(0.95, 0.3, -0.35), lmp(10.0, 30.0, 50.0);
  CHECK((b.lambda_co2 - lam_co2).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((b.lambda_cost - lmp).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((b.lambda_cost - sol.nodal_prices).cwiseAbs().maxCoeff() < 1e-9);

  // One more MW at bus 3 takes 1 MW off A and adds 2 MW on B.
  CHECK(b.B(0, 2) == doctest::Approx(-1.0));
  CHECK(b.B(1, 2) == doctest::Approx(2.0));

  // Finite differences against re-solves, one bus at a time.
  const double h = 0.5;
  for (Eigen::Index i = 0; i < 3; ++i) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(3);
    d[i] = h;
    const auto up = solve_dcopf(add_load(snap, d));
    CHECK((up.emissions - sol.emissions) / h == doctest::Approx(lam_co2[i]));
    CHECK((up.objective - sol.objective) / h == doctest::Approx(lmp[i]));
    const auto p = predict_changes(b, d);
    CHECK((p.delta_pg - (up.generation - sol.generation)).norm() < 1e-9);
    CHECK(p.delta_co2 == doctest::Approx(up.emissions - sol.emissions));
    CHECK(p.delta_cost == doctest::Approx(up.objective - sol.objective));
  }
}

TEST_CASE("single bus: lambda is the marginal unit's intensity")
{
  const auto c = fixture::csv_case("one_bus");
  const auto sol = solve_dcopf(static_snapshot(c));
  const auto b = build_bundle(sol, *c);
  CHECK(b.lambda_co2[0] == doctest::Approx(0.5));
  CHECK(b.lambda_cost[0] == doctest::Approx(20.0));

  std::stringstream out;
  write_lmce_csv(out, b, sol, *c);
  const auto t = csv::parse(out.str());
  REQUIRE(t.rows.size() == 1);
  CHECK(t.header == std::vector<std::string>{"bus", "lambda_co2", "lambda_cost", "lmp", "degenerate_flag"});
  CHECK(t.number(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("degenerate optimum is flagged")
{
  // Load equals the cheap unit's capacity: both generator bounds and the balance row are active.
  const auto c = fixture::csv_case("one_bus");
  auto snap = static_snapshot(c);
  snap.bus_load[0] = 200.0;
  const auto sol = solve_dcopf(snap);
  CHECK(sol.degenerate());
  const auto b = build_bundle(sol, *c);
  CHECK(b.degenerate);
  // Either unit can be marginal; the chosen basis decides.
  CHECK((b.lambda_co2[0] == doctest::Approx(0.5) || b.lambda_co2[0] == doctest::Approx(0.9)));
}

TEST_CASE("RTS snapshots: lambda_cost equals the LMPs and predictions match re-solves")
{
  const auto c = fixture::rts_reference();
  const auto ts = load_time_series(fixture::rts_bundle(), *c);
  const auto dcs = c->data_center_bus_indices();
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int checked = 0;
  for (std::size_t t = 0; t < ts.steps(); t += 144) {
    const auto snap = snapshot(c, ts, t, initial_dc_loads(*c));
    const auto sol = solve_dcopf(snap);
    const auto b = build_bundle(sol, *c);
    CAPTURE(t);
    CHECK((b.lambda_cost - sol.nodal_prices).cwiseAbs().maxCoeff() < 1e-6);

    // Balanced move between the data-center buses, shrunk until the active set holds.
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c->num_buses()));
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < dcs.size(); ++i) {
      const double v = U(rng);
      d[static_cast<Eigen::Index>(dcs[i])] = v;
      sum += v;
    }
    d[static_cast<Eigen::Index>(dcs.back())] = -sum;
    for (double scale = 1.0; scale > 1e-6; scale *= 0.1) {
      const auto re = solve_dcopf(add_load(snap, scale * d));
      if (re.lp.active != sol.lp.active) continue;
      const auto p = predict_changes(b, scale * d);
      CHECK((p.delta_pg - (re.generation - sol.generation)).cwiseAbs().maxCoeff() < 1e-6);
      CHECK(std::abs(p.delta_co2 - (re.emissions - sol.emissions)) < 1e-6);
      CHECK(std::abs(p.delta_cost - (re.objective - sol.objective)) < 1e-6);
      ++checked;
      break;
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("prediction needs one entry per bus")
{
  const auto c = fixture::congested();
  const auto b = build_bundle(solve_dcopf(static_snapshot(c)), *c);
  CHECK_THROWS_AS(predict_changes(b, Eigen::VectorXd::Zero(2)), DimensionError);
}
