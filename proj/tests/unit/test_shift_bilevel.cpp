#include "carbonshift/shift_bilevel.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <sstream>

using namespace carbonshift;

namespace {

Snapshot triangle(double load_scale = 1.0)
{
  static const auto c = fixture::congested_with_dcs();
  auto s = snapshot(c, constant_series(*c, 1), 0, initial_dc_loads(*c));
  // bus 3 carries 150 MW fixed plus its data center
  s.bus_load[2] = 150.0 * load_scale + s.dc_loads[2];
  return s;
}

BilevelOptions with_method(BilevelMethod m)
{
  BilevelOptions o;
  o.method = m;
  return o;
}

void check_shift(const BilevelSolution& b, const Snapshot& s, double eps)
{
  const auto& dcs = s.network->data_centers();
  CHECK(std::abs(b.plan.delta_pd.sum()) < 1e-7);
  for (std::size_t i = 0; i < dcs.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    CHECK(std::abs(b.plan.delta_pd[j]) <= eps * dcs[i].shift_base + 1e-7);
  }
  const Eigen::VectorXd net = b.plan.transfers.colwise().sum().transpose() - b.plan.transfers.rowwise().sum();
  CHECK((net - b.plan.delta_pd).cwiseAbs().maxCoeff() < 1e-7);
}

}  // namespace

TEST_CASE("KKT program, value-function search and grid enumeration agree on the triangle")
{
  for (double scale : {0.6, 1.0, 1.2})
    for (double eps : {0.25, 0.5})
      for (double alpha : {0.0, 0.5}) {
        CAPTURE(scale);
        CAPTURE(eps);
        CAPTURE(alpha);
        const auto s = triangle(scale);
        const auto& dcs = s.network->data_centers();
        ShiftParams p;
        p.epsilon = eps;
        p.alpha = alpha;
        const auto kkt = solve_opt_shift(s, dcs, p, with_method(BilevelMethod::kkt_milp));
        const auto vf = solve_opt_shift(s, dcs, p, with_method(BilevelMethod::value_function));
        const auto grid = brute_force_opt_shift(s, dcs, p, 0.5);

        CHECK(kkt.status == lp::SolveStatus::optimal);
        CHECK(vf.status == lp::SolveStatus::optimal);
        CHECK_FALSE(kkt.big_m_active);
        CHECK(kkt.certificate.ok());
        CHECK(vf.certificate.ok());
        CHECK(kkt.upper_objective == doctest::Approx(vf.upper_objective).epsilon(1e-9));
        // the grid is a subset of the feasible shifts
        CHECK(kkt.upper_objective <= grid.upper_objective + 1e-7);
        // the optimum of this piecewise-linear instance sits on the half-MW grid
        CHECK(grid.upper_objective == doctest::Approx(kkt.upper_objective).epsilon(1e-9));
        CHECK(kkt.upper_objective <= kkt.baseline_upper + 1e-9);
        check_shift(kkt, s, eps);
        check_shift(vf, s, eps);
        CHECK(kkt.lower_bound <= kkt.upper_objective + 1e-9);
      }
}

TEST_CASE("reported objective matches a re-solve at the chosen shift")
{
  const auto s = triangle();
  const auto& dcs = s.network->data_centers();
  ShiftParams p;
  p.epsilon = 0.5;
  const auto b = solve_opt_shift(s, dcs, p);
  CHECK(b.method == BilevelMethod::kkt_milp);
  CHECK(b.binaries == 10);
  const auto at = evaluate_shift(s, dcs, p, b.plan.delta_pd);
  CHECK(at.upper == doctest::Approx(b.upper_objective).epsilon(1e-9));
  CHECK(b.lower.emissions == doctest::Approx(at.emissions).epsilon(1e-9));
  const auto zero = evaluate_shift(s, dcs, p, Eigen::VectorXd::Zero(3));
  CHECK(zero.upper == doctest::Approx(b.baseline_upper).epsilon(1e-12));
  CHECK(b.plan.predicted_dco2 == doctest::Approx(at.emissions - zero.emissions).epsilon(1e-9));
  CHECK(b.plan.predicted_dco2 < 0.0);
}

TEST_CASE("zero flexibility keeps every load in place")
{
  const auto s = triangle();
  ShiftParams p;
  p.epsilon = 0.0;
  for (auto m : {BilevelMethod::kkt_milp, BilevelMethod::value_function}) {
    const auto b = solve_opt_shift(s, s.network->data_centers(), p, with_method(m));
    CHECK(b.plan.delta_pd.cwiseAbs().maxCoeff() == 0.0);
    CHECK(b.upper_objective == doctest::Approx(b.baseline_upper));
    CHECK(b.plan.volume() == 0.0);
  }
}

TEST_CASE("alpha trades emissions against cost")
{
  const auto s = triangle();
  const auto& dcs = s.network->data_centers();
  double prev_co2 = -lp::kInf, prev_cost = lp::kInf;
  for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    ShiftParams p;
    p.epsilon = 0.5;
    p.alpha = alpha;
    const auto b = solve_opt_shift(s, dcs, p);
    CAPTURE(alpha);
    CHECK(b.lower.emissions >= prev_co2 - 1e-7);
    CHECK(b.lower.objective <= prev_cost + 1e-7);
    prev_co2 = b.lower.emissions;
    prev_cost = b.lower.objective;
  }
}

TEST_CASE("too-tight big-M bounds are escalated")
{
  const auto s = triangle(0.6);
  const auto& dcs = s.network->data_centers();
  ShiftParams p;
  p.epsilon = 0.5;
  const auto grid = brute_force_opt_shift(s, dcs, p, 0.5);
  const auto b = solve_opt_shift(s, dcs, p, with_method(BilevelMethod::kkt_milp));
  CHECK(b.big_m_escalations >= 1);
  CHECK(b.upper_objective == doctest::Approx(grid.upper_objective).epsilon(1e-9));
  CHECK(b.upper_objective < b.baseline_upper - 1.0);

  // with the defaults the congested state is cut off
  const auto kp = build_kkt_milp(s, dcs, p);
  const auto r = lp::solve_milp(kp.mip);
  REQUIRE(r.status == lp::SolveStatus::optimal);
  CHECK(r.objective > grid.upper_objective + 1.0);
}

TEST_CASE("grid enumeration size and limit")
{
  const auto s = triangle();
  const auto& dcs = s.network->data_centers();
  ShiftParams p;
  p.epsilon = 0.25;  // +-5 MW per site
  const auto n = count_grid_points(s, dcs, p, 1.0);
  // pairs (d1, d2) in [-5, 5]^2 on the unit grid with |d1 + d2| <= 5
  CHECK(n == 91);
  const auto g = brute_force_opt_shift(s, dcs, p, 1.0);
  CHECK(g.oracle.size() <= n);
  CHECK_THROWS_AS(brute_force_opt_shift(s, dcs, p, 1.0, 10), ResourceLimit);
  try {
    brute_force_opt_shift(s, dcs, p, 1.0, 10);
  } catch (const ResourceLimit& e) {
    CHECK(e.points() == n);
  }
  std::ostringstream csv;
  write_oracle_csv(csv, g.oracle);
  CHECK(csv.str().rfind("delta_1,delta_2,delta_3,upper,emissions,cost\n", 0) == 0);
}

TEST_CASE("RTS snapshot uses the value-function search and beats the baseline")
{
  const auto c = fixture::rts_reference();
  const auto ts = load_time_series(fixture::rts_bundle(), *c);
  const auto s = snapshot(c, ts, 144, initial_dc_loads(*c));
  ShiftParams p;
  const auto b = solve_opt_shift(s, c->data_centers(), p);
  CHECK(b.method == BilevelMethod::value_function);
  CHECK(b.status == lp::SolveStatus::optimal);
  CHECK(b.upper_objective <= b.baseline_upper + 1e-9);
  CHECK(b.lower_bound <= b.upper_objective + 1e-9);
  CHECK(b.certificate.ok());
  check_shift(b, s, p.epsilon);
}

TEST_CASE("method names")
{
  for (auto m : {BilevelMethod::automatic, BilevelMethod::kkt_milp, BilevelMethod::value_function})
    CHECK(parse_bilevel_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_bilevel_method("simplex"), ValidationError);
}
