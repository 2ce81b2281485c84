#include "carbonshift/dcopf.hpp"
#include "carbonshift/lp_core.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace carbonshift;
using lp::kInf;

namespace {

lp::LinearProgram dense_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& E, const Eigen::VectorXd& e,
                           const Eigen::MatrixXd& G, const Eigen::VectorXd& lo, const Eigen::VectorXd& up,
                           const Eigen::VectorXd& l, const Eigen::VectorXd& u)
{
  lp::LinearProgram p;
  p.objective = c;
  p.eq_matrix = E.sparseView();
  p.eq_rhs = e;
  p.ineq_matrix = G.sparseView();
  p.ineq_lower = lo;
  p.ineq_upper = up;
  p.var_lower = l;
  p.var_upper = u;
  return p;
}

lp::LinearProgram box_lp(const Eigen::VectorXd& c, double l, double u)
{
  const auto n = c.size();
  return dense_lp(c, Eigen::MatrixXd(0, n), Eigen::VectorXd(0), Eigen::MatrixXd(0, n), Eigen::VectorXd(0),
                  Eigen::VectorXd(0), Eigen::VectorXd::Constant(n, l), Eigen::VectorXd::Constant(n, u));
}

}  // namespace

TEST_CASE("one-variable LP")
{
  // min x  s.t.  x >= 1 as a row
  Eigen::MatrixXd G(1, 1);
  G << 1.0;
  const auto p = dense_lp(Eigen::VectorXd::Ones(1), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), G,
                          Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, kInf),
                          Eigen::VectorXd::Constant(1, -kInf), Eigen::VectorXd::Constant(1, kInf));
  const auto r = lp::solve_lp(p);
  REQUIRE(r.status == lp::SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(1.0));
  CHECK(r.ineq_duals[0] == doctest::Approx(1.0));
  CHECK(r.objective == doctest::Approx(1.0));
  REQUIRE(r.basis.size() == 1);
  CHECK(r.basis[0] == lp::ConstraintRef{lp::ConstraintKind::ineq_lower, 0});
  CHECK(lp::check_kkt(p, r).ok());
}

TEST_CASE("contradictory equality is infeasible")
{
  Eigen::MatrixXd E(1, 1);
  E << 0.0;
  const auto p = dense_lp(Eigen::VectorXd::Ones(1), E, Eigen::VectorXd::Ones(1), Eigen::MatrixXd(0, 1),
                          Eigen::VectorXd(0), Eigen::VectorXd(0), Eigen::VectorXd::Zero(1),
                          Eigen::VectorXd::Constant(1, 10.0));
  CHECK(lp::solve_lp(p).status == lp::SolveStatus::infeasible);
}

TEST_CASE("unbounded LP")
{
  const auto p = box_lp(-Eigen::VectorXd::Ones(2), 0.0, kInf);
  CHECK(lp::solve_lp(p).status == lp::SolveStatus::unbounded);
}

TEST_CASE("malformed programs are rejected")
{
  auto p = box_lp(Eigen::VectorXd::Ones(2), 0.0, 1.0);
  p.var_upper.resize(1);
  CHECK_THROWS_AS(p.validate(), DimensionError);
  // Crossed bounds are an infeasible program, not malformed data.
  auto q = box_lp(Eigen::VectorXd::Ones(2), 1.0, 0.0);
  CHECK(lp::solve_lp(q).status == lp::SolveStatus::infeasible);
}

TEST_CASE("one-dimensional QP")
{
  lp::QuadraticProgram q;
  q.lp = box_lp(-Eigen::VectorXd::Ones(1), 0.0, 10.0);
  q.quadratic = Eigen::VectorXd::Ones(1);
  const auto r = lp::solve_qp(q);
  REQUIRE(r.status == lp::SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(r.objective == doctest::Approx(-0.25));
  CHECK(lp::check_kkt(q.lp, r, q.quadratic).ok());

  q.quadratic[0] = -1.0;
  CHECK_THROWS_AS(lp::solve_qp(q), DomainError);
}

TEST_CASE("three-bus DC OPF LP matches vertex enumeration")
{
  for (const char* name : {"three_bus", "three_bus_congested", "one_bus"}) {
    CAPTURE(name);
    const auto c = fixture::csv_case(name);
    const auto ts = constant_series(*c, 1);
    const auto p = build_dcopf(snapshot(c, ts, 0, Eigen::VectorXd(0)));
    const auto r = lp::solve_lp(p);
    REQUIRE(r.status == lp::SolveStatus::optimal);
    const auto v = oracle::enumerate_vertices(p);
    REQUIRE(v.feasible);
    CHECK(r.objective == doctest::Approx(v.objective).epsilon(1e-9));
    CHECK(r.basis.size() == static_cast<std::size_t>(p.num_vars()));
    CHECK(lp::check_kkt(p, r).ok());
  }
}

TEST_CASE("random small LPs agree with vertex enumeration")
{
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 3, m = 4;
    Eigen::MatrixXd G(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) G(i, j) = U(rng);
    Eigen::VectorXd lo(m), up(m);
    for (int i = 0; i < m; ++i) {
      lo[i] = trial % 3 == 0 ? -kInf : -2.0 + U(rng);
      up[i] = 2.0 + U(rng);
    }
    Eigen::MatrixXd E(1, n);
    E << 1.0, 1.0, 1.0;
    Eigen::VectorXd e = Eigen::VectorXd::Constant(1, 0.5 * U(rng));
    Eigen::VectorXd c(n);
    for (int j = 0; j < n; ++j) c[j] = U(rng);
    const auto p = dense_lp(c, E, e, G, lo, up, Eigen::VectorXd::Constant(n, -3.0), Eigen::VectorXd::Constant(n, 3.0));
    const auto r = lp::solve_lp(p);
    const auto v = oracle::enumerate_vertices(p);
    CAPTURE(trial);
    CHECK((r.status == lp::SolveStatus::optimal) == v.feasible);
    if (!v.feasible) continue;
    ++solved;
    CHECK(r.objective == doctest::Approx(v.objective).epsilon(1e-8));
    const auto kkt = lp::check_kkt(p, r);
    CHECK_MESSAGE(kkt.ok(), kkt.describe());
    CHECK(r.basis.size() == static_cast<std::size_t>(n));
    // The basis system reproduces the primal point.
    const Eigen::MatrixXd A = lp::constraint_rows(p, r.basis);
    const Eigen::VectorXd b = lp::constraint_rhs(p, r.basis);
    CHECK((A.fullPivLu().solve(b) - r.x).norm() < 1e-7);
  }
  CHECK(solved > 40);
}

TEST_CASE("MILP agrees with enumeration of the binaries")
{
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> U(0.5, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    // max value' y - 0.1 x  s.t.  weight' y <= cap, x >= y_0 - 0.5, y binary, x in [0, 1]
    const int n = 6;
    Eigen::VectorXd value(n), weight(n);
    for (int i = 0; i < n; ++i) value[i] = U(rng), weight[i] = U(rng);
    const double cap = 0.4 * weight.sum();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, n + 1);
    G.row(0).head(n) = weight.transpose();
    G(1, n) = 1.0;
    G(1, 0) = -1.0;
    Eigen::VectorXd c(n + 1);
    c.head(n) = -value;
    c[n] = 0.1;
    Eigen::VectorXd lo(2), up(2);
    lo << -kInf, -0.5;
    up << cap, kInf;
    lp::MixedIntegerProgram mip;
    mip.lp = dense_lp(c, Eigen::MatrixXd(0, n + 1), Eigen::VectorXd(0), G, lo, up,
                      Eigen::VectorXd::Zero(n + 1), Eigen::VectorXd::Ones(n + 1));
    for (int i = 0; i < n; ++i) mip.binaries.push_back(i);
    const auto r = lp::solve_milp(mip);
    REQUIRE(r.status == lp::SolveStatus::optimal);

    double best = kInf;
    for (int mask = 0; mask < (1 << n); ++mask) {
      double w = 0, v = 0;
      for (int i = 0; i < n; ++i)
        if (mask >> i & 1) w += weight[i], v += value[i];
      if (w > cap) continue;
      const double x = (mask & 1) ? 0.5 : 0.0;
      best = std::min(best, -v + 0.1 * x);
    }
    CHECK(r.objective == doctest::Approx(best).epsilon(1e-9));
    for (int i = 0; i < n; ++i) CHECK(std::min(std::abs(r.x[i]), std::abs(r.x[i] - 1.0)) < 1e-9);
  }
}

TEST_CASE("degenerate vertex is flagged")
{
  // min 2x + y; three rows and the bound x >= 0 all pass through the optimum (0, 1).
  Eigen::MatrixXd G(3, 2);
  G << 1, 1, 1, -1, 0, 1;
  Eigen::VectorXd lo(3), up(3);
  lo << 1, -1, 1;
  up << kInf, kInf, kInf;
  const auto p = dense_lp(Eigen::Vector2d(2.0, 1.0), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), G, lo, up,
                          Eigen::VectorXd::Zero(2), Eigen::VectorXd::Constant(2, 5.0));
  const auto r = lp::solve_lp(p);
  REQUIRE(r.status == lp::SolveStatus::optimal);
  CHECK(r.x[0] == doctest::Approx(0.0));
  CHECK(r.x[1] == doctest::Approx(1.0));
  CHECK(r.degenerate);
  CHECK(r.active.size() > 2);
  CHECK(r.basis.size() == 2);
  CHECK(lp::check_kkt(p, r).ok());
}

TEST_CASE("active set helper matches the solver's")
{
  const auto c = fixture::congested();
  const auto p = build_dcopf(snapshot(c, constant_series(*c, 1), 0, Eigen::VectorXd(0)));
  const auto r = lp::solve_lp(p);
  CHECK(lp::active_constraints(p, r.x) == r.active);
}
