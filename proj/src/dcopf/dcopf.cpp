#include "carbonshift/dcopf.hpp"

#include <cmath>
#include <limits>

namespace carbonshift {

using Eigen::Index;

DcopfLayout::DcopfLayout(const NetworkCase& net)
    : buses(static_cast<Index>(net.num_buses())),
      generators(static_cast<Index>(net.num_generators())),
      lines(static_cast<Index>(net.num_lines()))
{}

Eigen::VectorXd compute_line_flows(const NetworkCase& net, const Eigen::VectorXd& angles)
{
  if (angles.size() != static_cast<Index>(net.num_buses())) throw DimensionError("angle vector size mismatch");
  Eigen::VectorXd f(static_cast<Index>(net.num_lines()));
  for (std::size_t l = 0; l < net.num_lines(); ++l) {
    const auto& line = net.lines()[l];
    const auto a = static_cast<Index>(net.bus_index(line.from_bus));
    const auto b = static_cast<Index>(net.bus_index(line.to_bus));
    f[static_cast<Index>(l)] = -line.susceptance * (angles[a] - angles[b]);
  }
  return f;
}

namespace {

// With `shed_column` an extra variable phi in [0, 1] scales the load down:
// L theta + E pg + phi * Pd = Pd, objective phi.
lp::LinearProgram assemble(const Snapshot& snap, bool shed_column)
{
  const auto& net = *snap.network;
  const DcopfLayout L(net);
  const Index n = L.vars() + (shed_column ? 1 : 0);

  lp::LinearProgram p;
  p.objective = Eigen::VectorXd::Zero(n);
  if (shed_column) p.objective[n - 1] = 1.0;
  else p.objective.segment(L.buses, L.generators) = net.generator_costs();

  std::vector<Eigen::Triplet<double>> eq, ineq;
  p.ineq_lower.resize(L.lines);
  p.ineq_upper.resize(L.lines);
  for (Index l = 0; l < L.lines; ++l) {
    const auto& line = net.lines()[static_cast<std::size_t>(l)];
    const auto a = static_cast<Index>(net.bus_index(line.from_bus));
    const auto b = static_cast<Index>(net.bus_index(line.to_bus));
    const double beta = line.susceptance;
    eq.emplace_back(L.balance_row(a), L.theta(a), beta);
    eq.emplace_back(L.balance_row(a), L.theta(b), -beta);
    eq.emplace_back(L.balance_row(b), L.theta(b), beta);
    eq.emplace_back(L.balance_row(b), L.theta(a), -beta);
    ineq.emplace_back(L.flow_row(l), L.theta(a), -beta);
    ineq.emplace_back(L.flow_row(l), L.theta(b), beta);
    p.ineq_lower[l] = -line.flow_limit;
    p.ineq_upper[l] = line.flow_limit;
  }
  for (Index g = 0; g < L.generators; ++g) {
    const auto bus = static_cast<Index>(net.bus_index(net.generators()[static_cast<std::size_t>(g)].bus));
    eq.emplace_back(L.balance_row(bus), L.pg(g), 1.0);
  }
  eq.emplace_back(L.reference_row(), L.theta(static_cast<Index>(net.reference_index())), 1.0);
  if (shed_column)
    for (Index i = 0; i < L.buses; ++i)
      if (snap.bus_load[i] != 0.0) eq.emplace_back(L.balance_row(i), n - 1, snap.bus_load[i]);

  p.eq_matrix.resize(L.buses + 1, n);
  p.eq_matrix.setFromTriplets(eq.begin(), eq.end());
  p.eq_rhs = Eigen::VectorXd::Zero(L.buses + 1);
  p.eq_rhs.head(L.buses) = snap.bus_load;

  p.ineq_matrix.resize(L.lines, n);
  p.ineq_matrix.setFromTriplets(ineq.begin(), ineq.end());

  p.var_lower = Eigen::VectorXd::Constant(n, -lp::kInf);
  p.var_upper = Eigen::VectorXd::Constant(n, lp::kInf);
  p.var_lower.segment(L.buses, L.generators) = snap.p_min;
  p.var_upper.segment(L.buses, L.generators) = snap.p_max;
  if (shed_column) {
    p.var_lower[n - 1] = 0.0;
    p.var_upper[n - 1] = 1.0;
  }

  p.var_names.reserve(static_cast<std::size_t>(n));
  for (const auto& b : net.buses()) p.var_names.push_back("theta_" + std::to_string(b.id));
  for (const auto& g : net.generators()) p.var_names.push_back("pg_" + g.id);
  if (shed_column) p.var_names.push_back("shed");
  for (const auto& b : net.buses()) p.eq_names.push_back("balance_" + std::to_string(b.id));
  p.eq_names.push_back("reference");
  for (const auto& l : net.lines()) p.ineq_names.push_back("flow_" + l.id);
  return p;
}

double shed_fraction(const Snapshot& snap, const lp::Tolerances& tol)
{
  const auto res = lp::solve_lp(assemble(snap, true), tol);
  return res.status == lp::SolveStatus::optimal ? res.objective : std::numeric_limits<double>::quiet_NaN();
}

DispatchSolution to_dispatch(const Snapshot& snap, lp::SolveResult res)
{
  const auto& net = *snap.network;
  const DcopfLayout L(net);
  DispatchSolution sol;
  sol.angles = res.x.head(L.buses);
  sol.generation = res.x.segment(L.buses, L.generators);
  sol.objective = net.generator_costs().dot(sol.generation);
  sol.nodal_prices = res.eq_duals.head(L.buses);
  sol.line_flows = compute_line_flows(net, sol.angles);
  sol.emissions = net.generator_carbon().dot(sol.generation);
  sol.lp = std::move(res);
  return sol;
}

lp::SolveResult checked_solve(const Snapshot& snap, const lp::LinearProgram& p, const lp::Tolerances& tol)
{
  auto res = lp::solve_lp(p, tol);
  switch (res.status) {
    case lp::SolveStatus::optimal: return res;
    case lp::SolveStatus::infeasible: {
      const double shed = shed_fraction(snap, tol);
      throw InfeasibleDispatch("DC OPF infeasible at step " + std::to_string(snap.t) +
                                   " (minimum uniform load shedding " + std::to_string(shed) + ")",
                               shed);
    }
    case lp::SolveStatus::unbounded:
      throw UnboundedDispatch("DC OPF unbounded at step " + std::to_string(snap.t) +
                              ": generator costs or limits are malformed");
    case lp::SolveStatus::time_limit:
      throw NumericalError("DC OPF hit the iteration limit at step " + std::to_string(snap.t));
  }
  return res;
}

}  // namespace

lp::LinearProgram build_dcopf(const Snapshot& snap) { return assemble(snap, false); }

DispatchSolution solve_dcopf(const Snapshot& snap, const lp::Tolerances& tol)
{
  return to_dispatch(snap, checked_solve(snap, build_dcopf(snap), tol));
}

DispatchSolution solve_dcopf_lexicographic(const Snapshot& snap, const Eigen::VectorXd& secondary,
                                           const lp::Tolerances& tol)
{
  const auto& net = *snap.network;
  const DcopfLayout L(net);
  if (secondary.size() != L.generators) throw DimensionError("secondary weights need one entry per generator");

  const auto p = build_dcopf(snap);
  auto first = checked_solve(snap, p, tol);

  // stage 2 on the optimal face: every constraint with a nonzero dual stays
  // active, which keeps the first-stage duals complementary
  lp::LinearProgram q = p;
  q.objective.setZero();
  q.objective.segment(L.buses, L.generators) = secondary;
  constexpr double dual_tol = 1e-9;
  for (Index r = 0; r < q.num_ineq(); ++r) {
    if (first.ineq_duals[r] > dual_tol) q.ineq_upper[r] = q.ineq_lower[r];
    else if (first.ineq_duals[r] < -dual_tol) q.ineq_lower[r] = q.ineq_upper[r];
  }
  for (Index j = 0; j < q.num_vars(); ++j) {
    if (first.var_duals[j] > dual_tol) q.var_upper[j] = q.var_lower[j];
    else if (first.var_duals[j] < -dual_tol) q.var_lower[j] = q.var_upper[j];
  }
  const Eigen::VectorXd c = net.generator_costs();
  auto second = lp::solve_lp(q, tol);
  if (second.status != lp::SolveStatus::optimal) {
    // fall back to a cost cap
    q = p;
    q.objective.setZero();
    q.objective.segment(L.buses, L.generators) = secondary;
    lp::SparseMatrix g(L.lines + 1, L.vars());
    std::vector<Eigen::Triplet<double>> trip;
    for (Index r = 0; r < p.ineq_matrix.outerSize(); ++r)
      for (lp::SparseMatrix::InnerIterator it(p.ineq_matrix, r); it; ++it) trip.emplace_back(r, it.col(), it.value());
    for (Index k = 0; k < L.generators; ++k)
      if (c[k] != 0.0) trip.emplace_back(L.lines, L.pg(k), c[k]);
    g.setFromTriplets(trip.begin(), trip.end());
    q.ineq_matrix = std::move(g);
    q.ineq_lower.conservativeResize(L.lines + 1);
    q.ineq_upper.conservativeResize(L.lines + 1);
    q.ineq_lower[L.lines] = -lp::kInf;
    q.ineq_upper[L.lines] = first.objective + 1e-9 * (1.0 + std::abs(first.objective));
    q.ineq_names.push_back("cost_cap");
    second = lp::solve_lp(q, tol);
  }
  if (second.status != lp::SolveStatus::optimal) return to_dispatch(snap, std::move(first));

  // first-stage duals remain optimal for any cost-optimal primal point
  lp::SolveResult merged = std::move(first);
  merged.x = second.x;
  merged.objective = c.dot(second.x.segment(L.buses, L.generators));
  merged.active = lp::active_constraints(p, merged.x);
  merged.degenerate = static_cast<Index>(merged.active.size()) > L.vars();
  merged.basis.clear();
  return to_dispatch(snap, std::move(merged));
}

double emissions_of(const DispatchSolution& sol, const NetworkCase& net)
{
  if (sol.generation.size() != static_cast<Index>(net.num_generators()))
    throw DimensionError("dispatch has " + std::to_string(sol.generation.size()) + " generators, case has " +
                         std::to_string(net.num_generators()));
  return net.generator_carbon().dot(sol.generation);
}

nlohmann::json to_json(const DispatchSolution& sol, const NetworkCase& net)
{
  using nlohmann::json;
  json j;
  j["objective"] = sol.objective;
  j["emissions"] = sol.emissions;
  j["degenerate"] = sol.degenerate();
  json buses = json::array();
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    const auto k = static_cast<Index>(i);
    buses.push_back({{"bus", net.buses()[i].id}, {"theta", sol.angles[k]}, {"lmp", sol.nodal_prices[k]}});
  }
  j["buses"] = std::move(buses);
  json gens = json::array();
  for (std::size_t g = 0; g < net.num_generators(); ++g)
    gens.push_back({{"id", net.generators()[g].id}, {"pg", sol.generation[static_cast<Index>(g)]}});
  j["generators"] = std::move(gens);
  json lines = json::array();
  for (std::size_t l = 0; l < net.num_lines(); ++l)
    lines.push_back({{"id", net.lines()[l].id}, {"flow", sol.line_flows[static_cast<Index>(l)]}});
  j["lines"] = std::move(lines);
  json basis = json::array();
  for (const auto& ref : sol.basis()) basis.push_back(lp::to_string(ref));
  j["basis"] = std::move(basis);
  return j;
}

}  // namespace carbonshift
