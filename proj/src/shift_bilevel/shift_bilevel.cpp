#include "carbonshift/shift_bilevel.hpp"

#include "carbonshift/csv.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <ostream>
#include <queue>

namespace carbonshift {

using Eigen::Index;
using Triplets = std::vector<Eigen::Triplet<double>>;

namespace {

Eigen::VectorXd upper_weights(const NetworkCase& net, double alpha)
{
  return alpha * net.generator_costs() + (1.0 - alpha) * net.generator_carbon();
}

void check_inputs(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params)
{
  params.validate(dcs.size());
  if (snap.dc_loads.size() != static_cast<Index>(dcs.size()))
    throw DimensionError("snapshot carries " + std::to_string(snap.dc_loads.size()) + " data-center loads for " +
                         std::to_string(dcs.size()) + " data centers");
  for (const auto& dc : dcs)
    if (!snap.network->has_bus(dc.bus)) throw ValidationError("data center at unknown bus " + std::to_string(dc.bus));
}

// Adds one row to a triplet list and returns its index.
struct RowBuilder
{
  Triplets trip;
  std::vector<double> lo, up;
  Index add(std::initializer_list<std::pair<Index, double>> terms, double l, double u)
  {
    const auto r = static_cast<Index>(lo.size());
    for (const auto& [c, v] : terms)
      if (v != 0.0) trip.emplace_back(r, c, v);
    lo.push_back(l);
    up.push_back(u);
    return r;
  }
  Index add_row(const std::vector<std::pair<Index, double>>& terms, double l, double u)
  {
    const auto r = static_cast<Index>(lo.size());
    for (const auto& [c, v] : terms)
      if (v != 0.0) trip.emplace_back(r, c, v);
    lo.push_back(l);
    up.push_back(u);
    return r;
  }
  Index rows() const { return static_cast<Index>(lo.size()); }
};

lp::SparseMatrix to_matrix(const RowBuilder& b, Index cols)
{
  lp::SparseMatrix m(b.rows(), cols);
  m.setFromTriplets(b.trip.begin(), b.trip.end());
  return m;
}

Eigen::VectorXd to_vector(const std::vector<double>& v)
{
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

struct Evaluated
{
  OraclePoint point;
  DispatchSolution lower;
};

Evaluated evaluate(const Snapshot& snap, const Eigen::VectorXd& w, const Eigen::VectorXd& delta,
                   const lp::Tolerances& tol)
{
  Eigen::VectorXd loads = (snap.dc_loads + delta).cwiseMax(0.0);
  const Snapshot shifted = with_dc_loads(snap, loads);
  Evaluated e{{}, solve_dcopf_lexicographic(shifted, w, tol)};
  e.point.delta_pd = delta;
  e.point.upper = w.dot(e.lower.generation);
  e.point.emissions = e.lower.emissions;
  e.point.cost = e.lower.objective;
  return e;
}

// The tie-break program only sees the lower level through solver tolerances, so a
// lower-volume shift is kept only if a re-solve confirms its upper objective.
bool no_worse(const Snapshot& snap, const Eigen::VectorXd& w, const Eigen::VectorXd& first,
              const Eigen::VectorXd& second, const lp::Tolerances& tol)
{
  try {
    const double a = evaluate(snap, w, first, tol).point.upper;
    const double b = evaluate(snap, w, second, tol).point.upper;
    return b <= a + 1e-9 * (1.0 + std::abs(a));
  } catch (const InfeasibleDispatch&) {
    return false;
  }
}

// Minimum-volume transfers realising `delta` within the pair limits.
std::optional<Eigen::MatrixXd> route_transfers(const Eigen::VectorXd& delta, const ShiftParams& params)
{
  const Index k = delta.size();
  if (params.unbounded_pairs()) return transfers_from_deltas(delta);
  lp::LinearProgram p;
  p.objective = Eigen::VectorXd::Ones(k * k);
  p.var_lower = Eigen::VectorXd::Zero(k * k);
  p.var_upper = Eigen::VectorXd::Zero(k * k);
  RowBuilder eq;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j)
      if (i != j) p.var_upper[i * k + j] = params.pair_limits(i, j);
  for (Index i = 0; i < k; ++i) {
    std::vector<std::pair<Index, double>> terms;
    for (Index j = 0; j < k; ++j) {
      if (i == j) continue;
      terms.emplace_back(j * k + i, 1.0);   // inflow
      terms.emplace_back(i * k + j, -1.0);  // outflow
    }
    eq.add_row(terms, delta[i], delta[i]);
  }
  p.eq_matrix = to_matrix(eq, k * k);
  p.eq_rhs = to_vector(eq.lo);
  p.ineq_matrix.resize(0, k * k);
  p.ineq_lower.resize(0);
  p.ineq_upper.resize(0);
  const auto r = lp::solve_lp(p);
  if (r.status != lp::SolveStatus::optimal) return std::nullopt;
  Eigen::MatrixXd s(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) s(i, j) = i == j ? 0.0 : std::max(0.0, r.x[i * k + j]);
  return s;
}

void clean_delta(Eigen::VectorXd& d, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
  for (Index i = 0; i < d.size(); ++i) {
    d[i] = std::clamp(d[i], lo[i], hi[i]);
    if (std::abs(d[i]) < 1e-9) d[i] = 0.0;
  }
  const double err = d.sum();
  if (err == 0.0) return;
  Index best = 0;
  double room = -1.0;
  for (Index i = 0; i < d.size(); ++i) {
    const double r = err > 0 ? d[i] - lo[i] : hi[i] - d[i];
    if (r > room) {
      room = r;
      best = i;
    }
  }
  d[best] -= err;
}

}  // namespace

BigM BigM::widened(double factor) const
{
  const double mid = 0.5 * (price_lo + price_hi), half = 0.5 * (price_hi - price_lo);
  return {line_dual * factor, mid - factor * half, mid + factor * half};
}

BigM default_big_m(const Snapshot& snap, double margin)
{
  const auto& net = *snap.network;
  const Eigen::VectorXd c = net.generator_costs();
  double lo = lp::kInf, hi = -lp::kInf;
  for (Index g = 0; g < c.size(); ++g) {
    if (snap.p_max[g] <= snap.p_min[g]) continue;
    lo = std::min(lo, c[g]);
    hi = std::max(hi, c[g]);
  }
  if (lo > hi) lo = hi = 0.0;
  const double spread = std::max(1.0, hi - lo);
  return {spread * (1.0 + net.hop_diameter()), lo - margin * spread, hi + margin * spread};
}

KktProgram build_kkt_milp(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params)
{
  return build_kkt_milp(snap, dcs, params, default_big_m(snap));
}

KktProgram build_kkt_milp(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                          const BigM& M)
{
  check_inputs(snap, dcs, params);
  const auto& net = *snap.network;
  const DcopfLayout D(net);
  const Index N = D.buses, G = D.generators;

  KktProgram out;
  out.big_m = M;
  auto& L = out.layout;
  L.k = static_cast<Index>(dcs.size());
  L.free_pos.assign(static_cast<std::size_t>(G), -1);
  for (Index g = 0; g < G; ++g)
    if (snap.p_max[g] > snap.p_min[g]) {
      L.free_pos[static_cast<std::size_t>(g)] = static_cast<Index>(L.free_gens.size());
      L.free_gens.push_back(g);
    }
  L.line_pos.assign(static_cast<std::size_t>(D.lines), -1);
  for (Index l = 0; l < D.lines; ++l)
    if (std::isfinite(net.lines()[static_cast<std::size_t>(l)].flow_limit)) {
      L.line_pos[static_cast<std::size_t>(l)] = static_cast<Index>(L.limited_lines.size());
      L.limited_lines.push_back(l);
    }
  const auto Lf = static_cast<Index>(L.limited_lines.size());
  const auto Gf = static_cast<Index>(L.free_gens.size());
  const Index k = L.k;

  L.delta = 0;
  L.s = k;
  L.theta = L.s + k * k;
  L.pg = L.theta + N;
  L.mu = L.pg + G;
  L.nu = L.mu + N;
  L.rho_up = L.nu + 1;
  L.rho_lo = L.rho_up + Lf;
  L.sig_up = L.rho_lo + Lf;
  L.sig_lo = L.sig_up + G;
  L.z_line_up = L.sig_lo + G;
  L.z_line_lo = L.z_line_up + Lf;
  L.z_gen_up = L.z_line_lo + Lf;
  L.z_gen_lo = L.z_gen_up + Gf;
  L.vars = L.z_gen_lo + Gf;
  const Index n = L.vars;

  auto& p = out.mip.lp;
  p.objective = Eigen::VectorXd::Zero(n);
  p.objective.segment(L.pg, G) = upper_weights(net, params.alpha);
  p.var_lower = Eigen::VectorXd::Constant(n, -lp::kInf);
  p.var_upper = Eigen::VectorXd::Constant(n, lp::kInf);

  // upper-level bounds
  Eigen::VectorXd lo, hi;
  shift_bounds(snap.dc_loads, dcs, params.epsilon, lo, hi);
  p.var_lower.segment(L.delta, k) = lo;
  p.var_upper.segment(L.delta, k) = hi;
  const bool limited = !params.unbounded_pairs();
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      p.var_lower[L.s + i * k + j] = 0.0;
      p.var_upper[L.s + i * k + j] = i == j ? 0.0 : (limited ? params.pair_limits(i, j) : lp::kInf);
    }
  p.var_lower.segment(L.pg, G) = snap.p_min;
  p.var_upper.segment(L.pg, G) = snap.p_max;
  p.var_lower.segment(L.rho_up, 2 * Lf).setZero();
  p.var_upper.segment(L.rho_up, 2 * Lf).setConstant(M.line_dual);
  p.var_lower.segment(L.mu, N).setConstant(M.price_lo);
  p.var_upper.segment(L.mu, N).setConstant(M.price_hi);
  const Eigen::VectorXd c = net.generator_costs();
  for (Index g = 0; g < G; ++g) {
    const bool free = L.free_pos[static_cast<std::size_t>(g)] >= 0;
    // a fixed unit keeps one free dual in sig_up
    p.var_lower[L.sig_up + g] = free ? 0.0 : -lp::kInf;
    p.var_upper[L.sig_up + g] = free ? M.gen_up(c[g]) : lp::kInf;
    p.var_lower[L.sig_lo + g] = 0.0;
    p.var_upper[L.sig_lo + g] = free ? M.gen_lo(c[g]) : 0.0;
  }
  for (Index j = L.z_line_up; j < n; ++j) {
    p.var_lower[j] = 0.0;
    p.var_upper[j] = 1.0;
    out.mip.binaries.push_back(j);
  }

  std::vector<Index> dc_bus(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) dc_bus[static_cast<std::size_t>(i)] =
      static_cast<Index>(net.bus_index(dcs[static_cast<std::size_t>(i)].bus));
  const auto ref = static_cast<Index>(net.reference_index());

  // ---- equalities
  RowBuilder eq;
  std::vector<std::vector<std::pair<Index, double>>> balance(static_cast<std::size_t>(N)),
      theta_stat(static_cast<std::size_t>(N));
  for (Index l = 0; l < D.lines; ++l) {
    const auto& line = net.lines()[static_cast<std::size_t>(l)];
    const auto a = static_cast<Index>(net.bus_index(line.from_bus));
    const auto b = static_cast<Index>(net.bus_index(line.to_bus));
    const double beta = line.susceptance;
    auto& ra = balance[static_cast<std::size_t>(a)];
    auto& rb = balance[static_cast<std::size_t>(b)];
    ra.emplace_back(L.theta + a, beta);
    ra.emplace_back(L.theta + b, -beta);
    rb.emplace_back(L.theta + b, beta);
    rb.emplace_back(L.theta + a, -beta);
    // -L' mu (L symmetric)
    auto& sa = theta_stat[static_cast<std::size_t>(a)];
    auto& sb = theta_stat[static_cast<std::size_t>(b)];
    sa.emplace_back(L.mu + a, -beta);
    sa.emplace_back(L.mu + b, beta);
    sb.emplace_back(L.mu + b, -beta);
    sb.emplace_back(L.mu + a, beta);
    // K'(rho_up - rho_lo), K row = (-beta at a, +beta at b)
    const Index pos = L.line_pos[static_cast<std::size_t>(l)];
    if (pos >= 0) {
      sa.emplace_back(L.rho_up + pos, -beta);
      sa.emplace_back(L.rho_lo + pos, beta);
      sb.emplace_back(L.rho_up + pos, beta);
      sb.emplace_back(L.rho_lo + pos, -beta);
    }
  }
  for (Index g = 0; g < G; ++g) {
    const auto bus = static_cast<Index>(net.bus_index(net.generators()[static_cast<std::size_t>(g)].bus));
    balance[static_cast<std::size_t>(bus)].emplace_back(L.pg + g, 1.0);
  }
  for (Index i = 0; i < k; ++i) balance[static_cast<std::size_t>(dc_bus[static_cast<std::size_t>(i)])]
      .emplace_back(L.delta + i, -1.0);
  for (Index i = 0; i < N; ++i) eq.add_row(balance[static_cast<std::size_t>(i)], snap.bus_load[i], snap.bus_load[i]);
  eq.add({{L.theta + ref, 1.0}}, 0.0, 0.0);

  for (Index g = 0; g < G; ++g) {
    const auto bus = static_cast<Index>(net.bus_index(net.generators()[static_cast<std::size_t>(g)].bus));
    eq.add({{L.mu + bus, -1.0}, {L.sig_up + g, 1.0}, {L.sig_lo + g, -1.0}}, -c[g], -c[g]);
  }
  theta_stat[static_cast<std::size_t>(ref)].emplace_back(L.nu, -1.0);
  for (Index i = 0; i < N; ++i) eq.add_row(theta_stat[static_cast<std::size_t>(i)], 0.0, 0.0);

  {
    std::vector<std::pair<Index, double>> zero_sum;
    for (Index i = 0; i < k; ++i) zero_sum.emplace_back(L.delta + i, 1.0);
    eq.add_row(zero_sum, 0.0, 0.0);
  }
  for (Index i = 0; i < k; ++i) {
    std::vector<std::pair<Index, double>> terms{{L.delta + i, 1.0}};
    for (Index j = 0; j < k; ++j) {
      if (i == j) continue;
      terms.emplace_back(L.s + j * k + i, -1.0);
      terms.emplace_back(L.s + i * k + j, 1.0);
    }
    eq.add_row(terms, 0.0, 0.0);
  }

  // ---- inequalities
  RowBuilder in;
  for (Index pos = 0; pos < Lf; ++pos) {
    const Index l = L.limited_lines[static_cast<std::size_t>(pos)];
    const auto& line = net.lines()[static_cast<std::size_t>(l)];
    const auto a = static_cast<Index>(net.bus_index(line.from_bus));
    const auto b = static_cast<Index>(net.bus_index(line.to_bus));
    const double beta = line.susceptance, F = line.flow_limit;
    const Index zu = L.z_line_up + pos, zl = L.z_line_lo + pos;
    in.add({{L.theta + a, -beta}, {L.theta + b, beta}}, -F, F);
    in.add({{L.rho_up + pos, 1.0}, {zu, -M.line_dual}}, -lp::kInf, 0.0);
    in.add({{L.theta + a, beta}, {L.theta + b, -beta}, {zu, 2.0 * F}}, -lp::kInf, F);  // F - K theta <= 2F(1 - z)
    in.add({{L.rho_lo + pos, 1.0}, {zl, -M.line_dual}}, -lp::kInf, 0.0);
    in.add({{L.theta + a, -beta}, {L.theta + b, beta}, {zl, 2.0 * F}}, -lp::kInf, F);  // K theta + F <= 2F(1 - z)
    in.add({{zu, 1.0}, {zl, 1.0}}, -lp::kInf, 1.0);
  }
  for (Index pos = 0; pos < Gf; ++pos) {
    const Index g = L.free_gens[static_cast<std::size_t>(pos)];
    const double pmin = snap.p_min[g], pmax = snap.p_max[g], R = pmax - pmin;
    const Index yu = L.z_gen_up + pos, yl = L.z_gen_lo + pos;
    in.add({{L.sig_up + g, 1.0}, {yu, -M.gen_up(c[g])}}, -lp::kInf, 0.0);
    in.add({{L.pg + g, -1.0}, {yu, R}}, -lp::kInf, R - pmax);  // pmax - pg <= R(1 - y)
    in.add({{L.sig_lo + g, 1.0}, {yl, -M.gen_lo(c[g])}}, -lp::kInf, 0.0);
    in.add({{L.pg + g, 1.0}, {yl, R}}, -lp::kInf, R + pmin);  // pg - pmin <= R(1 - y)
    in.add({{yu, 1.0}, {yl, 1.0}}, -lp::kInf, 1.0);
  }

  p.eq_matrix = to_matrix(eq, n);
  p.eq_rhs = to_vector(eq.lo);
  p.ineq_matrix = to_matrix(in, n);
  p.ineq_lower = to_vector(in.lo);
  p.ineq_upper = to_vector(in.up);
  return out;
}

namespace {

// Initial point: zero shift, the plain dispatch and its duals.
Eigen::VectorXd warm_start(const KktProgram& kp, const Snapshot& snap, const DispatchSolution& sol)
{
  const auto& L = kp.layout;
  const DcopfLayout D(*snap.network);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(L.vars);
  x.segment(L.theta, D.buses) = sol.angles;
  x.segment(L.pg, D.generators) = sol.generation;
  x.segment(L.mu, D.buses) = sol.lp.eq_duals.head(D.buses);
  x[L.nu] = sol.lp.eq_duals[D.reference_row()];
  auto clip = [](double v) { return std::abs(v) < 1e-9 ? 0.0 : v; };
  for (std::size_t pos = 0; pos < L.limited_lines.size(); ++pos) {
    const double y = clip(sol.lp.ineq_duals[L.limited_lines[pos]]);
    const auto i = static_cast<Index>(pos);
    if (y < 0) {
      x[L.rho_up + i] = -y;
      x[L.z_line_up + i] = 1.0;
    } else if (y > 0) {
      x[L.rho_lo + i] = y;
      x[L.z_line_lo + i] = 1.0;
    }
  }
  for (Index g = 0; g < D.generators; ++g) {
    const double z = clip(sol.lp.var_duals[D.pg(g)]);
    const Index pos = L.free_pos[static_cast<std::size_t>(g)];
    if (pos < 0) {
      x[L.sig_up + g] = -z;
      continue;
    }
    if (z < 0) {
      x[L.sig_up + g] = -z;
      x[L.z_gen_up + pos] = 1.0;
    } else if (z > 0) {
      x[L.sig_lo + g] = z;
      x[L.z_gen_lo + pos] = 1.0;
    }
  }
  return x;
}

bool big_m_hit(const KktProgram& kp, const Eigen::VectorXd& x)
{
  const auto& L = kp.layout;
  const auto Lf = static_cast<Index>(L.limited_lines.size());
  for (Index i = 0; i < 2 * Lf; ++i)
    if (x[L.rho_up + i] >= kp.big_m.line_dual - 1e-3) return true;
  for (Index i = 0; i < L.nu - L.mu; ++i)
    if (x[L.mu + i] <= kp.big_m.price_lo + 1e-3 || x[L.mu + i] >= kp.big_m.price_hi - 1e-3) return true;
  return false;
}

}  // namespace

OraclePoint evaluate_shift(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                           const Eigen::VectorXd& delta_pd, const lp::Tolerances& tol)
{
  check_inputs(snap, dcs, params);
  return evaluate(snap, upper_weights(*snap.network, params.alpha), delta_pd, tol).point;
}

namespace {

struct Candidate
{
  Eigen::VectorXd delta;
  lp::SolveStatus status = lp::SolveStatus::optimal;
  double gap = 0.0;
};

// Adds `row` (dense over the first columns) as an extra inequality.
void append_row(lp::LinearProgram& q, const std::vector<std::pair<Index, double>>& terms, double lo, double up)
{
  Triplets trip;
  for (Index r = 0; r < q.ineq_matrix.outerSize(); ++r)
    for (lp::SparseMatrix::InnerIterator it(q.ineq_matrix, r); it; ++it) trip.emplace_back(r, it.col(), it.value());
  const Index row = q.num_ineq();
  for (const auto& [c, v] : terms)
    if (v != 0.0) trip.emplace_back(row, c, v);
  lp::SparseMatrix m(row + 1, q.num_vars());
  m.setFromTriplets(trip.begin(), trip.end());
  q.ineq_matrix = std::move(m);
  q.ineq_lower.conservativeResize(row + 1);
  q.ineq_upper.conservativeResize(row + 1);
  q.ineq_lower[row] = lo;
  q.ineq_upper[row] = up;
}

Candidate run_kkt(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                  const BilevelOptions& opt, const Eigen::VectorXd& w, BilevelSolution& out)
{
  const auto k = static_cast<Index>(dcs.size());
  const DispatchSolution base = solve_dcopf(snap, opt.tol);
  ++out.lower_solves;
  BigM M = default_big_m(snap);
  const auto solve_with = [&](const BigM& m, KktProgram& kp_out) {
    kp_out = build_kkt_milp(snap, dcs, params, m);
    kp_out.mip.initial = warm_start(kp_out, snap, base);
    return lp::solve_milp(kp_out.mip, opt.tol);
  };
  const auto usable = [&](const KktProgram& q, const lp::SolveResult& r) { return r.x.size() == q.layout.vars; };
  KktProgram kp;
  lp::SolveResult res = solve_with(M, kp);
  // Bounds that cut off the true duals make some lower-level states look
  // infeasible without any dual touching its bound. Escalate while the bounds
  // are hit or a ten times wider program still finds a better shift.
  for (int attempt = 0;; ++attempt) {
    const bool hit = res.status == lp::SolveStatus::infeasible || (usable(kp, res) && big_m_hit(kp, res.x));
    bool improved = false;
    KktProgram wide;
    lp::SolveResult wres;
    if (!hit && attempt < opt.max_escalations && res.status == lp::SolveStatus::optimal) {
      wres = solve_with(M.widened(10.0), wide);
      improved = usable(wide, wres) && wres.status == lp::SolveStatus::optimal
                 && wres.objective < res.objective - std::max(1e-7, opt.tol.mip_gap * std::abs(res.objective));
    }
    if (!hit && !improved) break;
    if (attempt >= opt.max_escalations) {
      if (res.status == lp::SolveStatus::infeasible)
        throw NumericalError("KKT program infeasible after big-M escalation");
      out.big_m_active = true;
      break;
    }
    M = M.widened(10.0);
    ++out.big_m_escalations;
    if (improved) {
      kp = std::move(wide);
      res = std::move(wres);
    } else {
      res = solve_with(M, kp);
    }
  }
  out.binaries = kp.binaries();
  const auto& L = kp.layout;
  Candidate c{Eigen::VectorXd::Zero(k), res.status, res.mip_gap};
  if (res.x.size() != L.vars) return c;

  Eigen::VectorXd x = res.x;
  if (opt.min_volume.value_or(params.alpha >= 1.0) && res.status == lp::SolveStatus::optimal) {
    lp::MixedIntegerProgram second = kp.mip;
    const double best = w.dot(x.segment(L.pg, w.size()));
    std::vector<std::pair<Index, double>> terms;
    for (Index g = 0; g < w.size(); ++g) terms.emplace_back(L.pg + g, w[g]);
    append_row(second.lp, terms, -lp::kInf, best + 1e-9 * (1.0 + std::abs(best)));
    second.lp.objective.setZero();
    second.lp.objective.segment(L.s, k * k).setOnes();
    second.initial = x;
    const auto r2 = lp::solve_milp(second, opt.tol);
    if (r2.x.size() == L.vars && r2.status == lp::SolveStatus::optimal
        && no_worse(snap, w, x.segment(L.delta, k), r2.x.segment(L.delta, k), opt.tol))
      x = r2.x;
  }
  c.delta = x.segment(L.delta, k);
  return c;
}

// Branch-and-bound over the shift box. The lower-level optimal cost V is
// convex in the shift, so on a box it lies below the interpolation of its
// corner values; replacing "P_g optimal" by "c'P_g <= interpolated V" gives a
// linear relaxation that is exact wherever V is affine across the box.
class ValueFunctionSearch
{
public:
  ValueFunctionSearch(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                      const BilevelOptions& opt, const Eigen::VectorXd& w, BilevelSolution& out)
      : snap_(snap), params_(params), opt_(opt), w_(w), out_(out), layout_(*snap.network),
        base_(build_dcopf(snap)), k_(static_cast<Index>(dcs.size()))
  {
    shift_bounds(snap.dc_loads, dcs, params.epsilon, lo_, hi_);
    for (const auto& dc : dcs) dc_rows_.push_back(layout_.balance_row(static_cast<Index>(snap.network->bus_index(dc.bus))));
    limited_ = !params.unbounded_pairs();
  }

  Candidate run(double incumbent_value)
  {
    const auto start = std::chrono::steady_clock::now();
    Candidate c{Eigen::VectorXd::Zero(k_)};
    best_ = incumbent_value;
    best_delta_ = Eigen::VectorXd::Zero(k_);
    const Index d = k_ - 1;
    Box root{lo_.head(d), hi_.head(d), -lp::kInf, {}};
    std::priority_queue<Box, std::vector<Box>, std::greater<>> open;
    double floor = lp::kInf;  // bounds of boxes too small to split
    if (process(root)) open.push(root);
    bool stopped = false;
    while (!open.empty()) {
      Box b = open.top();
      if (b.lb >= best_ - gap_abs()) break;
      open.pop();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (out_.nodes >= opt_.max_nodes || secs > opt_.tol.time_limit_s) {
        open.push(b);
        stopped = true;
        break;
      }
      Index j = 0;
      double width = -1.0;
      for (Index i = 0; i < d; ++i)
        if (b.hi[i] - b.lo[i] > width) {
          width = b.hi[i] - b.lo[i];
          j = i;
        }
      if (width < 1e-7) {
        floor = std::min(floor, b.lb);
        continue;
      }
      // cut through the relaxation point unless it sits near the edge
      double mid = 0.5 * (b.lo[j] + b.hi[j]);
      const double at = b.point[j];
      if (at > b.lo[j] + 0.25 * width && at < b.hi[j] - 0.25 * width) mid = at;
      Box left = b, right = b;
      left.hi[j] = mid;
      right.lo[j] = mid;
      if (process(left)) open.push(left);
      if (process(right)) open.push(right);
    }
    double lb = std::min(floor, best_);
    if (!open.empty()) lb = std::min(lb, open.top().lb);
    out_.lower_bound = lb;
    c.delta = best_delta_;
    c.gap = (best_ - lb) / std::max(1e-12, std::abs(best_));
    c.status = stopped && best_ - lb > gap_abs() ? lp::SolveStatus::time_limit : lp::SolveStatus::optimal;
    if (c.status == lp::SolveStatus::optimal) c.gap = std::max(0.0, std::min(c.gap, opt_.tol.mip_gap));
    return c;
  }

  /// Smallest transfer volume with upper objective within `bound` (exact for alpha = 1,
  /// where the upper objective is the lower-level cost).
  std::optional<Eigen::VectorXd> min_volume(double bound)
  {
    LpBuild q = joint_program(std::nullopt, true);
    std::vector<std::pair<Index, double>> terms;
    for (Index g = 0; g < layout_.generators; ++g) terms.emplace_back(layout_.pg(g), w_[g]);
    append_row(q.lp, terms, -lp::kInf, bound);
    q.lp.objective.setZero();
    q.lp.objective.segment(q.s, k_ * k_).setOnes();
    const auto r = lp::solve_lp(q.lp, opt_.tol);
    if (r.status != lp::SolveStatus::optimal) return std::nullopt;
    return Eigen::VectorXd(r.x.segment(q.delta, k_));
  }

private:
  struct Box
  {
    Eigen::VectorXd lo, hi;
    double lb;
    Eigen::VectorXd point;  ///< relaxation optimum, free coordinates
    bool operator>(const Box& o) const { return lb > o.lb; }
  };

  struct LpBuild
  {
    lp::LinearProgram lp;
    Index delta = 0, lambda = 0, s = 0;
  };

  double gap_abs() const { return std::max(1e-9, opt_.tol.mip_gap * std::abs(best_)); }

  Eigen::VectorXd full_delta(const Eigen::VectorXd& u) const
  {
    Eigen::VectorXd dl(k_);
    dl.head(k_ - 1) = u;
    dl[k_ - 1] = -u.sum();
    return dl;
  }

  double value_at(const Eigen::VectorXd& u)
  {
    std::vector<double> key(u.data(), u.data() + u.size());
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    lp::LinearProgram p = base_;
    const Eigen::VectorXd dl = full_delta(u);
    for (Index i = 0; i < k_; ++i) p.eq_rhs[dc_rows_[static_cast<std::size_t>(i)]] += dl[i];
    const auto r = lp::solve_lp(p, opt_.tol);
    ++out_.lower_solves;
    const double v = r.status == lp::SolveStatus::optimal ? r.objective : lp::kInf;
    cache_.emplace(std::move(key), v);
    return v;
  }

  // Lower primal feasibility jointly with the shift; `corners` adds the
  // interpolation weights. `transfers` adds the s columns for every pair.
  LpBuild joint_program(const std::optional<std::vector<Eigen::VectorXd>>& corners, bool transfers) const
  {
    const Index n0 = layout_.vars();
    const auto m = corners ? static_cast<Index>(corners->size()) : 0;
    const bool with_s = transfers || limited_;
    LpBuild b;
    b.delta = n0;
    b.lambda = n0 + k_;
    b.s = b.lambda + m;
    const Index n = b.s + (with_s ? k_ * k_ : 0);
    auto& q = b.lp;
    q.objective = Eigen::VectorXd::Zero(n);
    q.objective.head(n0) = base_.objective;
    q.var_lower = Eigen::VectorXd::Zero(n);
    q.var_upper = Eigen::VectorXd::Constant(n, lp::kInf);
    q.var_lower.head(n0) = base_.var_lower;
    q.var_upper.head(n0) = base_.var_upper;
    q.var_lower.segment(b.delta, k_) = lo_;
    q.var_upper.segment(b.delta, k_) = hi_;
    if (with_s)
      for (Index i = 0; i < k_; ++i)
        for (Index j = 0; j < k_; ++j)
          q.var_upper[b.s + i * k_ + j] = i == j ? 0.0 : (limited_ ? params_.pair_limits(i, j) : lp::kInf);

    Triplets eq;
    for (Index r = 0; r < base_.eq_matrix.outerSize(); ++r)
      for (lp::SparseMatrix::InnerIterator it(base_.eq_matrix, r); it; ++it) eq.emplace_back(r, it.col(), it.value());
    std::vector<double> rhs(base_.eq_rhs.data(), base_.eq_rhs.data() + base_.eq_rhs.size());
    for (Index i = 0; i < k_; ++i) eq.emplace_back(dc_rows_[static_cast<std::size_t>(i)], b.delta + i, -1.0);
    auto row = static_cast<Index>(rhs.size());
    for (Index i = 0; i < k_; ++i) eq.emplace_back(row, b.delta + i, 1.0);
    rhs.push_back(0.0);
    ++row;
    if (corners) {
      for (Index u = 0; u + 1 < k_; ++u) {
        eq.emplace_back(row, b.delta + u, 1.0);
        for (Index v = 0; v < m; ++v) eq.emplace_back(row, b.lambda + v, -(*corners)[static_cast<std::size_t>(v)][u]);
        rhs.push_back(0.0);
        ++row;
      }
      for (Index v = 0; v < m; ++v) eq.emplace_back(row, b.lambda + v, 1.0);
      rhs.push_back(1.0);
      ++row;
    }
    if (with_s)
      for (Index i = 0; i < k_; ++i) {
        eq.emplace_back(row, b.delta + i, 1.0);
        for (Index j = 0; j < k_; ++j) {
          if (i == j) continue;
          eq.emplace_back(row, b.s + j * k_ + i, -1.0);
          eq.emplace_back(row, b.s + i * k_ + j, 1.0);
        }
        rhs.push_back(0.0);
        ++row;
      }
    q.eq_matrix.resize(row, n);
    q.eq_matrix.setFromTriplets(eq.begin(), eq.end());
    q.eq_rhs = to_vector(rhs);

    Triplets in;
    for (Index r = 0; r < base_.ineq_matrix.outerSize(); ++r)
      for (lp::SparseMatrix::InnerIterator it(base_.ineq_matrix, r); it; ++it) in.emplace_back(r, it.col(), it.value());
    q.ineq_matrix.resize(base_.num_ineq(), n);
    q.ineq_matrix.setFromTriplets(in.begin(), in.end());
    q.ineq_lower = base_.ineq_lower;
    q.ineq_upper = base_.ineq_upper;
    return b;
  }

  // Bounds one box and tries its relaxation point as an incumbent. False when
  // the box holds no feasible shift or cannot beat the incumbent.
  bool process(Box& box)
  {
    ++out_.nodes;
    const Index d = k_ - 1;
    std::vector<Eigen::VectorXd> corners;
    for (Index mask = 0; mask < (Index{1} << d); ++mask) {
      Eigen::VectorXd v(d);
      bool duplicate = false;
      for (Index i = 0; i < d; ++i) {
        const bool up = (mask >> i) & 1;
        if (up && box.hi[i] == box.lo[i]) duplicate = true;
        v[i] = up ? box.hi[i] : box.lo[i];
      }
      if (!duplicate) corners.push_back(std::move(v));
    }
    std::vector<double> values;
    bool bounded = true;
    for (const auto& v : corners) {
      values.push_back(value_at(v));
      bounded = bounded && std::isfinite(values.back());
    }
    LpBuild q = joint_program(corners, false);
    q.lp.objective.setZero();
    for (Index g = 0; g < layout_.generators; ++g) q.lp.objective[layout_.pg(g)] = w_[g];
    if (bounded) {
      std::vector<std::pair<Index, double>> cut;
      for (Index g = 0; g < layout_.generators; ++g) cut.emplace_back(layout_.pg(g), base_.objective[layout_.pg(g)]);
      for (std::size_t v = 0; v < corners.size(); ++v) cut.emplace_back(q.lambda + static_cast<Index>(v), -values[v]);
      // slack covers the solver tolerance on the corner values
      append_row(q.lp, cut, -lp::kInf, 1e-9 * (1.0 + std::abs(values.front())));
    }
    const auto r = lp::solve_lp(q.lp, opt_.tol);
    if (r.status != lp::SolveStatus::optimal) return false;
    box.lb = r.objective;
    if (box.lb >= best_ - gap_abs()) return false;

    Eigen::VectorXd delta = r.x.segment(q.delta, k_);
    box.point = delta.head(d);
    clean_delta(delta, lo_, hi_);
    if (limited_ && !route_transfers(delta, params_)) return true;
    try {
      const Evaluated e = evaluate(snap_, w_, delta, opt_.tol);
      out_.lower_solves += 2;
      if (e.point.upper < best_) {
        best_ = e.point.upper;
        best_delta_ = delta;
      }
    } catch (const InfeasibleDispatch&) {
    }
    return box.lb < best_ - gap_abs();
  }

  const Snapshot& snap_;
  const ShiftParams& params_;
  const BilevelOptions& opt_;
  const Eigen::VectorXd& w_;
  BilevelSolution& out_;
  DcopfLayout layout_;
  lp::LinearProgram base_;
  Index k_;
  Eigen::VectorXd lo_, hi_;
  std::vector<Index> dc_rows_;
  bool limited_ = false;
  std::map<std::vector<double>, double> cache_;
  double best_ = lp::kInf;
  Eigen::VectorXd best_delta_;
};

}  // namespace

std::string to_string(BilevelMethod method)
{
  switch (method) {
    case BilevelMethod::automatic: return "automatic";
    case BilevelMethod::kkt_milp: return "kkt_milp";
    case BilevelMethod::value_function: return "value_function";
  }
  return "unknown";
}

BilevelMethod parse_bilevel_method(const std::string& name)
{
  if (name == "automatic") return BilevelMethod::automatic;
  if (name == "kkt_milp") return BilevelMethod::kkt_milp;
  if (name == "value_function") return BilevelMethod::value_function;
  throw ValidationError("unknown bilevel method '" + name + "'");
}

BilevelSolution solve_opt_shift(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                                const BilevelOptions& opt)
{
  check_inputs(snap, dcs, params);
  const auto& net = *snap.network;
  const auto k = static_cast<Index>(dcs.size());
  const Eigen::VectorXd w = upper_weights(net, params.alpha);

  BilevelSolution out;
  out.plan = ShiftPlan::zero(dcs.size(), params);
  const Evaluated base_eval = evaluate(snap, w, Eigen::VectorXd::Zero(k), opt.tol);
  out.baseline_upper = base_eval.point.upper;
  out.lower_solves = 2;

  BilevelMethod method = opt.method;
  if (method == BilevelMethod::automatic) {
    std::size_t binaries = 0;
    for (Index g = 0; g < snap.p_max.size(); ++g) binaries += snap.p_max[g] > snap.p_min[g] ? 2 : 0;
    for (const auto& line : net.lines()) binaries += std::isfinite(line.flow_limit) ? 2 : 0;
    method = binaries <= opt.kkt_binary_limit ? BilevelMethod::kkt_milp : BilevelMethod::value_function;
  }
  out.method = method;

  Eigen::VectorXd lo, hi;
  shift_bounds(snap.dc_loads, dcs, params.epsilon, lo, hi);
  Candidate cand{Eigen::VectorXd::Zero(k)};
  if (k >= 2 && (hi - lo).maxCoeff() > 0.0) {
    if (method == BilevelMethod::kkt_milp) {
      cand = run_kkt(snap, dcs, params, opt, w, out);
    } else {
      ValueFunctionSearch search(snap, dcs, params, opt, w, out);
      cand = search.run(base_eval.point.upper);
      if (opt.min_volume.value_or(params.alpha >= 1.0) && cand.status == lp::SolveStatus::optimal) {
        const double best = evaluate(snap, w, cand.delta, opt.tol).point.upper;
        if (auto d = search.min_volume(best + 1e-9 * (1.0 + std::abs(best))); d && no_worse(snap, w, cand.delta, *d, opt.tol))
          cand.delta = *d;
      }
    }
  }
  out.status = cand.status;
  out.mip_gap = cand.gap;
  out.plan.delta_pd = cand.delta;
  clean_delta(out.plan.delta_pd, lo, hi);

  Evaluated chosen = evaluate(snap, w, out.plan.delta_pd, opt.tol);
  ++out.lower_solves;
  auto routed = route_transfers(out.plan.delta_pd, params);
  // the upper level can always keep the load where it is
  if (!routed || chosen.point.upper > base_eval.point.upper + 1e-9 * (1.0 + std::abs(base_eval.point.upper))) {
    chosen = base_eval;
    out.plan.delta_pd.setZero();
    routed = Eigen::MatrixXd::Zero(k, k);
  }
  out.plan.transfers = *routed;
  if (method == BilevelMethod::value_function && out.lower_bound > chosen.point.upper) out.lower_bound = chosen.point.upper;
  if (method == BilevelMethod::kkt_milp) out.lower_bound = chosen.point.upper * (1.0 - out.mip_gap);

  out.lower = std::move(chosen.lower);
  out.upper_objective = chosen.point.upper;
  out.certificate = lp::check_kkt(build_dcopf(with_dc_loads(snap, snap.dc_loads + out.plan.delta_pd)), out.lower.lp);
  out.plan.predicted_dco2 = out.lower.emissions - base_eval.lower.emissions;
  out.plan.predicted_dcost = out.lower.objective - base_eval.lower.objective;
  out.plan.objective = out.upper_objective - out.baseline_upper;
  return out;
}

std::size_t count_grid_points(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                              double h)
{
  if (!(h > 0)) throw DomainError("grid step must be positive");
  check_inputs(snap, dcs, params);
  Eigen::VectorXd lo, hi;
  shift_bounds(snap.dc_loads, dcs, params.epsilon, lo, hi);
  const auto k = static_cast<Index>(dcs.size());
  if (k == 0) return 1;
  // enumerate the first k-1 coordinates, the last closes the sum
  std::vector<long long> first(static_cast<std::size_t>(k)), last(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    first[static_cast<std::size_t>(i)] = static_cast<long long>(std::ceil(lo[i] / h - 1e-9));
    last[static_cast<std::size_t>(i)] = static_cast<long long>(std::floor(hi[i] / h + 1e-9));
  }
  std::size_t count = 0;
  std::vector<long long> m(first.begin(), first.end() - 1);
  if (k == 1) return first[0] <= 0 && last[0] >= 0 ? 1 : 0;
  while (true) {
    long long sum = 0;
    for (auto v : m) sum += v;
    if (-sum >= first.back() && -sum <= last.back()) ++count;
    Index i = 0;
    while (i < k - 1) {
      auto& v = m[static_cast<std::size_t>(i)];
      if (++v <= last[static_cast<std::size_t>(i)]) break;
      v = first[static_cast<std::size_t>(i)];
      ++i;
    }
    if (i == k - 1) break;
  }
  return count;
}

BilevelSolution brute_force_opt_shift(const Snapshot& snap, const std::vector<DataCenter>& dcs,
                                      const ShiftParams& params, double h, std::size_t max_points,
                                      const lp::Tolerances& tol)
{
  const std::size_t total = count_grid_points(snap, dcs, params, h);
  if (total > max_points)
    throw ResourceLimit("grid has " + std::to_string(total) + " points (limit " + std::to_string(max_points) + ")",
                        total);
  const auto k = static_cast<Index>(dcs.size());
  const Eigen::VectorXd w = upper_weights(*snap.network, params.alpha);
  Eigen::VectorXd lo, hi;
  shift_bounds(snap.dc_loads, dcs, params.epsilon, lo, hi);

  BilevelSolution out;
  out.plan = ShiftPlan::zero(dcs.size(), params);
  const Evaluated base = evaluate(snap, w, Eigen::VectorXd::Zero(k), tol);
  out.baseline_upper = base.point.upper;

  std::optional<Evaluated> best;
  auto consider = [&](const Eigen::VectorXd& d) {
    if (!route_transfers(d, params)) return;
    Evaluated e;
    try {
      e = evaluate(snap, w, d, tol);
    } catch (const InfeasibleDispatch&) {
      return;
    }
    ++out.lower_solves;
    out.oracle.push_back(e.point);
    const bool better = !best || e.point.upper < best->point.upper - 1e-12 ||
                        (std::abs(e.point.upper - best->point.upper) <= 1e-12 &&
                         d.lpNorm<1>() < best->point.delta_pd.lpNorm<1>());
    if (better) best = std::move(e);
  };

  if (k == 0) {
    consider(Eigen::VectorXd::Zero(0));
  } else {
    std::vector<long long> first(static_cast<std::size_t>(k)), last(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
      first[static_cast<std::size_t>(i)] = static_cast<long long>(std::ceil(lo[i] / h - 1e-9));
      last[static_cast<std::size_t>(i)] = static_cast<long long>(std::floor(hi[i] / h + 1e-9));
    }
    std::vector<long long> m(first.begin(), first.end() - 1);
    while (true) {
      long long sum = 0;
      for (auto v : m) sum += v;
      if (-sum >= first.back() && -sum <= last.back()) {
        Eigen::VectorXd d(k);
        for (Index i = 0; i + 1 < k; ++i) d[i] = static_cast<double>(m[static_cast<std::size_t>(i)]) * h;
        d[k - 1] = static_cast<double>(-sum) * h;
        for (Index i = 0; i < k; ++i) d[i] = std::clamp(d[i], lo[i], hi[i]);
        consider(d);
      }
      Index i = 0;
      while (i < k - 1) {
        auto& v = m[static_cast<std::size_t>(i)];
        if (++v <= last[static_cast<std::size_t>(i)]) break;
        v = first[static_cast<std::size_t>(i)];
        ++i;
      }
      if (i >= k - 1) break;
    }
  }
  if (!best) throw NumericalError("no feasible grid point");

  out.plan.delta_pd = best->point.delta_pd;
  out.plan.transfers = route_transfers(out.plan.delta_pd, params).value_or(Eigen::MatrixXd::Zero(k, k));
  out.plan.predicted_dco2 = best->lower.emissions - base.lower.emissions;
  out.plan.predicted_dcost = best->lower.objective - base.lower.objective;
  out.upper_objective = best->point.upper;
  out.plan.objective = out.upper_objective - out.baseline_upper;
  out.lower = best->lower;
  out.certificate =
      lp::check_kkt(build_dcopf(with_dc_loads(snap, snap.dc_loads + out.plan.delta_pd)), out.lower.lp);
  return out;
}

void write_oracle_csv(std::ostream& out, const std::vector<OraclePoint>& points)
{
  const Index k = points.empty() ? 0 : points.front().delta_pd.size();
  for (Index i = 0; i < k; ++i) out << "delta_" << (i + 1) << ',';
  out << "upper,emissions,cost\n";
  for (const auto& p : points) {
    for (Index i = 0; i < k; ++i) out << csv::format_number(p.delta_pd[i]) << ',';
    out << csv::format_number(p.upper) << ',' << csv::format_number(p.emissions) << ','
        << csv::format_number(p.cost) << '\n';
  }
}

}  // namespace carbonshift
