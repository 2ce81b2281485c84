#include "carbonshift/shift_lambda.hpp"

#include <algorithm>
#include <cmath>

namespace carbonshift {

using Eigen::Index;

void ShiftParams::validate(std::size_t k) const
{
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon out of range");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gamma out of range");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha out of range");
  if (pair_limits.size() != 0) {
    if (pair_limits.rows() != static_cast<Index>(k) || pair_limits.cols() != static_cast<Index>(k))
      throw DimensionError("pair_limits must be k x k");
    if ((pair_limits.array() < 0).any() || pair_limits.hasNaN())
      throw DomainError("pair limits must be nonnegative");
  }
}

bool ShiftParams::unbounded_pairs() const
{
  if (pair_limits.size() == 0) return true;
  for (Index i = 0; i < pair_limits.rows(); ++i)
    for (Index j = 0; j < pair_limits.cols(); ++j)
      if (i != j && std::isfinite(pair_limits(i, j))) return false;
  return true;
}

ShiftPlan ShiftPlan::zero(std::size_t k, const ShiftParams& params)
{
  ShiftPlan p;
  p.delta_pd = Eigen::VectorXd::Zero(static_cast<Index>(k));
  p.transfers = Eigen::MatrixXd::Zero(static_cast<Index>(k), static_cast<Index>(k));
  p.params = params;
  return p;
}

void shift_bounds(const Eigen::VectorXd& cur, const std::vector<DataCenter>& dcs, double epsilon,
                  Eigen::VectorXd& lower, Eigen::VectorXd& upper)
{
  const auto k = static_cast<Index>(dcs.size());
  if (cur.size() != k) throw DimensionError("current loads must have one entry per data center");
  lower.resize(k);
  upper.resize(k);
  for (Index i = 0; i < k; ++i) {
    const auto& dc = dcs[static_cast<std::size_t>(i)];
    const double cap = epsilon * dc.shift_base;
    if (cur[i] < -1e-6 || cur[i] > dc.cap_max + 1e-6)
      throw DomainError("data center at bus " + std::to_string(dc.bus) + " load " + std::to_string(cur[i]) +
                        " outside [0, cap_max]");
    lower[i] = std::min(0.0, std::max(-cap, -cur[i]));
    upper[i] = std::max(0.0, std::min(cap, dc.cap_max - cur[i]));
  }
}

Eigen::MatrixXd transfers_from_deltas(const Eigen::VectorXd& d)
{
  const Index k = d.size();
  if (std::abs(d.sum()) > 1e-7) throw DomainError("load deltas do not sum to zero");
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd give = (-d).cwiseMax(0.0);
  Eigen::VectorXd take = d.cwiseMax(0.0);
  Index i = 0, j = 0;
  while (i < k && j < k) {
    if (give[i] <= 1e-12) {
      ++i;
      continue;
    }
    if (take[j] <= 1e-12) {
      ++j;
      continue;
    }
    const double m = std::min(give[i], take[j]);
    s(i, j) += m;
    give[i] -= m;
    take[j] -= m;
  }
  return s;
}

namespace {

struct Program
{
  lp::LinearProgram lp;
  Eigen::VectorXd quadratic;
  Index k = 0;
  bool with_transfers = false;
  Index s(Index i, Index j) const { return k + i * k + j; }
};

Program formulate(const Eigen::VectorXd& w, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                  const ShiftParams& params)
{
  Program P;
  P.k = w.size();
  const Index k = P.k;
  P.with_transfers = !params.unbounded_pairs();
  const Index n = P.with_transfers ? k + k * k : k;
  auto& p = P.lp;
  p.objective = Eigen::VectorXd::Zero(n);
  p.objective.head(k) = w;
  p.var_lower = Eigen::VectorXd::Zero(n);
  p.var_upper = Eigen::VectorXd::Zero(n);
  p.var_lower.head(k) = lo;
  p.var_upper.head(k) = hi;

  std::vector<Eigen::Triplet<double>> eq;
  for (Index i = 0; i < k; ++i) eq.emplace_back(0, i, 1.0);
  Index rows = 1;
  if (P.with_transfers) {
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < k; ++j) {
        if (i == j) continue;
        p.var_upper[P.s(i, j)] = params.pair_limits(i, j);
      }
    // dPd_i - sum_j s_ji + sum_j s_ij = 0
    for (Index i = 0; i < k; ++i) {
      eq.emplace_back(rows, i, 1.0);
      for (Index j = 0; j < k; ++j) {
        if (i == j) continue;
        eq.emplace_back(rows, P.s(j, i), -1.0);
        eq.emplace_back(rows, P.s(i, j), 1.0);
      }
      ++rows;
    }
  }
  p.eq_matrix.resize(rows, n);
  p.eq_matrix.setFromTriplets(eq.begin(), eq.end());
  p.eq_rhs = Eigen::VectorXd::Zero(rows);
  p.ineq_matrix.resize(0, n);
  p.ineq_lower.resize(0);
  p.ineq_upper.resize(0);

  P.quadratic = Eigen::VectorXd::Zero(n);
  P.quadratic.head(k).setConstant(params.gamma);
  return P;
}

void rebalance(Eigen::VectorXd& d, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
  for (Index i = 0; i < d.size(); ++i)
    if (std::abs(d[i]) < 1e-10) d[i] = 0.0;
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

// Minimum transfer volume among points with w'dPd + gamma|dPd|^2 <= bound
// (gamma = 0) or with dPd fixed (gamma > 0).
Eigen::VectorXd min_volume(const Program& P, const Eigen::VectorXd& first, double bound, double gamma,
                           const lp::Tolerances& tol)
{
  const Index k = P.k;
  lp::LinearProgram q = P.lp;
  if (P.with_transfers) {
    q.objective.setZero();
    q.objective.tail(k * k).setOnes();
    if (gamma > 0) {
      q.var_lower.head(k) = first.head(k);
      q.var_upper.head(k) = first.head(k);
    } else {
      lp::SparseMatrix g(1, q.num_vars());
      for (Index i = 0; i < k; ++i) g.insert(0, i) = P.lp.objective[i];
      q.ineq_matrix = g;
      q.ineq_lower = Eigen::VectorXd::Constant(1, -lp::kInf);
      q.ineq_upper = Eigen::VectorXd::Constant(1, bound);
    }
  } else {
    if (gamma > 0) return first;
    // add u_i >= max(0, dPd_i); minimize sum u
    const Index n = 2 * k;
    q.objective = Eigen::VectorXd::Zero(n);
    q.objective.tail(k).setOnes();
    q.var_lower.conservativeResize(n);
    q.var_upper.conservativeResize(n);
    q.var_lower.tail(k).setZero();
    q.var_upper.tail(k).setConstant(lp::kInf);
    lp::SparseMatrix e(1, n);
    for (Index i = 0; i < k; ++i) e.insert(0, i) = 1.0;
    q.eq_matrix = e;
    lp::SparseMatrix g(k + 1, n);
    for (Index i = 0; i < k; ++i) {
      g.insert(i, i) = -1.0;
      g.insert(i, k + i) = 1.0;
      g.insert(k, i) = P.lp.objective[i];
    }
    q.ineq_matrix = g;
    q.ineq_lower = Eigen::VectorXd::Zero(k + 1);
    q.ineq_upper = Eigen::VectorXd::Constant(k + 1, lp::kInf);
    q.ineq_lower[k] = -lp::kInf;
    q.ineq_upper[k] = bound;
  }
  const auto r = lp::solve_lp(q, tol);
  if (r.status != lp::SolveStatus::optimal) return first;
  Eigen::VectorXd out = first;
  out.head(k) = r.x.head(k);
  if (P.with_transfers) out.tail(k * k) = r.x.tail(k * k);
  return out;
}

}  // namespace

ShiftPlan solve_shift(const Eigen::VectorXd& lambda_dc, const Eigen::VectorXd& lmp_dc, const Eigen::VectorXd& cur,
                      const std::vector<DataCenter>& dcs, const ShiftParams& params, const lp::Tolerances& tol)
{
  const auto k = static_cast<Index>(dcs.size());
  params.validate(dcs.size());
  if (lambda_dc.size() != k || lmp_dc.size() != k || cur.size() != k)
    throw DimensionError("shift inputs must have one entry per data center");

  ShiftPlan plan = ShiftPlan::zero(dcs.size(), params);
  if (k == 0) return plan;
  Eigen::VectorXd lo, hi;
  shift_bounds(cur, dcs, params.epsilon, lo, hi);
  const Eigen::VectorXd w = params.alpha * lmp_dc + (1.0 - params.alpha) * lambda_dc;

  const Program P = formulate(w, lo, hi, params);
  const auto res = lp::solve_qp({P.lp, P.quadratic}, tol);
  if (res.status == lp::SolveStatus::infeasible) throw InfeasibleShift("shift program infeasible");
  if (res.status != lp::SolveStatus::optimal)
    throw NumericalError("shift program ended with status " + lp::to_string(res.status));

  const double bound = res.objective + 1e-9 * (1.0 + std::abs(res.objective));
  const Eigen::VectorXd x = min_volume(P, res.x, bound, params.gamma, tol);

  plan.delta_pd = x.head(k);
  rebalance(plan.delta_pd, lo, hi);
  if (P.with_transfers) {
    for (Index i = 0; i < k; ++i)
      for (Index j = 0; j < k; ++j) plan.transfers(i, j) = i == j ? 0.0 : std::max(0.0, x[P.s(i, j)]);
  } else {
    plan.transfers = transfers_from_deltas(plan.delta_pd);
  }
  plan.predicted_dco2 = lambda_dc.dot(plan.delta_pd);
  plan.predicted_dcost = lmp_dc.dot(plan.delta_pd);
  plan.objective = w.dot(plan.delta_pd) + params.gamma * plan.delta_pd.squaredNorm();
  return plan;
}

nlohmann::json to_json(const ShiftParams& p)
{
  nlohmann::json j{{"epsilon", p.epsilon}, {"gamma", p.gamma}, {"alpha", p.alpha}};
  if (p.pair_limits.size() != 0) {
    nlohmann::json rows = nlohmann::json::array();
    for (Index i = 0; i < p.pair_limits.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Index c = 0; c < p.pair_limits.cols(); ++c) {
        const double v = p.pair_limits(i, c);
        if (std::isfinite(v)) row.push_back(v);
        else row.push_back(nullptr);
      }
      rows.push_back(std::move(row));
    }
    j["pair_limits"] = std::move(rows);
  }
  return j;
}

nlohmann::json to_json(const ShiftPlan& plan)
{
  nlohmann::json j;
  j["delta_pd"] = std::vector<double>(plan.delta_pd.data(), plan.delta_pd.data() + plan.delta_pd.size());
  nlohmann::json s = nlohmann::json::array();
  for (Index i = 0; i < plan.transfers.rows(); ++i)
    for (Index c = 0; c < plan.transfers.cols(); ++c)
      if (plan.transfers(i, c) > 0) s.push_back({{"from", i}, {"to", c}, {"mw", plan.transfers(i, c)}});
  j["transfers"] = std::move(s);
  j["predicted_dco2"] = plan.predicted_dco2;
  j["predicted_dcost"] = plan.predicted_dcost;
  j["objective"] = plan.objective;
  j["params"] = to_json(plan.params);
  return j;
}

}  // namespace carbonshift
