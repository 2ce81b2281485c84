#include "carbonshift/lp_core.hpp"

#include "carbonshift/errors.hpp"

#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wunused-parameter"
#include <Highs.h>
#pragma GCC diagnostic pop

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace carbonshift::lp {

namespace {

constexpr double kActiveTol = 1e-6;

bool is_active(double slack, double rhs) { return std::abs(slack) <= kActiveTol * (1.0 + std::abs(rhs)); }

void check_size(Eigen::Index got, Eigen::Index want, const char* what)
{
  if (got != want)
    throw DimensionError(std::string(what) + ": size " + std::to_string(got) + ", expected " +
                         std::to_string(want));
}

// ---------------------------------------------------------------- HiGHS glue

HighsLp to_highs(const LinearProgram& p)
{
  const auto n = p.num_vars();
  const auto me = p.num_eq();
  const auto mi = p.num_ineq();

  HighsLp lp;
  lp.num_col_ = static_cast<HighsInt>(n);
  lp.num_row_ = static_cast<HighsInt>(me + mi);
  lp.col_cost_.assign(p.objective.data(), p.objective.data() + n);
  lp.col_lower_.assign(p.var_lower.data(), p.var_lower.data() + n);
  lp.col_upper_.assign(p.var_upper.data(), p.var_upper.data() + n);
  lp.row_lower_.reserve(static_cast<std::size_t>(me + mi));
  lp.row_upper_.reserve(static_cast<std::size_t>(me + mi));
  for (Eigen::Index i = 0; i < me; ++i) {
    lp.row_lower_.push_back(p.eq_rhs[i]);
    lp.row_upper_.push_back(p.eq_rhs[i]);
  }
  for (Eigen::Index i = 0; i < mi; ++i) {
    lp.row_lower_.push_back(p.ineq_lower[i]);
    lp.row_upper_.push_back(p.ineq_upper[i]);
  }

  // HiGHS reads the matrix row-wise just as well; keep the stacked rows.
  auto& a = lp.a_matrix_;
  a.format_ = MatrixFormat::kRowwise;
  a.num_col_ = lp.num_col_;
  a.num_row_ = lp.num_row_;
  a.start_.assign(1, 0);
  for (const SparseMatrix* m : {&p.eq_matrix, &p.ineq_matrix}) {
    for (Eigen::Index r = 0; r < m->outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(*m, r); it; ++it) {
        if (it.value() == 0.0) continue;
        a.index_.push_back(static_cast<HighsInt>(it.col()));
        a.value_.push_back(it.value());
      }
      a.start_.push_back(static_cast<HighsInt>(a.index_.size()));
    }
  }
  lp.sense_ = ObjSense::kMinimize;
  return lp;
}

void configure(Highs& h, const Tolerances& tol)
{
  // CARBONSHIFT_SOLVER_LOG=1 turns the solver log on
  const char* log = std::getenv("CARBONSHIFT_SOLVER_LOG");
  h.setOptionValue("output_flag", log != nullptr && *log != '\0' && *log != '0');
  h.setOptionValue("threads", 1);
  h.setOptionValue("random_seed", 0);
  h.setOptionValue("primal_feasibility_tolerance", std::min(1e-9, tol.feas));
  h.setOptionValue("dual_feasibility_tolerance", std::min(1e-9, tol.comp));
  if (std::isfinite(tol.time_limit_s)) h.setOptionValue("time_limit", tol.time_limit_s);
}

void run(Highs& h)
{
  const HighsStatus st = h.run();
  if (st == HighsStatus::kError)
    throw NumericalError("HiGHS failed: " + h.modelStatusToString(h.getModelStatus()));
}

// Resolves kUnboundedOrInfeasible by a zero-objective feasibility solve.
SolveStatus classify_ambiguous(const HighsLp& lp, const Tolerances& tol)
{
  HighsLp feas = lp;
  std::fill(feas.col_cost_.begin(), feas.col_cost_.end(), 0.0);
  feas.integrality_.clear();
  Highs h;
  configure(h, tol);
  h.setOptionValue("presolve", "off");
  h.passModel(feas);
  run(h);
  return h.getModelStatus() == HighsModelStatus::kOptimal ? SolveStatus::unbounded : SolveStatus::infeasible;
}

SolveStatus map_status(HighsModelStatus ms, const HighsLp& lp, const Tolerances& tol, const Highs& h)
{
  switch (ms) {
    case HighsModelStatus::kOptimal: return SolveStatus::optimal;
    case HighsModelStatus::kInfeasible: return SolveStatus::infeasible;
    case HighsModelStatus::kUnbounded: return SolveStatus::unbounded;
    case HighsModelStatus::kUnboundedOrInfeasible: return classify_ambiguous(lp, tol);
    case HighsModelStatus::kTimeLimit:
    case HighsModelStatus::kIterationLimit:
    case HighsModelStatus::kSolutionLimit:
    case HighsModelStatus::kInterrupt: return SolveStatus::time_limit;
    default: throw NumericalError("HiGHS ended with model status '" + h.modelStatusToString(ms) + "'");
  }
}

// ---------------------------------------------------------------- active set

Eigen::RowVectorXd row_of(const LinearProgram& p, const ConstraintRef& ref)
{
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p.num_vars());
  switch (ref.kind) {
    case ConstraintKind::equality:
      for (SparseMatrix::InnerIterator it(p.eq_matrix, ref.index); it; ++it) row[it.col()] = it.value();
      break;
    case ConstraintKind::ineq_lower:
    case ConstraintKind::ineq_upper:
      for (SparseMatrix::InnerIterator it(p.ineq_matrix, ref.index); it; ++it) row[it.col()] = it.value();
      break;
    case ConstraintKind::var_lower:
    case ConstraintKind::var_upper: row[ref.index] = 1.0; break;
  }
  return row;
}

std::vector<ConstraintRef> find_active(const LinearProgram& p, const Eigen::VectorXd& x)
{
  std::vector<ConstraintRef> out;
  for (Eigen::Index i = 0; i < p.num_eq(); ++i) out.push_back({ConstraintKind::equality, i});
  if (p.num_ineq() > 0) {
    const Eigen::VectorXd gx = p.ineq_matrix * x;
    for (Eigen::Index i = 0; i < p.num_ineq(); ++i) {
      const double lo = p.ineq_lower[i], up = p.ineq_upper[i];
      if (std::isfinite(lo) && is_active(gx[i] - lo, lo)) out.push_back({ConstraintKind::ineq_lower, i});
      else if (std::isfinite(up) && is_active(up - gx[i], up)) out.push_back({ConstraintKind::ineq_upper, i});
    }
  }
  for (Eigen::Index j = 0; j < p.num_vars(); ++j) {
    const double l = p.var_lower[j], u = p.var_upper[j];
    if (std::isfinite(l) && is_active(x[j] - l, l)) out.push_back({ConstraintKind::var_lower, j});
    else if (std::isfinite(u) && is_active(u - x[j], u)) out.push_back({ConstraintKind::var_upper, j});
  }
  return out;
}

// Greedy rank completion by modified Gram-Schmidt over the candidates in order.
std::vector<ConstraintRef> independent_subset(const LinearProgram& p, const std::vector<ConstraintRef>& cand,
                                              double rank_tol)
{
  const auto n = p.num_vars();
  std::vector<ConstraintRef> chosen;
  std::vector<Eigen::VectorXd> q;
  q.reserve(static_cast<std::size_t>(n));
  for (const auto& ref : cand) {
    if (static_cast<Eigen::Index>(chosen.size()) == n) break;
    Eigen::VectorXd v = row_of(p, ref).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    v /= norm0;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : q) v -= b.dot(v) * b;
    const double r = v.norm();
    if (r <= rank_tol) continue;
    q.push_back(v / r);
    chosen.push_back(ref);
  }
  return chosen;
}

void fill_active(const LinearProgram& p, SolveResult& res, const HighsBasis* basis, double rank_tol)
{
  res.active = find_active(p, res.x);
  res.degenerate = static_cast<Eigen::Index>(res.active.size()) > p.num_vars();

  std::vector<ConstraintRef> cand;
  cand.reserve(res.active.size());
  std::vector<ConstraintRef> rest;
  auto contains = [&](const ConstraintRef& r) {
    return std::binary_search(res.active.begin(), res.active.end(), r);
  };
  std::sort(res.active.begin(), res.active.end());
  for (Eigen::Index i = 0; i < p.num_eq(); ++i) cand.push_back({ConstraintKind::equality, i});
  if (basis && basis->valid) {
    const auto me = p.num_eq();
    for (Eigen::Index i = 0; i < p.num_ineq(); ++i) {
      const auto st = basis->row_status[static_cast<std::size_t>(me + i)];
      ConstraintRef r{st == HighsBasisStatus::kUpper ? ConstraintKind::ineq_upper : ConstraintKind::ineq_lower,
                      i};
      if (st == HighsBasisStatus::kBasic || st == HighsBasisStatus::kZero) continue;
      if (contains(r)) cand.push_back(r);
    }
    for (Eigen::Index j = 0; j < p.num_vars(); ++j) {
      const auto st = basis->col_status[static_cast<std::size_t>(j)];
      if (st == HighsBasisStatus::kBasic || st == HighsBasisStatus::kZero) continue;
      ConstraintRef r{st == HighsBasisStatus::kUpper ? ConstraintKind::var_upper : ConstraintKind::var_lower, j};
      if (contains(r)) cand.push_back(r);
      else {
        // fixed variables are recorded once, as var_lower
        ConstraintRef lower{ConstraintKind::var_lower, j};
        if (contains(lower)) cand.push_back(lower);
      }
    }
  }
  for (const auto& r : res.active)
    if (r.kind == ConstraintKind::ineq_lower || r.kind == ConstraintKind::ineq_upper) cand.push_back(r);
  for (const auto& r : res.active)
    if (r.kind == ConstraintKind::var_lower || r.kind == ConstraintKind::var_upper) cand.push_back(r);

  // drop repeats, keeping the first occurrence
  std::vector<ConstraintRef> uniq;
  std::vector<ConstraintRef> seen;
  for (const auto& r : cand) {
    auto it = std::lower_bound(seen.begin(), seen.end(), r);
    if (it != seen.end() && *it == r) continue;
    seen.insert(it, r);
    uniq.push_back(r);
  }
  res.basis = independent_subset(p, uniq, rank_tol);
}

SolveResult collect(const LinearProgram& p, const Highs& h, SolveStatus status, bool with_duals)
{
  SolveResult res;
  res.status = status;
  const auto& sol = h.getSolution();
  const auto n = p.num_vars();
  const auto me = p.num_eq();
  const auto mi = p.num_ineq();
  res.simplex_iterations = static_cast<std::size_t>(std::max<HighsInt>(0, h.getInfo().simplex_iteration_count));
  if (!sol.value_valid || static_cast<Eigen::Index>(sol.col_value.size()) != n) return res;
  res.x = Eigen::Map<const Eigen::VectorXd>(sol.col_value.data(), n);
  res.objective = p.objective.dot(res.x) + p.objective_offset;
  if (with_duals && sol.dual_valid) {
    res.var_duals = Eigen::Map<const Eigen::VectorXd>(sol.col_dual.data(), n);
    res.eq_duals = Eigen::Map<const Eigen::VectorXd>(sol.row_dual.data(), me);
    res.ineq_duals = Eigen::Map<const Eigen::VectorXd>(sol.row_dual.data() + me, mi);
  }
  return res;
}

// Re-solves the equality-constrained QP on the active set of `res` exactly, dropping
// sides whose multipliers come out with the wrong sign. The backend's own accuracy
// is limited by its tolerances; the polished point is kept only if it is feasible,
// dual feasible and no worse.
void polish_qp(const LinearProgram& p, const Eigen::VectorXd& quadratic, SolveResult& res, const Tolerances& tol)
{
  const auto n = p.num_vars();
  if (n == 0 || n > 400 || res.x.size() != n) return;
  auto work = independent_subset(p, find_active(p, res.x), tol.rank);
  const auto side_rhs = [&](const ConstraintRef& ref) {
    switch (ref.kind) {
      case ConstraintKind::equality: return p.eq_rhs[ref.index];
      case ConstraintKind::ineq_lower: return p.ineq_lower[ref.index];
      case ConstraintKind::ineq_upper: return p.ineq_upper[ref.index];
      case ConstraintKind::var_lower: return p.var_lower[ref.index];
      case ConstraintKind::var_upper: return p.var_upper[ref.index];
    }
    return 0.0;
  };
  // Signed so that a correct multiplier is >= 0; 0 for equalities and fixed variables.
  const auto orientation = [&](const ConstraintRef& ref) {
    switch (ref.kind) {
      case ConstraintKind::equality: return 0.0;
      case ConstraintKind::ineq_lower: return 1.0;
      case ConstraintKind::ineq_upper: return -1.0;
      case ConstraintKind::var_lower:
        return p.var_lower[ref.index] == p.var_upper[ref.index] ? 0.0 : 1.0;
      case ConstraintKind::var_upper:
        return p.var_lower[ref.index] == p.var_upper[ref.index] ? 0.0 : -1.0;
    }
    return 0.0;
  };

  for (std::size_t round = 0; round <= work.size(); ++round) {
    const auto m = static_cast<Eigen::Index>(work.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
    Eigen::VectorXd rhs(n + m);
    K.topLeftCorner(n, n) = (2.0 * quadratic).asDiagonal();
    rhs.head(n) = -p.objective;
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& ref = work[static_cast<std::size_t>(r)];
      const Eigen::RowVectorXd row = row_of(p, ref);
      K.block(n + r, 0, 1, n) = row;
      K.block(0, n + r, n, 1) = -row.transpose();
      rhs[n + r] = side_rhs(ref);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (lu.rank() < n + m) return;
    const Eigen::VectorXd sol = lu.solve(rhs);
    if ((K * sol - rhs).norm() > 1e-9 * (1.0 + rhs.norm())) return;
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd y = sol.tail(m);

    for (Eigen::Index j = 0; j < n; ++j)
      if (x[j] < p.var_lower[j] - tol.feas || x[j] > p.var_upper[j] + tol.feas) return;
    if (p.num_ineq() > 0) {
      const Eigen::VectorXd gx = p.ineq_matrix * x;
      for (Eigen::Index i = 0; i < p.num_ineq(); ++i)
        if (gx[i] < p.ineq_lower[i] - tol.feas || gx[i] > p.ineq_upper[i] + tol.feas) return;
    }
    Eigen::Index worst = -1;
    double worst_v = -tol.comp;
    for (Eigen::Index r = 0; r < m; ++r) {
      const double v = orientation(work[static_cast<std::size_t>(r)]) * y[r];
      if (v < worst_v) {
        worst_v = v;
        worst = r;
      }
    }
    if (worst >= 0) {
      work.erase(work.begin() + worst);
      continue;
    }

    const double obj = p.objective.dot(x) + p.objective_offset + (quadratic.array() * x.array().square()).sum();
    if (obj > res.objective + 1e-12 * (1.0 + std::abs(res.objective))) return;
    Eigen::VectorXd eq = Eigen::VectorXd::Zero(p.num_eq()), ineq = Eigen::VectorXd::Zero(p.num_ineq()),
                    var = Eigen::VectorXd::Zero(n);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto& ref = work[static_cast<std::size_t>(r)];
      switch (ref.kind) {
        case ConstraintKind::equality: eq[ref.index] = y[r]; break;
        case ConstraintKind::ineq_lower:
        case ConstraintKind::ineq_upper: ineq[ref.index] = y[r]; break;
        case ConstraintKind::var_lower:
        case ConstraintKind::var_upper: var[ref.index] = y[r]; break;
      }
    }
    res.x = x;
    res.objective = obj;
    res.eq_duals = eq;
    res.ineq_duals = ineq;
    res.var_duals = var;
    return;
  }
}

}  // namespace

// ---------------------------------------------------------------- validation

void LinearProgram::validate() const
{
  const auto n = num_vars();
  check_size(var_lower.size(), n, "var_lower");
  check_size(var_upper.size(), n, "var_upper");
  check_size(eq_matrix.rows(), eq_rhs.size(), "eq_matrix rows");
  if (eq_matrix.rows() > 0) check_size(eq_matrix.cols(), n, "eq_matrix cols");
  check_size(ineq_matrix.rows(), ineq_lower.size(), "ineq_matrix rows");
  check_size(ineq_upper.size(), ineq_lower.size(), "ineq_upper");
  if (ineq_matrix.rows() > 0) check_size(ineq_matrix.cols(), n, "ineq_matrix cols");
  for (Eigen::Index j = 0; j < n; ++j)
    if (std::isnan(var_lower[j]) || std::isnan(var_upper[j]) || var_lower[j] == kInf || var_upper[j] == -kInf)
      throw DomainError("variable " + std::to_string(j) + " has invalid bounds");
  if (!objective.allFinite()) throw DomainError("objective has non-finite entries");
  if (!eq_rhs.allFinite()) throw DomainError("equality right-hand side has non-finite entries");
}

void QuadraticProgram::validate() const
{
  lp.validate();
  check_size(quadratic.size(), lp.num_vars(), "quadratic");
  if ((quadratic.array() < 0).any() || !quadratic.allFinite())
    throw DomainError("quadratic coefficients must be finite and nonnegative");
}

void MixedIntegerProgram::validate() const
{
  lp.validate();
  for (auto j : binaries)
    if (j < 0 || j >= lp.num_vars()) throw IndexError("binary index " + std::to_string(j) + " out of range");
  if (initial) check_size(initial->size(), lp.num_vars(), "initial solution");
}

std::string to_string(SolveStatus s)
{
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::time_limit: return "time_limit";
  }
  return "?";
}

std::string to_string(const ConstraintRef& r)
{
  static const char* names[] = {"eq", "ineq_lo", "ineq_up", "var_lo", "var_up"};
  return std::string(names[static_cast<int>(r.kind)]) + ":" + std::to_string(r.index);
}

// ---------------------------------------------------------------- solvers

SolveResult solve_lp(const LinearProgram& p, const Tolerances& tol)
{
  p.validate();
  const HighsLp lp = to_highs(p);
  Highs h;
  configure(h, tol);
  h.setOptionValue("solver", "simplex");
  if (h.passModel(lp) == HighsStatus::kError) throw NumericalError("HiGHS rejected the LP");
  run(h);
  const SolveStatus status = map_status(h.getModelStatus(), lp, tol, h);
  SolveResult res = collect(p, h, status, true);
  if (status == SolveStatus::optimal) fill_active(p, res, &h.getBasis(), tol.rank);
  return res;
}

SolveResult solve_qp(const QuadraticProgram& qp, const Tolerances& tol)
{
  qp.validate();
  if ((qp.quadratic.array() == 0.0).all()) return solve_lp(qp.lp, tol);
  const auto& p = qp.lp;
  HighsModel model;
  model.lp_ = to_highs(p);
  auto& hess = model.hessian_;
  hess.dim_ = static_cast<HighsInt>(p.num_vars());
  hess.format_ = HessianFormat::kTriangular;
  hess.start_.assign(1, 0);
  for (Eigen::Index j = 0; j < p.num_vars(); ++j) {
    if (qp.quadratic[j] != 0.0) {
      hess.index_.push_back(static_cast<HighsInt>(j));
      hess.value_.push_back(2.0 * qp.quadratic[j]);
    }
    hess.start_.push_back(static_cast<HighsInt>(hess.index_.size()));
  }
  Highs h;
  configure(h, tol);
  if (h.passModel(model) == HighsStatus::kError) throw NumericalError("HiGHS rejected the QP");
  run(h);
  const SolveStatus status = map_status(h.getModelStatus(), model.lp_, tol, h);
  SolveResult res = collect(p, h, status, true);
  if (res.x.size() == p.num_vars())
    res.objective += (qp.quadratic.array() * res.x.array().square()).sum();
  if (status == SolveStatus::optimal) {
    polish_qp(p, qp.quadratic, res, tol);
    fill_active(p, res, nullptr, tol.rank);
  }
  return res;
}

SolveResult solve_milp(const MixedIntegerProgram& mip, const Tolerances& tol)
{
  mip.validate();
  const auto& p = mip.lp;
  HighsLp lp = to_highs(p);
  if (mip.binaries.empty()) return solve_lp(p, tol);
  lp.integrality_.assign(static_cast<std::size_t>(p.num_vars()), HighsVarType::kContinuous);
  for (auto j : mip.binaries) {
    const auto k = static_cast<std::size_t>(j);
    lp.integrality_[k] = HighsVarType::kInteger;
    lp.col_lower_[k] = std::max(lp.col_lower_[k], 0.0);
    lp.col_upper_[k] = std::min(lp.col_upper_[k], 1.0);
  }
  Highs h;
  configure(h, tol);
  h.setOptionValue("mip_rel_gap", tol.mip_gap);
  h.setOptionValue("mip_feasibility_tolerance", 1e-9);
  if (h.passModel(lp) == HighsStatus::kError) throw NumericalError("HiGHS rejected the MILP");
  if (mip.initial) {
    HighsSolution start;
    start.col_value.assign(mip.initial->data(), mip.initial->data() + p.num_vars());
    start.value_valid = true;
    h.setSolution(start);
  }
  run(h);
  const SolveStatus status = map_status(h.getModelStatus(), lp, tol, h);
  SolveResult res = collect(p, h, status, false);
  res.mip_gap = h.getInfo().mip_gap;
  if (res.x.size() == p.num_vars()) res.active = active_constraints(p, res.x);
  return res;
}

// ---------------------------------------------------------------- KKT check

bool KktReport::ok(const Tolerances& tol) const
{
  return primal_residual <= tol.feas && stationarity <= tol.comp && dual_sign <= tol.comp &&
         complementarity <= tol.comp && duality_gap <= 1e-6;
}

std::string KktReport::describe() const
{
  char buf[256];
  std::snprintf(buf, sizeof(buf), "primal %.3g, stationarity %.3g, dual sign %.3g, complementarity %.3g, gap %.3g",
                primal_residual, stationarity, dual_sign, complementarity, duality_gap);
  return buf;
}

KktReport check_kkt(const LinearProgram& p, const SolveResult& r, const Eigen::VectorXd& quadratic)
{
  const auto n = p.num_vars();
  check_size(r.x.size(), n, "solution");
  check_size(r.eq_duals.size(), p.num_eq(), "equality duals");
  check_size(r.ineq_duals.size(), p.num_ineq(), "inequality duals");
  check_size(r.var_duals.size(), n, "bound duals");
  const Eigen::VectorXd q = quadratic.size() == 0 ? Eigen::VectorXd::Zero(n) : quadratic;
  check_size(q.size(), n, "quadratic");

  KktReport k;
  const Eigen::VectorXd& x = r.x;
  double dual_obj = p.objective_offset - (q.array() * x.array().square()).sum();
  double primal_obj = p.objective.dot(x) + p.objective_offset + (q.array() * x.array().square()).sum();

  // one side of a ranged constraint with activity a, dual y
  auto side = [&](double a, double lo, double up, double y) {
    k.primal_residual = std::max({k.primal_residual, lo - a, a - up});
    if (y > 0) {
      if (!std::isfinite(lo)) k.dual_sign = std::max(k.dual_sign, y);
      else {
        k.complementarity = std::max(k.complementarity, y * std::abs(a - lo));
        dual_obj += y * lo;
      }
    } else if (y < 0) {
      if (!std::isfinite(up)) k.dual_sign = std::max(k.dual_sign, -y);
      else {
        k.complementarity = std::max(k.complementarity, -y * std::abs(up - a));
        dual_obj += y * up;
      }
    }
  };

  Eigen::VectorXd grad = p.objective + 2.0 * q.cwiseProduct(x);
  if (p.num_eq() > 0) {
    const Eigen::VectorXd ex = p.eq_matrix * x;
    k.primal_residual = std::max(k.primal_residual, (ex - p.eq_rhs).cwiseAbs().maxCoeff());
    dual_obj += p.eq_rhs.dot(r.eq_duals);
    grad -= p.eq_matrix.transpose() * r.eq_duals;
  }
  if (p.num_ineq() > 0) {
    const Eigen::VectorXd gx = p.ineq_matrix * x;
    for (Eigen::Index i = 0; i < p.num_ineq(); ++i) side(gx[i], p.ineq_lower[i], p.ineq_upper[i], r.ineq_duals[i]);
    grad -= p.ineq_matrix.transpose() * r.ineq_duals;
  }
  for (Eigen::Index j = 0; j < n; ++j) side(x[j], p.var_lower[j], p.var_upper[j], r.var_duals[j]);
  grad -= r.var_duals;
  k.stationarity = n > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  k.duality_gap = std::abs(primal_obj - dual_obj) / (1.0 + std::abs(primal_obj));
  return k;
}

std::vector<ConstraintRef> active_constraints(const LinearProgram& p, const Eigen::VectorXd& x)
{
  check_size(x.size(), p.num_vars(), "point");
  auto a = find_active(p, x);
  std::sort(a.begin(), a.end());
  return a;
}

Eigen::MatrixXd constraint_rows(const LinearProgram& p, const std::vector<ConstraintRef>& refs)
{
  Eigen::MatrixXd m(static_cast<Eigen::Index>(refs.size()), p.num_vars());
  for (std::size_t i = 0; i < refs.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = row_of(p, refs[i]);
  return m;
}

Eigen::VectorXd constraint_rhs(const LinearProgram& p, const std::vector<ConstraintRef>& refs)
{
  Eigen::VectorXd b(static_cast<Eigen::Index>(refs.size()));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& r = refs[i];
    double v = 0.0;
    switch (r.kind) {
      case ConstraintKind::equality: v = p.eq_rhs[r.index]; break;
      case ConstraintKind::ineq_lower: v = p.ineq_lower[r.index]; break;
      case ConstraintKind::ineq_upper: v = p.ineq_upper[r.index]; break;
      case ConstraintKind::var_lower: v = p.var_lower[r.index]; break;
      case ConstraintKind::var_upper: v = p.var_upper[r.index]; break;
    }
    b[static_cast<Eigen::Index>(i)] = v;
  }
  return b;
}

// ---------------------------------------------------------------- LP format

void write_lp_format(const std::filesystem::path& path, const LinearProgram& p, const Eigen::VectorXd& quadratic,
                     const std::vector<Eigen::Index>& binaries)
{
  p.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());

  auto name = [](const std::vector<std::string>& names, const char* prefix, Eigen::Index i) {
    return static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                      : prefix + std::to_string(i);
  };
  auto var = [&](Eigen::Index j) { return name(p.var_names, "x", j); };
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto term = [&](std::ostringstream& os, double c, const std::string& v) {
    os << (c < 0 ? " - " : " + ") << num(std::abs(c)) << ' ' << v;
  };
  auto write_row = [&](const SparseMatrix& m, Eigen::Index r, const std::string& label, const char* sense,
                       double rhs) {
    std::ostringstream os;
    os << ' ' << label << ':';
    bool any = false;
    for (SparseMatrix::InnerIterator it(m, r); it; ++it) {
      term(os, it.value(), var(it.col()));
      any = true;
    }
    if (!any) os << " 0 " << var(0);
    out << os.str() << ' ' << sense << ' ' << num(rhs) << '\n';
  };

  out << "\\ objective offset " << num(p.objective_offset) << "\nMinimize\n";
  {
    std::ostringstream os;
    os << " obj:";
    for (Eigen::Index j = 0; j < p.num_vars(); ++j)
      if (p.objective[j] != 0.0) term(os, p.objective[j], var(j));
    if (quadratic.size() == p.num_vars() && (quadratic.array() != 0.0).any()) {
      os << " + [";
      for (Eigen::Index j = 0; j < p.num_vars(); ++j)
        if (quadratic[j] != 0.0) os << " + " << num(2.0 * quadratic[j]) << ' ' << var(j) << " ^2";
      os << " ] / 2";
    }
    out << os.str() << '\n';
  }
  out << "Subject To\n";
  for (Eigen::Index i = 0; i < p.num_eq(); ++i) write_row(p.eq_matrix, i, name(p.eq_names, "e", i), "=", p.eq_rhs[i]);
  for (Eigen::Index i = 0; i < p.num_ineq(); ++i) {
    const std::string base = name(p.ineq_names, "g", i);
    const double lo = p.ineq_lower[i], up = p.ineq_upper[i];
    if (std::isfinite(lo) && lo == up) {
      write_row(p.ineq_matrix, i, base, "=", lo);
      continue;
    }
    if (std::isfinite(lo)) write_row(p.ineq_matrix, i, base + "_lo", ">=", lo);
    if (std::isfinite(up)) write_row(p.ineq_matrix, i, base + "_up", "<=", up);
  }
  out << "Bounds\n";
  for (Eigen::Index j = 0; j < p.num_vars(); ++j) {
    const double l = p.var_lower[j], u = p.var_upper[j];
    if (!std::isfinite(l) && !std::isfinite(u)) out << ' ' << var(j) << " free\n";
    else if (!std::isfinite(l)) out << " -inf <= " << var(j) << " <= " << num(u) << '\n';
    else if (!std::isfinite(u)) out << ' ' << var(j) << " >= " << num(l) << '\n';
    else out << ' ' << num(l) << " <= " << var(j) << " <= " << num(u) << '\n';
  }
  if (!binaries.empty()) {
    out << "Binary\n";
    for (auto j : binaries) out << ' ' << var(j) << '\n';
  }
  out << "End\n";
}

}  // namespace carbonshift::lp
