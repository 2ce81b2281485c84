#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace carbonshift::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Tolerances
{
  double feas = 1e-7;
  double comp = 1e-6;
  double rank = 1e-8;
  double mip_gap = 1e-6;  ///< relative
  double time_limit_s = kInf;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// min c'x + offset  s.t.  E x = e,  lo <= G x <= up,  l <= x <= u.
struct LinearProgram
{
  Eigen::VectorXd objective;
  double objective_offset = 0.0;

  SparseMatrix eq_matrix;
  Eigen::VectorXd eq_rhs;

  SparseMatrix ineq_matrix;
  Eigen::VectorXd ineq_lower;
  Eigen::VectorXd ineq_upper;

  Eigen::VectorXd var_lower;
  Eigen::VectorXd var_upper;

  /// Optional, used by the LP-format dump only.
  std::vector<std::string> var_names;
  std::vector<std::string> eq_names;
  std::vector<std::string> ineq_names;

  Eigen::Index num_vars() const noexcept { return objective.size(); }
  Eigen::Index num_eq() const noexcept { return eq_rhs.size(); }
  Eigen::Index num_ineq() const noexcept { return ineq_lower.size(); }

  /// Throws DimensionError / DomainError on inconsistent data.
  void validate() const;
};

/// Adds sum_i quadratic_i * x_i^2 to the objective.
struct QuadraticProgram
{
  LinearProgram lp;
  Eigen::VectorXd quadratic;

  void validate() const;
};

struct MixedIntegerProgram
{
  LinearProgram lp;
  /// Variables restricted to {0, 1}; their bounds are intersected with [0, 1].
  std::vector<Eigen::Index> binaries;
  /// Optional starting point handed to the solver.
  std::optional<Eigen::VectorXd> initial;

  void validate() const;
};

enum class SolveStatus { optimal, infeasible, unbounded, time_limit };

std::string to_string(SolveStatus status);

enum class ConstraintKind { equality, ineq_lower, ineq_upper, var_lower, var_upper };

/// One side of one constraint of a LinearProgram.
struct ConstraintRef
{
  ConstraintKind kind = ConstraintKind::equality;
  Eigen::Index index = 0;

  bool operator==(const ConstraintRef&) const = default;
  auto operator<=>(const ConstraintRef&) const = default;
};

std::string to_string(const ConstraintRef& ref);

struct SolveResult
{
  SolveStatus status = SolveStatus::infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;

  /// Duals are derivatives of the optimal objective with respect to the
  /// constraint right-hand side that is active: >= 0 on a binding lower side,
  /// <= 0 on a binding upper side. Stationarity reads
  /// c + 2 Q x - E'y_eq - G'y_ineq - z = 0.
  Eigen::VectorXd eq_duals;
  Eigen::VectorXd ineq_duals;
  Eigen::VectorXd var_duals;

  /// Every constraint side with |slack| <= 1e-6 (1 + |rhs|). A fixed variable
  /// (l == u) appears once, as var_lower.
  std::vector<ConstraintRef> active;
  /// n linearly independent active constraints. Shorter than n when the
  /// optimum is not a vertex (QP interior, MILP).
  std::vector<ConstraintRef> basis;
  /// More than n independent-or-not active constraints at the optimum.
  bool degenerate = false;

  double mip_gap = 0.0;
  std::size_t simplex_iterations = 0;
};

/// Simplex solve. Status infeasible/unbounded are returned, not thrown.
/// Throws NumericalError when the backend fails.
SolveResult solve_lp(const LinearProgram& lp, const Tolerances& tol = {});

SolveResult solve_qp(const QuadraticProgram& qp, const Tolerances& tol = {});

/// Branch and bound. On time limit the status is time_limit and x holds the
/// incumbent (empty when none was found). Duals are not reported.
SolveResult solve_milp(const MixedIntegerProgram& mip, const Tolerances& tol = {});

struct KktReport
{
  double primal_residual = 0.0;   ///< max bound / row violation
  double stationarity = 0.0;      ///< max |c + 2Qx - A'y - z|
  double dual_sign = 0.0;         ///< max wrong-sign dual magnitude
  double complementarity = 0.0;   ///< max |dual * slack|
  double duality_gap = 0.0;       ///< |primal - dual| / (1 + |primal|)

  bool ok(const Tolerances& tol = {}) const;
  std::string describe() const;
};

/// Independent optimality check from the data and the reported solution.
/// `quadratic` may be empty for an LP.
KktReport check_kkt(const LinearProgram& lp, const SolveResult& result,
                    const Eigen::VectorXd& quadratic = {});

/// Constraint sides active at x (same rule and ordering as SolveResult::active).
std::vector<ConstraintRef> active_constraints(const LinearProgram& lp, const Eigen::VectorXd& x);

/// Rows of the constraints in `refs`, dense, one per ref (n columns).
Eigen::MatrixXd constraint_rows(const LinearProgram& lp, const std::vector<ConstraintRef>& refs);

/// Right-hand sides matching constraint_rows().
Eigen::VectorXd constraint_rhs(const LinearProgram& lp, const std::vector<ConstraintRef>& refs);

/// CPLEX LP-format text. Ranged rows are written as two rows.
void write_lp_format(const std::filesystem::path& path, const LinearProgram& lp,
                     const Eigen::VectorXd& quadratic = {},
                     const std::vector<Eigen::Index>& binaries = {});

}  // namespace carbonshift::lp
