#pragma once

#include "carbonshift/dcopf.hpp"
#include "carbonshift/shift_lambda.hpp"

#include <algorithm>
#include <iosfwd>

namespace carbonshift {

/// Column positions of the single-level KKT program.
struct KktLayout
{
  Eigen::Index k = 0;  ///< data centers
  Eigen::Index delta = 0, s = 0, theta = 0, pg = 0, mu = 0, nu = 0;
  Eigen::Index rho_up = 0, rho_lo = 0;  ///< line duals, upper / lower limit
  Eigen::Index sig_up = 0, sig_lo = 0;  ///< generator-limit duals (free sigma for fixed units at sig_up)
  Eigen::Index z_line_up = 0, z_line_lo = 0, z_gen_up = 0, z_gen_lo = 0;
  Eigen::Index vars = 0;
  /// Generators with p_min < p_max, which carry complementarity binaries,
  /// and the position of each generator in that list (-1 when fixed).
  std::vector<Eigen::Index> free_gens;
  std::vector<Eigen::Index> free_pos;
  /// Lines with a finite limit, and each line's position in that list.
  std::vector<Eigen::Index> limited_lines;
  std::vector<Eigen::Index> line_pos;
};

struct BigM
{
  double line_dual = 0.0;
  /// Range assumed for nodal prices. Generator-limit duals follow per unit:
  /// sigma_up <= price_hi - c_g, sigma_lo <= c_g - price_lo.
  double price_lo = 0.0;
  double price_hi = 0.0;

  double gen_up(double cost) const { return std::max(0.0, price_hi - cost); }
  double gen_lo(double cost) const { return std::max(0.0, cost - price_lo); }
  /// Line bound times `factor`, price range widened by `factor` about its centre.
  BigM widened(double factor) const;
};

/// Big-M values from the lower-level cost data. Prices are assumed to lie
/// within the unit cost range padded by `margin` times the cost spread; line
/// duals are bounded by the spread times (1 + hop diameter).
BigM default_big_m(const Snapshot& snap, double margin = 0.5);

struct KktProgram
{
  lp::MixedIntegerProgram mip;
  KktLayout layout;
  BigM big_m;
  std::size_t binaries() const { return mip.binaries.size(); }
};

/// Single-level reformulation of the shift bilevel program: upper variables
/// dPd and s, lower primal theta and P_g, lower duals, and one binary per lower
/// inequality side. Objective (alpha c + (1 - alpha) g)' P_g.
KktProgram build_kkt_milp(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                          const BigM& big_m);
KktProgram build_kkt_milp(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params);

struct OraclePoint
{
  Eigen::VectorXd delta_pd;
  double upper = 0.0;      ///< (alpha c + (1 - alpha) g)' P_g of the lower optimum
  double emissions = 0.0;
  double cost = 0.0;
};

enum class BilevelMethod
{
  automatic,       ///< KKT program when it has at most kkt_binary_limit binaries
  kkt_milp,        ///< big-M KKT reformulation
  value_function,  ///< branch and bound over the shift box on the lower-level value function
};

std::string to_string(BilevelMethod method);
/// Throws ValidationError on an unknown name.
BilevelMethod parse_bilevel_method(const std::string& name);

struct BilevelSolution
{
  ShiftPlan plan;
  DispatchSolution lower;      ///< DC OPF re-solved at the chosen shift
  double upper_objective = 0.0;
  double baseline_upper = 0.0;  ///< upper objective with no shift
  double mip_gap = 0.0;
  lp::SolveStatus status = lp::SolveStatus::optimal;
  bool big_m_active = false;
  int big_m_escalations = 0;
  /// Optimality check of the re-solved lower dispatch.
  lp::KktReport certificate;
  BilevelMethod method = BilevelMethod::automatic;
  double lower_bound = 0.0;  ///< proven bound on the upper objective
  std::size_t binaries = 0;
  std::size_t nodes = 0;     ///< boxes bounded by the value-function search
  std::size_t lower_solves = 0;
  /// Evaluated grid (brute force only).
  std::vector<OraclePoint> oracle;
};

struct BilevelOptions
{
  lp::Tolerances tol{};
  BilevelMethod method = BilevelMethod::automatic;
  std::size_t kkt_binary_limit = 64;
  std::size_t max_nodes = 20000;
  /// Tie-break toward the smallest transfer volume; defaults to on for alpha = 1.
  std::optional<bool> min_volume;
  int max_escalations = 3;
};

/// Time limit: status time_limit with the incumbent. Throws NumericalError when
/// the MILP is infeasible (which points at a big-M misconfiguration).
BilevelSolution solve_opt_shift(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                                const BilevelOptions& options = {});

class ResourceLimit : public Error
{
public:
  ResourceLimit(const std::string& what, std::size_t points) : Error(what), points_(points) {}
  std::size_t points() const noexcept { return points_; }

private:
  std::size_t points_;
};

/// Zero-sum grid enumeration of the shift with one DC OPF per point.
BilevelSolution brute_force_opt_shift(const Snapshot& snap, const std::vector<DataCenter>& dcs,
                                      const ShiftParams& params, double grid_step,
                                      std::size_t max_points = 200000, const lp::Tolerances& tol = {});

/// Number of grid points brute_force_opt_shift would evaluate.
std::size_t count_grid_points(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                              double grid_step);

/// Lower-level optimum at a given shift, optimistic with respect to the upper
/// objective among cost ties.
OraclePoint evaluate_shift(const Snapshot& snap, const std::vector<DataCenter>& dcs, const ShiftParams& params,
                           const Eigen::VectorXd& delta_pd, const lp::Tolerances& tol = {});

/// Columns: delta_1..delta_k, upper, emissions, cost.
void write_oracle_csv(std::ostream& out, const std::vector<OraclePoint>& points);

}  // namespace carbonshift
