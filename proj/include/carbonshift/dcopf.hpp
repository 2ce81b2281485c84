#pragma once

#include "carbonshift/errors.hpp"
#include "carbonshift/grid_model.hpp"
#include "carbonshift/lp_core.hpp"

#include <json.hpp>

namespace carbonshift {

/// Variable and row positions in the DC OPF program.
///
/// Variables: theta (one per bus) then generation (one per generator).
/// Equality rows: one balance row per bus, then the reference-angle row.
/// Inequality rows: one ranged flow row per line, -F <= flow <= F.
struct DcopfLayout
{
  Eigen::Index buses = 0;
  Eigen::Index generators = 0;
  Eigen::Index lines = 0;

  explicit DcopfLayout(const NetworkCase& network);

  Eigen::Index theta(Eigen::Index bus) const { return bus; }
  Eigen::Index pg(Eigen::Index gen) const { return buses + gen; }
  Eigen::Index vars() const { return buses + generators; }
  Eigen::Index balance_row(Eigen::Index bus) const { return bus; }
  Eigen::Index reference_row() const { return buses; }
  Eigen::Index flow_row(Eigen::Index line) const { return line; }
};

struct DispatchSolution
{
  Eigen::VectorXd angles;        ///< rad, per bus
  Eigen::VectorXd generation;    ///< MW, per generator
  double objective = 0.0;        ///< $/h
  Eigen::VectorXd nodal_prices;  ///< $/MWh, per bus
  Eigen::VectorXd line_flows;    ///< MW, per line (from -> to)
  double emissions = 0.0;        ///< tons CO2/h
  /// Active constraints and basis in terms of build_dcopf() rows.
  lp::SolveResult lp;

  const std::vector<lp::ConstraintRef>& basis() const noexcept { return lp.basis; }
  bool degenerate() const noexcept { return lp.degenerate; }
};

class InfeasibleDispatch : public Error
{
public:
  /// `shed_fraction` is the smallest uniform load-shedding fraction that
  /// makes the dispatch feasible (NaN when shedding alone cannot).
  InfeasibleDispatch(const std::string& what, double shed_fraction)
      : Error(what), shed_fraction_(shed_fraction)
  {}
  double shed_fraction() const noexcept { return shed_fraction_; }

private:
  double shed_fraction_;
};

class UnboundedDispatch : public Error
{
public:
  using Error::Error;
};

Eigen::VectorXd compute_line_flows(const NetworkCase& network, const Eigen::VectorXd& angles);

lp::LinearProgram build_dcopf(const Snapshot& snap);

DispatchSolution solve_dcopf(const Snapshot& snap, const lp::Tolerances& tol = {});

/// Among cost-optimal dispatches, the one minimizing `secondary`^T P_g.
/// Reported duals (and nodal prices) are those of the cost-minimizing stage,
/// which remain optimal duals for the returned primal point.
DispatchSolution solve_dcopf_lexicographic(const Snapshot& snap, const Eigen::VectorXd& secondary,
                                           const lp::Tolerances& tol = {});

/// g^T P_g in tons CO2 per hour of operation.
double emissions_of(const DispatchSolution& sol, const NetworkCase& network);

nlohmann::json to_json(const DispatchSolution& sol, const NetworkCase& network);

}  // namespace carbonshift
