#pragma once

#include "carbonshift/dcopf.hpp"

#include <cstdint>
#include <iosfwd>

namespace carbonshift {

/// Local sensitivities of a basic optimal DC OPF solution.
///
/// A holds the n basis constraints of the dispatch, rows ordered as balance
/// equalities (bus order), the reference-angle row, binding line limits (line
/// order) and binding generator limits (generator order). Columns follow the
/// program variables: angles, then generation. A load change enters only the
/// balance rows, so [dtheta; dPg] = A^-1 [dPd; 0] and B is the block of A^-1
/// made of the generation rows and the balance columns.
struct SensitivityBundle
{
  Eigen::MatrixXd A;
  std::vector<lp::ConstraintRef> rows;
  Eigen::MatrixXd B;             ///< generators x buses
  Eigen::VectorXd lambda_co2;    ///< tons/MWh per bus
  Eigen::VectorXd lambda_cost;   ///< $/MWh per bus
  Eigen::VectorXd carbon;        ///< g, per generator
  Eigen::VectorXd cost;          ///< c, per generator
  std::uint64_t basis_id = 0;
  double rcond = 0.0;            ///< reciprocal condition estimate of A
  /// The optimum has more active constraints than variables, so the
  /// sensitivities depend on which basis was picked.
  bool degenerate = false;
};

class SingularBasis : public NumericalError
{
public:
  SingularBasis(const std::string& what, std::vector<std::size_t> dependent_rows)
      : NumericalError(what), dependent_rows_(std::move(dependent_rows))
  {}
  /// Positions in SensitivityBundle::rows order.
  const std::vector<std::size_t>& dependent_rows() const noexcept { return dependent_rows_; }

private:
  std::vector<std::size_t> dependent_rows_;
};

SensitivityBundle build_bundle(const DispatchSolution& sol, const NetworkCase& network);

struct PredictedChange
{
  Eigen::VectorXd delta_pg;
  double delta_cost = 0.0;
  double delta_co2 = 0.0;
};

/// delta_pd is per bus.
PredictedChange predict_changes(const SensitivityBundle& bundle, const Eigen::VectorXd& delta_pd);

/// Per-bus table: bus, lambda_co2, lambda_cost, lmp, degenerate_flag.
void write_lmce_csv(std::ostream& out, const SensitivityBundle& bundle, const DispatchSolution& sol,
                    const NetworkCase& network);

}  // namespace carbonshift
