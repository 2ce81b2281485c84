#pragma once

#include "carbonshift/errors.hpp"
#include "carbonshift/grid_model.hpp"
#include "carbonshift/lp_core.hpp"

#include <json.hpp>

namespace carbonshift {

struct ShiftParams
{
  double epsilon = 0.2;  ///< per-step shift cap as a fraction of shift_base
  double gamma = 0.0;    ///< quadratic penalty weight on the shift
  double alpha = 0.0;    ///< 0 = carbon only, 1 = cost only
  /// k x k transfer limits, MW. Empty means unbounded transfers.
  Eigen::MatrixXd pair_limits;

  void validate(std::size_t data_centers) const;
  bool unbounded_pairs() const;
};

/// One step's load movement between data centers.
struct ShiftPlan
{
  Eigen::VectorXd delta_pd;   ///< MW per data center
  Eigen::MatrixXd transfers;  ///< MW, transfers(i, j) moved from i to j
  double predicted_dco2 = 0.0;
  double predicted_dcost = 0.0;
  double objective = 0.0;     ///< blended objective value, <= 0
  ShiftParams params;

  /// Sum of transfers, MW.
  double volume() const { return transfers.size() ? transfers.sum() : 0.0; }

  static ShiftPlan zero(std::size_t data_centers, const ShiftParams& params = {});
};

class InfeasibleShift : public Error
{
public:
  using Error::Error;
};

/// Blended shifting program over the data-center sites:
///   min sum_i (alpha LMP_i + (1 - alpha) lambda_i) dPd_i + gamma sum_i dPd_i^2
/// with flow balance through the transfers, zero sum, |dPd_i| <= eps shift_base_i,
/// 0 <= load_i + dPd_i <= cap_i and 0 <= s_ij <= M_ij.
/// Ties (gamma = 0) are broken toward the smallest transfer volume.
ShiftPlan solve_shift(const Eigen::VectorXd& lambda_co2_dc, const Eigen::VectorXd& lmp_dc,
                      const Eigen::VectorXd& current_loads, const std::vector<DataCenter>& dcs,
                      const ShiftParams& params, const lp::Tolerances& tol = {});

/// Greedy pairing of senders with receivers in index order.
Eigen::MatrixXd transfers_from_deltas(const Eigen::VectorXd& delta_pd);

/// Per-site shift bounds: |dPd_i| <= eps shift_base_i and 0 <= load_i + dPd_i <= cap_i.
void shift_bounds(const Eigen::VectorXd& current_loads, const std::vector<DataCenter>& dcs, double epsilon,
                  Eigen::VectorXd& lower, Eigen::VectorXd& upper);

nlohmann::json to_json(const ShiftParams& params);
nlohmann::json to_json(const ShiftPlan& plan);

}  // namespace carbonshift
