#pragma once

#include "carbonshift/dcopf.hpp"
#include "carbonshift/shift_bilevel.hpp"
#include "carbonshift/shift_lambda.hpp"

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace carbonshift::sim {

enum class StrategyKind
{
  baseline,
  lambda_shift,
  opt_shift,
};

struct Strategy
{
  StrategyKind kind = StrategyKind::baseline;
  ShiftParams params;

  static Strategy baseline() { return {}; }
  static Strategy lambda_shift(const ShiftParams& p) { return {StrategyKind::lambda_shift, p}; }
  static Strategy opt_shift(const ShiftParams& p) { return {StrategyKind::opt_shift, p}; }
};

std::string to_string(StrategyKind kind);
/// Throws ValidationError on an unknown name.
StrategyKind parse_strategy(const std::string& name);

/// Step flags, OR-ed into StepRecord::flags.
enum StepFlag : unsigned
{
  kInfeasible = 1u << 0,   ///< DC OPF infeasible, step skipped, loads carried over
  kDegenerate = 1u << 1,   ///< more active constraints than variables
  kSingular = 1u << 2,     ///< sensitivities unavailable, no shift
  kClamped = 1u << 3,      ///< applied loads clamped into [0, cap]
  kTimeLimit = 1u << 4,    ///< opt-shift returned an incumbent
  kBigMActive = 1u << 5,
};

std::string describe_flags(unsigned flags);

struct StepRecord
{
  std::size_t t = 0;
  std::string timestamp;
  Eigen::VectorXd dc_loads;  ///< MW, before this step's shift
  double cost = 0.0;         ///< $, dispatch cost over the step
  double co2 = 0.0;          ///< tons over the step
  Eigen::VectorXd delta_pd;  ///< MW, shift decided at t (applied from t + 1)
  double transfer_mw = 0.0;  ///< sum of s_ij
  double half_abs_mw = 0.0;  ///< sum |dPd_i| / 2
  double pred_dco2 = 0.0;    ///< t/h, predicted effect of delta_pd
  double pred_dcost = 0.0;   ///< $/h
  double act_dco2 = std::numeric_limits<double>::quiet_NaN();   ///< t/h, diagnostic mode
  double act_dcost = std::numeric_limits<double>::quiet_NaN();  ///< $/h, diagnostic mode
  double served_mw = 0.0;
  unsigned flags = 0;
};

struct SimulationReport
{
  Strategy strategy;
  int step_minutes = 5;
  std::vector<StepRecord> steps;
  double total_cost = 0.0;   ///< $
  double total_co2 = 0.0;    ///< tons
  double total_shift_mw = 0.0;     ///< sum of transfers
  double total_half_abs_mw = 0.0;  ///< sum of |dPd| / 2
  double served_mw_sum = 0.0;
  double served_mwh = 0.0;
  std::size_t infeasible_steps = 0;
  std::size_t degenerate_steps = 0;
  std::size_t flagged_steps = 0;
  double runtime_s = 0.0;
  bool diagnostic = false;
};

struct RunOptions
{
  bool diagnostic = false;
  std::size_t first_step = 0;
  /// Number of steps; nullopt runs to the end of the series.
  std::optional<std::size_t> steps;
  /// Opt-shift is recomputed every `cadence` steps; other steps do not shift.
  std::size_t cadence = 1;
  /// Abort with StepFailure once this many steps were infeasible.
  std::optional<std::size_t> max_failures;
  /// Starting data-center loads; defaults to the case's initial loads.
  std::optional<Eigen::VectorXd> initial_loads;
  lp::Tolerances tol{};
  BilevelOptions bilevel{};
  std::function<void(const StepRecord&)> on_step;
};

class StepFailure : public Error
{
public:
  StepFailure(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// Cumulative rolling simulation: dispatch at the current loads, record,
/// decide a shift, apply it from the next step on.
SimulationReport run(const CaseRef& network, const TimeSeries& series, const Strategy& strategy,
                     const RunOptions& options = {});

struct AccuracyPoint
{
  std::size_t t = 0;
  double predicted = 0.0;  ///< t/h
  double actual = 0.0;     ///< t/h
};

/// Predicted versus counterfactual emission change for each shifting step.
/// Requires a diagnostic run.
std::vector<AccuracyPoint> accuracy_diagnostics(const SimulationReport& report);

enum class SweepParameter
{
  gamma,
  epsilon,
  alpha,
};

std::string to_string(SweepParameter p);
SweepParameter parse_sweep_parameter(const std::string& name);

struct SweepEntry
{
  double value = 0.0;
  Strategy strategy;
  std::optional<SimulationReport> report;
  std::string error;  ///< set when the run failed
};

/// One full run per value; failures are recorded and the rest continue.
/// `threads` = 0 picks min(values, hardware threads).
std::vector<SweepEntry> sweep(const CaseRef& network, const TimeSeries& series, const Strategy& family,
                              SweepParameter parameter, const std::vector<double>& values,
                              const RunOptions& options = {}, unsigned threads = 0);

struct FrontierRow
{
  double alpha = 0.0;
  double total_cost = 0.0;
  double total_co2 = 0.0;
};

/// Cost/emission pairs of the successful runs, sorted by alpha.
std::vector<FrontierRow> frontier(const std::vector<SweepEntry>& entries);

}  // namespace carbonshift::sim
