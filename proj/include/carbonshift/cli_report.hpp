#pragma once

#include "carbonshift/rts_dataset.hpp"
#include "carbonshift/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace carbonshift::cli {

enum ExitCode : int
{
  kExitOk = 0,
  kExitParse = 2,
  kExitValidation = 3,
  kExitNumerical = 4,
  kExitTimeLimit = 5,
};

struct ModificationConfig
{
  bool enabled = true;
  std::vector<int> dc_buses;
  double total_dc_load = 0.0;
  double pmax_scale = 1.0;
  bool zero_pmin = true;
  double cap_max = 300.0;
  std::optional<double> shift_base;

  bool operator==(const ModificationConfig&) const = default;
};

struct SweepConfig
{
  sim::SweepParameter parameter = sim::SweepParameter::gamma;
  std::vector<double> values;

  bool operator==(const SweepConfig&) const = default;
};

/// One experiment, read from a single JSON document.
struct RunConfig
{
  std::filesystem::path case_path;
  CaseFormat case_format = CaseFormat::rts_csv;
  /// Directory with timeseries/*.csv. Defaults to the case directory for
  /// rts_csv cases; matpower cases without one use a constant series.
  std::optional<std::filesystem::path> timeseries_dir;
  /// Length of the constant series used when there is no time series.
  std::size_t constant_steps = 1;
  ModificationConfig modifications;

  std::vector<sim::StrategyKind> strategies{sim::StrategyKind::baseline};
  double gamma = 0.0;
  double epsilon = 0.2;
  double alpha = 0.0;
  /// k x k, empty = unbounded; nullopt entries are unbounded pairs.
  std::vector<std::vector<std::optional<double>>> pair_limits;
  std::optional<SweepConfig> sweep;

  std::size_t first_step = 0;
  std::optional<std::size_t> steps;
  std::size_t cadence = 1;
  bool diagnostic = false;
  std::optional<std::size_t> max_failures;

  /// Fuel -> tons CO2/MWh, merged over the defaults.
  EmissionTable emission_factors;
  /// Apply the table to every generator, replacing intensities from the case file.
  bool override_emissions = false;

  std::filesystem::path output_dir = "out";
  unsigned threads = 0;
  std::uint64_t seed = 2020;

  lp::Tolerances tolerances{};
  BilevelMethod bilevel_method = BilevelMethod::automatic;
  std::size_t kkt_binary_limit = 64;
  std::size_t max_nodes = 20000;

  bool operator==(const RunConfig& o) const;

  ShiftParams shift_params() const;
  sim::RunOptions run_options() const;
  EmissionTable effective_emissions() const;
};

/// Throws ParseError on malformed JSON, wrong types or unknown keys.
RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Paths and parameter ranges. Throws ValidationError.
void validate_config(const RunConfig& config);

/// Case and series after applying the configuration.
struct LoadedCase
{
  CaseRef network;
  TimeSeries series;
};
LoadedCase load_inputs(const RunConfig& config);

// Report files.

std::vector<std::string> steps_csv_columns(std::size_t data_centers);
void write_steps_header(std::ostream& out, std::size_t data_centers);
/// act_dco2 is left empty when no counterfactual was computed.
void write_step_row(std::ostream& out, const sim::StepRecord& record);
void write_steps_csv(std::ostream& out, const sim::SimulationReport& report);
nlohmann::json summary_json(const sim::SimulationReport& report);
/// Throws ValidationError when a required key is missing or has the wrong type.
void validate_summary(const nlohmann::json& summary);
void write_frontier_csv(std::ostream& out, const std::vector<sim::FrontierRow>& rows);

/// Per value of a sweep: totals and summed predicted / counterfactual changes.
std::vector<std::string> sweep_csv_columns(sim::SweepParameter parameter);
void write_sweep_csv(std::ostream& out, sim::SweepParameter parameter, const std::vector<sim::SweepEntry>& entries);

struct SummaryRow
{
  std::string label;
  double total_cost = 0.0;
  double total_co2 = 0.0;
  double total_shift_mw = 0.0;
};
/// Fixed-width table: strategy, cost, emissions, total shifts.
void print_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Writes <dir>/steps.csv and <dir>/summary.json.
void write_report(const std::filesystem::path& dir, const sim::SimulationReport& report);

// Commands. Each returns an exit code and writes diagnostics to `err`.

int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err);
/// Per-bus lambda_co2 / LMP table at step t.
int cmd_lmce(const RunConfig& config, std::size_t t, std::ostream& out, std::ostream& err);
/// One run per strategy, each in <output_dir>/<strategy>.
int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err);
/// One run per (non-baseline strategy, sweep value), plus sweep.csv and, for
/// alpha sweeps, frontier.csv.
int cmd_sweep(const RunConfig& config, std::ostream& out, std::ostream& err);

struct DatasetOptions
{
  std::filesystem::path matpower_file;
  std::filesystem::path output_dir;
  rts::SyntheticOptions synthetic;
  /// Also write a run config for the reference experiment next to the bundle.
  std::optional<std::filesystem::path> config_out;
};
int cmd_dataset(const DatasetOptions& options, std::ostream& out, std::ostream& err);

/// Reference experiment on an RTS bundle: data centers at 103, 107, 204, 322,
/// 1000 MW in total, p_min = 0, p_max x 1.5.
RunConfig reference_config(const std::filesystem::path& bundle_dir);

/// Maps an exception from a command to its exit code and prints it.
int report_error(const std::exception& e, std::ostream& err);

}  // namespace carbonshift::cli
