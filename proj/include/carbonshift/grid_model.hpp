#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace carbonshift {

struct Bus
{
  int id = 0;
  std::string region;
  bool is_reference = false;
  /// Static load in the case file. Used as the participation factor when
  /// a regional load series is distributed over buses.
  double base_load = 0.0;
};

/// Transmission line. `susceptance` is in MW/rad (base MVA / reactance) and the
/// flow from `from_bus` to `to_bus` is -susceptance * (theta_from - theta_to).
struct Line
{
  std::string id;
  int from_bus = 0;
  int to_bus = 0;
  double susceptance = 0.0;
  double flow_limit = 0.0;
};

struct Generator
{
  std::string id;
  int bus = 0;
  std::string fuel;
  double cost = 0.0;              ///< $/MWh
  double carbon_intensity = 0.0;  ///< tons CO2/MWh
  double p_min = 0.0;
  double p_max = 0.0;
  /// Out-of-service units keep their slot but have no capacity unless a time
  /// series supplies availability.
  bool in_service = true;
};

/// Data-center load that can be moved between sites.
///
/// `shift_base` scales the per-step shift cap (epsilon * shift_base) while
/// `cap_max` bounds the operating load. The two differ in the reference setup
/// (250 MW base, 300 MW cap).
struct DataCenter
{
  int bus = 0;
  double shift_base = 0.0;
  double cap_max = 0.0;
  double initial_load = 0.0;
};

/// Carbon intensity by fuel, tons CO2/MWh.
using EmissionTable = std::map<std::string, double>;

/// Implementer-chosen defaults (not published for the RTS-GMLC units).
const EmissionTable& default_emission_table();

enum class CaseFormat { rts_csv, matpower_m };

CaseFormat parse_case_format(const std::string& name);
std::string to_string(CaseFormat format);

/// Immutable, validated grid description.
class NetworkCase
{
public:
  NetworkCase(std::vector<Bus> buses, std::vector<Line> lines, std::vector<Generator> generators,
              std::vector<DataCenter> data_centers, double base_mva = 100.0);

  const std::vector<Bus>& buses() const noexcept { return buses_; }
  const std::vector<Line>& lines() const noexcept { return lines_; }
  const std::vector<Generator>& generators() const noexcept { return generators_; }
  const std::vector<DataCenter>& data_centers() const noexcept { return data_centers_; }
  double base_mva() const noexcept { return base_mva_; }

  std::size_t num_buses() const noexcept { return buses_.size(); }
  std::size_t num_lines() const noexcept { return lines_.size(); }
  std::size_t num_generators() const noexcept { return generators_.size(); }
  std::size_t num_data_centers() const noexcept { return data_centers_.size(); }

  /// Position of a bus id in buses(). Throws ValidationError for unknown ids.
  std::size_t bus_index(int bus_id) const;
  bool has_bus(int bus_id) const noexcept { return bus_lookup_.contains(bus_id); }
  std::size_t reference_index() const noexcept { return reference_; }

  /// Bus positions of the data centers, in data_centers() order.
  std::vector<std::size_t> data_center_bus_indices() const;

  Eigen::VectorXd generator_costs() const;
  Eigen::VectorXd generator_carbon() const;

  /// Largest hop distance between two buses.
  int hop_diameter() const;

private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Generator> generators_;
  std::vector<DataCenter> data_centers_;
  double base_mva_;
  std::unordered_map<int, std::size_t> bus_lookup_;
  std::size_t reference_ = 0;
};

using CaseRef = std::shared_ptr<const NetworkCase>;

/// Exogenous per-step data: fixed nodal loads and availability overrides.
struct TimeSeries
{
  int step_minutes = 5;
  std::vector<std::string> timestamps;
  /// steps x buses, MW.
  Eigen::MatrixXd bus_load;
  /// Generator positions that carry a p_max override.
  std::vector<std::size_t> override_generators;
  /// steps x override_generators.size(), MW.
  Eigen::MatrixXd pmax_override;

  std::size_t steps() const noexcept { return static_cast<std::size_t>(bus_load.rows()); }
  void validate(const NetworkCase& network) const;
};

/// Effective data at one time step.
struct Snapshot
{
  CaseRef network;
  std::size_t t = 0;
  Eigen::VectorXd bus_load;  ///< per bus, fixed + data-center load
  Eigen::VectorXd p_min;     ///< per generator
  Eigen::VectorXd p_max;     ///< per generator
  Eigen::VectorXd dc_loads;  ///< per data center
};

CaseRef load_case(const std::filesystem::path& path, CaseFormat format,
                  const EmissionTable& emissions = default_emission_table());

/// Reads timeseries/*.csv from an RTS-style case directory.
TimeSeries load_time_series(const std::filesystem::path& case_dir, const NetworkCase& network);

/// A series that repeats the static bus loads and generator limits.
TimeSeries constant_series(const NetworkCase& network, std::size_t steps, int step_minutes = 5,
                           const std::string& start = "2020-01-01 00:00:00");

struct CaseModifications
{
  std::vector<int> dc_buses;
  double total_dc_load = 0.0;
  double pmax_scale = 1.0;
  bool zero_pmin = true;
  double cap_max = 300.0;
  /// Defaults to total_dc_load / |dc_buses| (cap_max when that is zero).
  std::optional<double> shift_base;
};

/// Sets p_min to zero, scales p_max and attaches data centers with an equal split
/// of the total data-center load.
CaseRef apply_case_modifications(const NetworkCase& network, const CaseModifications& mods);

Eigen::VectorXd initial_dc_loads(const NetworkCase& network);

Snapshot snapshot(const CaseRef& network, const TimeSeries& series, std::size_t t,
                  const Eigen::VectorXd& dc_loads);

/// Same exogenous data with data-center loads replaced.
Snapshot with_dc_loads(const Snapshot& snap, const Eigen::VectorXd& dc_loads);

/// Time accounting over a series: MW summed over steps and the MWh equivalent.
struct LoadAccounting
{
  std::size_t steps = 0;
  double mw_sum = 0.0;
  double mwh = 0.0;
};
LoadAccounting served_load(const TimeSeries& series, const NetworkCase& network);

}  // namespace carbonshift
