#pragma once

#include "carbonshift/grid_model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace carbonshift::rts {

/// Unit family of an RTS-GMLC generator as named in the RTS-GMLC unit ids
/// (CT, STEAM, CC, NUCLEAR, HYDRO, PV, WIND, CSP, STORAGE, SYNC_COND).
struct UnitFamily
{
  std::string type;
  std::string fuel;
  bool renewable = false;
};

/// Infers the unit family of a generator read from case_RTS_GMLC.m, which
/// carries no fuel column. Keyed on the capacity / minimum output / cost
/// pattern of each RTS-GMLC unit family and on the bus for the wind, CSP and
/// storage sites.
UnitFamily classify_unit(const Generator& gen);

/// RTS-style case: generators renamed "<bus>_<TYPE>_<n>", fuels and carbon
/// intensities attached, renewables marked in service (their availability
/// comes from the time series).
CaseRef convert_matpower_case(const NetworkCase& matpower_case,
                              const EmissionTable& emissions = default_emission_table());

struct SyntheticOptions
{
  std::string start = "2020-01-01 00:00:00";
  int days = 7;
  int step_minutes = 5;
  std::uint64_t seed = 2020;
};

/// Seeded synthetic stand-in for the RTS-GMLC real-time data: regional load
/// with daily/weekly/seasonal shape and noise, PV and wind availability with
/// autocorrelated weather, and a seasonal hydro budget.
struct SyntheticData
{
  int step_minutes = 5;
  std::vector<std::string> timestamps;
  std::vector<std::string> regions;
  Eigen::MatrixXd region_load;  ///< steps x regions
  std::vector<std::string> generator_ids;
  Eigen::MatrixXd availability;  ///< steps x generator_ids
};

SyntheticData synthesize(const NetworkCase& rts_case, const SyntheticOptions& options);

/// Writes bus.csv, branch.csv, gen.csv, system.csv and timeseries/{load,renewables}.csv.
void write_bundle(const std::filesystem::path& dir, const NetworkCase& rts_case, const SyntheticData& data);

}  // namespace carbonshift::rts
