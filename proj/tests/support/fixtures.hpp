#pragma once

#include "carbonshift/grid_model.hpp"

#include <filesystem>
#include <string>

namespace fixture {

inline std::filesystem::path data(const std::string& name) { return std::filesystem::path(CARBONSHIFT_TEST_DATA) / name; }
inline std::filesystem::path rts_bundle() { return CARBONSHIFT_RTS_BUNDLE; }
inline std::filesystem::path rts_matpower() { return CARBONSHIFT_RTS_MATPOWER; }

inline carbonshift::CaseRef csv_case(const std::string& name)
{
  return carbonshift::load_case(data(name), carbonshift::CaseFormat::rts_csv);
}

/// Congested triangle: A (10 $/MWh, 0.95 t/MWh) at bus 1, B (30, 0.3) at bus 2,
/// 150 MW at bus 3, line 1-3 limited to 80 MW.
inline carbonshift::CaseRef congested() { return csv_case("three_bus_congested"); }

/// The congested triangle with data centers at every bus.
inline carbonshift::CaseRef congested_with_dcs(double total = 60.0, double cap = 40.0, double shift_base = 20.0)
{
  carbonshift::CaseModifications m;
  m.dc_buses = {1, 2, 3};
  m.total_dc_load = total;
  m.cap_max = cap;
  m.shift_base = shift_base;
  return carbonshift::apply_case_modifications(*congested(), m);
}

/// The reference RTS setup on the one-week synthetic bundle.
inline carbonshift::CaseRef rts_reference()
{
  auto raw = carbonshift::load_case(rts_bundle(), carbonshift::CaseFormat::rts_csv);
  carbonshift::CaseModifications m;
  m.dc_buses = {103, 107, 204, 322};
  m.total_dc_load = 1000.0;
  m.pmax_scale = 1.5;
  return carbonshift::apply_case_modifications(*raw, m);
}

}  // namespace fixture
