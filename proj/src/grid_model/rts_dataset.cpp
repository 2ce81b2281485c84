#include "carbonshift/rts_dataset.hpp"

#include "carbonshift/csv.hpp"
#include "carbonshift/errors.hpp"
#include "timestamp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

namespace fs = std::filesystem;

namespace carbonshift::rts {

namespace {

bool near(double a, double b) { return std::abs(a - b) < 1e-6; }

// Puts the annual mean fixed load near 4.0 GW, i.e. about 5.0 GW served with
// the 1 GW of data-center load.
constexpr double kLoadScale = 0.655;

}  // namespace

UnitFamily classify_unit(const Generator& g)
{
  if (g.cost > 0) {
    if (near(g.p_max, 400)) return {"NUCLEAR", "nuclear", false};
    if (near(g.p_max, 20)) return {"CT", "oil", false};
    if (near(g.p_max, 12)) return {"STEAM", "oil", false};
    if (near(g.p_max, 55)) return {"CT", "gas_ct", false};
    if (near(g.p_max, 355)) return {"CC", "gas_cc", false};
    if (near(g.p_max, 76) || near(g.p_max, 155) || near(g.p_max, 350)) return {"STEAM", "coal", false};
    return {"CT", "gas_ct", false};
  }
  if (near(g.p_max, 0)) return {"SYNC_COND", "sync_cond", false};
  if (g.in_service && near(g.p_max, 50)) return {"HYDRO", "hydro", true};
  if (g.bus == 313 && near(g.p_max, 50)) return {"STORAGE", "storage", false};
  if (g.bus == 212 && near(g.p_max, 200)) return {"CSP", "solar", true};
  if ((g.bus == 122 || g.bus == 303 || g.bus == 309 || g.bus == 317) && g.p_max > 100)
    return {"WIND", "wind", true};
  return {"PV", "solar", true};
}

CaseRef convert_matpower_case(const NetworkCase& mp, const EmissionTable& emissions)
{
  std::vector<Generator> gens;
  std::map<std::string, int> counter;
  for (const auto& g0 : mp.generators()) {
    const auto fam = classify_unit(g0);
    Generator g = g0;
    const std::string key = std::to_string(g.bus) + "_" + fam.type;
    g.id = key + "_" + std::to_string(++counter[key]);
    g.fuel = fam.fuel;
    auto it = emissions.find(fam.fuel);
    if (it == emissions.end()) throw ValidationError("no emission factor for fuel " + fam.fuel);
    g.carbon_intensity = it->second;
    if (fam.renewable) g.in_service = true;
    if (fam.type == "STORAGE") g.in_service = false;
    gens.push_back(std::move(g));
  }
  return std::make_shared<const NetworkCase>(mp.buses(), mp.lines(), std::move(gens),
                                             mp.data_centers(), mp.base_mva());
}

SyntheticData synthesize(const NetworkCase& rc, const SyntheticOptions& opt)
{
  if (opt.days <= 0 || opt.step_minutes <= 0 || (24 * 60) % opt.step_minutes != 0)
    throw DomainError("synthetic series needs a positive day count and a step dividing one day");
  using std::numbers::pi;

  SyntheticData out;
  out.step_minutes = opt.step_minutes;
  const long long t0 = detail::parse_timestamp(opt.start);
  const std::size_t steps = static_cast<std::size_t>(opt.days) * (24 * 60 / opt.step_minutes);
  const double dt_h = opt.step_minutes / 60.0;

  std::map<std::string, double> region_base;
  for (const auto& b : rc.buses()) region_base[b.region] += b.base_load;
  for (const auto& [r, v] : region_base) out.regions.push_back(r);

  std::vector<std::size_t> units;
  std::vector<UnitFamily> families;
  for (std::size_t g = 0; g < rc.num_generators(); ++g) {
    const auto fam = classify_unit(rc.generators()[g]);
    if (!fam.renewable) continue;
    units.push_back(g);
    families.push_back(fam);
    out.generator_ids.push_back(rc.generators()[g].id);
  }

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto R = out.regions.size();
  out.region_load.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(R));
  out.availability.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(units.size()));
  out.timestamps.reserve(steps);

  // latent weather states
  std::vector<double> load_noise(R, 0.0), cloud(R, 0.0);
  double wind_common = 0.0;
  std::vector<double> wind_site(units.size(), 0.0);
  const double phi_load = std::exp(-dt_h / 2.0);
  const double phi_cloud = std::exp(-dt_h / 1.5);
  const double phi_wind = std::exp(-dt_h / 6.0);

  for (std::size_t t = 0; t < steps; ++t) {
    const long long sec = t0 + static_cast<long long>(t) * opt.step_minutes * 60;
    out.timestamps.push_back(detail::format_timestamp(sec));
    const long long day_index = sec >= 0 ? sec / 86400 : (sec - 86399) / 86400;
    const double hour = static_cast<double>(sec - day_index * 86400) / 3600.0;
    // 1970-01-01 was a Thursday
    const int weekday = static_cast<int>(((day_index % 7) + 7 + 3) % 7);  // 0 = Monday
    const double doy = std::fmod(static_cast<double>(day_index) - 10957.0, 365.25);  // days since 2000-01-01

    const double seasonal = 1.0 + 0.10 * std::cos(2 * pi * (doy - 15) / 365.25)
                          + 0.18 * std::max(0.0, std::sin(2 * pi * (doy - 100) / 365.25));
    const double weekly = weekday >= 5 ? 0.93 : 1.0;

    for (std::size_t r = 0; r < R; ++r) {
      const double h = hour + 0.25 * (static_cast<double>(r) - 1.0);  // small regional phase offset
      auto bump = [&](double c, double w) { return std::exp(-((h - c) * (h - c)) / (w * w)); };
      const double daily = 0.62 + 0.14 * bump(8.5, 2.2) + 0.30 * bump(18.5, 2.8) - 0.08 * bump(3.5, 2.5);
      load_noise[r] = phi_load * load_noise[r] + std::sqrt(1 - phi_load * phi_load) * 0.025 * normal(rng);
      const double white = 0.003 * normal(rng);
      const double base = region_base[out.regions[r]];
      out.region_load(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(r)) =
          std::max(0.0, base * kLoadScale * daily * seasonal * weekly * (1.0 + load_noise[r] + white));
      cloud[r] = phi_cloud * cloud[r] + std::sqrt(1 - phi_cloud * phi_cloud) * normal(rng);
    }

    const double day_length = 12.0 - 2.6 * std::cos(2 * pi * (doy + 10) / 365.25);
    const double solar_angle = std::cos(pi * (hour - 12.5) / day_length);
    const double clear_sky = std::pow(std::max(0.0, solar_angle), 1.3);
    const double hydro_budget = 0.55 + 0.15 * std::sin(2 * pi * (doy - 80) / 365.25);
    wind_common = phi_wind * wind_common + std::sqrt(1 - phi_wind * phi_wind) * normal(rng);

    for (std::size_t k = 0; k < units.size(); ++k) {
      const auto& gen = rc.generators()[units[k]];
      const double cap = gen.p_max;
      double cf = 0.0;
      const std::size_t region =
          std::find(out.regions.begin(), out.regions.end(), rc.buses()[rc.bus_index(gen.bus)].region)
          - out.regions.begin();
      const double cloudiness = 1.0 / (1.0 + std::exp(-(cloud[region] * 1.4 + 1.2)));
      if (families[k].type == "PV" || families[k].type == "CSP") {
        cf = 0.88 * clear_sky * (0.25 + 0.75 * cloudiness);
      } else if (families[k].type == "WIND") {
        wind_site[k] = phi_wind * wind_site[k] + std::sqrt(1 - phi_wind * phi_wind) * normal(rng);
        const double z = 0.7 * wind_common + 0.71 * wind_site[k];
        const double diurnal = 0.35 * std::cos(2 * pi * (hour - 3.0) / 24.0);
        cf = 0.95 / (1.0 + std::exp(-(1.3 * z + diurnal - 0.35)));
      } else if (families[k].type == "HYDRO") {
        cf = hydro_budget * (1.0 + 0.06 * std::sin(2 * pi * (hour - 12.0) / 24.0));
      }
      out.availability(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
          std::clamp(cf, 0.0, 1.0) * cap;
    }
  }
  return out;
}

namespace {

std::ofstream open_out(const fs::path& p)
{
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

using csv::format_number;

}  // namespace

void write_bundle(const fs::path& dir, const NetworkCase& rc, const SyntheticData& data)
{
  fs::create_directories(dir / "timeseries");
  {
    auto out = open_out(dir / "system.csv");
    out << "key,value\nbase_mva," << format_number(rc.base_mva()) << "\n";
  }
  {
    auto out = open_out(dir / "bus.csv");
    out << "id,region,load_mw,is_reference\n";
    for (const auto& b : rc.buses())
      out << b.id << ',' << b.region << ',' << format_number(b.base_load) << ','
          << (b.is_reference ? 1 : 0) << '\n';
  }
  {
    auto out = open_out(dir / "branch.csv");
    out << "id,from,to,reactance,rating\n";
    for (const auto& l : rc.lines())
      out << l.id << ',' << l.from_bus << ',' << l.to_bus << ','
          << format_number(rc.base_mva() / l.susceptance) << ',' << format_number(l.flow_limit) << '\n';
  }
  {
    auto out = open_out(dir / "gen.csv");
    out << "id,bus,fuel,cost,pmin,pmax,carbon_intensity,in_service\n";
    for (const auto& g : rc.generators())
      out << g.id << ',' << g.bus << ',' << g.fuel << ',' << format_number(g.cost) << ','
          << format_number(g.p_min) << ',' << format_number(g.p_max) << ','
          << format_number(g.carbon_intensity) << ',' << (g.in_service ? 1 : 0) << '\n';
  }
  auto write_matrix = [&](const fs::path& p, const std::vector<std::string>& cols,
                          const Eigen::MatrixXd& m) {
    auto out = open_out(p);
    out << "timestamp";
    for (const auto& c : cols) out << ',' << c;
    out << '\n';
    char buf[32];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out << data.timestamps[static_cast<std::size_t>(r)];
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), ",%.3f", m(r, c));
        out << buf;
      }
      out << '\n';
    }
  };
  write_matrix(dir / "timeseries" / "load.csv", data.regions, data.region_load);
  write_matrix(dir / "timeseries" / "renewables.csv", data.generator_ids, data.availability);
}

}  // namespace carbonshift::rts
