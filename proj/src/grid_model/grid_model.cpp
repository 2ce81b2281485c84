#include "carbonshift/grid_model.hpp"

#include "carbonshift/errors.hpp"
#include "timestamp.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

namespace carbonshift {

const EmissionTable& default_emission_table()
{
  static const EmissionTable table{
      {"coal", 0.95},   {"gas_ct", 0.60}, {"gas_cc", 0.45},  {"oil", 0.80},
      {"nuclear", 0.0}, {"hydro", 0.0},   {"wind", 0.0},     {"solar", 0.0},
      {"storage", 0.0}, {"sync_cond", 0.0}, {"unknown", 0.0},
  };
  return table;
}

CaseFormat parse_case_format(const std::string& name)
{
  if (name == "rts_csv") return CaseFormat::rts_csv;
  if (name == "matpower_m") return CaseFormat::matpower_m;
  throw ValidationError("unknown case format '" + name + "' (expected rts_csv or matpower_m)");
}

std::string to_string(CaseFormat format)
{
  return format == CaseFormat::rts_csv ? "rts_csv" : "matpower_m";
}

NetworkCase::NetworkCase(std::vector<Bus> buses, std::vector<Line> lines,
                         std::vector<Generator> generators, std::vector<DataCenter> data_centers,
                         double base_mva)
    : buses_(std::move(buses)), lines_(std::move(lines)), generators_(std::move(generators)),
      data_centers_(std::move(data_centers)), base_mva_(base_mva)
{
  if (buses_.empty()) throw ValidationError("case has no buses");
  if (!(base_mva_ > 0)) throw ValidationError("base MVA must be positive");

  std::size_t n_ref = 0;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!bus_lookup_.emplace(buses_[i].id, i).second)
      throw ValidationError("duplicate bus id " + std::to_string(buses_[i].id));
    if (buses_[i].is_reference) {
      reference_ = i;
      ++n_ref;
    }
  }
  if (n_ref != 1)
    throw ValidationError("case must have exactly one reference bus, found " + std::to_string(n_ref));

  for (const auto& l : lines_) {
    if (!has_bus(l.from_bus) || !has_bus(l.to_bus))
      throw ValidationError("line " + l.id + " references unknown bus");
    if (l.from_bus == l.to_bus) throw ValidationError("line " + l.id + " is a self loop");
    if (!(l.susceptance > 0) || !std::isfinite(l.susceptance))
      throw ValidationError("line " + l.id + " must have positive finite susceptance");
    if (!(l.flow_limit > 0)) throw ValidationError("line " + l.id + " must have positive flow limit");
  }
  std::set<std::string> gen_ids;
  for (const auto& g : generators_) {
    if (!has_bus(g.bus))
      throw ValidationError("generator " + g.id + " at nonexistent bus " + std::to_string(g.bus));
    if (!gen_ids.insert(g.id).second) throw ValidationError("duplicate generator id " + g.id);
    if (!(g.p_min >= 0) || !(g.p_min <= g.p_max))
      throw ValidationError("generator " + g.id + " violates 0 <= p_min <= p_max");
    if (!(g.carbon_intensity >= 0))
      throw ValidationError("generator " + g.id + " has negative carbon intensity");
    if (!std::isfinite(g.cost)) throw ValidationError("generator " + g.id + " has non-finite cost");
  }
  for (const auto& dc : data_centers_) {
    if (!has_bus(dc.bus))
      throw ValidationError("data center at unknown bus " + std::to_string(dc.bus));
    if (!(dc.shift_base > 0)) throw ValidationError("data center shift_base must be positive");
    if (!(dc.initial_load >= 0) || !(dc.initial_load <= dc.cap_max))
      throw ValidationError("data center at bus " + std::to_string(dc.bus)
                            + " violates 0 <= initial_load <= cap_max");
  }

  // connectivity
  std::vector<std::vector<std::size_t>> adj(buses_.size());
  for (const auto& l : lines_) {
    adj[bus_index(l.from_bus)].push_back(bus_index(l.to_bus));
    adj[bus_index(l.to_bus)].push_back(bus_index(l.from_bus));
  }
  std::vector<bool> seen(buses_.size(), false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        q.push(v);
      }
  }
  if (count != buses_.size())
    throw ValidationError("network is disconnected (" + std::to_string(buses_.size() - count)
                          + " buses unreachable)");
}

std::size_t NetworkCase::bus_index(int bus_id) const
{
  auto it = bus_lookup_.find(bus_id);
  if (it == bus_lookup_.end()) throw ValidationError("unknown bus id " + std::to_string(bus_id));
  return it->second;
}

std::vector<std::size_t> NetworkCase::data_center_bus_indices() const
{
  std::vector<std::size_t> out;
  out.reserve(data_centers_.size());
  for (const auto& dc : data_centers_) out.push_back(bus_index(dc.bus));
  return out;
}

Eigen::VectorXd NetworkCase::generator_costs() const
{
  Eigen::VectorXd c(generators_.size());
  for (std::size_t g = 0; g < generators_.size(); ++g) c[g] = generators_[g].cost;
  return c;
}

Eigen::VectorXd NetworkCase::generator_carbon() const
{
  Eigen::VectorXd c(generators_.size());
  for (std::size_t g = 0; g < generators_.size(); ++g) c[g] = generators_[g].carbon_intensity;
  return c;
}

int NetworkCase::hop_diameter() const
{
  const std::size_t n = buses_.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& l : lines_) {
    adj[bus_index(l.from_bus)].push_back(bus_index(l.to_bus));
    adj[bus_index(l.to_bus)].push_back(bus_index(l.from_bus));
  }
  int best = 0;
  std::vector<int> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<std::size_t> q;
    q.push(s);
    dist[s] = 0;
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      best = std::max(best, dist[u]);
      for (auto v : adj[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
  }
  return best;
}

void TimeSeries::validate(const NetworkCase& network) const
{
  const auto n = steps();
  if (n == 0) throw ValidationError("time series has no steps");
  if (step_minutes <= 0) throw ValidationError("time series step must be positive");
  if (static_cast<std::size_t>(bus_load.cols()) != network.num_buses())
    throw DimensionError("time series load columns do not match bus count");
  if (timestamps.size() != n) throw DimensionError("time series timestamps do not match steps");
  if (static_cast<std::size_t>(pmax_override.cols()) != override_generators.size()
      || (pmax_override.size() > 0 && static_cast<std::size_t>(pmax_override.rows()) != n))
    throw DimensionError("time series override matrix has wrong shape");
  if ((bus_load.array() < 0).any() || !bus_load.allFinite())
    throw ValidationError("time series contains negative or non-finite loads");
  if ((pmax_override.array() < 0).any() || !pmax_override.allFinite())
    throw ValidationError("time series contains negative or non-finite p_max overrides");
  for (auto g : override_generators)
    if (g >= network.num_generators()) throw ValidationError("override for unknown generator");
}

TimeSeries constant_series(const NetworkCase& network, std::size_t steps, int step_minutes,
                           const std::string& start)
{
  TimeSeries ts;
  ts.step_minutes = step_minutes;
  ts.bus_load.resize(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(network.num_buses()));
  for (std::size_t i = 0; i < network.num_buses(); ++i)
    ts.bus_load.col(static_cast<Eigen::Index>(i)).setConstant(network.buses()[i].base_load);
  const auto t0 = detail::parse_timestamp(start);
  ts.timestamps.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t)
    ts.timestamps.push_back(detail::format_timestamp(t0 + static_cast<long long>(t) * step_minutes * 60));
  ts.pmax_override.resize(static_cast<Eigen::Index>(steps), 0);
  return ts;
}

CaseRef apply_case_modifications(const NetworkCase& network, const CaseModifications& mods)
{
  if (!(mods.total_dc_load >= 0)) throw ValidationError("total data-center load must be >= 0");
  if (!(mods.pmax_scale > 0)) throw ValidationError("pmax scale must be positive");
  if (mods.dc_buses.empty() && mods.total_dc_load > 0)
    throw ValidationError("data-center load given without data-center buses");
  for (int b : mods.dc_buses)
    if (!network.has_bus(b)) throw ValidationError("unknown data-center bus id " + std::to_string(b));

  std::vector<Generator> gens = network.generators();
  for (auto& g : gens) {
    if (mods.zero_pmin) g.p_min = 0.0;
    g.p_max *= mods.pmax_scale;
  }

  std::vector<DataCenter> dcs;
  if (!mods.dc_buses.empty()) {
    const double share = mods.total_dc_load / static_cast<double>(mods.dc_buses.size());
    const double base = mods.shift_base.value_or(share > 0 ? share : mods.cap_max);
    if (share > mods.cap_max)
      throw ValidationError("data-center share exceeds cap_max");
    for (int b : mods.dc_buses) dcs.push_back(DataCenter{b, base, mods.cap_max, share});
  }
  return std::make_shared<const NetworkCase>(network.buses(), network.lines(), std::move(gens),
                                             std::move(dcs), network.base_mva());
}

Eigen::VectorXd initial_dc_loads(const NetworkCase& network)
{
  Eigen::VectorXd v(network.num_data_centers());
  for (std::size_t i = 0; i < network.num_data_centers(); ++i)
    v[static_cast<Eigen::Index>(i)] = network.data_centers()[i].initial_load;
  return v;
}

Snapshot snapshot(const CaseRef& network, const TimeSeries& series, std::size_t t,
                  const Eigen::VectorXd& dc_loads)
{
  if (!network) throw DomainError("snapshot requires a case");
  if (t >= series.steps())
    throw IndexError("step " + std::to_string(t) + " outside series of "
                     + std::to_string(series.steps()) + " steps");
  const auto& net = *network;
  if (static_cast<std::size_t>(series.bus_load.cols()) != net.num_buses())
    throw DimensionError("series does not match case bus count");

  Snapshot s;
  s.network = network;
  s.t = t;
  s.bus_load = series.bus_load.row(static_cast<Eigen::Index>(t)).transpose();
  const auto G = net.num_generators();
  s.p_min.resize(static_cast<Eigen::Index>(G));
  s.p_max.resize(static_cast<Eigen::Index>(G));
  for (std::size_t g = 0; g < G; ++g) {
    const auto& gen = net.generators()[g];
    s.p_min[static_cast<Eigen::Index>(g)] = gen.in_service ? gen.p_min : 0.0;
    s.p_max[static_cast<Eigen::Index>(g)] = gen.in_service ? gen.p_max : 0.0;
  }
  for (std::size_t k = 0; k < series.override_generators.size(); ++k) {
    const auto g = static_cast<Eigen::Index>(series.override_generators[k]);
    s.p_max[g] = series.pmax_override(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
    s.p_min[g] = std::min(s.p_min[g], s.p_max[g]);
  }
  // carry the data-center loads through the common path
  s.dc_loads = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_data_centers()));
  return with_dc_loads(s, dc_loads);
}

Snapshot with_dc_loads(const Snapshot& snap, const Eigen::VectorXd& dc_loads)
{
  const auto& net = *snap.network;
  if (static_cast<std::size_t>(dc_loads.size()) != net.num_data_centers())
    throw DimensionError("dc_loads has " + std::to_string(dc_loads.size()) + " entries, case has "
                         + std::to_string(net.num_data_centers()) + " data centers");
  constexpr double tol = 1e-6;
  Snapshot s = snap;
  const auto idx = net.data_center_bus_indices();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& dc = net.data_centers()[k];
    const double v = dc_loads[static_cast<Eigen::Index>(k)];
    if (!(v >= -tol) || !(v <= dc.cap_max + tol))
      throw DomainError("data-center load " + std::to_string(v) + " at bus " + std::to_string(dc.bus)
                        + " outside [0, " + std::to_string(dc.cap_max) + "]");
    const auto b = static_cast<Eigen::Index>(idx[k]);
    s.bus_load[b] += v - snap.dc_loads[static_cast<Eigen::Index>(k)];
  }
  s.dc_loads = dc_loads;
  return s;
}

LoadAccounting served_load(const TimeSeries& series, const NetworkCase& network)
{
  LoadAccounting acc;
  acc.steps = series.steps();
  const double dc_total = initial_dc_loads(network).sum();
  acc.mw_sum = series.bus_load.sum() + dc_total * static_cast<double>(acc.steps);
  acc.mwh = acc.mw_sum * series.step_minutes / 60.0;
  return acc;
}

}  // namespace carbonshift
