#include "carbonshift/cli_report.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace carbonshift::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reader over one JSON object that rejects unknown keys and wrong types.
class Fields
{
public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where))
  {
    if (!j_.is_object()) fail("expected an object");
  }

  ~Fields() noexcept(false)
  {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) fail("unknown key '" + key + "'");
  }

  const json* get(const std::string& key)
  {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  template <class T, class F>
  void read(const std::string& key, T& out, F&& convert)
  {
    if (const json* v = get(key)) out = convert(*v, where_ + "." + key);
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(where_ + ": " + what); }
  const std::string& where() const { return where_; }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

[[noreturn]] void type_error(const std::string& where, const char* expected)
{
  throw ParseError(where + ": expected " + expected);
}

double as_number(const json& v, const std::string& where)
{
  if (!v.is_number()) type_error(where, "a number");
  return v.get<double>();
}

std::size_t as_count(const json& v, const std::string& where)
{
  if (!v.is_number_integer() || v.get<long long>() < 0) type_error(where, "a nonnegative integer");
  return v.get<std::size_t>();
}

bool as_bool(const json& v, const std::string& where)
{
  if (!v.is_boolean()) type_error(where, "true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where)
{
  if (!v.is_string()) type_error(where, "a string");
  return v.get<std::string>();
}

fs::path as_path(const json& v, const std::string& where) { return fs::path(as_string(v, where)); }

// Enum-valued keys: an unknown name is a parse error, not a validation error.
template <class F>
auto as_name(const json& v, const std::string& where, F&& parse)
{
  const auto name = as_string(v, where);
  try {
    return parse(name);
  } catch (const ValidationError& e) {
    throw ParseError(where + ": " + e.what());
  }
}

std::optional<double> as_opt_number(const json& v, const std::string& where)
{
  if (v.is_null()) return std::nullopt;
  return as_number(v, where);
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

bool RunConfig::operator==(const RunConfig& o) const
{
  const auto tol = [](const lp::Tolerances& t) {
    return std::tuple(t.feas, t.comp, t.rank, t.mip_gap, t.time_limit_s);
  };
  return case_path == o.case_path && case_format == o.case_format && timeseries_dir == o.timeseries_dir
         && constant_steps == o.constant_steps && modifications == o.modifications && strategies == o.strategies
         && gamma == o.gamma && epsilon == o.epsilon && alpha == o.alpha && pair_limits == o.pair_limits
         && sweep == o.sweep && first_step == o.first_step && steps == o.steps && cadence == o.cadence
         && diagnostic == o.diagnostic && max_failures == o.max_failures
         && emission_factors == o.emission_factors && override_emissions == o.override_emissions
         && output_dir == o.output_dir && threads == o.threads && seed == o.seed
         && tol(tolerances) == tol(o.tolerances) && bilevel_method == o.bilevel_method
         && kkt_binary_limit == o.kkt_binary_limit && max_nodes == o.max_nodes;
}

ShiftParams RunConfig::shift_params() const
{
  ShiftParams p;
  p.gamma = gamma;
  p.epsilon = epsilon;
  p.alpha = alpha;
  if (!pair_limits.empty()) {
    const auto k = static_cast<Eigen::Index>(pair_limits.size());
    p.pair_limits = Eigen::MatrixXd::Constant(k, k, lp::kInf);
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto& row = pair_limits[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(row.size()) != k) throw DimensionError("pair_limits must be k x k");
      for (Eigen::Index j = 0; j < k; ++j)
        if (const auto& v = row[static_cast<std::size_t>(j)]) p.pair_limits(i, j) = *v;
    }
  }
  return p;
}

sim::RunOptions RunConfig::run_options() const
{
  sim::RunOptions o;
  o.diagnostic = diagnostic;
  o.first_step = first_step;
  o.steps = steps;
  o.cadence = cadence;
  o.max_failures = max_failures;
  o.tol = tolerances;
  o.bilevel.tol = tolerances;
  o.bilevel.method = bilevel_method;
  o.bilevel.kkt_binary_limit = kkt_binary_limit;
  o.bilevel.max_nodes = max_nodes;
  return o;
}

EmissionTable RunConfig::effective_emissions() const
{
  EmissionTable t = default_emission_table();
  for (const auto& [fuel, g] : emission_factors) t[fuel] = g;
  return t;
}

RunConfig parse_config(const json& j)
{
  RunConfig c;
  Fields top(j, "config");

  const json* cs = top.get("case");
  if (!cs) top.fail("missing 'case'");
  {
    Fields f(*cs, "config.case");
    const json* p = f.get("path");
    if (!p) f.fail("missing 'path'");
    c.case_path = as_path(*p, "config.case.path");
    f.read("format", c.case_format, [](const json& v, const std::string& w) {
      return as_name(v, w, parse_case_format);
    });
    if (const json* ts = f.get("timeseries_dir")) c.timeseries_dir = as_path(*ts, "config.case.timeseries_dir");
    f.read("constant_steps", c.constant_steps, as_count);
  }

  if (const json* m = top.get("modifications")) {
    Fields f(*m, "config.modifications");
    auto& mc = c.modifications;
    f.read("enabled", mc.enabled, as_bool);
    if (const json* b = f.get("dc_buses")) {
      if (!b->is_array()) type_error("config.modifications.dc_buses", "an array of bus ids");
      for (const auto& id : *b) {
        if (!id.is_number_integer()) type_error("config.modifications.dc_buses", "an array of bus ids");
        mc.dc_buses.push_back(id.get<int>());
      }
    }
    f.read("total_dc_load", mc.total_dc_load, as_number);
    f.read("pmax_scale", mc.pmax_scale, as_number);
    f.read("zero_pmin", mc.zero_pmin, as_bool);
    f.read("cap_max", mc.cap_max, as_number);
    if (const json* s = f.get("shift_base")) mc.shift_base = as_number(*s, "config.modifications.shift_base");
  }

  if (const json* s = top.get("strategies")) {
    const auto one = [](const json& v, const std::string& w) { return as_name(v, w, sim::parse_strategy); };
    c.strategies.clear();
    if (s->is_string()) {
      c.strategies.push_back(one(*s, "config.strategies"));
    } else if (s->is_array()) {
      for (const auto& v : *s) c.strategies.push_back(one(v, "config.strategies"));
    } else {
      type_error("config.strategies", "a strategy name or an array of names");
    }
  }

  if (const json* p = top.get("params")) {
    Fields f(*p, "config.params");
    f.read("gamma", c.gamma, as_number);
    f.read("epsilon", c.epsilon, as_number);
    f.read("alpha", c.alpha, as_number);
    if (const json* pl = f.get("pair_limits")) {
      const std::string w = "config.params.pair_limits";
      if (!pl->is_array()) type_error(w, "an array of rows");
      for (const auto& row : *pl) {
        if (!row.is_array()) type_error(w, "an array of rows");
        auto& out = c.pair_limits.emplace_back();
        for (const auto& v : row) out.push_back(as_opt_number(v, w));
      }
    }
  }

  if (const json* s = top.get("sweep")) {
    Fields f(*s, "config.sweep");
    SweepConfig sc;
    const json* p = f.get("parameter");
    if (!p) f.fail("missing 'parameter'");
    sc.parameter = as_name(*p, "config.sweep.parameter", sim::parse_sweep_parameter);
    const json* v = f.get("values");
    if (!v || !v->is_array()) type_error("config.sweep.values", "an array of numbers");
    for (const auto& x : *v) sc.values.push_back(as_number(x, "config.sweep.values"));
    c.sweep = std::move(sc);
  }

  if (const json* w = top.get("window")) {
    Fields f(*w, "config.window");
    f.read("first_step", c.first_step, as_count);
    if (const json* n = f.get("steps")) c.steps = as_count(*n, "config.window.steps");
  }
  top.read("cadence", c.cadence, as_count);
  top.read("diagnostic", c.diagnostic, as_bool);
  if (const json* m = top.get("max_failures")) c.max_failures = as_count(*m, "config.max_failures");

  if (const json* e = top.get("emissions")) {
    Fields f(*e, "config.emissions");
    if (const json* t = f.get("factors")) {
      if (!t->is_object()) type_error("config.emissions.factors", "an object of fuel: tons/MWh");
      for (const auto& [fuel, g] : t->items())
        c.emission_factors[fuel] = as_number(g, "config.emissions.factors." + fuel);
    }
    f.read("override", c.override_emissions, as_bool);
  }

  top.read("output_dir", c.output_dir, as_path);
  if (const json* t = top.get("threads")) c.threads = static_cast<unsigned>(as_count(*t, "config.threads"));
  if (const json* s = top.get("seed")) c.seed = as_count(*s, "config.seed");

  if (const json* t = top.get("tolerances")) {
    Fields f(*t, "config.tolerances");
    auto& tol = c.tolerances;
    f.read("feas", tol.feas, as_number);
    f.read("comp", tol.comp, as_number);
    f.read("rank", tol.rank, as_number);
    f.read("mip_gap", tol.mip_gap, as_number);
    f.read("time_limit_s", tol.time_limit_s, as_number);
  }

  if (const json* b = top.get("bilevel")) {
    Fields f(*b, "config.bilevel");
    f.read("method", c.bilevel_method, [](const json& v, const std::string& w) {
      return as_name(v, w, parse_bilevel_method);
    });
    f.read("kkt_binary_limit", c.kkt_binary_limit, as_count);
    f.read("max_nodes", c.max_nodes, as_count);
  }
  return c;
}

RunConfig parse_config_text(const std::string& text, const std::string& source)
{
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const ParseError& e) {
    throw ParseError(source + ": " + e.what());
  }
}

RunConfig load_config(const fs::path& path)
{
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_config_text(ss.str(), path.string());
  // Input paths are relative to the config file; output_dir to the working directory.
  const fs::path base = path.parent_path();
  if (c.case_path.is_relative()) c.case_path = (base / c.case_path).lexically_normal();
  if (c.timeseries_dir && c.timeseries_dir->is_relative())
    c.timeseries_dir = (base / *c.timeseries_dir).lexically_normal();
  return c;
}

json to_json(const RunConfig& c)
{
  json j;
  j["case"] = {{"path", c.case_path.string()},
               {"format", to_string(c.case_format)},
               {"timeseries_dir", c.timeseries_dir ? json(c.timeseries_dir->string()) : json(nullptr)},
               {"constant_steps", c.constant_steps}};
  const auto& m = c.modifications;
  j["modifications"] = {{"enabled", m.enabled},         {"dc_buses", m.dc_buses},
                        {"total_dc_load", m.total_dc_load}, {"pmax_scale", m.pmax_scale},
                        {"zero_pmin", m.zero_pmin},     {"cap_max", m.cap_max},
                        {"shift_base", opt(m.shift_base)}};
  json strategies = json::array();
  for (auto s : c.strategies) strategies.push_back(sim::to_string(s));
  j["strategies"] = std::move(strategies);
  json pairs = json::array();
  for (const auto& row : c.pair_limits) {
    json r = json::array();
    for (const auto& v : row) r.push_back(opt(v));
    pairs.push_back(std::move(r));
  }
  j["params"] = {{"gamma", c.gamma}, {"epsilon", c.epsilon}, {"alpha", c.alpha}, {"pair_limits", pairs}};
  if (c.sweep) j["sweep"] = {{"parameter", sim::to_string(c.sweep->parameter)}, {"values", c.sweep->values}};
  j["window"] = {{"first_step", c.first_step}, {"steps", c.steps ? json(*c.steps) : json(nullptr)}};
  j["cadence"] = c.cadence;
  j["diagnostic"] = c.diagnostic;
  j["max_failures"] = c.max_failures ? json(*c.max_failures) : json(nullptr);
  j["emissions"] = {{"factors", json(c.emission_factors)}, {"override", c.override_emissions}};
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  const auto& t = c.tolerances;
  j["tolerances"] = {{"feas", t.feas},
                     {"comp", t.comp},
                     {"rank", t.rank},
                     {"mip_gap", t.mip_gap},
                     {"time_limit_s", finite_or_null(t.time_limit_s)}};
  j["bilevel"] = {{"method", to_string(c.bilevel_method)},
                  {"kkt_binary_limit", c.kkt_binary_limit},
                  {"max_nodes", c.max_nodes}};
  return j;
}

void validate_config(const RunConfig& c)
{
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
  };
  require(fs::exists(c.case_path), "case path does not exist: " + c.case_path.string());
  if (c.case_format == CaseFormat::rts_csv)
    require(fs::is_directory(c.case_path), "rts_csv case must be a directory: " + c.case_path.string());
  else
    require(fs::is_regular_file(c.case_path), "matpower case must be a file: " + c.case_path.string());
  if (c.timeseries_dir)
    require(fs::is_directory(*c.timeseries_dir / "timeseries"),
            "no timeseries/ directory under " + c.timeseries_dir->string());
  require(c.constant_steps >= 1, "constant_steps must be at least 1");

  const auto& m = c.modifications;
  if (m.enabled) {
    require(std::isfinite(m.total_dc_load) && m.total_dc_load >= 0.0, "total_dc_load out of range");
    require(std::isfinite(m.pmax_scale) && m.pmax_scale > 0.0, "pmax_scale out of range");
    require(std::isfinite(m.cap_max) && m.cap_max >= 0.0, "cap_max out of range");
    require(!m.shift_base || (std::isfinite(*m.shift_base) && *m.shift_base >= 0.0), "shift_base out of range");
    require(m.total_dc_load == 0.0 || !m.dc_buses.empty(), "total_dc_load > 0 needs at least one dc bus");
    std::set<int> unique(m.dc_buses.begin(), m.dc_buses.end());
    require(unique.size() == m.dc_buses.size(), "duplicate dc bus");
    if (!m.dc_buses.empty())
      require(m.total_dc_load / static_cast<double>(m.dc_buses.size()) <= m.cap_max + 1e-9,
              "initial data-center load exceeds cap_max");
  }

  require(!c.strategies.empty(), "no strategy given");
  require(std::isfinite(c.epsilon) && c.epsilon >= 0.0 && c.epsilon <= 1.0, "epsilon out of range");
  require(std::isfinite(c.gamma) && c.gamma >= 0.0, "gamma out of range");
  require(c.alpha >= 0.0 && c.alpha <= 1.0, "alpha out of range");
  for (const auto& row : c.pair_limits) {
    require(row.size() == c.pair_limits.size(), "pair_limits must be square");
    for (const auto& v : row) require(!v || (*v >= 0.0 && !std::isnan(*v)), "pair limits must be nonnegative");
  }
  if (!c.pair_limits.empty() && c.modifications.enabled)
    require(c.pair_limits.size() == c.modifications.dc_buses.size(), "pair_limits must be k x k");

  if (c.sweep) {
    require(!c.sweep->values.empty(), "sweep has no values");
    for (double v : c.sweep->values) {
      const std::string name = sim::to_string(c.sweep->parameter);
      switch (c.sweep->parameter) {
        case sim::SweepParameter::gamma: require(std::isfinite(v) && v >= 0.0, name + " out of range"); break;
        case sim::SweepParameter::epsilon:
          require(std::isfinite(v) && v >= 0.0 && v <= 1.0, name + " out of range");
          break;
        case sim::SweepParameter::alpha: require(v >= 0.0 && v <= 1.0, name + " out of range"); break;
      }
    }
  }
  require(c.cadence >= 1, "cadence must be at least 1");
  require(!c.steps || *c.steps >= 1, "window.steps must be at least 1");
  require(!c.max_failures || *c.max_failures >= 1, "max_failures must be at least 1");
  for (const auto& [fuel, g] : c.emission_factors)
    require(std::isfinite(g) && g >= 0.0, "emission factor for '" + fuel + "' out of range");

  const auto& t = c.tolerances;
  require(t.feas > 0.0 && t.feas < 1.0, "tolerances.feas out of range");
  require(t.comp > 0.0 && t.comp < 1.0, "tolerances.comp out of range");
  require(t.rank > 0.0 && t.rank < 1.0, "tolerances.rank out of range");
  require(t.mip_gap >= 0.0 && t.mip_gap < 1.0, "tolerances.mip_gap out of range");
  require(t.time_limit_s > 0.0, "tolerances.time_limit_s out of range");
  require(c.max_nodes >= 1, "bilevel.max_nodes must be at least 1");
}

namespace {

CaseRef with_emissions(const NetworkCase& net, const EmissionTable& table)
{
  auto gens = net.generators();
  for (auto& g : gens) {
    const auto it = table.find(g.fuel);
    if (it == table.end())
      throw ValidationError("generator " + g.id + ": fuel '" + g.fuel + "' is not in the emission-factor table");
    g.carbon_intensity = it->second;
  }
  return std::make_shared<NetworkCase>(net.buses(), net.lines(), std::move(gens), net.data_centers(),
                                       net.base_mva());
}

}  // namespace

LoadedCase load_inputs(const RunConfig& c)
{
  validate_config(c);
  const auto table = c.effective_emissions();
  CaseRef raw = load_case(c.case_path, c.case_format, table);
  if (c.override_emissions) raw = with_emissions(*raw, table);

  LoadedCase out;
  if (c.modifications.enabled) {
    CaseModifications m;
    m.dc_buses = c.modifications.dc_buses;
    m.total_dc_load = c.modifications.total_dc_load;
    m.pmax_scale = c.modifications.pmax_scale;
    m.zero_pmin = c.modifications.zero_pmin;
    m.cap_max = c.modifications.cap_max;
    m.shift_base = c.modifications.shift_base;
    out.network = apply_case_modifications(*raw, m);
  } else {
    out.network = raw;
  }

  std::optional<fs::path> ts_dir = c.timeseries_dir;
  if (!ts_dir && c.case_format == CaseFormat::rts_csv && fs::is_directory(c.case_path / "timeseries"))
    ts_dir = c.case_path;
  out.series = ts_dir ? load_time_series(*ts_dir, *out.network) : constant_series(*out.network, c.constant_steps);
  out.series.validate(*out.network);
  if (c.first_step >= out.series.steps())
    throw ValidationError("window.first_step " + std::to_string(c.first_step) + " beyond the horizon of "
                          + std::to_string(out.series.steps()) + " steps");
  if (!c.pair_limits.empty() && c.pair_limits.size() != out.network->num_data_centers())
    throw ValidationError("pair_limits must be k x k");
  return out;
}

RunConfig reference_config(const fs::path& bundle_dir)
{
  RunConfig c;
  c.case_path = bundle_dir;
  c.case_format = CaseFormat::rts_csv;
  c.modifications.dc_buses = {103, 107, 204, 322};
  c.modifications.total_dc_load = 1000.0;
  c.modifications.pmax_scale = 1.5;
  c.strategies = {sim::StrategyKind::baseline, sim::StrategyKind::lambda_shift, sim::StrategyKind::opt_shift};
  return c;
}

}  // namespace carbonshift::cli
