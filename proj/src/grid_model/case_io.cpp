#include "carbonshift/csv.hpp"
#include "carbonshift/errors.hpp"
#include "carbonshift/grid_model.hpp"
#include "timestamp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;

namespace carbonshift {

namespace {

std::string lower(std::string s)
{
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool parse_bool(const std::string& s, const csv::Table& t, std::size_t row)
{
  const auto v = lower(s);
  if (v == "1" || v == "true" || v == "yes" || v == "ref") return true;
  if (v == "0" || v == "false" || v == "no" || v.empty()) return false;
  throw ParseError(t.source, t.lines.at(row), "not a boolean: '" + s + "'");
}

double carbon_for(const std::string& fuel, const EmissionTable& table, const std::string& gen_id)
{
  auto it = table.find(fuel);
  if (it == table.end())
    throw ValidationError("generator " + gen_id + ": no carbon intensity given and fuel '" + fuel
                          + "' is not in the emission-factor table");
  return it->second;
}

// ---------------------------------------------------------------------------
// RTS-style CSV directory

CaseRef load_rts_csv(const fs::path& dir, const EmissionTable& emissions)
{
  if (!fs::is_directory(dir)) throw ParseError(dir.string(), 0, "case directory does not exist");

  double base_mva = 100.0;
  if (fs::exists(dir / "system.csv")) {
    auto sys = csv::read(dir / "system.csv");
    const auto k = sys.require("key");
    const auto v = sys.require("value");
    for (std::size_t r = 0; r < sys.rows.size(); ++r)
      if (lower(sys.cell(r, k)) == "base_mva") base_mva = sys.number(r, v);
  }

  auto bt = csv::read(dir / "bus.csv");
  std::vector<Bus> buses;
  {
    const auto c_id = bt.require("id");
    const auto c_region = bt.find("region");
    const auto c_load = bt.find("load_mw");
    const auto c_ref = bt.require("is_reference");
    for (std::size_t r = 0; r < bt.rows.size(); ++r) {
      Bus b;
      b.id = bt.integer(r, c_id);
      b.region = c_region ? bt.cell(r, *c_region) : std::string{};
      b.base_load = c_load ? bt.number(r, *c_load) : 0.0;
      b.is_reference = parse_bool(bt.cell(r, c_ref), bt, r);
      buses.push_back(std::move(b));
    }
  }

  auto lt = csv::read(dir / "branch.csv");
  std::vector<Line> lines;
  {
    const auto c_id = lt.find("id");
    const auto c_from = lt.require("from");
    const auto c_to = lt.require("to");
    const auto c_x = lt.require("reactance");
    const auto c_rate = lt.require("rating");
    for (std::size_t r = 0; r < lt.rows.size(); ++r) {
      Line l;
      l.id = c_id ? lt.cell(r, *c_id) : std::to_string(r + 1);
      l.from_bus = lt.integer(r, c_from);
      l.to_bus = lt.integer(r, c_to);
      const double x = lt.number(r, c_x);
      if (!(x > 0))
        throw ParseError(lt.source, lt.lines[r], "branch reactance must be positive");
      l.susceptance = base_mva / x;
      l.flow_limit = lt.number(r, c_rate);
      lines.push_back(std::move(l));
    }
  }

  auto gt = csv::read(dir / "gen.csv");
  std::vector<Generator> gens;
  {
    const auto c_id = gt.require("id");
    const auto c_bus = gt.require("bus");
    const auto c_fuel = gt.require("fuel");
    const auto c_cost = gt.require("cost");
    const auto c_pmin = gt.require("pmin");
    const auto c_pmax = gt.require("pmax");
    const auto c_ci = gt.find("carbon_intensity");
    const auto c_status = gt.find("in_service");
    for (std::size_t r = 0; r < gt.rows.size(); ++r) {
      Generator g;
      g.id = gt.cell(r, c_id);
      g.bus = gt.integer(r, c_bus);
      g.fuel = lower(gt.cell(r, c_fuel));
      g.cost = gt.number(r, c_cost);
      g.p_min = gt.number(r, c_pmin);
      g.p_max = gt.number(r, c_pmax);
      if (c_ci && !gt.cell(r, *c_ci).empty())
        g.carbon_intensity = gt.number(r, *c_ci);
      else
        g.carbon_intensity = carbon_for(g.fuel, emissions, g.id);
      g.in_service = c_status ? parse_bool(gt.cell(r, *c_status), gt, r) : true;
      gens.push_back(std::move(g));
    }
  }

  return std::make_shared<const NetworkCase>(std::move(buses), std::move(lines), std::move(gens),
                                             std::vector<DataCenter>{}, base_mva);
}

// ---------------------------------------------------------------------------
// MATPOWER case file

struct MatpowerText
{
  std::string text;  // comments stripped, newlines kept
  std::string source;

  std::size_t line_of(std::size_t offset) const
  {
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
  }

  /// Position just after "mpc.<name> =", or npos.
  std::size_t find_field(const std::string& name) const
  {
    const std::string key = "mpc." + name;
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
      std::size_t p = pos + key.size();
      while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
      if (p < text.size() && text[p] == '=') return p + 1;
      pos += key.size();
    }
    return std::string::npos;
  }

  std::vector<std::vector<double>> matrix(const std::string& name, bool required) const
  {
    const auto start = find_field(name);
    if (start == std::string::npos) {
      if (required) throw ParseError(source, 0, "missing mpc." + name);
      return {};
    }
    const auto open = text.find('[', start);
    const auto close = text.find(']', open);
    if (open == std::string::npos || close == std::string::npos)
      throw ParseError(source, line_of(start), "mpc." + name + " is not a matrix");
    std::vector<std::vector<double>> rows;
    std::vector<double> row;
    std::size_t p = open + 1;
    auto flush = [&] {
      if (!row.empty()) rows.push_back(std::move(row));
      row.clear();
    };
    while (p < close) {
      const char c = text[p];
      if (c == ';' || c == '\n') {
        flush();
        ++p;
      } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
        ++p;
      } else {
        std::size_t q = p;
        while (q < close && !std::isspace(static_cast<unsigned char>(text[q])) && text[q] != ';'
               && text[q] != ',' && text[q] != '\n')
          ++q;
        const std::string tok = text.substr(p, q - p);
        double v = 0;
        if (tok == "Inf" || tok == "inf")
          v = std::numeric_limits<double>::infinity();
        else if (tok == "-Inf" || tok == "-inf")
          v = -std::numeric_limits<double>::infinity();
        else {
          char* end = nullptr;
          v = std::strtod(tok.c_str(), &end);
          if (end != tok.c_str() + tok.size())
            throw ParseError(source, line_of(p), "mpc." + name + ": bad number '" + tok + "'");
        }
        row.push_back(v);
        p = q;
      }
    }
    flush();
    return rows;
  }

  std::vector<std::string> cells(const std::string& name) const
  {
    const auto start = find_field(name);
    if (start == std::string::npos) return {};
    const auto open = text.find('{', start);
    const auto close = text.find('}', open);
    if (open == std::string::npos || close == std::string::npos)
      throw ParseError(source, line_of(start), "mpc." + name + " is not a cell array");
    std::vector<std::string> out;
    std::size_t p = open + 1;
    while (true) {
      auto a = text.find('\'', p);
      if (a == std::string::npos || a > close) break;
      auto b = text.find('\'', a + 1);
      if (b == std::string::npos || b > close)
        throw ParseError(source, line_of(a), "unterminated string in mpc." + name);
      out.push_back(text.substr(a + 1, b - a - 1));
      p = b + 1;
    }
    return out;
  }

  double scalar(const std::string& name, double fallback) const
  {
    const auto start = find_field(name);
    if (start == std::string::npos) return fallback;
    char* end = nullptr;
    const double v = std::strtod(text.c_str() + start, &end);
    if (end == text.c_str() + start) throw ParseError(source, line_of(start), "bad scalar mpc." + name);
    return v;
  }
};

MatpowerText read_matpower(const fs::path& file)
{
  std::ifstream in(file);
  if (!in) throw ParseError(file.string(), 0, "cannot open MATPOWER file");
  MatpowerText mp;
  mp.source = file.string();
  std::string line;
  while (std::getline(in, line)) {
    // strip comments, keeping '%' inside quoted strings
    bool quoted = false;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '\'') quoted = !quoted;
      if (line[i] == '%' && !quoted) {
        cut = i;
        break;
      }
    }
    mp.text.append(line, 0, cut);
    mp.text += '\n';
  }
  return mp;
}

/// Average incremental cost over the curve's range, $/MWh.
double linear_cost(const std::vector<double>& row, double p_min, double p_max, const std::string& src,
                   std::size_t k)
{
  if (row.size() < 4) throw ParseError(src, 0, "gencost row " + std::to_string(k + 1) + " too short");
  const int model = static_cast<int>(row[0]);
  const int n = static_cast<int>(row[3]);
  if (model == 1) {
    if (n < 1 || row.size() < 4 + 2 * static_cast<std::size_t>(n))
      throw ParseError(src, 0, "gencost row " + std::to_string(k + 1) + " has too few points");
    const double x0 = row[4], y0 = row[5];
    const double x1 = row[4 + 2 * (n - 1)], y1 = row[5 + 2 * (n - 1)];
    return x1 > x0 ? (y1 - y0) / (x1 - x0) : 0.0;
  }
  if (model == 2) {
    if (n < 1 || row.size() < 4 + static_cast<std::size_t>(n))
      throw ParseError(src, 0, "gencost row " + std::to_string(k + 1) + " has too few coefficients");
    auto eval = [&](double p) {
      double v = 0;
      for (int i = 0; i < n; ++i) v = v * p + row[4 + static_cast<std::size_t>(i)];
      return v;
    };
    if (p_max > p_min) return (eval(p_max) - eval(p_min)) / (p_max - p_min);
    double d = 0;  // derivative at p_max
    for (int i = 0; i < n - 1; ++i) d = d * p_max + (n - 1 - i) * row[4 + static_cast<std::size_t>(i)];
    return d;
  }
  throw ParseError(src, 0, "gencost model " + std::to_string(model) + " not supported");
}

CaseRef load_matpower(const fs::path& file, const EmissionTable& emissions)
{
  if (!fs::is_regular_file(file)) throw ParseError(file.string(), 0, "MATPOWER file does not exist");
  const auto mp = read_matpower(file);
  const double base_mva = mp.scalar("baseMVA", 100.0);
  const auto bus = mp.matrix("bus", true);
  const auto gen = mp.matrix("gen", true);
  const auto branch = mp.matrix("branch", true);
  const auto gencost = mp.matrix("gencost", false);
  const auto genfuel = mp.cells("genfuel");

  std::vector<Bus> buses;
  for (const auto& r : bus) {
    if (r.size() < 3) throw ParseError(mp.source, 0, "bus row too short");
    Bus b;
    b.id = static_cast<int>(r[0]);
    b.is_reference = static_cast<int>(r[1]) == 3;
    b.base_load = r[2];
    b.region = r.size() > 6 ? std::to_string(static_cast<int>(r[6])) : std::string{};
    buses.push_back(b);
  }
  std::vector<Line> lines;
  for (std::size_t k = 0; k < branch.size(); ++k) {
    const auto& r = branch[k];
    if (r.size() < 6) throw ParseError(mp.source, 0, "branch row too short");
    if (r.size() > 10 && r[10] == 0) continue;  // out of service
    Line l;
    l.id = std::to_string(k + 1);
    l.from_bus = static_cast<int>(r[0]);
    l.to_bus = static_cast<int>(r[1]);
    if (!(r[3] > 0)) throw ValidationError("branch " + l.id + " has non-positive reactance");
    l.susceptance = base_mva / r[3];
    l.flow_limit = r[5] > 0 ? r[5] : std::numeric_limits<double>::infinity();
    lines.push_back(l);
  }
  if (!gencost.empty() && gencost.size() < gen.size())
    throw ParseError(mp.source, 0, "gencost has fewer rows than gen");
  if (!genfuel.empty() && genfuel.size() != gen.size())
    throw ParseError(mp.source, 0, "genfuel length does not match gen");
  std::vector<Generator> gens;
  for (std::size_t k = 0; k < gen.size(); ++k) {
    const auto& r = gen[k];
    if (r.size() < 10) throw ParseError(mp.source, 0, "gen row too short");
    Generator g;
    g.id = "gen_" + std::to_string(k + 1);
    g.bus = static_cast<int>(r[0]);
    g.in_service = r[7] > 0;
    g.p_max = r[8];
    g.p_min = std::max(0.0, r[9]);
    g.cost = gencost.empty() ? 0.0 : linear_cost(gencost[k], g.p_min, g.p_max, mp.source, k);
    g.fuel = genfuel.empty() ? "unknown" : lower(genfuel[k]);
    g.carbon_intensity = carbon_for(g.fuel, emissions, g.id);
    gens.push_back(std::move(g));
  }
  return std::make_shared<const NetworkCase>(std::move(buses), std::move(lines), std::move(gens),
                                             std::vector<DataCenter>{}, base_mva);
}

}  // namespace

CaseRef load_case(const fs::path& path, CaseFormat format, const EmissionTable& emissions)
{
  switch (format) {
    case CaseFormat::rts_csv: return load_rts_csv(path, emissions);
    case CaseFormat::matpower_m: return load_matpower(path, emissions);
  }
  throw ValidationError("unknown case format");
}

// ---------------------------------------------------------------------------
// Time series

TimeSeries load_time_series(const fs::path& case_dir, const NetworkCase& network)
{
  const fs::path dir = case_dir / "timeseries";
  if (!fs::is_directory(dir)) throw ParseError(dir.string(), 0, "no timeseries directory");

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParseError(dir.string(), 0, "no time-series CSV files");

  std::unordered_map<std::string, std::size_t> gen_lookup;
  for (std::size_t g = 0; g < network.num_generators(); ++g)
    gen_lookup.emplace(network.generators()[g].id, g);

  // region -> (bus position, participation)
  std::map<std::string, std::vector<std::pair<std::size_t, double>>> regions;
  for (std::size_t i = 0; i < network.num_buses(); ++i)
    regions[network.buses()[i].region].emplace_back(i, network.buses()[i].base_load);
  for (auto& [name, members] : regions) {
    double total = 0;
    for (auto& m : members) total += m.second;
    for (auto& m : members)
      m.second = total > 0 ? m.second / total : 1.0 / static_cast<double>(members.size());
  }

  TimeSeries ts;
  std::vector<long long> seconds;
  bool have_load = false;
  std::vector<std::vector<double>> override_cols;

  for (const auto& file : files) {
    auto t = csv::read(file);
    const auto c_ts = t.require("timestamp");
    if (ts.timestamps.empty()) {
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        try {
          seconds.push_back(detail::parse_timestamp(t.cell(r, c_ts)));
        } catch (const ParseError& e) {
          throw ParseError(t.source, t.lines[r], e.what());
        }
        ts.timestamps.push_back(detail::format_timestamp(seconds.back()));
      }
      if (seconds.empty()) throw ParseError(t.source, 1, "no data rows");
      if (seconds.size() > 1) {
        const long long step = seconds[1] - seconds[0];
        if (step <= 0 || step % 60 != 0) throw ParseError(t.source, 3, "invalid time step");
        for (std::size_t r = 1; r < seconds.size(); ++r)
          if (seconds[r] - seconds[r - 1] != step)
            throw ParseError(t.source, t.lines[r], "non-uniform time step");
        ts.step_minutes = static_cast<int>(step / 60);
      }
      ts.bus_load = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(seconds.size()),
                                          static_cast<Eigen::Index>(network.num_buses()));
    } else {
      if (t.rows.size() != seconds.size())
        throw ParseError(t.source, 0, "row count differs from other time-series files");
      for (std::size_t r = 0; r < t.rows.size(); ++r)
        if (detail::parse_timestamp(t.cell(r, c_ts)) != seconds[r])
          throw ParseError(t.source, t.lines[r], "timestamp mismatch with other time-series files");
    }

    const bool is_load = file.stem() == "load";
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      if (c == c_ts) continue;
      const std::string& name = t.header[c];
      if (is_load) {
        have_load = true;
        if (name.starts_with("bus:")) {
          const int id = std::stoi(name.substr(4));
          if (!network.has_bus(id)) throw ParseError(t.source, 1, "unknown bus column '" + name + "'");
          const auto b = static_cast<Eigen::Index>(network.bus_index(id));
          for (std::size_t r = 0; r < t.rows.size(); ++r)
            ts.bus_load(static_cast<Eigen::Index>(r), b) += t.number(r, c);
        } else {
          auto it = regions.find(name);
          if (it == regions.end())
            throw ParseError(t.source, 1, "load column '" + name + "' matches no region");
          for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const double v = t.number(r, c);
            for (const auto& [b, share] : it->second)
              ts.bus_load(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(b)) += v * share;
          }
        }
      } else {
        auto it = gen_lookup.find(name);
        if (it == gen_lookup.end())
          throw ParseError(t.source, 1, "column '" + name + "' matches no generator id");
        if (std::find(ts.override_generators.begin(), ts.override_generators.end(), it->second)
            != ts.override_generators.end())
          throw ParseError(t.source, 1, "generator '" + name + "' has two availability series");
        ts.override_generators.push_back(it->second);
        std::vector<double> col(t.rows.size());
        for (std::size_t r = 0; r < t.rows.size(); ++r) col[r] = t.number(r, c);
        override_cols.push_back(std::move(col));
      }
    }
  }
  if (!have_load)
    for (std::size_t i = 0; i < network.num_buses(); ++i)
      ts.bus_load.col(static_cast<Eigen::Index>(i)).setConstant(network.buses()[i].base_load);

  ts.pmax_override.resize(static_cast<Eigen::Index>(seconds.size()),
                          static_cast<Eigen::Index>(override_cols.size()));
  for (std::size_t k = 0; k < override_cols.size(); ++k)
    for (std::size_t r = 0; r < seconds.size(); ++r)
      ts.pmax_override(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = override_cols[k][r];
  ts.validate(network);
  return ts;
}

}  // namespace carbonshift
