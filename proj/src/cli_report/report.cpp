#include "carbonshift/cli_report.hpp"
#include "carbonshift/csv.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace carbonshift::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Empty field for "not computed".
std::string num_or_empty(double v) { return std::isnan(v) ? std::string() : csv::format_number(v); }

void join(std::ostream& out, const std::vector<std::string>& cols)
{
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

}  // namespace

std::vector<std::string> steps_csv_columns(std::size_t k)
{
  std::vector<std::string> cols{"t", "timestamp"};
  for (std::size_t i = 1; i <= k; ++i) cols.push_back("dc_load_" + std::to_string(i));
  for (const char* c : {"cost", "co2", "shift_abs", "pred_dco2", "act_dco2", "flags"}) cols.emplace_back(c);
  return cols;
}

void write_step_row(std::ostream& out, const sim::StepRecord& r)
{
  out << r.t << ',' << r.timestamp;
  for (Eigen::Index i = 0; i < r.dc_loads.size(); ++i) out << ',' << csv::format_number(r.dc_loads[i]);
  out << ',' << csv::format_number(r.cost) << ',' << csv::format_number(r.co2) << ','
      << csv::format_number(r.transfer_mw) << ',' << csv::format_number(r.pred_dco2) << ','
      << num_or_empty(r.act_dco2) << ',' << sim::describe_flags(r.flags) << '\n';
}

void write_steps_header(std::ostream& out, std::size_t data_centers) { join(out, steps_csv_columns(data_centers)); }

void write_steps_csv(std::ostream& out, const sim::SimulationReport& rep)
{
  const std::size_t k = rep.steps.empty() ? 0 : static_cast<std::size_t>(rep.steps.front().dc_loads.size());
  write_steps_header(out, k);
  for (const auto& r : rep.steps) write_step_row(out, r);
}

json summary_json(const sim::SimulationReport& rep)
{
  const double hours = rep.step_minutes / 60.0;
  double pred = 0.0, act = 0.0, pred_cost = 0.0, act_cost = 0.0;
  for (const auto& r : rep.steps) {
    pred += r.pred_dco2 * hours;
    pred_cost += r.pred_dcost * hours;
    if (!std::isnan(r.act_dco2)) act += r.act_dco2 * hours;
    if (!std::isnan(r.act_dcost)) act_cost += r.act_dcost * hours;
  }
  json j;
  j["strategy"] = sim::to_string(rep.strategy.kind);
  j["params"] = to_json(rep.strategy.params);
  j["total_cost"] = rep.total_cost;
  j["total_co2"] = rep.total_co2;
  j["total_shift_mw"] = rep.total_shift_mw;
  j["served_mw_sum"] = rep.served_mw_sum;
  j["served_mwh"] = rep.served_mwh;
  j["steps"] = rep.steps.size();
  j["runtime_s"] = rep.runtime_s;
  // Sums of hourly rates over steps, the Table-I style convention.
  j["cost_rate_sum"] = hours > 0 ? rep.total_cost / hours : 0.0;
  j["co2_rate_sum"] = hours > 0 ? rep.total_co2 / hours : 0.0;
  j["total_half_abs_mw"] = rep.total_half_abs_mw;
  j["step_minutes"] = rep.step_minutes;
  j["first_step"] = rep.steps.empty() ? 0 : rep.steps.front().t;
  j["infeasible_steps"] = rep.infeasible_steps;
  j["degenerate_steps"] = rep.degenerate_steps;
  j["flagged_steps"] = rep.flagged_steps;
  j["diagnostic"] = rep.diagnostic;
  j["predicted_dco2"] = pred;
  j["predicted_dcost"] = pred_cost;
  if (rep.diagnostic) {
    j["actual_dco2"] = act;
    j["actual_dcost"] = act_cost;
  }
  return j;
}

void validate_summary(const json& j)
{
  if (!j.is_object()) throw ValidationError("summary: expected an object");
  const auto need = [&](const char* key, auto&& check, const char* type) {
    const auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string("summary: missing key '") + key + "'");
    if (!check(*it)) throw ValidationError(std::string("summary: '") + key + "' must be " + type);
  };
  const auto number = [](const json& v) { return v.is_number(); };
  const auto count = [](const json& v) { return v.is_number_unsigned(); };
  need("strategy", [](const json& v) {
    return v.is_string() && (v == "baseline" || v == "lambda_shift" || v == "opt_shift");
  }, "a strategy name");
  need("params", [](const json& v) {
    return v.is_object() && v.contains("epsilon") && v.contains("gamma") && v.contains("alpha");
  }, "an object with epsilon, gamma, alpha");
  for (const char* key : {"total_cost", "total_co2", "total_shift_mw", "served_mw_sum", "served_mwh", "runtime_s"})
    need(key, number, "a number");
  need("steps", count, "a nonnegative integer");
  if (j["total_shift_mw"].get<double>() < 0.0) throw ValidationError("summary: total_shift_mw must be >= 0");
  if (j["runtime_s"].get<double>() < 0.0) throw ValidationError("summary: runtime_s must be >= 0");
}

void write_frontier_csv(std::ostream& out, const std::vector<sim::FrontierRow>& rows)
{
  out << "alpha,total_cost,total_co2\n";
  for (const auto& r : rows)
    out << csv::format_number(r.alpha) << ',' << csv::format_number(r.total_cost) << ','
        << csv::format_number(r.total_co2) << '\n';
}

std::vector<std::string> sweep_csv_columns(sim::SweepParameter p)
{
  return {sim::to_string(p), "strategy",  "total_cost",     "total_co2", "total_shift_mw",
          "pred_dco2",       "act_dco2",  "pred_dcost",     "act_dcost", "error"};
}

void write_sweep_csv(std::ostream& out, sim::SweepParameter p, const std::vector<sim::SweepEntry>& entries)
{
  join(out, sweep_csv_columns(p));
  for (const auto& e : entries) {
    out << csv::format_number(e.value) << ',' << sim::to_string(e.strategy.kind);
    if (!e.report) {
      std::string msg = e.error;
      for (auto& ch : msg)
        if (ch == '"') ch = '\'';
      out << ",,,,,,,,\"" << msg << "\"\n";
      continue;
    }
    const auto s = summary_json(*e.report);
    const auto field = [&](const char* key) {
      return s.contains(key) ? csv::format_number(s[key].get<double>()) : std::string();
    };
    out << ',' << field("total_cost") << ',' << field("total_co2") << ',' << field("total_shift_mw") << ','
        << field("predicted_dco2") << ',' << field("actual_dco2") << ',' << field("predicted_dcost") << ','
        << field("actual_dcost") << ",\n";
  }
}

void print_summary_table(std::ostream& out, const std::vector<SummaryRow>& rows)
{
  std::size_t w = 8;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  const auto flags = out.flags();
  out << std::left << std::setw(static_cast<int>(w)) << "Strategy" << std::right << std::setw(18) << "Cost ($)"
      << std::setw(18) << "Emissions (t)" << std::setw(20) << "Total shifts (MW)" << '\n';
  out << std::fixed << std::setprecision(1);
  for (const auto& r : rows)
    out << std::left << std::setw(static_cast<int>(w)) << r.label << std::right << std::setw(18) << r.total_cost
        << std::setw(18) << r.total_co2 << std::setw(20) << r.total_shift_mw << '\n';
  out.flags(flags);
}

void write_report(const fs::path& dir, const sim::SimulationReport& rep)
{
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "steps.csv");
    if (!f) throw Error("cannot write " + (dir / "steps.csv").string());
    write_steps_csv(f, rep);
  }
  std::ofstream f(dir / "summary.json");
  if (!f) throw Error("cannot write " + (dir / "summary.json").string());
  f << summary_json(rep).dump(2) << '\n';
}

}  // namespace carbonshift::cli
