#include "carbonshift/cli_report.hpp"
#include "carbonshift/csv.hpp"
#include "carbonshift/sensitivity.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>

namespace carbonshift::cli {

namespace fs = std::filesystem;

namespace {

std::string thousands(std::size_t n)
{
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

bool hit_time_limit(const sim::SimulationReport& rep)
{
  for (const auto& r : rep.steps)
    if (r.flags & sim::kTimeLimit) return true;
  return false;
}

std::ofstream open_out(const fs::path& file)
{
  fs::create_directories(file.parent_path());
  std::ofstream f(file);
  if (!f) throw Error("cannot write " + file.string());
  return f;
}

void write_summary(const fs::path& dir, const sim::SimulationReport& rep)
{
  auto f = open_out(dir / "summary.json");
  f << summary_json(rep).dump(2) << '\n';
}

void write_table_csv(const fs::path& file, const std::vector<SummaryRow>& rows)
{
  auto f = open_out(file);
  f << "strategy,total_cost,total_co2,total_shift_mw\n";
  for (const auto& r : rows)
    f << r.label << ',' << csv::format_number(r.total_cost) << ',' << csv::format_number(r.total_co2) << ','
      << csv::format_number(r.total_shift_mw) << '\n';
}

SummaryRow row_of(const std::string& label, const sim::SimulationReport& rep)
{
  return {label, rep.total_cost, rep.total_co2, rep.total_shift_mw};
}

// A run that streams steps.csv as it goes, so a failure leaves the rows so far.
sim::SimulationReport streamed_run(const LoadedCase& in, const sim::Strategy& strategy, sim::RunOptions opt,
                                   const fs::path& dir)
{
  auto steps = open_out(dir / "steps.csv");
  write_steps_header(steps, in.network->num_data_centers());
  opt.on_step = [&](const sim::StepRecord& r) { write_step_row(steps, r); };
  try {
    auto rep = sim::run(in.network, in.series, strategy, opt);
    steps.flush();
    write_summary(dir, rep);
    return rep;
  } catch (...) {
    steps.flush();
    throw;
  }
}

std::vector<std::string> unique_labels(const std::vector<sim::StrategyKind>& kinds)
{
  std::vector<std::string> out;
  std::set<std::string> used;
  for (auto k : kinds) {
    std::string label = sim::to_string(k);
    for (int n = 2; used.contains(label); ++n) label = sim::to_string(k) + "_" + std::to_string(n);
    used.insert(label);
    out.push_back(label);
  }
  return out;
}

}  // namespace

int report_error(const std::exception& e, std::ostream& err)
{
  err << "error: " << e.what() << '\n';
  if (dynamic_cast<const ParseError*>(&e)) return kExitParse;
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const IndexError*>(&e)
      || dynamic_cast<const DomainError*>(&e) || dynamic_cast<const DimensionError*>(&e))
    return kExitValidation;
  return kExitNumerical;
}

int cmd_validate(const RunConfig& config, std::ostream& out, std::ostream& err)
{
  try {
    const auto in = load_inputs(config);
    const auto& net = *in.network;
    const std::size_t horizon = in.series.steps();
    out << "case: " << config.case_path.string() << " (" << to_string(config.case_format) << ")\n";
    out << net.num_buses() << " buses / " << net.num_lines() << " lines / " << net.num_generators()
        << " generators / " << net.num_data_centers() << " data centers / " << thousands(horizon) << " steps\n";
    out << "step: " << in.series.step_minutes << " min";
    if (!in.series.timestamps.empty())
      out << ", " << in.series.timestamps.front() << " .. " << in.series.timestamps.back();
    out << '\n';
    const std::size_t end = config.steps ? std::min(horizon, config.first_step + *config.steps) : horizon;
    out << "window: steps " << config.first_step << " .. " << end << " (" << thousands(end - config.first_step)
        << " steps)\n";
    if (net.num_data_centers() > 0) {
      out << "data centers:\n";
      out << std::setw(4) << "#" << std::setw(8) << "bus" << std::setw(14) << "initial_mw" << std::setw(14)
          << "shift_base" << std::setw(12) << "cap_max" << '\n';
      const auto flags = out.flags();
      out << std::fixed << std::setprecision(1);
      for (std::size_t i = 0; i < net.num_data_centers(); ++i) {
        const auto& d = net.data_centers()[i];
        out << std::setw(4) << i + 1 << std::setw(8) << d.bus << std::setw(14) << d.initial_load << std::setw(14)
            << d.shift_base << std::setw(12) << d.cap_max << '\n';
      }
      out.flags(flags);
    }
    out << "strategies:";
    for (auto s : config.strategies) out << ' ' << sim::to_string(s);
    out << "\nparams: gamma " << config.gamma << ", epsilon " << config.epsilon << ", alpha " << config.alpha
        << '\n';
    if (config.sweep) {
      out << "sweep: " << sim::to_string(config.sweep->parameter) << " over " << config.sweep->values.size()
          << " values\n";
    }
    out << "ok\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

int cmd_lmce(const RunConfig& config, std::size_t t, std::ostream& out, std::ostream& err)
{
  try {
    const auto in = load_inputs(config);
    if (t >= in.series.steps())
      throw IndexError("t = " + std::to_string(t) + " outside the horizon of " + std::to_string(in.series.steps())
                       + " steps");
    const auto snap = snapshot(in.network, in.series, t, initial_dc_loads(*in.network));
    const auto sol = solve_dcopf(snap, config.tolerances);
    const auto bundle = build_bundle(sol, *in.network);
    write_lmce_csv(out, bundle, sol, *in.network);
    if (bundle.degenerate) err << "warning: degenerate optimum, sensitivities depend on the chosen basis\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

int cmd_run(const RunConfig& config, std::ostream& out, std::ostream& err)
{
  try {
    const auto in = load_inputs(config);
    const auto params = config.shift_params();
    const auto opt = config.run_options();
    const auto labels = unique_labels(config.strategies);
    std::vector<SummaryRow> rows;
    bool time_limit = false;
    for (std::size_t i = 0; i < config.strategies.size(); ++i) {
      const sim::Strategy s{config.strategies[i], params};
      const auto rep = streamed_run(in, s, opt, config.output_dir / labels[i]);
      time_limit = time_limit || hit_time_limit(rep);
      if (rep.infeasible_steps > 0)
        err << labels[i] << ": " << rep.infeasible_steps << " infeasible steps skipped\n";
      rows.push_back(row_of(labels[i], rep));
    }
    print_summary_table(out, rows);
    write_table_csv(config.output_dir / "table.csv", rows);
    if (time_limit) {
      err << "warning: some opt-shift steps stopped at the time limit with an incumbent\n";
      return kExitTimeLimit;
    }
    return kExitOk;
  } catch (const sim::StepFailure& e) {
    err << "error: " << e.what() << " (partial steps.csv written)\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

int cmd_sweep(const RunConfig& config, std::ostream& out, std::ostream& err)
{
  try {
    if (!config.sweep) throw ValidationError("sweep command needs a 'sweep' block");
    const auto in = load_inputs(config);
    const auto params = config.shift_params();
    const auto opt = config.run_options();
    const auto& sw = *config.sweep;
    const std::string pname = sim::to_string(sw.parameter);

    std::vector<SummaryRow> rows;
    bool time_limit = false, failed = false;
    std::vector<sim::StrategyKind> swept;
    for (auto k : config.strategies) {
      if (k == sim::StrategyKind::baseline) {
        const auto rep = sim::run(in.network, in.series, sim::Strategy::baseline(), opt);
        write_report(config.output_dir / "baseline", rep);
        rows.push_back(row_of("baseline", rep));
      } else if (std::find(swept.begin(), swept.end(), k) == swept.end()) {
        swept.push_back(k);
      }
    }
    if (swept.empty()) throw ValidationError("sweep needs a lambda_shift or opt_shift strategy");

    std::vector<sim::SweepEntry> all;
    for (auto k : swept) {
      const std::string sname = sim::to_string(k);
      auto entries = sim::sweep(in.network, in.series, sim::Strategy{k, params}, sw.parameter, sw.values, opt,
                                config.threads);
      for (const auto& e : entries) {
        const std::string label = sname + "_" + pname + "=" + csv::format_number(e.value);
        if (!e.report) {
          err << label << ": " << e.error << '\n';
          failed = true;
          continue;
        }
        write_report(config.output_dir / label, *e.report);
        time_limit = time_limit || hit_time_limit(*e.report);
        rows.push_back(row_of(label, *e.report));
      }
      if (sw.parameter == sim::SweepParameter::alpha) {
        const fs::path file =
            config.output_dir / (swept.size() == 1 ? std::string("frontier.csv") : "frontier_" + sname + ".csv");
        auto f = open_out(file);
        write_frontier_csv(f, sim::frontier(entries));
      }
      all.insert(all.end(), entries.begin(), entries.end());
    }
    {
      auto f = open_out(config.output_dir / "sweep.csv");
      write_sweep_csv(f, sw.parameter, all);
    }
    print_summary_table(out, rows);
    write_table_csv(config.output_dir / "table.csv", rows);
    if (failed) return kExitNumerical;
    if (time_limit) {
      err << "warning: some opt-shift steps stopped at the time limit with an incumbent\n";
      return kExitTimeLimit;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

int cmd_dataset(const DatasetOptions& o, std::ostream& out, std::ostream& err)
{
  try {
    if (!fs::is_regular_file(o.matpower_file))
      throw ValidationError("matpower case not found: " + o.matpower_file.string());
    if (o.synthetic.days < 1) throw ValidationError("days must be at least 1");
    if (o.synthetic.step_minutes < 1 || 1440 % o.synthetic.step_minutes != 0)
      throw ValidationError("step_minutes must divide a day");
    const auto mp = load_case(o.matpower_file, CaseFormat::matpower_m);
    const auto rc = rts::convert_matpower_case(*mp);
    const auto data = rts::synthesize(*rc, o.synthetic);
    rts::write_bundle(o.output_dir, *rc, data);
    out << "wrote " << o.output_dir.string() << ": " << rc->num_buses() << " buses / " << rc->num_lines()
        << " lines / " << rc->num_generators() << " generators / " << thousands(data.timestamps.size())
        << " steps\n";
    if (o.config_out) {
      const fs::path cfg_dir = fs::absolute(*o.config_out).parent_path();
      auto c = reference_config(fs::absolute(o.output_dir).lexically_relative(cfg_dir));
      c.seed = o.synthetic.seed;
      auto f = open_out(fs::absolute(*o.config_out));
      f << to_json(c).dump(2) << '\n';
      out << "wrote " << o.config_out->string() << '\n';
    }
    return kExitOk;
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

}  // namespace carbonshift::cli
