#include "carbonshift/simulator.hpp"

#include "carbonshift/sensitivity.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace carbonshift::sim {

using Eigen::Index;

std::string to_string(StrategyKind kind)
{
  switch (kind) {
    case StrategyKind::baseline: return "baseline";
    case StrategyKind::lambda_shift: return "lambda_shift";
    case StrategyKind::opt_shift: return "opt_shift";
  }
  return "unknown";
}

StrategyKind parse_strategy(const std::string& name)
{
  if (name == "baseline" || name == "none") return StrategyKind::baseline;
  if (name == "lambda_shift" || name == "lambda") return StrategyKind::lambda_shift;
  if (name == "opt_shift" || name == "opt") return StrategyKind::opt_shift;
  throw ValidationError("unknown strategy '" + name + "'");
}

std::string describe_flags(unsigned flags)
{
  static const std::pair<unsigned, const char*> names[] = {
      {kInfeasible, "infeasible"}, {kDegenerate, "degenerate"}, {kSingular, "singular"},
      {kClamped, "clamped"},       {kTimeLimit, "time_limit"},  {kBigMActive, "big_m_active"},
  };
  std::string out;
  for (const auto& [bit, name] : names)
    if (flags & bit) {
      if (!out.empty()) out += '|';
      out += name;
    }
  return out;
}

std::string to_string(SweepParameter p)
{
  switch (p) {
    case SweepParameter::gamma: return "gamma";
    case SweepParameter::epsilon: return "epsilon";
    case SweepParameter::alpha: return "alpha";
  }
  return "unknown";
}

SweepParameter parse_sweep_parameter(const std::string& name)
{
  if (name == "gamma") return SweepParameter::gamma;
  if (name == "epsilon") return SweepParameter::epsilon;
  if (name == "alpha") return SweepParameter::alpha;
  throw ValidationError("unknown sweep parameter '" + name + "'");
}

namespace {

ShiftPlan lambda_plan(const DispatchSolution& sol, const Snapshot& snap, const Strategy& s,
                      const lp::Tolerances& tol, unsigned& flags)
{
  const auto& net = *snap.network;
  try {
    const auto bundle = build_bundle(sol, net);
    const auto idx = net.data_center_bus_indices();
    Eigen::VectorXd lam(static_cast<Index>(idx.size())), lmp(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      lam[static_cast<Index>(i)] = bundle.lambda_co2[static_cast<Index>(idx[i])];
      lmp[static_cast<Index>(i)] = sol.nodal_prices[static_cast<Index>(idx[i])];
    }
    return solve_shift(lam, lmp, snap.dc_loads, net.data_centers(), s.params, tol);
  } catch (const SingularBasis&) {
    flags |= kSingular;
    return ShiftPlan::zero(net.num_data_centers(), s.params);
  }
}

std::optional<DispatchSolution> try_solve(const Snapshot& snap, const lp::Tolerances& tol)
{
  try {
    return solve_dcopf(snap, tol);
  } catch (const InfeasibleDispatch&) {
    return std::nullopt;
  }
}

}  // namespace

SimulationReport run(const CaseRef& network, const TimeSeries& series, const Strategy& strategy,
                     const RunOptions& opt)
{
  const auto start = std::chrono::steady_clock::now();
  const auto& net = *network;
  const auto& dcs = net.data_centers();
  const auto k = static_cast<Index>(dcs.size());
  series.validate(net);
  if (strategy.kind != StrategyKind::baseline) strategy.params.validate(dcs.size());
  if (opt.cadence == 0) throw DomainError("cadence must be at least 1");
  if (opt.first_step > series.steps()) throw IndexError("first step beyond the series");
  const std::size_t end =
      opt.steps ? std::min(series.steps(), opt.first_step + *opt.steps) : series.steps();

  Eigen::VectorXd loads = opt.initial_loads ? *opt.initial_loads : initial_dc_loads(net);
  if (loads.size() != k) throw DimensionError("initial loads need one entry per data center");
  for (Index i = 0; i < k; ++i)
    if (loads[i] < -1e-9 || loads[i] > dcs[static_cast<std::size_t>(i)].cap_max + 1e-9)
      throw DomainError("initial data-center load outside [0, cap_max]");

  SimulationReport rep;
  rep.strategy = strategy;
  rep.step_minutes = series.step_minutes;
  rep.diagnostic = opt.diagnostic;
  const double hours = series.step_minutes / 60.0;
  std::size_t failures = 0;
  std::optional<DispatchSolution> cached;

  for (std::size_t t = opt.first_step; t < end; ++t) {
    StepRecord rec;
    rec.t = t;
    if (t < series.timestamps.size()) rec.timestamp = series.timestamps[t];
    rec.dc_loads = loads;
    rec.delta_pd = Eigen::VectorXd::Zero(k);
    const Snapshot snap = snapshot(network, series, t, loads);
    rec.served_mw = snap.bus_load.sum();

    std::optional<DispatchSolution> sol = std::move(cached);
    cached.reset();
    if (!sol) {
      try {
        sol = solve_dcopf(snap, opt.tol);
      } catch (const InfeasibleDispatch& e) {
        rec.flags |= kInfeasible;
        ++failures;
        if (opt.max_failures && failures >= *opt.max_failures)
          throw StepFailure("step " + std::to_string(t) + ": " + e.what(), t);
        if (opt.on_step) opt.on_step(rec);
        rep.steps.push_back(std::move(rec));
        continue;
      }
    }
    rec.cost = sol->objective * hours;
    rec.co2 = sol->emissions * hours;
    if (sol->degenerate()) rec.flags |= kDegenerate;

    ShiftPlan plan = ShiftPlan::zero(dcs.size(), strategy.params);
    switch (strategy.kind) {
      case StrategyKind::baseline: break;
      case StrategyKind::lambda_shift: plan = lambda_plan(*sol, snap, strategy, opt.tol, rec.flags); break;
      case StrategyKind::opt_shift:
        if ((t - opt.first_step) % opt.cadence == 0) {
          const auto b = solve_opt_shift(snap, dcs, strategy.params, opt.bilevel);
          plan = b.plan;
          if (b.status == lp::SolveStatus::time_limit) rec.flags |= kTimeLimit;
          if (b.big_m_active) rec.flags |= kBigMActive;
        }
        break;
    }
    rec.delta_pd = plan.delta_pd;
    rec.transfer_mw = plan.volume();
    rec.half_abs_mw = 0.5 * plan.delta_pd.lpNorm<1>();
    rec.pred_dco2 = plan.predicted_dco2;
    rec.pred_dcost = plan.predicted_dcost;

    Eigen::VectorXd next = loads + plan.delta_pd;
    for (Index i = 0; i < k; ++i) {
      const double cap = dcs[static_cast<std::size_t>(i)].cap_max;
      if (next[i] < 0.0 || next[i] > cap) {
        if (next[i] < -1e-9 || next[i] > cap + 1e-9) rec.flags |= kClamped;
        next[i] = std::clamp(next[i], 0.0, cap);
      }
    }

    if (opt.diagnostic && t + 1 < series.steps()) {
      const bool moved = (next - loads).cwiseAbs().maxCoeff() > 0.0;
      auto without = try_solve(snapshot(network, series, t + 1, loads), opt.tol);
      auto with = moved ? try_solve(snapshot(network, series, t + 1, next), opt.tol) : without;
      if (with && without) {
        rec.act_dco2 = with->emissions - without->emissions;
        rec.act_dcost = with->objective - without->objective;
      }
      if (t + 1 < end) cached = std::move(with);
    }
    loads = next;
    if (opt.on_step) opt.on_step(rec);
    rep.steps.push_back(std::move(rec));
  }

  for (const auto& r : rep.steps) {
    rep.total_cost += r.cost;
    rep.total_co2 += r.co2;
    rep.total_shift_mw += r.transfer_mw;
    rep.total_half_abs_mw += r.half_abs_mw;
    rep.served_mw_sum += r.served_mw;
    if (r.flags & kInfeasible) ++rep.infeasible_steps;
    if (r.flags & kDegenerate) ++rep.degenerate_steps;
    if (r.flags & ~static_cast<unsigned>(kDegenerate)) ++rep.flagged_steps;
  }
  rep.served_mwh = rep.served_mw_sum * hours;
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

std::vector<AccuracyPoint> accuracy_diagnostics(const SimulationReport& report)
{
  if (!report.diagnostic) throw ValidationError("accuracy diagnostics need a diagnostic run");
  std::vector<AccuracyPoint> out;
  for (const auto& r : report.steps) {
    if (r.delta_pd.size() == 0 || r.delta_pd.cwiseAbs().maxCoeff() == 0.0) continue;
    if (std::isnan(r.act_dco2)) continue;
    out.push_back({r.t, r.pred_dco2, r.act_dco2});
  }
  return out;
}

std::vector<SweepEntry> sweep(const CaseRef& network, const TimeSeries& series, const Strategy& family,
                              SweepParameter parameter, const std::vector<double>& values,
                              const RunOptions& options, unsigned threads)
{
  std::vector<SweepEntry> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& e = out[i];
    e.value = values[i];
    e.strategy = family;
    switch (parameter) {
      case SweepParameter::gamma: e.strategy.params.gamma = values[i]; break;
      case SweepParameter::epsilon: e.strategy.params.epsilon = values[i]; break;
      case SweepParameter::alpha: e.strategy.params.alpha = values[i]; break;
    }
  }
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, values.size())));

  RunOptions quiet = options;
  std::mutex callback;
  if (options.on_step && threads > 1)
    quiet.on_step = [&](const StepRecord& r) {
      std::lock_guard lock(callback);
      options.on_step(r);
    };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < out.size(); i = next++) {
      try {
        out[i].report = run(network, series, out[i].strategy, quiet);
      } catch (const std::exception& ex) {
        out[i].error = ex.what();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

std::vector<FrontierRow> frontier(const std::vector<SweepEntry>& entries)
{
  std::vector<FrontierRow> rows;
  for (const auto& e : entries)
    if (e.report) rows.push_back({e.strategy.params.alpha, e.report->total_cost, e.report->total_co2});
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.alpha < b.alpha; });
  return rows;
}

}  // namespace carbonshift::sim
