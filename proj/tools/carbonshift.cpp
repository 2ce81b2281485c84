#include "carbonshift/cli_report.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace carbonshift;

namespace {

// Loads the config, mapping failures to exit codes.
std::optional<cli::RunConfig> read_config(const std::string& path, int& code)
{
  try {
    return cli::load_config(path);
  } catch (const std::exception& e) {
    code = cli::report_error(e, std::cerr);
    return std::nullopt;
  }
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"carbonshift: DC OPF carbon sensitivities and data-center load shifting"};
  app.require_subcommand(1);

  std::string config_path;
  auto* validate = app.add_subcommand("validate", "check a run config and print the case dimensions");
  validate->add_option("config", config_path, "run config (JSON)")->required();

  std::size_t t = 0;
  std::string lmce_out;
  auto* lmce = app.add_subcommand("lmce", "per-bus lambda_co2 and LMP at one step");
  lmce->add_option("config", config_path, "run config (JSON)")->required();
  lmce->add_option("-t,--step", t, "time step");
  lmce->add_option("-o,--out", lmce_out, "output CSV (default stdout)");

  std::string output_dir;
  auto* run = app.add_subcommand("run", "simulate every configured strategy");
  run->add_option("config", config_path, "run config (JSON)")->required();
  run->add_option("-o,--output-dir", output_dir, "override output_dir");

  auto* sweep = app.add_subcommand("sweep", "simulate over the configured parameter grid");
  sweep->add_option("config", config_path, "run config (JSON)")->required();
  sweep->add_option("-o,--output-dir", output_dir, "override output_dir");

  cli::DatasetOptions ds;
  ds.synthetic.days = 365;
  std::string ds_config;
  auto* dataset = app.add_subcommand("dataset", "write a synthetic RTS-style bundle from case_RTS_GMLC.m");
  dataset->add_option("matpower", ds.matpower_file, "case_RTS_GMLC.m")->required();
  dataset->add_option("output", ds.output_dir, "bundle directory")->required();
  dataset->add_option("--days", ds.synthetic.days, "days to synthesize")->capture_default_str();
  dataset->add_option("--start", ds.synthetic.start, "first timestamp")->capture_default_str();
  dataset->add_option("--step-minutes", ds.synthetic.step_minutes, "resolution")->capture_default_str();
  dataset->add_option("--seed", ds.synthetic.seed, "random seed")->capture_default_str();
  dataset->add_option("--config-out", ds_config, "also write the reference run config here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitParse;
  }

  if (dataset->parsed()) {
    if (!ds_config.empty()) ds.config_out = ds_config;
    return cli::cmd_dataset(ds, std::cout, std::cerr);
  }

  int code = 0;
  auto config = read_config(config_path, code);
  if (!config) return code;
  if (!output_dir.empty()) config->output_dir = output_dir;

  if (validate->parsed()) return cli::cmd_validate(*config, std::cout, std::cerr);
  if (lmce->parsed()) {
    if (lmce_out.empty()) return cli::cmd_lmce(*config, t, std::cout, std::cerr);
    std::ofstream f(lmce_out);
    if (!f) {
      std::cerr << "error: cannot write " << lmce_out << '\n';
      return cli::kExitValidation;
    }
    return cli::cmd_lmce(*config, t, f, std::cerr);
  }
  if (run->parsed()) return cli::cmd_run(*config, std::cout, std::cerr);
  if (sweep->parsed()) return cli::cmd_sweep(*config, std::cout, std::cerr);
  return cli::kExitParse;
}
