// Command-line front end: decompose, forecast and simulate.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "str/app/config.hpp"
#include "str/app/runs.hpp"

namespace {

struct Common {
  std::string config;
  std::string output;
  std::int64_t seed = -1;
  std::size_t threads = 1;
  int verbose = 0;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("-c,--config", c.config, "YAML run configuration");
  if (config_required) opt->required();
  sub->add_option("-o,--output", c.output, "Output directory (overrides the config)");
  sub->add_option("--seed", c.seed, "Master seed (overrides the config)")->check(CLI::NonNegativeNumber);
  sub->add_option("-j,--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("-v,--verbose", c.verbose, "More progress messages (repeatable)");
}

str::app::RunOptions run_options(const Common& c) {
  str::app::RunOptions o;
  if (!c.output.empty()) o.output = c.output;
  if (c.seed >= 0) o.seed = static_cast<std::uint64_t>(c.seed);
  o.threads = c.threads;
  o.verbosity = c.verbose;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Seasonal-trend decomposition by regularized regression"};
  app.require_subcommand(1);
  Common common;
  auto* decompose = app.add_subcommand("decompose", "Decompose a series into trend, seasonal, covariate and remainder parts");
  auto* forecast = app.add_subcommand("forecast", "Forecast a series by fitting with missing future values");
  auto* simulate = app.add_subcommand("simulate", "Run the simulated-data RMSE experiment");
  add_common(decompose, common, true);
  add_common(forecast, common, true);
  add_common(simulate, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : str::app::exit_config;
  }

  return str::app::guarded([&] {
    const auto opts = run_options(common);
    str::app::RunConfig cfg;
    if (!common.config.empty()) cfg = str::app::load_config(common.config);
    if (*decompose) {
      str::app::run_decompose(cfg, opts);
    } else if (*forecast) {
      str::app::run_forecast(cfg, opts);
    } else {
      str::app::run_simulate(cfg, opts);
    }
  });
}
