#include "ewel/errors.hpp"
#include "ewel/harness.hpp"
#include "ewel/plot.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

int main(int argc, char** argv)
{
  CLI::App app{ "Euler weak error laboratory" };
  app.require_subcommand(1);
  unsigned jobs = 1;
  std::string out;

  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string run_config;
  run->add_option("config", run_config, "TOML experiment config")->required();
  run->add_option("--jobs", jobs, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "Output directory (overrides output_dir)");

  auto* list = app.add_subcommand("list-models", "List the built-in models");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  std::string validate_config;
  validate->add_option("config", validate_config, "TOML experiment config")->required();

  auto* plot = app.add_subcommand("plot", "Render a sweep CSV as a log-log SVG");
  std::string csv_path;
  std::string series;
  double gamma = 0.5;
  plot->add_option("csv", csv_path, "Sweep CSV")->required();
  plot->add_option("--series", series, "test_function value to plot (default: first)");
  plot->add_option("--gamma", gamma, "Holder exponent for the gamma/2 guide");
  plot->add_option("--out", out, "SVG path (default: <csv>.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (*list) {
    for (const auto& [name, description] : ewel::list_models())
      std::cout << name << "\t" << description << "\n";
    return 0;
  }

  if (*validate) {
    try {
      const ewel::ExperimentConfig c = ewel::load_config(validate_config);
      std::cout << "ok " << c.name << " (" << ewel::to_string(c.kind) << ", config hash " << ewel::config_hash(c)
                << ")\n";
      return 0;
    } catch (const ewel::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  if (*plot) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) {
      std::cerr << "error: cannot open " << csv_path << "\n";
      return 2;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      std::vector<ewel::RatePoint> pts = ewel::read_sweep_series(ss.str(), series);
      // signed weak errors are plotted by magnitude, as in the run reports
      for (ewel::RatePoint& p : pts)
        p.error = std::abs(p.error);
      ewel::PlotOptions po;
      po.title = series;
      po.gamma = gamma;
      const std::string svg = ewel::emit_plot(pts, po);
      const std::string target = out.empty() ? csv_path + ".svg" : out;
      std::ofstream(target, std::ios::binary) << svg;
      std::cout << "wrote " << target << "\n";
      return 0;
    } catch (const ewel::ConfigError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    } catch (const ewel::NumericalFault& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 3;
    }
  }

  ewel::RunOptions options;
  options.jobs = jobs;
  if (!out.empty())
    options.out = out;
  const ewel::RunResult r = ewel::run_experiment(std::filesystem::path(run_config), options);
  for (const std::string& m : r.messages)
    std::cerr << m << "\n";
  if (r.exit_code != 2)
    std::cout << "wrote " << r.manifest.outputs.size() << " files to " << r.output_dir.string() << "\n";
  return r.exit_code;
}
