#pragma once

#include "ewel/coefficients.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ewel {

//! Experiment kinds understood by run_experiment.
enum class ExperimentKind
{
  weak_error,    // coupled weak errors of test functions over a step sweep
  density,       // KDE density errors against the refined scheme
  decomposition, // the three mollification error components
  mollifier,     // coefficient deviations and derivative growth over epsilons
  parametrix,    // series densities, optionally continuous against discrete
};

std::string to_string(ExperimentKind k);

struct MollifierConfig
{
  std::string schedule = "none"; // none | fixed | balanced
  double epsilon = 0.0;          // fixed schedule
  std::vector<double> epsilons;  // mollifier kind
  std::size_t nodes = 24;
  double c_eta = 1.0;       // balanced schedule constant
  double table_spacing = 0; // 0 selects min(eps / 16, 0.005)
  double table_extent = 8;
  double q = 0.0; // L^q exponent, 0 when unused
};

struct ParametrixConfig
{
  double s = 0.0;
  double t = 1.0;
  std::vector<Vec> x;
  std::vector<Vec> y;
  int r_max = 4;
  std::size_t time_nodes = 64;
  std::size_t table_nodes = 32;
  std::size_t space_nodes = 48;
  double radius = 6.0;
  std::string mode = "continuous"; // continuous | discrete | both
};

struct AcceptanceConfig
{
  std::optional<double> min_slope;
  //! Every |error| within z_bound standard errors of zero (plus roundoff).
  std::optional<double> zero_within;
};

struct ExperimentConfig
{
  std::string name;
  ExperimentKind kind = ExperimentKind::weak_error;
  ModelSpec model;
  Regime regime = Regime::holder;
  std::uint64_t seed = 0;
  std::size_t m_paths = 0;
  std::string output_dir;

  double horizon = 1.0;
  std::vector<std::size_t> steps;
  std::size_t refinement_factor = 64;
  Vec x0{};

  std::vector<std::string> test_functions;
  std::vector<Vec> y_points;
  double bandwidth = 0.0;

  MollifierConfig mollifier;
  ParametrixConfig parametrix;
  AcceptanceConfig acceptance;
};

//! Reads and validates a TOML experiment config. Unknown keys, missing
//! required fields and inconsistent values throw ConfigError with the file,
//! line and field in the message.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");

//! Canonical TOML form: fixed key order, shortest round-trip numbers.
//! parse_config(to_toml(c)) reproduces c exactly.
std::string to_toml(const ExperimentConfig& config);

//! SHA-256 of the canonical form, lowercase hex.
std::string config_hash(const ExperimentConfig& config);

struct JobRecord
{
  std::string name;
  std::uint64_t seed = 0;
  std::string status; // ok | failed
  std::string message;
};

struct RunManifest
{
  std::string config_hash;
  std::string tool_version;
  std::string started; // ISO 8601 UTC
  std::string finished;
  std::vector<JobRecord> jobs;
  std::vector<std::string> outputs; // file names relative to the output directory
};

std::string manifest_json(const RunManifest& manifest);

struct RunOptions
{
  unsigned jobs = 1;
  std::optional<std::filesystem::path> out; // overrides output_dir
  bool honor_env_seed = true;               // EWEL_SEED
};

struct RunResult
{
  int exit_code = 0; // 0 ok, 1 acceptance miss, 2 config error, 3 numerical fault
  std::filesystem::path output_dir;
  RunManifest manifest;
  std::vector<std::string> messages;
};

//! Loads, runs and persists one experiment. Config errors are reported
//! through the exit code, not thrown.
RunResult run_experiment(const std::filesystem::path& config_path, const RunOptions& options = {});
RunResult run_experiment(ExperimentConfig config, const RunOptions& options = {});

std::string tool_version();

} // namespace ewel
