#include "ewel/errors.hpp"
#include "ewel/harness.hpp"
#include "ewel/plot.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace ewel;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(name = "small"
kind = "weak_error"
seed = 11
m_paths = 2000

[model]
name = "ou"
params = { theta = 1.0, mean = 0.0, sigma = 1.0 }

[grid]
horizon = 1.0
steps = [4, 8, 16, 32]
refinement_factor = 16
x0 = [1.0]

[measure]
test_functions = ["cos", "x0"]
)";

fs::path scratch(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("ewel_test_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write(const fs::path& dir, const std::string& name, const std::string& text)
{
  const fs::path p = dir / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string replace(std::string s, const std::string& from, const std::string& to)
{
  const std::size_t at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

int cli(const std::string& args)
{
  const std::string cmd = std::string(EWEL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_error(const std::string& text)
{
  try {
    parse_config(text, "test.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

} // namespace

TEST_CASE("config round trip and hash")
{
  const ExperimentConfig c = parse_config(kSmall);
  CHECK(c.name == "small");
  CHECK(c.kind == ExperimentKind::weak_error);
  CHECK(c.steps == std::vector<std::size_t>{ 4, 8, 16, 32 });
  CHECK(c.test_functions.size() == 2);
  const std::string again = to_toml(c);
  const ExperimentConfig d = parse_config(again);
  CHECK(to_toml(d) == again);
  CHECK(config_hash(d) == config_hash(c));
  CHECK(config_hash(c).size() == 64);
  // comments and key order do not change the hash
  const ExperimentConfig e = parse_config(replace(kSmall, "seed = 11\n", "# a comment\nseed = 11\n"));
  CHECK(config_hash(e) == config_hash(c));
  const ExperimentConfig f = parse_config(replace(kSmall, "seed = 11", "seed = 12"));
  CHECK(config_hash(f) != config_hash(c));
}

TEST_CASE("bundled configs validate")
{
  for (const auto& entry : fs::directory_iterator(EWEL_CONFIG_DIR)) {
    if (entry.path().extension() != ".toml")
      continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()));
  }
}

TEST_CASE("config errors name the field and line")
{
  const std::string unknown = config_error(replace(kSmall, "m_paths = 2000\n", "m_paths = 2000\nbogus = 1\n"));
  CHECK(unknown.find("test.toml:5") != std::string::npos);
  CHECK(unknown.find("bogus") != std::string::npos);

  const std::string missing = config_error(replace(kSmall, "seed = 11\n", ""));
  CHECK(missing.find("'seed'") != std::string::npos);

  CHECK(config_error(replace(kSmall, "steps = [4, 8, 16, 32]", "steps = [8, 4]")).find("steps") != std::string::npos);
  CHECK(config_error(replace(kSmall, "refinement_factor = 16", "refinement_factor = 8")).find("refinement_factor") !=
        std::string::npos);
  CHECK(config_error(replace(kSmall, "\"ou\"", "\"nope\"")).find("model") != std::string::npos);
  CHECK(config_error(replace(kSmall, "\"x0\"]", "\"x1\"]")).find("test_functions") != std::string::npos);
  CHECK(config_error("seed = [").find("test.toml") != std::string::npos);

  const std::string lq = R"(name = "lq"
kind = "mollifier"
seed = 1
m_paths = 10

[model]
name = "sign_drift"

[mollifier]
schedule = "fixed"
epsilons = [0.1, 0.05]
q = 1.0
)";
  CHECK(config_error(lq).find("q") != std::string::npos);
  CHECK_NOTHROW(parse_config(replace(lq, "q = 1.0", "q = 2.0")));
}

TEST_CASE("missing seed exits with a config error")
{
  const fs::path dir = scratch("seed");
  const fs::path cfg = write(dir, "c.toml", replace(kSmall, "seed = 11\n", ""));
  RunOptions o;
  o.out = dir / "out";
  const RunResult r = run_experiment(cfg, o);
  CHECK(r.exit_code == 2);
  REQUIRE(!r.messages.empty());
  CHECK(r.messages.front().find("seed") != std::string::npos);
  CHECK(cli(cfg.string().insert(0, "run ")) == 2);
  fs::remove_all(dir);
}

TEST_CASE("run writes a complete manifest")
{
  const fs::path dir = scratch("manifest");
  RunOptions o;
  o.out = dir;
  o.honor_env_seed = false;
  const RunResult r = run_experiment(parse_config(kSmall), o);
  REQUIRE(r.exit_code == 0);
  const nlohmann::json m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m.at("config_hash").get<std::string>() == config_hash(parse_config(kSmall)));
  CHECK(m.at("tool_version").get<std::string>() == tool_version());
  CHECK(m.contains("started"));
  CHECK(m.contains("finished"));
  std::set<std::string> listed;
  for (const auto& f : m.at("outputs"))
    listed.insert(f.get<std::string>());
  CHECK(listed.count("manifest.json") == 1);
  for (const std::string& f : { "config.toml", "sweep.csv" })
    CHECK(listed.count(f) == 1);
  std::size_t on_disk = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    ++on_disk;
    CHECK(listed.count(entry.path().filename().string()) == 1);
  }
  CHECK(on_disk == listed.size());
  for (const auto& j : m.at("jobs"))
    CHECK(j.at("status").get<std::string>() == "ok");
  // the stored config reproduces the hash
  CHECK(config_hash(load_config(dir / "config.toml")) == config_hash(parse_config(kSmall)));
  fs::remove_all(dir);
}

TEST_CASE("outputs do not depend on the job count")
{
  const fs::path a = scratch("jobs1");
  const fs::path b = scratch("jobs3");
  RunOptions o;
  o.honor_env_seed = false;
  o.out = a;
  o.jobs = 1;
  REQUIRE(run_experiment(parse_config(kSmall), o).exit_code == 0);
  o.out = b;
  o.jobs = 3;
  REQUIRE(run_experiment(parse_config(kSmall), o).exit_code == 0);
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json")
      continue;
    CAPTURE(name);
    CHECK(slurp(entry.path()) == slurp(b / name));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("EWEL_SEED overrides the config seed")
{
  const fs::path a = scratch("env_a");
  const fs::path b = scratch("env_b");
  RunOptions o;
  o.out = a;
  ::setenv("EWEL_SEED", "424242", 1);
  const RunResult r = run_experiment(parse_config(kSmall), o);
  REQUIRE(r.exit_code == 0);
  CHECK(load_config(a / "config.toml").seed == 424242);
  for (const JobRecord& j : r.manifest.jobs)
    CHECK(j.seed == 424242);
  ::setenv("EWEL_SEED", "-3", 1);
  o.out = b;
  CHECK(run_experiment(parse_config(kSmall), o).exit_code == 2);
  ::unsetenv("EWEL_SEED");
  o.honor_env_seed = true;
  REQUIRE(run_experiment(parse_config(kSmall), o).exit_code == 0);
  CHECK(slurp(a / "sweep.csv") != slurp(b / "sweep.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a numerical fault marks the job failed")
{
  // theta h far above 2: the fine Euler chain grows like (theta h)^N and
  // overflows, (1e8 / 128)^128 > 1e308
  const std::string text =
    replace(replace(replace(kSmall, "theta = 1.0", "theta = 1e8"), "steps = [4, 8, 16, 32]", "steps = [1, 2]"),
            "refinement_factor = 16", "refinement_factor = 64");
  const fs::path dir = scratch("fault");
  RunOptions o;
  o.out = dir;
  o.honor_env_seed = false;
  const RunResult r = run_experiment(parse_config(text), o);
  CHECK(r.exit_code == 3);
  bool failed = false;
  for (const JobRecord& j : r.manifest.jobs)
    failed = failed || (j.status == "failed" && !j.message.empty());
  CHECK(failed);
  CHECK(fs::exists(dir / "manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("acceptance miss exits with 1")
{
  const fs::path dir = scratch("miss");
  RunOptions o;
  o.out = dir;
  o.honor_env_seed = false;
  const RunResult r = run_experiment(parse_config(std::string(kSmall) + "\n[acceptance]\nmin_slope = 5.0\n"), o);
  CHECK(r.exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("plot with two points")
{
  const std::string svg = emit_plot({ { 0.1, 0.01, 0.0 }, { 0.01, 0.001, 0.0 } });
  CHECK(svg.rfind("<svg", 0) == 0);
  std::size_t circles = 0;
  for (std::size_t at = svg.find("class=\"point\""); at != std::string::npos; at = svg.find("class=\"point\"", at + 1))
    ++circles;
  CHECK(circles == 2);
  CHECK(svg.find("fitted slope 1.000") != std::string::npos);
  CHECK(svg.find("guide-half-gamma") != std::string::npos);
  CHECK(svg.find("guide-one") != std::string::npos);
  CHECK(svg.find("<!--") == std::string::npos);
  PlotOptions po;
  po.timestamp = true;
  CHECK(emit_plot({ { 0.1, 0.01, 0.0 }, { 0.01, 0.001, 0.0 } }, po).find("<!-- rendered") != std::string::npos);
}

TEST_CASE("plot annotation matches the rate fit")
{
  std::vector<RatePoint> pts{ { 0.125, 0.08, 0.002 }, { 0.0625, 0.05, 0.002 }, { 0.03125, 0.037, 0.002 }, { 0.015625, 0.025, 0.002 } };
  const RateFit fit = fit_rate(pts);
  char expected[64];
  std::snprintf(expected, sizeof(expected), "fitted slope %.3f", fit.slope);
  CHECK(emit_plot(pts).find(expected) != std::string::npos);
}

TEST_CASE("degenerate plots are faults")
{
  CHECK_THROWS_AS(emit_plot({ { 0.1, 0.01, 0.0 } }), NumericalFault);
  CHECK_THROWS_AS(emit_plot({ { 0.1, 0.01, 0.0 }, { 0.1, 0.02, 0.0 } }), NumericalFault);
  CHECK_THROWS_AS(emit_plot({ { 0.1, 0.01, 0.0 }, { 0.05, 0.01, 0.0 } }), NumericalFault);
}

TEST_CASE("sweep csv series reader")
{
  std::string series;
  const std::string csv = "model,h,epsilon,test_function,error,stderr,bias_bound,flags\n"
                          "ou,0.5,0,cos,0.1,0.01,0,\nou,0.5,0,x0,0.3,0.01,0,\nou,0.25,0,cos,0.05,0.01,0,\n";
  const std::vector<RatePoint> pts = read_sweep_series(csv, series);
  CHECK(series == "cos");
  REQUIRE(pts.size() == 2);
  CHECK(pts[1].h == 0.25);
  std::string other = "x0";
  CHECK(read_sweep_series(csv, other).size() == 1);
  std::string none;
  CHECK_THROWS_AS(read_sweep_series("a,b\n1,2\n", none), ConfigError);
}

TEST_CASE("command line exit codes")
{
  const fs::path dir = scratch("cli");
  CHECK(cli("list-models") == 0);
  CHECK(cli(std::string("validate ") + EWEL_CONFIG_DIR + "/constant_sanity.toml") == 0);
  const fs::path bad = write(dir, "bad.toml", replace(kSmall, "m_paths = 2000", "m_paths = -1"));
  CHECK(cli("validate " + bad.string()) == 2);
  CHECK(cli("validate " + (dir / "missing.toml").string()) == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("") == 2);
  const fs::path ok = write(dir, "ok.toml", kSmall);
  CHECK(cli("run " + ok.string() + " --jobs 2 --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "sweep.csv"));
  CHECK(cli("plot " + (dir / "out" / "sweep.csv").string() + " --series x0 --out " + (dir / "x0.svg").string()) == 0);
  CHECK(fs::exists(dir / "x0.svg"));
  fs::remove_all(dir);
}
