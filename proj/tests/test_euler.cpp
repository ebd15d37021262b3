#include "ewel/errors.hpp"
#include "ewel/euler.hpp"
#include "ewel/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace ewel;

namespace {

struct Moments
{
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v)
{
  Moments m;
  for (double x : v)
    m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v)
    m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

//! drift x^3 and unit diffusion; explodes for large starting points
class Cubic final : public CoefficientField
{
public:
  Cubic()
    : CoefficientField(1, Regime::holder, 1.0, FieldBounds{ 1.0, 1.0, 1.0 })
  {
  }
  std::string name() const override { return "cubic"; }
  void drift(double, std::span<const double> x, std::span<double> b) const override { b[0] = x[0] * x[0] * x[0]; }
  void sigma(double, std::span<const double>, std::span<double> s) const override { s[0] = 1.0; }
};

//! drift -theta x and zero diffusion
class Decay final : public CoefficientField
{
public:
  explicit Decay(double theta)
    : CoefficientField(1, Regime::holder, 1.0, FieldBounds{ 1.0, 1.0, 1.0 })
    , theta_(theta)
  {
  }
  std::string name() const override { return "decay"; }
  void drift(double, std::span<const double> x, std::span<double> b) const override { b[0] = -theta_ * x[0]; }
  void sigma(double, std::span<const double>, std::span<double> s) const override { s[0] = 0.0; }

private:
  double theta_;
};

double normal_cdf(double x)
{
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

} // namespace

TEST_CASE("philox known answers")
{
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::apply(C{ 0, 0, 0, 0 }, { 0, 0 }) == C{ 0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8 });
  CHECK(Philox4x32::apply(C{ 0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff }, { 0xffffffff, 0xffffffff }) ==
        C{ 0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd });
  CHECK(Philox4x32::apply(C{ 0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344 }, { 0xa4093822, 0x299f31d0 }) ==
        C{ 0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1 });
}

TEST_CASE("normals pass a Kolmogorov-Smirnov test")
{
  std::vector<double> z;
  for (std::uint64_t p = 0; p < 50000; ++p) {
    const auto [a, b] = normal_pair(42, stream_id(Stream::synthetic), p, 3);
    z.push_back(a);
    z.push_back(b);
  }
  std::sort(z.begin(), z.end());
  double d = 0.0;
  const double n = static_cast<double>(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = normal_cdf(z[i]);
    d = std::max({ d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f });
  }
  // 1% critical value of sqrt(n) D is 1.628
  CHECK(d * std::sqrt(n) < 1.628);
}

TEST_CASE("grid times are exact")
{
  const GridSchedule g(0.7, 7);
  CHECK(g.time(7) == 0.7);
  CHECK(g.time(0) == 0.0);
  CHECK(g.h() == doctest::Approx(0.1));
  CHECK(g.floor_index(0.7) == 7);
  CHECK(g.floor_index(0.25) == 2);
  CHECK_THROWS_AS(GridSchedule(0.0, 4), ConfigError);
  CHECK_THROWS_AS(GridSchedule(1.0, 0), ConfigError);
}

TEST_CASE("constant coefficients give the exact Gaussian law")
{
  const FieldPtr f = constant_field(1, 0.3, 0.8);
  const double x0[1] = { 0.5 };
  const std::size_t m = 200000;
  const TrajectoryBatch b = simulate_batch(*f, x0, GridSchedule(2.0, 16), m, 7, { .keep_states = false });
  const Moments mo = moments(b.terminal);
  const double var = 0.64 * 2.0;
  CHECK(std::abs(mo.mean - (0.5 + 0.6)) < 4.0 * std::sqrt(var / m));
  CHECK(std::abs(mo.var - var) < 4.0 * var * std::sqrt(2.0 / m));
}

TEST_CASE("zero diffusion reduces to the Euler ODE")
{
  const Decay f(1.5);
  const double x0[1] = { 2.0 };
  const TrajectoryBatch b = simulate_batch(f, x0, GridSchedule(1.0, 10), 3, 1);
  for (double x : b.terminal)
    CHECK(x == doctest::Approx(2.0 * std::pow(1.0 - 0.15, 10)).epsilon(1e-13));
}

TEST_CASE("Euler mean of an OU process")
{
  const FieldPtr f = ou_field(1, 1.0, 0.0, 1.0);
  const double x0[1] = { 1.0 };
  const std::size_t m = 200000;
  const TrajectoryBatch b = simulate_batch(*f, x0, GridSchedule(1.0, 8), m, 11, { .keep_states = false });
  const Moments mo = moments(b.terminal);
  CHECK(std::abs(mo.mean - std::pow(1.0 - 0.125, 8)) < 4.0 * std::sqrt(mo.var / m));
}

TEST_CASE("results do not depend on the job count")
{
  const FieldPtr f = tanh_drift_field(2, 0.5, 1.0, 0.2);
  const double x0[2] = { 0.1, -0.2 };
  const TrajectoryBatch a = simulate_batch(*f, x0, GridSchedule(1.0, 32), 1000, 5, { .jobs = 1 });
  const TrajectoryBatch c = simulate_batch(*f, x0, GridSchedule(1.0, 32), 1000, 5, { .jobs = 3, .block = 64 });
  CHECK(a.states == c.states);
  CHECK(a.increments == c.increments);
  CHECK(a.terminal == c.terminal);
  CHECK(base_increments(GridSchedule(1.0, 32), 2, 1000, 5, 1) == base_increments(GridSchedule(1.0, 32), 2, 1000, 5, 4));
  CHECK(a.increments == base_increments(GridSchedule(1.0, 32), 2, 1000, 5));
}

TEST_CASE("increment statistics and replay")
{
  const FieldPtr f = tanh_drift_field(1, 0.5, 1.0, 0.2);
  const double x0[1] = { 0.0 };
  const GridSchedule g(1.0, 8);
  const TrajectoryBatch b = simulate_batch(*f, x0, g, 50000, 3);
  const Moments mo = moments(b.increments);
  CHECK(std::abs(mo.mean) < 4.0 * std::sqrt(g.h() / b.increments.size()));
  CHECK(mo.var == doctest::Approx(g.h()).epsilon(0.01));
  const TrajectoryBatch r = simulate_from_increments(*f, x0, g, 50000, 3, b.increments);
  CHECK(r.states == b.states);
  CHECK_THROWS_AS(simulate_from_increments(*f, x0, g, 50000, 3, std::vector<double>(10)), ArgumentError);
}

TEST_CASE("common-noise refinement")
{
  const FieldPtr f = constant_field(1, 0.0, 1.0);
  const double x0[1] = { 0.0 };
  const GridSchedule g(1.0, 4);
  const std::size_t m = 50000;
  const TrajectoryBatch b = simulate_batch(*f, x0, g, m, 9);
  const RefinedIncrements r = refine_common_noise(b, 2);
  REQUIRE(r.grid.steps == 8);
  double worst = 0.0;
  std::vector<double> first;
  std::vector<double> deviation;
  for (std::size_t p = 0; p < m; ++p) {
    for (std::size_t i = 0; i < 4; ++i) {
      const double c = b.increment(p, i, 0);
      const double u = r.increments[p * 8 + 2 * i];
      const double v = r.increments[p * 8 + 2 * i + 1];
      worst = std::max(worst, std::abs(u + v - c));
      first.push_back(u);
      deviation.push_back(u - 0.5 * c);
    }
  }
  CHECK(worst < 1e-14);
  CHECK(moments(first).var == doctest::Approx(g.h() / 2).epsilon(0.01));
  // bridge midpoint: the fine increment given the coarse one has variance h/4
  CHECK(moments(deviation).var == doctest::Approx(g.h() / 4).epsilon(0.01));

  const RefinedIncrements odd = refine_common_noise(b, 3);
  worst = 0.0;
  for (std::size_t p = 0; p < 100; ++p)
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k)
        s += odd.increments[p * 12 + 3 * i + k];
      worst = std::max(worst, std::abs(s - b.increment(p, i, 0)));
    }
  CHECK(worst < 1e-14);
  CHECK_THROWS_AS(refine_common_noise(b, 1), ArgumentError);
}

TEST_CASE("continuous interpolation")
{
  const FieldPtr f = constant_field(1, 0.4, 1.0);
  const double x0[1] = { 0.0 };
  const GridSchedule g(1.0, 4);
  const std::size_t m = 100000;
  const TrajectoryBatch b = simulate_batch(*f, x0, g, m, 13);
  const std::vector<double> at_grid = continuous_interpolate(b, 0.5, *f);
  for (std::size_t p = 0; p < 100; ++p)
    CHECK(at_grid[p] == doctest::Approx(b.state(p, 2, 0)).epsilon(1e-14));
  const std::vector<double> at_end = continuous_interpolate(b, 1.0, *f);
  CHECK(std::equal(at_end.begin(), at_end.end(), b.terminal.begin(),
                   [](double a, double c) { return std::abs(a - c) < 1e-14; }));
  // constant coefficients: the interpolated process is Brownian motion with drift
  const Moments mo = moments(continuous_interpolate(b, 0.6, *f));
  CHECK(std::abs(mo.mean - 0.24) < 4.0 * std::sqrt(0.6 / m));
  CHECK(mo.var == doctest::Approx(0.6).epsilon(0.02));
  CHECK_THROWS_AS(continuous_interpolate(b, 1.5, *f), ArgumentError);
}

TEST_CASE("strong order one half with a state-dependent diffusion")
{
  const FieldPtr f = tanh_drift_field(1, 1.0, 1.0, 0.5);
  const double x0[1] = { 0.2 };
  const std::size_t m = 20000;
  const std::uint64_t seed = 17;
  std::vector<double> hs;
  std::vector<double> errs;
  const TrajectoryBatch coarse = simulate_batch(*f, x0, GridSchedule(1.0, 4), m, seed);
  const RefinedIncrements ref = refine_common_noise(coarse, 256);
  const TrajectoryBatch fine =
    simulate_from_increments(*f, x0, ref.grid, m, seed, ref.increments, { .keep_states = false });
  for (std::size_t factor : { 2, 4, 8, 16 }) {
    const RefinedIncrements lvl = refine_common_noise(coarse, factor);
    const TrajectoryBatch b =
      simulate_from_increments(*f, x0, lvl.grid, m, seed, lvl.increments, { .keep_states = false });
    double e = 0.0;
    for (std::size_t p = 0; p < m; ++p)
      e += (b.terminal[p] - fine.terminal[p]) * (b.terminal[p] - fine.terminal[p]);
    hs.push_back(std::log(lvl.grid.h()));
    errs.push_back(0.5 * std::log(e / m));
  }
  const double slope = (errs.back() - errs.front()) / (hs.back() - hs.front());
  CHECK(slope > 0.35);
  CHECK(slope < 0.75);
}

TEST_CASE("hierarchy levels agree with explicit refinement")
{
  const FieldPtr f = tanh_drift_field(1, 0.5, 1.0, 0.2);
  const double x0[1] = { 0.3 };
  const std::size_t m = 500;
  const LevelTerminals lt = simulate_levels({ f.get() }, x0, 1.0, 4, 3, m, 21, { .jobs = 2 });
  REQUIRE(lt.terminals.size() == 1);
  REQUIRE(lt.terminals[0].size() == 4);
  CHECK(lt.steps(3) == 32);
  const TrajectoryBatch b = simulate_batch(*f, x0, GridSchedule(1.0, 4), m, 21);
  CHECK(lt.terminals[0][0] == b.terminal);
  const RefinedIncrements r = refine_common_noise(b, 8);
  const TrajectoryBatch fine = simulate_from_increments(*f, x0, r.grid, m, 21, r.increments);
  for (std::size_t p = 0; p < m; ++p)
    CHECK(lt.terminals[0][3][p] == doctest::Approx(fine.terminal[p]).epsilon(1e-12));
  CHECK_THROWS_AS(simulate_levels({}, x0, 1.0, 4, 3, m, 21), ArgumentError);
}

TEST_CASE("binary dump round trip")
{
  const FieldPtr f = tanh_drift_field(2, 0.5, 1.0, 0.2);
  const double x0[2] = { 0.1, 0.2 };
  const TrajectoryBatch b = simulate_batch(*f, x0, GridSchedule(1.0, 8), 20, 4);
  const auto path = std::filesystem::temp_directory_path() / "ewel_test_batch.bin";
  write_batch_binary(b, path);
  const TrajectoryBatch r = read_batch_binary(path);
  CHECK(r.states == b.states);
  CHECK(r.m_paths == 20);
  CHECK(r.grid.steps == 8);
  CHECK(r.dim == 2);
  CHECK(r.seed == 4);
  CHECK(r.grid.horizon == 1.0);
  std::filesystem::resize_file(path, 100);
  CHECK_THROWS_AS(read_batch_binary(path), ConfigError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_batch_binary(path), ConfigError);
  CHECK(batch_summary_csv(b).rfind("seed,M,N,coordinate,terminal_mean,terminal_variance\n", 0) == 0);
}

TEST_CASE("memory budget and failures")
{
  const FieldPtr f = constant_field(1, 0.0, 1.0);
  const double x0[1] = { 0.0 };
  CHECK_THROWS_AS(simulate_batch(*f, x0, GridSchedule(1.0, 1000), 100000, 1, { .memory_budget = 1 << 20 }),
                  BudgetError);
  CHECK_THROWS_AS(simulate_batch(*f, x0, GridSchedule(1.0, 4), 0, 1), ConfigError);
  const double x2[2] = { 0.0, 0.0 };
  CHECK_THROWS_AS(simulate_batch(*f, x2, GridSchedule(1.0, 4), 10, 1), ConfigError);
  const Cubic c;
  const double big[1] = { 10.0 };
  CHECK_THROWS_AS(simulate_batch(c, big, GridSchedule(64.0, 64), 4, 1), NumericalFault);
}
