#include "ewel/errors.hpp"
#include "ewel/euler.hpp"
#include "ewel/parametrix.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ewel;

namespace {

constexpr double kPi = std::numbers::pi;

double gauss(double x, double var)
{
  return std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * kPi * var);
}

Vec v1(double x)
{
  return Vec{ x, 0.0, 0.0 };
}

ParametrixSettings light()
{
  ParametrixSettings s;
  s.time_nodes = 32;
  s.table_nodes = 16;
  s.space_nodes = 32;
  return s;
}

} // namespace

TEST_CASE("proxy density examples")
{
  const FieldPtr c = constant_field(1, 0.7, 1.0);
  CHECK(proxy_density(*c, 0.0, 1.0, v1(0.0), v1(0.0)) == doctest::Approx(1.0 / std::sqrt(2.0 * kPi)).epsilon(1e-14));
  // the proxy ignores the drift
  CHECK(proxy_density(*c, 0.2, 0.7, v1(0.1), v1(0.6)) == doctest::Approx(gauss(0.5, 0.5)).epsilon(1e-14));
  // sigma(t) = 1 + t/2: int_0^1 sigma^2 dt = 19/12
  const FieldPtr tl = time_linear_sigma_field(1, 1.0, 0.5, 0.0);
  CHECK(proxy_covariance(*tl, 0.0, 1.0, v1(0.3))[0] == doctest::Approx(19.0 / 12.0).epsilon(1e-12));
  CHECK(proxy_density(*tl, 0.0, 1.0, v1(0.0), v1(0.0)) == doctest::Approx(gauss(0.0, 19.0 / 12.0)).epsilon(1e-12));
  const FieldPtr c2 = constant_field(2, 0.0, 2.0);
  CHECK(proxy_density(*c2, 0.0, 1.0, Vec{ 0.0, 0.0, 0.0 }, Vec{ 1.0, 1.0, 0.0 }) ==
        doctest::Approx(gauss(1.0, 4.0) * gauss(1.0, 4.0)).epsilon(1e-14));
  CHECK_THROWS_AS(proxy_density(*c, 1.0, 1.0, v1(0.0), v1(0.0)), ArgumentError);
}

TEST_CASE("parametrix kernel examples")
{
  const FieldPtr c = constant_field(1, 0.0, 1.0);
  CHECK(kernel_H(*c, 0.0, 1.0, v1(0.4), v1(-0.3)) == 0.0);
  // OU drift -z at z = 1 toward y = 0: b (y - z) / t p~ = p~
  const FieldPtr ou = ou_field(1, 1.0, 0.0, 1.0);
  CHECK(kernel_H(*ou, 0.0, 1.0, v1(1.0), v1(0.0)) == doctest::Approx(std::exp(-0.5) / std::sqrt(2.0 * kPi)).epsilon(1e-14));
  CHECK_THROWS_AS(kernel_H(*ou, 1.0, 1.0, v1(0.0), v1(0.0)), ArgumentError);
}

TEST_CASE("parametrix kernel against finite differences")
{
  const FieldPtr f = tanh_drift_field(1, 0.8, 1.0, 0.3);
  const double u = 0.1;
  const double t = 0.6;
  const Vec y = v1(0.2);
  const double dz = 1e-4;
  for (double z : { -0.8, -0.1, 0.35, 1.1 }) {
    const auto p = [&](double w) { return proxy_density(*f, u, t, v1(w), y); };
    const double d1 = (p(z + dz) - p(z - dz)) / (2.0 * dz);
    const double d2 = (p(z + dz) - 2.0 * p(z) + p(z - dz)) / (dz * dz);
    const double b = f->drift(u, v1(z))[0];
    const double az = std::pow(f->sigma_mat(u, v1(z))[0], 2);
    const double ay = std::pow(f->sigma_mat(u, y)[0], 2);
    CHECK(kernel_H(*f, u, t, v1(z), y) == doctest::Approx(b * d1 + 0.5 * (az - ay) * d2).epsilon(1e-5));
  }
}

TEST_CASE("term bound values")
{
  CHECK(term_bound(0, 0.5, 1.0, 1.3, 1.0) == doctest::Approx(1.3));
  // Gamma(1/2) / Gamma(3/2) = 2
  CHECK(term_bound(1, 1.0, 1.0, 1.0, 1.0) == doctest::Approx(2.0));
  CHECK(term_bound(2, 0.25, 1.0, 1.0, 1.0) == doctest::Approx(kPi * 0.25));
  // T^{(1 - gamma)/2} = sqrt(2) for T = 4, gamma = 1/2
  CHECK(term_bound(0, 1.0, 0.5, 1.0, 4.0) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(term_bound(-1, 1.0, 1.0, 1.0, 1.0), ArgumentError);
}

TEST_CASE("time-space convolution")
{
  const FieldPtr c = constant_field(1, 0.0, 1.0);
  const SpaceTimeKernel zero = [](double, double, const Vec&, const Vec&) { return 0.0; };
  const SpaceTimeKernel p = [&](double s, double t, const Vec& x, const Vec& y) { return proxy_density(*c, s, t, x, y); };
  CHECK(convolve_step(zero, p, 0.0, 1.0, v1(0.0), v1(0.5), 1) == 0.0);
  // Chapman-Kolmogorov: p (x) p = (t - s) p
  const double ck = convolve_step(p, p, 0.0, 0.8, v1(0.1), v1(0.6), 1);
  CHECK(ck == doctest::Approx(0.8 * gauss(0.5, 0.8)).epsilon(1e-6));
  ConvolutionQuadrature q;
  q.h = 0.8;
  CHECK(convolve_step(p, p, 0.0, 0.8, v1(0.1), v1(0.6), 1, q) == doctest::Approx(0.8 * gauss(0.5, 0.8)).epsilon(1e-12));
  q.h = 0.3;
  CHECK_THROWS_AS(convolve_step(p, p, 0.0, 0.8, v1(0.1), v1(0.6), 1, q), ArgumentError);
  CHECK_THROWS_AS(convolve_step(p, p, 0.0, 0.8, v1(0.1), v1(0.6), 4), ArgumentError);
}

TEST_CASE("series for constant coefficients is the Gaussian")
{
  const FieldPtr c = constant_field(1, 0.0, 1.3);
  const SeriesAccumulator a = density_series(*c, 0.0, 0.5, v1(0.2), v1(-0.4), light());
  REQUIRE(a.terms.size() == 5);
  CHECK(a.terms[0] == doctest::Approx(gauss(0.6, 1.69 * 0.5)).epsilon(1e-13));
  for (int r = 1; r <= 4; ++r)
    CHECK(a.terms[static_cast<std::size_t>(r)] == 0.0);
  CHECK(a.value() == doctest::Approx(gauss(0.6, 1.69 * 0.5)).epsilon(1e-13));
}

TEST_CASE("series reproduces the OU density near the start point")
{
  const FieldPtr ou = ou_field(1, 1.0, 0.0, 1.0);
  const double mean = std::exp(-0.5);
  const double var = 0.5 * (1.0 - std::exp(-1.0));
  for (double y : { 0.0, 0.5, 1.0 }) {
    const SeriesAccumulator a = density_series(*ou, 0.0, 0.5, v1(1.0), v1(y), light());
    CHECK(a.value() == doctest::Approx(gauss(y - mean, var)).epsilon(0.01));
  }
}

TEST_CASE("series against an Euler histogram for a tanh drift")
{
  const FieldPtr f = tanh_drift_field(1, 0.8, 1.0, 0.0);
  const double x0[1] = { 0.5 };
  const std::size_t m = 200000;
  const TrajectoryBatch b = simulate_batch(*f, x0, GridSchedule(1.0, 256), m, 3, { .keep_states = false, .keep_increments = false });
  for (double y : { 0.3, 1.0 }) {
    const double half = 0.05;
    double hits = 0.0;
    for (double x : b.terminal)
      hits += std::abs(x - y) < half ? 1.0 : 0.0;
    const double kde = hits / (m * 2.0 * half);
    const double se = std::sqrt(hits) / (m * 2.0 * half);
    const SeriesAccumulator a = density_series(*f, 0.0, 1.0, v1(0.5), v1(y), light());
    CAPTURE(y);
    CHECK(std::abs(a.value() - kde) < 4.0 * se + 0.01 * kde);
  }
}

TEST_CASE("euler chain kernel")
{
  const FieldPtr c = constant_field(1, 0.0, 1.0);
  CHECK(std::abs(euler_chain_kernel(*c, 0.0, 1.0, v1(0.3), v1(0.0), 0.125)) < 1e-14);
  const FieldPtr ou = ou_field(1, 1.0, 0.0, 1.0);
  const double exact = kernel_H(*ou, 0.0, 1.0, v1(0.5), v1(0.0));
  const double coarse = euler_chain_kernel(*ou, 0.0, 1.0, v1(0.5), v1(0.0), 1.0 / 16);
  const double fine = euler_chain_kernel(*ou, 0.0, 1.0, v1(0.5), v1(0.0), 1.0 / 32);
  // first-order convergence: halving h halves the gap, and one Richardson
  // step removes most of it
  CHECK(std::abs(fine - exact) < std::abs(coarse - exact));
  CHECK(std::abs(2.0 * fine - coarse - exact) < 0.3 * std::abs(fine - exact));
  CHECK_THROWS_AS(euler_chain_kernel(*ou, 0.0, 1.0, v1(0.5), v1(0.0), 0.3), ArgumentError);
  CHECK_THROWS_AS(euler_chain_kernel(*ou, 0.0, 0.1, v1(0.5), v1(0.0), 0.1), ArgumentError);
}

TEST_CASE("discrete series approaches the continuous one")
{
  const FieldPtr f = tanh_drift_field(1, 0.5, 1.0, 0.2);
  const SeriesAccumulator c = density_series(*f, 0.0, 1.0, v1(0.5), v1(0.3), light());
  const SeriesAccumulator d8 = density_series(*f, 0.0, 1.0, v1(0.5), v1(0.3), light(), SeriesMode::discrete, 0.125);
  const SeriesAccumulator d32 = density_series(*f, 0.0, 1.0, v1(0.5), v1(0.3), light(), SeriesMode::discrete, 1.0 / 32);
  CHECK(std::abs(d32.value() - c.value()) < std::abs(d8.value() - c.value()));
  CHECK(d32.value() > 0.0);
  CHECK(d32.terms[0] == doctest::Approx(c.terms[0]).epsilon(1e-12));
}

TEST_CASE("gaussian envelope fit")
{
  std::vector<EnvelopeSample> samples;
  for (double dt : { 0.1, 0.5, 1.0 })
    for (double dist : { 0.0, 0.5, 1.0, 2.0, 3.0 })
      samples.push_back({ dt, dist, 2.0 * gaussian_envelope(0.5, dt, dist, 1) });
  const EnvelopeFit e = fit_gaussian_envelope(samples, 1);
  CHECK(e.c == doctest::Approx(0.5));
  CHECK(e.big_c == doctest::Approx(2.0));
  for (const EnvelopeSample& s : samples)
    CHECK(std::abs(s.value) <= e.big_c * gaussian_envelope(e.c, s.dt, s.distance, 1) * (1.0 + 1e-12));
  CHECK_THROWS_AS(fit_gaussian_envelope({}, 1), ArgumentError);
}

TEST_CASE("series settings are validated")
{
  const FieldPtr c = constant_field(3, 0.0, 1.0);
  CHECK_THROWS_AS(density_series(*c, 0.0, 1.0, Vec{}, Vec{}), ConfigError);
  const FieldPtr ou = ou_field(1, 1.0, 0.0, 1.0);
  ParametrixSettings s = light();
  s.r_max = 7;
  CHECK_THROWS_AS(density_series(*ou, 0.0, 1.0, v1(0.0), v1(0.0), s), ConfigError);
  CHECK_THROWS_AS(density_series(*ou, 0.0, 1.0, v1(0.0), v1(0.0), light(), SeriesMode::discrete, 0.3), ConfigError);
  CHECK_THROWS_AS(density_series(*ou, 0.0, 1.0, v1(0.0), v1(0.0), light(), SeriesMode::discrete, 0.0), ConfigError);
  CHECK_THROWS_AS(density_series(*ou, 1.0, 1.0, v1(0.0), v1(0.0)), ArgumentError);
}

TEST_CASE("series csv layout")
{
  const FieldPtr c = constant_field(1, 0.0, 1.0);
  ParametrixSettings s = light();
  s.r_max = 1;
  const SeriesAccumulator a = density_series(*c, 0.0, 0.5, v1(0.0), v1(0.25), s);
  const std::string csv = series_csv({ a });
  CHECK(csv.rfind("s,t,x0,y0,r_max,value,tail_estimate,method\n0,0.5,0,0.25,1,", 0) == 0);
  CHECK(csv.find(",continuous\n") != std::string::npos);
}
