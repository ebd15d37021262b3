#include "ewel/coefficients.hpp"
#include "ewel/errors.hpp"
#include "ewel/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace ewel;

namespace {

double max_quotient(double delta, double exponent)
{
  double q = 0.0;
  for (int i = 0; i < 400; ++i) {
    const double x = -1.0 + 2.0 * uniform_pair(7, stream_id(Stream::synthetic), static_cast<std::uint64_t>(i), 0).first;
    q = std::max(q, std::abs(weierstrass(x + delta, 0.5, 2, 16) - weierstrass(x, 0.5, 2, 16)) / std::pow(delta, exponent));
  }
  return q;
}

} // namespace

TEST_CASE("weierstrass closed forms")
{
  const double geometric = (1.0 - std::pow(2.0, -8.0)) / (1.0 - std::pow(2.0, -0.5));
  CHECK(weierstrass(0.0, 0.5, 2, 16) == doctest::Approx(geometric).epsilon(1e-14));
  for (double x : { -1.3, -0.2, 0.0, 0.37, 2.9 })
    CHECK(weierstrass(x, 0.7, 3, 1) == doctest::Approx(std::cos(std::numbers::pi * x)).epsilon(1e-14));
}

TEST_CASE("weierstrass is even")
{
  for (int i = 0; i < 200; ++i) {
    const double x = -3.0 + 0.031 * i;
    CHECK(weierstrass(-x, 0.5, 2, 16) == doctest::Approx(weierstrass(x, 0.5, 2, 16)).epsilon(1e-13));
  }
}

TEST_CASE("weierstrass quotient confirms the exponent")
{
  // above the finest oscillation scale 2^-15 the 1/2-quotient stays flat
  // while the 3/4-quotient grows like delta^{-1/4}
  const double half_ratio = max_quotient(1e-4, 0.5) / max_quotient(1e-1, 0.5);
  const double steep_ratio = max_quotient(1e-4, 0.75) / max_quotient(1e-1, 0.75);
  CHECK(half_ratio < 2.0);
  CHECK(steep_ratio > 3.0);
}

TEST_CASE("signed distance examples")
{
  const double c[2] = { 0.0, 0.0 };
  const Manifold sphere = Manifold::sphere(c, 1.0);
  const double inside[2] = { 0.5, 0.0 };
  const double outside[2] = { 2.0, 0.0 };
  CHECK(signed_distance(inside, sphere) == doctest::Approx(0.5));
  CHECK(signed_distance(outside, sphere) == doctest::Approx(-1.0));
  const Manifold point = Manifold::point(0.0);
  const double z[1] = { 0.3 };
  CHECK(signed_distance(z, point) == doctest::Approx(0.3));
}

TEST_CASE("projection distance matches the signed distance")
{
  const double c[2] = { 0.2, -0.1 };
  const double n[2] = { 1.0, 2.0 };
  const std::vector<Manifold> ms = { Manifold::sphere(c, 0.8), Manifold::hyperplane(n, 0.3) };
  for (const Manifold& m : ms) {
    for (int i = 0; i < 100; ++i) {
      const auto [u, v] = uniform_pair(11, stream_id(Stream::synthetic), static_cast<std::uint64_t>(i), 1);
      const double x[2] = { -2.0 + 4.0 * u, -2.0 + 4.0 * v };
      const Vec p = project(x, m);
      const double gap = std::hypot(x[0] - p[0], x[1] - p[1]);
      CHECK(gap == doctest::Approx(std::abs(signed_distance(x, m))).epsilon(1e-10).scale(1.0));
    }
  }
}

TEST_CASE("disjointness of a discontinuity set")
{
  DiscontinuitySet set;
  set.manifolds = { Manifold::point(-1.0), Manifold::point(1.0) };
  CHECK(set.min_separation() == doctest::Approx(2.0));
  const double x[1] = { 0.8 };
  const auto [index, dist] = set.nearest(x);
  CHECK(index == 1);
  CHECK(dist == doctest::Approx(-0.2));
}

TEST_CASE("validate constant field")
{
  const ValidationReport r = validate_assumptions(*constant_field(1, 0.3, 1.0), SampleGrid{});
  CHECK(r.pass());
  CHECK(r.k1_measured == doctest::Approx(0.3));
  CHECK(r.ellipticity_min == doctest::Approx(1.0));
  CHECK(r.ellipticity_max == doctest::Approx(1.0));
}

TEST_CASE("degenerate diffusion is flagged")
{
  // sigma(x) = |x| vanishes at the grid node x = 0
  class Degenerate final : public CoefficientField
  {
  public:
    Degenerate()
      : CoefficientField(1, Regime::holder, 1.0, FieldBounds{ 1.0, 5.0, 2.0 })
    {
    }
    std::string name() const override { return "degenerate"; }
    void drift(double, std::span<const double>, std::span<double> b) const override { b[0] = 0.0; }
    void sigma(double, std::span<const double> x, std::span<double> s) const override { s[0] = std::abs(x[0]); }
  };
  const ValidationReport r = validate_assumptions(Degenerate{}, SampleGrid{});
  CHECK_FALSE(r.pass());
  CHECK(std::any_of(r.violations.begin(), r.violations.end(),
                    [](const Violation& v) { return v.kind == "ellipticity" && v.x[0] == 0.0; }));
}

TEST_CASE("cir-like field is 1/2-Holder")
{
  const ValidationReport r = validate_assumptions(*cir_like_field(0.5, 1.0, 0.1, 1.0, 2.0), SampleGrid{});
  CHECK(r.pass());
  CHECK(r.holder_exponent == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("every built-in model passes validation")
{
  for (const auto& [name, description] : list_models()) {
    CAPTURE(name);
    ModelSpec spec;
    spec.name = name;
    if (name == "piecewise_drift")
      spec.manifolds = { Manifold::point(0.0) };
    const FieldPtr f = make_model(spec);
    const ValidationReport r = validate_assumptions(*f, SampleGrid{});
    CHECK(r.pass());
  }
}

TEST_CASE("model zoo rejects bad specs")
{
  ModelSpec spec;
  spec.name = "no_such_model";
  CHECK_THROWS_AS(make_model(spec), ConfigError);
  spec.name = "ou";
  spec.params["kappa"] = 1.0;
  CHECK_THROWS_AS(make_model(spec), ConfigError);
  spec.params.clear();
  spec.dim = 4;
  CHECK_THROWS_AS(make_model(spec), ConfigError);
}

TEST_CASE("drift takes the positive side at a discontinuity")
{
  const FieldPtr f = sign_drift_field(0.5, 0.0, 1.0);
  CHECK(f->drift(0.0, Vec{ 0.0, 0.0, 0.0 })[0] == 0.5);
  CHECK(f->drift(0.0, Vec{ -1e-12, 0.0, 0.0 })[0] == -0.5);
  CHECK(f->regime() == Regime::piecewise_smooth);
  REQUIRE(f->discontinuities() != nullptr);
}

TEST_CASE("batch evaluation agrees with pointwise evaluation")
{
  WeierstrassSigmaParams p;
  for (const FieldPtr& f : { weierstrass_sigma_field(1, p), tanh_drift_field(2, 0.5, 1.0, 0.2), ou_field(1, 1.0, 0.0, 1.0) }) {
    const int d = f->dim();
    std::vector<double> x(17 * static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = std::sin(0.7 * static_cast<double>(i)) * 2.5;
    std::vector<double> b(x.size());
    std::vector<double> s(x.size() * static_cast<std::size_t>(d));
    f->eval_batch(0.3, 17, x.data(), b.data(), s.data());
    for (std::size_t i = 0; i < 17; ++i) {
      const Vec xi = to_vec(std::span<const double>(x.data() + i * d, static_cast<std::size_t>(d)));
      const Vec bi = f->drift(0.3, xi);
      const Mat si = f->sigma_mat(0.3, xi);
      for (int k = 0; k < d; ++k) {
        CHECK(b[i * d + k] == doctest::Approx(bi[static_cast<std::size_t>(k)]).epsilon(1e-13));
        for (int j = 0; j < d; ++j)
          CHECK(s[(i * d + k) * d + j] == doctest::Approx(at(si, k, j)).epsilon(1e-13));
      }
    }
  }
}
