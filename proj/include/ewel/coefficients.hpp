#pragma once

#include "ewel/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ewel {

// ---------------------------------------------------------------------------
// Discontinuity sets
// ---------------------------------------------------------------------------

enum class ManifoldKind
{
  point,      // single point, d = 1 only
  hyperplane, // {x : <n, x> = offset}, positive on the side the normal points to
  sphere,     // {x : |x - c| = r}, positive inside
};

//! Closed-form level-set descriptor with an exact signed distance.
struct Manifold
{
  ManifoldKind kind = ManifoldKind::point;
  int dim = 1;
  Vec center{};   // point location or sphere center
  Vec normal{};   // unit normal for hyperplanes
  double offset = 0.0;
  double radius = 0.0;

  static Manifold point(double location);
  static Manifold hyperplane(std::span<const double> normal, double offset);
  static Manifold sphere(std::span<const double> center, double radius);
};

//! Parses a kind name ("point", "hyperplane", "sphere"); unknown names throw
//! ConfigError.
ManifoldKind parse_manifold_kind(const std::string& name);
std::string to_string(ManifoldKind kind);

//! Signed distance to the manifold. Sphere: positive inside. Point (1D):
//! d_S(z) = z - p. Hyperplane: <n, x> - offset.
double signed_distance(std::span<const double> x, const Manifold& m);

//! Closest point on the level set {d_S = level} of the manifold.
Vec project(std::span<const double> x, const Manifold& m, double level = 0.0);

//! Unit normal (gradient of the signed distance) at x.
Vec distance_gradient(std::span<const double> x, const Manifold& m);

//! Collection of pairwise disjoint manifolds carrying the drift jumps.
struct DiscontinuitySet
{
  std::vector<Manifold> manifolds;

  //! Smallest distance between two distinct manifolds measured on sampled
  //! points of each (window [-extent, extent]^d for hyperplanes). Infinite
  //! when fewer than two manifolds are present.
  double min_separation(double extent = 4.0) const;

  //! Index of the manifold with the smallest |d_S| at x and that distance.
  std::pair<std::size_t, double> nearest(std::span<const double> x) const;
};

// ---------------------------------------------------------------------------
// Coefficient fields
// ---------------------------------------------------------------------------

enum class Regime
{
  holder,
  piecewise_smooth,
};

std::string to_string(Regime r);

//! Declared structural constants of a field (assumptions A1/A2/H).
struct FieldBounds
{
  double k1 = std::numeric_limits<double>::infinity(); // sup |b|
  double k2 = std::numeric_limits<double>::infinity(); // sup |sigma|
  double lambda = 1.0;                                 // ellipticity constant
};

//! Drift b(t,x) in R^d and diffusion sigma(t,x) in R^{d x d}.
//! Implementations are pure functions of (t, x) and safe for concurrent use.
class CoefficientField
{
public:
  CoefficientField(int dim, Regime regime, double gamma, FieldBounds bounds);
  virtual ~CoefficientField() = default;

  int dim() const { return dim_; }
  Regime regime() const { return regime_; }
  //! Holder exponent (1 for piecewise smooth fields).
  double gamma() const { return gamma_; }
  const FieldBounds& bounds() const { return bounds_; }

  virtual std::string name() const = 0;
  virtual bool time_homogeneous() const { return true; }
  //! Discontinuity set of a piecewise smooth drift, if any.
  virtual const DiscontinuitySet* discontinuities() const { return nullptr; }

  virtual void drift(double t, std::span<const double> x, std::span<double> b) const = 0;
  //! Row-major d x d matrix written to s[0 .. d*d).
  virtual void sigma(double t, std::span<const double> x, std::span<double> s) const = 0;

  //! Evaluates n points at a common time: x, b hold n*d values, s holds n*d*d.
  virtual void eval_batch(double t,
                          std::size_t n,
                          const double* x,
                          double* b,
                          double* s) const;

  Vec drift(double t, const Vec& x) const;
  Mat sigma_mat(double t, const Vec& x) const;
  //! a = sigma sigma^T
  Mat diffusion(double t, const Vec& x) const;

private:
  int dim_;
  Regime regime_;
  double gamma_;
  FieldBounds bounds_;
};

using FieldPtr = std::shared_ptr<const CoefficientField>;

// ---------------------------------------------------------------------------
// Weierstrass building block
// ---------------------------------------------------------------------------

//! sum_{k < n_terms} base^{-gamma k} cos(base^k pi x)
double weierstrass(double x, double gamma, int base, int n_terms);

//! cos(pi x) by range reduction and an even Taylor polynomial; branch-free so
//! that loops over it vectorize. Accurate to a few ulp for |x| < 2^50.
inline double cos_pi(double x)
{
  constexpr double kRound = 0x1.8p52;
  const double half = 0.5 * x;
  const double nearest = (half + kRound) - kRound;
  const double a = std::fabs(x - 2.0 * nearest); // [0, 1]
  const double b = 0.5 - std::fabs(a - 0.5);        // [0, 1/2], cos(pi a) = +-cos(pi b)
  const double pb = 3.14159265358979323846 * b;
  const double u = pb * pb;
  // cos(v) = sum_k (-1)^k v^{2k} / (2k)!, truncated at k = 11
  double c = -1.0 / 1124000727777607680000.0;
  c = c * u + 1.0 / 2432902008176640000.0;
  c = c * u - 1.0 / 6402373705728000.0;
  c = c * u + 1.0 / 20922789888000.0;
  c = c * u - 1.0 / 87178291200.0;
  c = c * u + 1.0 / 479001600.0;
  c = c * u - 1.0 / 3628800.0;
  c = c * u + 1.0 / 40320.0;
  c = c * u - 1.0 / 720.0;
  c = c * u + 1.0 / 24.0;
  c = c * u - 0.5;
  c = c * u + 1.0;
  return std::copysign(1.0, 0.5 - a) * c;
}

// ---------------------------------------------------------------------------
// Model zoo
// ---------------------------------------------------------------------------

//! Named model with numeric parameters, as read from an experiment config.
struct ModelSpec
{
  std::string name;
  int dim = 1;
  std::map<std::string, double> params;
  //! Only for the discontinuous models; hyperplane/sphere/point descriptors.
  std::vector<Manifold> manifolds;
};

//! Builds a model from the closed-form zoo. Unknown names, unknown or missing
//! parameters, and inconsistent dimensions throw ConfigError.
FieldPtr make_model(const ModelSpec& spec);

//! Names and one-line descriptions of every built-in model.
std::vector<std::pair<std::string, std::string>> list_models();

// Direct constructors for the zoo, used by tests and the harness.
FieldPtr constant_field(int dim, double drift, double sigma);
FieldPtr ou_field(int dim, double theta, double mean, double sigma);
FieldPtr tanh_drift_field(int dim, double amp, double sigma, double sigma_wiggle = 0.0);
FieldPtr linear_bounded_field(int dim, double kappa, double sigma);

struct WeierstrassSigmaParams
{
  double gamma = 0.5;
  int base = 2;
  int n_terms = 16;
  double sigma0 = 1.0;
  double amp = 0.5;
  double clip = 1.0;
  double drift_kappa = 1.0; // drift -kappa x / (1 + x^2), per coordinate
};
FieldPtr weierstrass_sigma_field(int dim, const WeierstrassSigmaParams& p);

//! Piecewise constant drift: b(x) = outside + sum_i 1[d_S_i(x) >= 0] * jump_i
//! (applied to every coordinate), with sigma(x) = sigma0 (1 + wiggle sin x_k)
//! on the diagonal. At d_S = 0 the value from the positive side is returned.
FieldPtr piecewise_drift_field(int dim,
                               DiscontinuitySet set,
                               double outside,
                               std::vector<double> jumps,
                               double sigma0,
                               double sigma_wiggle = 0.0);

//! 1D drift amp * sign(x - point) with sign(0) = +1.
FieldPtr sign_drift_field(double amp, double point, double sigma);

//! dX = (a - k X) dt + (eta + min(s |X|^{1/2}, cap)) dW
FieldPtr cir_like_field(double a, double k, double eta, double s, double cap);

//! Time-dependent diffusion sigma(t) = sigma0 (1 + slope t) (profile linear) or
//! sigma0 (1 + amp sin(2 pi freq t)) (profile sine); constant drift.
FieldPtr time_linear_sigma_field(int dim, double sigma0, double slope, double drift);
FieldPtr time_sine_sigma_field(int dim, double sigma0, double amp, double freq, double drift);

// ---------------------------------------------------------------------------
// Assumption validation
// ---------------------------------------------------------------------------

//! Sampling plan covering [0, T] x [-R, R]^d.
struct SampleGrid
{
  double horizon = 1.0;
  double radius = 4.0;
  int time_points = 5;
  int space_points = 201; // per axis
  int holder_pairs = 10000;
  std::uint64_t seed = 20240601;
};

//! Regular grid of per_axis^d points covering [-radius, radius]^d.
std::vector<Vec> sample_points(int dim, double radius, int per_axis);

struct Violation
{
  std::string kind; // "drift_bound", "sigma_bound", "ellipticity", "non_finite"
  double t = 0.0;
  Vec x{};
  double value = 0.0;
};

struct ValidationReport
{
  double k1_measured = 0.0;
  double k2_measured = 0.0;
  double ellipticity_min = std::numeric_limits<double>::infinity();
  double ellipticity_max = 0.0;
  //! max over sampled pairs of |f(s,x)-f(t,y)| / (|s-t|^{g/2} + |x-y|^g) for
  //! f in {b, sigma} and g the declared exponent (reported, not thresholded).
  double holder_quotient = 0.0;
  //! log-log slope of the worst increment vs pair distance on [1e-5, 1e-1].
  double holder_exponent = 1.0;
  std::vector<Violation> violations;

  bool pass() const { return violations.empty(); }
};

ValidationReport validate_assumptions(const CoefficientField& field, const SampleGrid& grid);

} // namespace ewel
