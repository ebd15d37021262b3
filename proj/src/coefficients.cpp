#include "ewel/coefficients.hpp"

#include "ewel/errors.hpp"
#include "ewel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

namespace ewel {

// ---------------------------------------------------------------------------
// Manifolds
// ---------------------------------------------------------------------------

Manifold Manifold::point(double location)
{
  Manifold m;
  m.kind = ManifoldKind::point;
  m.dim = 1;
  m.center[0] = location;
  return m;
}

Manifold Manifold::hyperplane(std::span<const double> normal, double offset)
{
  Manifold m;
  m.kind = ManifoldKind::hyperplane;
  m.dim = static_cast<int>(normal.size());
  if (m.dim < 1 || m.dim > kMaxDim)
    throw ConfigError("hyperplane: dimension must be in [1, 3]");
  m.normal = to_vec(normal);
  const double len = norm(m.normal, m.dim);
  if (!(len > 0.0))
    throw ConfigError("hyperplane: normal must be non-zero");
  for (int i = 0; i < m.dim; ++i)
    m.normal[i] /= len;
  m.offset = offset / len;
  return m;
}

Manifold Manifold::sphere(std::span<const double> center, double radius)
{
  Manifold m;
  m.kind = ManifoldKind::sphere;
  m.dim = static_cast<int>(center.size());
  if (m.dim < 2 || m.dim > kMaxDim)
    throw ConfigError("sphere: dimension must be 2 or 3 (use a pair of points in 1D)");
  if (!(radius > 0.0))
    throw ConfigError("sphere: radius must be positive");
  m.center = to_vec(center);
  m.radius = radius;
  return m;
}

ManifoldKind parse_manifold_kind(const std::string& name)
{
  if (name == "point")
    return ManifoldKind::point;
  if (name == "hyperplane")
    return ManifoldKind::hyperplane;
  if (name == "sphere")
    return ManifoldKind::sphere;
  throw ConfigError("unsupported manifold shape '" + name +
                    "' (expected point, hyperplane or sphere)");
}

std::string to_string(ManifoldKind kind)
{
  switch (kind) {
    case ManifoldKind::point:
      return "point";
    case ManifoldKind::hyperplane:
      return "hyperplane";
    case ManifoldKind::sphere:
      return "sphere";
  }
  return "unknown";
}

namespace {

void check_manifold_dim(const Manifold& m, std::size_t n)
{
  if (m.kind == ManifoldKind::point && m.dim != 1)
    throw ConfigError("point manifolds are only supported in dimension 1");
  if (static_cast<int>(n) != m.dim)
    throw ArgumentError("signed_distance: point dimension " + std::to_string(n) +
                        " does not match manifold dimension " +
                        std::to_string(m.dim));
}

} // namespace

double signed_distance(std::span<const double> x, const Manifold& m)
{
  check_manifold_dim(m, x.size());
  switch (m.kind) {
    case ManifoldKind::point:
      return x[0] - m.center[0];
    case ManifoldKind::hyperplane:
      return dot(to_vec(x), m.normal, m.dim) - m.offset;
    case ManifoldKind::sphere:
      return m.radius - distance(to_vec(x), m.center, m.dim);
  }
  throw ConfigError("signed_distance: unsupported manifold");
}

Vec distance_gradient(std::span<const double> x, const Manifold& m)
{
  check_manifold_dim(m, x.size());
  Vec g{};
  switch (m.kind) {
    case ManifoldKind::point:
      g[0] = 1.0;
      return g;
    case ManifoldKind::hyperplane:
      return m.normal;
    case ManifoldKind::sphere: {
      const Vec p = to_vec(x);
      const double r = distance(p, m.center, m.dim);
      if (r == 0.0) {
        g[0] = -1.0; // any unit vector; the distance is not differentiable here
        return g;
      }
      for (int i = 0; i < m.dim; ++i)
        g[i] = -(p[i] - m.center[i]) / r;
      return g;
    }
  }
  throw ConfigError("distance_gradient: unsupported manifold");
}

Vec project(std::span<const double> x, const Manifold& m, double level)
{
  check_manifold_dim(m, x.size());
  Vec p = to_vec(x);
  switch (m.kind) {
    case ManifoldKind::point:
      p[0] = m.center[0] + level;
      return p;
    case ManifoldKind::hyperplane: {
      const double ds = signed_distance(x, m);
      for (int i = 0; i < m.dim; ++i)
        p[i] -= (ds - level) * m.normal[i];
      return p;
    }
    case ManifoldKind::sphere: {
      const double target = m.radius - level;
      if (!(target > 0.0))
        throw ArgumentError("project: level set of the sphere is empty");
      const double r = distance(p, m.center, m.dim);
      Vec dir{};
      if (r == 0.0)
        dir[0] = 1.0;
      else
        for (int i = 0; i < m.dim; ++i)
          dir[i] = (p[i] - m.center[i]) / r;
      for (int i = 0; i < m.dim; ++i)
        p[i] = m.center[i] + target * dir[i];
      return p;
    }
  }
  throw ConfigError("project: unsupported manifold");
}

double DiscontinuitySet::min_separation(double extent) const
{
  double best = std::numeric_limits<double>::infinity();
  if (manifolds.size() < 2)
    return best;
  // sample points on manifold i and measure |d_S| to every other manifold
  const auto samples = [extent](const Manifold& m) {
    std::vector<Vec> pts;
    const int n = 64;
    switch (m.kind) {
      case ManifoldKind::point:
        pts.push_back(m.center);
        break;
      case ManifoldKind::sphere:
        for (int i = 0; i < n; ++i) {
          const double th = 2.0 * std::numbers::pi * i / n;
          if (m.dim == 2) {
            pts.push_back({ m.center[0] + m.radius * std::cos(th),
                            m.center[1] + m.radius * std::sin(th), 0.0 });
          } else {
            for (int j = 1; j < n / 2; ++j) {
              const double ph = std::numbers::pi * j / (n / 2);
              pts.push_back({ m.center[0] + m.radius * std::sin(ph) * std::cos(th),
                              m.center[1] + m.radius * std::sin(ph) * std::sin(th),
                              m.center[2] + m.radius * std::cos(ph) });
            }
          }
        }
        break;
      case ManifoldKind::hyperplane: {
        // grid over the window, projected onto the plane
        const int per_axis = m.dim == 1 ? 1 : (m.dim == 2 ? n : 16);
        for (int i = 0; i < per_axis; ++i)
          for (int j = 0; j < (m.dim == 3 ? per_axis : 1); ++j) {
            Vec q{};
            q[0] = -extent + 2.0 * extent * (i + 0.5) / per_axis;
            if (m.dim == 3)
              q[1] = -extent + 2.0 * extent * (j + 0.5) / per_axis;
            if (m.dim == 2)
              q[1] = q[0], q[0] = 0.0;
            pts.push_back(project(std::span<const double>(q.data(), m.dim), m, 0.0));
          }
        break;
      }
    }
    return pts;
  };
  for (std::size_t i = 0; i < manifolds.size(); ++i) {
    for (const Vec& p : samples(manifolds[i])) {
      for (std::size_t j = 0; j < manifolds.size(); ++j) {
        if (i == j)
          continue;
        const double ds = std::abs(signed_distance(
          std::span<const double>(p.data(), manifolds[j].dim), manifolds[j]));
        best = std::min(best, ds);
      }
    }
  }
  return best;
}

std::pair<std::size_t, double> DiscontinuitySet::nearest(std::span<const double> x) const
{
  std::size_t best = 0;
  double best_abs = std::numeric_limits<double>::infinity();
  double best_signed = best_abs;
  for (std::size_t i = 0; i < manifolds.size(); ++i) {
    const double ds = signed_distance(x, manifolds[i]);
    if (std::abs(ds) < best_abs) {
      best_abs = std::abs(ds);
      best_signed = ds;
      best = i;
    }
  }
  return { best, best_signed };
}

// ---------------------------------------------------------------------------
// CoefficientField
// ---------------------------------------------------------------------------

std::string to_string(Regime r)
{
  return r == Regime::holder ? "holder" : "piecewise_smooth";
}

CoefficientField::CoefficientField(int dim, Regime regime, double gamma, FieldBounds bounds)
  : dim_(dim)
  , regime_(regime)
  , gamma_(gamma)
  , bounds_(bounds)
{
  if (dim < 1 || dim > kMaxDim)
    throw ConfigError("field dimension must be in [1, 3], got " + std::to_string(dim));
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ConfigError("Holder exponent must lie in (0, 1]");
}

void CoefficientField::eval_batch(double t,
                                  std::size_t n,
                                  const double* x,
                                  double* b,
                                  double* s) const
{
  const auto d = static_cast<std::size_t>(dim_);
  for (std::size_t i = 0; i < n; ++i) {
    drift(t, { x + i * d, d }, { b + i * d, d });
    sigma(t, { x + i * d, d }, { s + i * d * d, d * d });
  }
}

Vec CoefficientField::drift(double t, const Vec& x) const
{
  Vec b{};
  const auto d = static_cast<std::size_t>(dim_);
  drift(t, std::span<const double>(x.data(), d), std::span<double>(b.data(), d));
  return b;
}

Mat CoefficientField::sigma_mat(double t, const Vec& x) const
{
  std::array<double, kMaxDim * kMaxDim> compact{};
  const auto d = static_cast<std::size_t>(dim_);
  sigma(t, std::span<const double>(x.data(), d), std::span<double>(compact.data(), d * d));
  Mat m{};
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j)
      at(m, i, j) = compact[i * dim_ + j];
  return m;
}

Mat CoefficientField::diffusion(double t, const Vec& x) const
{
  return outer_self(sigma_mat(t, x), dim_);
}

// ---------------------------------------------------------------------------
// Weierstrass
// ---------------------------------------------------------------------------

namespace {

// sum_k base^{-gamma k} cos(base^k pi x) using cos(b theta) = T_b(cos theta);
// inline so that batched callers vectorize.
inline double weierstrass_sum(double x, const double* scales, int base, int n_terms)
{
  double c = cos_pi(x);
  double sum = scales[0] * c;
  if (base == 2) {
    for (int k = 1; k < n_terms; ++k) {
      c = 2.0 * c * c - 1.0;
      sum += scales[k] * c;
    }
  } else {
    for (int k = 1; k < n_terms; ++k) {
      double t0 = 1.0;
      double t1 = c;
      for (int j = 1; j < base; ++j) {
        const double t2 = 2.0 * c * t1 - t0;
        t0 = t1;
        t1 = t2;
      }
      c = t1;
      sum += scales[k] * c;
    }
  }
  return sum;
}

std::vector<double> weierstrass_scales(double gamma, int base, int n_terms)
{
  std::vector<double> s(static_cast<std::size_t>(n_terms));
  for (int k = 0; k < n_terms; ++k)
    s[k] = std::pow(static_cast<double>(base), -gamma * k);
  return s;
}

} // namespace

double weierstrass(double x, double gamma, int base, int n_terms)
{
  if (n_terms < 1)
    throw ArgumentError("weierstrass: n_terms must be >= 1");
  if (base < 2)
    throw ArgumentError("weierstrass: base must be >= 2");
  const auto scales = weierstrass_scales(gamma, base, n_terms);
  if (base > 3) {
    // the Chebyshev recurrence amplifies rounding by ~base per term
    double sum = 0.0;
    for (int k = 0; k < n_terms; ++k) {
      const double arg = std::fmod(std::pow(static_cast<double>(base), k) * x, 2.0);
      sum += scales[k] * cos_pi(arg);
    }
    return sum;
  }
  return weierstrass_sum(x, scales.data(), base, n_terms);
}

// ---------------------------------------------------------------------------
// Model zoo
// ---------------------------------------------------------------------------

namespace {

double ellipticity_from_range(double smin, double smax)
{
  if (!(smin > 0.0))
    return std::numeric_limits<double>::infinity();
  return std::max({ 1.0, smax * smax, 1.0 / (smin * smin) });
}

//! Fields whose per-point evaluation is an inline member `point`; the batch
//! loop is then a plain non-virtual loop.
template<class Derived>
class ZooField : public CoefficientField
{
public:
  using CoefficientField::CoefficientField;
  using CoefficientField::drift;

  void drift(double t, std::span<const double> x, std::span<double> b) const override
  {
    std::array<double, kMaxDim * kMaxDim> s{};
    self().point(t, x.data(), b.data(), s.data());
  }

  void sigma(double t, std::span<const double> x, std::span<double> s) const override
  {
    Vec b{};
    self().point(t, x.data(), b.data(), s.data());
  }

  void eval_batch(double t, std::size_t n, const double* x, double* b, double* s) const override
  {
    const auto d = static_cast<std::size_t>(dim());
    const Derived& me = self();
    if constexpr (requires(double v) { me.point1(t, v, v, v); }) {
      if (d == 1) {
        for (std::size_t i = 0; i < n; ++i)
          me.point1(t, x[i], b[i], s[i]);
        return;
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      me.point(t, x + i * d, b + i * d, s + i * d * d);
  }

private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

inline void diag(double* s, int d, double v)
{
  for (int i = 0; i < d * d; ++i)
    s[i] = 0.0;
  for (int i = 0; i < d; ++i)
    s[i * d + i] = v;
}

class ConstantField final : public ZooField<ConstantField>
{
public:
  ConstantField(int dim, double drift, double sigma)
    : ZooField(dim, Regime::holder, 1.0,
               { std::abs(drift) * std::sqrt(dim), std::abs(sigma) * std::sqrt(dim),
                 ellipticity_from_range(std::abs(sigma), std::abs(sigma)) })
    , drift_(drift)
    , sigma_(sigma)
  {
  }
  std::string name() const override { return "constant"; }
  void point(double, const double*, double* b, double* s) const
  {
    const int d = dim();
    for (int i = 0; i < d; ++i)
      b[i] = drift_;
    diag(s, d, sigma_);
  }
  void point1(double, double, double& b, double& s) const
  {
    b = drift_;
    s = sigma_;
  }

private:
  double drift_;
  double sigma_;
};

class OuField final : public ZooField<OuField>
{
public:
  OuField(int dim, double theta, double mean, double sigma)
    : ZooField(dim, Regime::holder, 1.0,
               { std::numeric_limits<double>::infinity(), std::abs(sigma) * std::sqrt(dim),
                 ellipticity_from_range(std::abs(sigma), std::abs(sigma)) })
    , theta_(theta)
    , mean_(mean)
    , sigma_(sigma)
  {
  }
  std::string name() const override { return "ou"; }
  void point(double, const double* x, double* b, double* s) const
  {
    const int d = dim();
    for (int i = 0; i < d; ++i)
      b[i] = -theta_ * (x[i] - mean_);
    diag(s, d, sigma_);
  }
  void point1(double, double x, double& b, double& s) const
  {
    b = -theta_ * (x - mean_);
    s = sigma_;
  }

private:
  double theta_;
  double mean_;
  double sigma_;
};

class TanhDriftField final : public ZooField<TanhDriftField>
{
public:
  TanhDriftField(int dim, double amp, double sigma, double wiggle)
    : ZooField(dim, Regime::holder, 1.0,
               { std::abs(amp) * std::sqrt(dim),
                 std::abs(sigma) * (1.0 + std::abs(wiggle)) * std::sqrt(dim),
                 ellipticity_from_range(std::abs(sigma) * (1.0 - std::abs(wiggle)),
                                        std::abs(sigma) * (1.0 + std::abs(wiggle))) })
    , amp_(amp)
    , sigma_(sigma)
    , wiggle_(wiggle)
  {
    if (std::abs(wiggle) >= 1.0)
      throw ConfigError("tanh_drift: |sigma_wiggle| must be < 1");
  }
  std::string name() const override { return "tanh_drift"; }
  void point(double, const double* x, double* b, double* s) const
  {
    const int d = dim();
    for (int i = 0; i < d * d; ++i)
      s[i] = 0.0;
    for (int i = 0; i < d; ++i) {
      b[i] = amp_ * std::tanh(x[i]);
      s[i * d + i] = wiggle_ == 0.0 ? sigma_ : sigma_ * (1.0 + wiggle_ * std::sin(x[i]));
    }
  }

private:
  double amp_;
  double sigma_;
  double wiggle_;
};

class LinearBoundedField final : public ZooField<LinearBoundedField>
{
public:
  LinearBoundedField(int dim, double kappa, double sigma)
    : ZooField(dim, Regime::holder, 1.0,
               { 0.5 * std::abs(kappa) * std::sqrt(dim), std::abs(sigma) * std::sqrt(dim),
                 ellipticity_from_range(std::abs(sigma), std::abs(sigma)) })
    , kappa_(kappa)
    , sigma_(sigma)
  {
  }
  std::string name() const override { return "linear_bounded"; }
  void point(double, const double* x, double* b, double* s) const
  {
    const int d = dim();
    for (int i = 0; i < d; ++i)
      b[i] = -kappa_ * x[i] / (1.0 + x[i] * x[i]);
    diag(s, d, sigma_);
  }
  void point1(double, double x, double& b, double& s) const
  {
    b = -kappa_ * x / (1.0 + x * x);
    s = sigma_;
  }

private:
  double kappa_;
  double sigma_;
};

class WeierstrassSigmaField final : public ZooField<WeierstrassSigmaField>
{
public:
  WeierstrassSigmaField(int dim, const WeierstrassSigmaParams& p)
    : ZooField(dim, Regime::holder, p.gamma,
               { 0.5 * std::abs(p.drift_kappa) * std::sqrt(dim),
                 (p.sigma0 + std::abs(p.amp) * p.clip) * std::sqrt(dim),
                 ellipticity_from_range(p.sigma0 - std::abs(p.amp) * p.clip,
                                        p.sigma0 + std::abs(p.amp) * p.clip) })
    , p_(p)
    , scales_(weierstrass_scales(p.gamma, p.base, p.n_terms))
  {
    if (p.n_terms < 1 || p.base < 2 || p.base > 3)
      throw ConfigError("weierstrass_sigma: need n_terms >= 1 and base in {2, 3}");
    if (!(p.clip > 0.0) || !(p.sigma0 - std::abs(p.amp) * p.clip > 0.0))
      throw ConfigError("weierstrass_sigma: sigma0 - |amp| * clip must be positive");
  }
  std::string name() const override { return "weierstrass_sigma"; }
  void point(double, const double* x, double* b, double* s) const
  {
    const int d = dim();
    for (int i = 0; i < d * d; ++i)
      s[i] = 0.0;
    for (int i = 0; i < d; ++i) {
      const double xi = x[i];
      b[i] = -p_.drift_kappa * xi / (1.0 + xi * xi);
      double w = weierstrass_sum(xi, scales_.data(), p_.base, p_.n_terms);
      w = w > p_.clip ? p_.clip : (w < -p_.clip ? -p_.clip : w);
      s[i * d + i] = p_.sigma0 + p_.amp * w;
    }
  }

  void eval_batch(double t, std::size_t n, const double* x, double* b, double* s) const override
  {
    if (dim() != 1) {
      ZooField::eval_batch(t, n, x, b, s);
      return;
    }
    // one-dimensional hot path, written so that the loop vectorizes
    const double kappa = p_.drift_kappa;
    const double clip = p_.clip;
    const double s0 = p_.sigma0;
    const double amp = p_.amp;
    const int terms = p_.n_terms;
    const double* sc = scales_.data();
    if (p_.base == 2) {
      // terms outer, points inner: independent lanes keep the recurrence from
      // being latency bound
      constexpr std::size_t kBlock = 64;
      double c[kBlock];
      double w[kBlock];
      for (std::size_t start = 0; start < n; start += kBlock) {
        const std::size_t m = std::min(kBlock, n - start);
        const double* xs = x + start;
        for (std::size_t i = 0; i < m; ++i) {
          c[i] = cos_pi(xs[i]);
          w[i] = sc[0] * c[i];
        }
        for (int k = 1; k < terms; ++k) {
          const double sk = sc[k];
          for (std::size_t i = 0; i < m; ++i) {
            c[i] = 2.0 * c[i] * c[i] - 1.0;
            w[i] += sk * c[i];
          }
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double xi = xs[i];
          b[start + i] = -kappa * xi / (1.0 + xi * xi);
          const double wi = std::min(std::max(w[i], -clip), clip);
          s[start + i] = s0 + amp * wi;
        }
      }
    } else {
      ZooField::eval_batch(t, n, x, b, s);
    }
  }

private:
  WeierstrassSigmaParams p_;
  std::vector<double> scales_;
};

class PiecewiseDriftField final : public ZooField<PiecewiseDriftField>
{
public:
  PiecewiseDriftField(int dim,
                      DiscontinuitySet set,
                      double outside,
                      std::vector<double> jumps,
                      double sigma0,
                      double wiggle)
    : ZooField(dim, Regime::piecewise_smooth, 1.0, bounds_for(dim, outside, jumps, sigma0, wiggle))
    , set_(std::move(set))
    , outside_(outside)
    , jumps_(std::move(jumps))
    , sigma0_(sigma0)
    , wiggle_(wiggle)
  {
    if (set_.manifolds.empty())
      throw ConfigError("piecewise drift needs at least one manifold");
    if (jumps_.size() != set_.manifolds.size())
      throw ConfigError("piecewise drift: one jump per manifold required");
    for (const auto& m : set_.manifolds)
      if (m.dim != dim)
        throw ConfigError("piecewise drift: manifold dimension does not match the model");
    if (std::abs(wiggle) >= 1.0)
      throw ConfigError("piecewise drift: |sigma_wiggle| must be < 1");
    if (!(set_.min_separation() > 0.0))
      throw ConfigError("piecewise drift: discontinuity manifolds intersect");
  }

  std::string name() const override { return "piecewise_drift"; }
  const DiscontinuitySet* discontinuities() const override { return &set_; }

  void point(double, const double* x, double* b, double* s) const
  {
    const int d = dim();
    double v = outside_;
    const std::span<const double> xs(x, static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < set_.manifolds.size(); ++i)
      if (signed_distance(xs, set_.manifolds[i]) >= 0.0)
        v += jumps_[i];
    for (int i = 0; i < d * d; ++i)
      s[i] = 0.0;
    for (int i = 0; i < d; ++i) {
      b[i] = v;
      s[i * d + i] = wiggle_ == 0.0 ? sigma0_ : sigma0_ * (1.0 + wiggle_ * std::sin(x[i]));
    }
  }

  void eval_batch(double t, std::size_t n, const double* x, double* b, double* s) const override
  {
    if (dim() != 1 || set_.manifolds.size() != 1 || wiggle_ != 0.0) {
      ZooField::eval_batch(t, n, x, b, s);
      return;
    }
    const double p = set_.manifolds[0].center[0];
    const double lo = outside_;
    const double hi = outside_ + jumps_[0];
    for (std::size_t i = 0; i < n; ++i) {
      b[i] = x[i] - p >= 0.0 ? hi : lo;
      s[i] = sigma0_;
    }
  }

private:
  static FieldBounds bounds_for(int dim,
                                double outside,
                                const std::vector<double>& jumps,
                                double sigma0,
                                double wiggle)
  {
    double k1 = std::abs(outside);
    for (double j : jumps)
      k1 += std::abs(j);
    const double smax = std::abs(sigma0) * (1.0 + std::abs(wiggle));
    const double smin = std::abs(sigma0) * (1.0 - std::abs(wiggle));
    return { k1 * std::sqrt(dim), smax * std::sqrt(dim), ellipticity_from_range(smin, smax) };
  }

  DiscontinuitySet set_;
  double outside_;
  std::vector<double> jumps_;
  double sigma0_;
  double wiggle_;
};

class CirLikeField final : public ZooField<CirLikeField>
{
public:
  CirLikeField(double a, double k, double eta, double s, double cap)
    : ZooField(1, Regime::holder, 0.5,
               { std::numeric_limits<double>::infinity(), eta + cap,
                 ellipticity_from_range(eta, eta + cap) })
    , a_(a)
    , k_(k)
    , eta_(eta)
    , s_(s)
    , cap_(cap)
  {
    if (!(eta > 0.0) || !(cap > 0.0) || !(s > 0.0))
      throw ConfigError("cir_like: eta, s and cap must be positive");
  }
  std::string name() const override { return "cir_like"; }
  void point(double, const double* x, double* b, double* s) const
  {
    b[0] = a_ - k_ * x[0];
    s[0] = eta_ + std::min(s_ * std::sqrt(std::abs(x[0])), cap_);
  }

private:
  double a_, k_, eta_, s_, cap_;
};

class TimeSigmaField final : public ZooField<TimeSigmaField>
{
public:
  enum class Profile
  {
    linear,
    sine
  };
  TimeSigmaField(int dim, Profile profile, double sigma0, double a, double freq, double drift, double horizon)
    : ZooField(dim, Regime::holder, 1.0, bounds_for(dim, profile, sigma0, a, drift, horizon))
    , profile_(profile)
    , sigma0_(sigma0)
    , a_(a)
    , freq_(freq)
    , drift_(drift)
  {
    if (profile == Profile::sine && std::abs(a) >= 1.0)
      throw ConfigError("time_sine_sigma: |amp| must be < 1");
  }
  std::string name() const override
  {
    return profile_ == Profile::linear ? "time_linear_sigma" : "time_sine_sigma";
  }
  bool time_homogeneous() const override { return false; }
  void point(double t, const double*, double* b, double* s) const
  {
    const int d = dim();
    const double factor = profile_ == Profile::linear
                            ? 1.0 + a_ * t
                            : 1.0 + a_ * std::sin(2.0 * std::numbers::pi * freq_ * t);
    for (int i = 0; i < d; ++i)
      b[i] = drift_;
    diag(s, d, sigma0_ * factor);
  }

private:
  static FieldBounds bounds_for(int dim, Profile profile, double sigma0, double a, double drift, double horizon)
  {
    double lo = 0.0, hi = 0.0;
    if (profile == Profile::linear) {
      lo = std::abs(sigma0) * std::min(1.0, 1.0 + a * horizon);
      hi = std::abs(sigma0) * std::max(1.0, 1.0 + a * horizon);
    } else {
      lo = std::abs(sigma0) * (1.0 - std::abs(a));
      hi = std::abs(sigma0) * (1.0 + std::abs(a));
    }
    return { std::abs(drift) * std::sqrt(dim), hi * std::sqrt(dim), ellipticity_from_range(lo, hi) };
  }

  Profile profile_;
  double sigma0_, a_, freq_, drift_;
};

} // namespace

FieldPtr constant_field(int dim, double drift, double sigma)
{
  return std::make_shared<ConstantField>(dim, drift, sigma);
}

FieldPtr ou_field(int dim, double theta, double mean, double sigma)
{
  return std::make_shared<OuField>(dim, theta, mean, sigma);
}

FieldPtr tanh_drift_field(int dim, double amp, double sigma, double sigma_wiggle)
{
  return std::make_shared<TanhDriftField>(dim, amp, sigma, sigma_wiggle);
}

FieldPtr linear_bounded_field(int dim, double kappa, double sigma)
{
  return std::make_shared<LinearBoundedField>(dim, kappa, sigma);
}

FieldPtr weierstrass_sigma_field(int dim, const WeierstrassSigmaParams& p)
{
  return std::make_shared<WeierstrassSigmaField>(dim, p);
}

FieldPtr piecewise_drift_field(int dim,
                               DiscontinuitySet set,
                               double outside,
                               std::vector<double> jumps,
                               double sigma0,
                               double sigma_wiggle)
{
  return std::make_shared<PiecewiseDriftField>(dim, std::move(set), outside, std::move(jumps),
                                               sigma0, sigma_wiggle);
}

FieldPtr sign_drift_field(double amp, double point, double sigma)
{
  DiscontinuitySet set;
  set.manifolds.push_back(Manifold::point(point));
  return piecewise_drift_field(1, std::move(set), -amp, { 2.0 * amp }, sigma);
}

FieldPtr cir_like_field(double a, double k, double eta, double s, double cap)
{
  return std::make_shared<CirLikeField>(a, k, eta, s, cap);
}

FieldPtr time_linear_sigma_field(int dim, double sigma0, double slope, double drift)
{
  return std::make_shared<TimeSigmaField>(dim, TimeSigmaField::Profile::linear, sigma0, slope,
                                          0.0, drift, 1.0);
}

FieldPtr time_sine_sigma_field(int dim, double sigma0, double amp, double freq, double drift)
{
  return std::make_shared<TimeSigmaField>(dim, TimeSigmaField::Profile::sine, sigma0, amp, freq,
                                          drift, 1.0);
}

namespace {

struct ModelEntry
{
  const char* name;
  const char* description;
  std::map<std::string, double> defaults;
};

const std::vector<ModelEntry>& model_table()
{
  static const std::vector<ModelEntry> table = {
    { "constant", "b = drift, sigma = sigma * I", { { "drift", 0.0 }, { "sigma", 1.0 } } },
    { "ou", "b = -theta (x - mean), sigma = sigma * I",
      { { "theta", 1.0 }, { "mean", 0.0 }, { "sigma", 1.0 } } },
    { "tanh_drift", "b_k = amp tanh(x_k), sigma_kk = sigma (1 + sigma_wiggle sin x_k)",
      { { "amp", 0.5 }, { "sigma", 1.0 }, { "sigma_wiggle", 0.0 } } },
    { "linear_bounded", "b_k = -kappa x_k / (1 + x_k^2), sigma = sigma * I",
      { { "kappa", 1.0 }, { "sigma", 1.0 } } },
    { "weierstrass_sigma",
      "sigma_kk = sigma0 + amp clip(W_gamma(x_k)), b_k = -drift_kappa x_k / (1 + x_k^2)",
      { { "gamma", 0.5 }, { "base", 2.0 }, { "n_terms", 16.0 }, { "sigma0", 1.0 },
        { "amp", 0.5 }, { "clip", 1.0 }, { "drift_kappa", 1.0 } } },
    { "sign_drift", "1D: b = amp sign(x - point), sigma constant",
      { { "amp", 0.5 }, { "point", 0.0 }, { "sigma", 1.0 } } },
    { "piecewise_drift",
      "b_k = outside + sum_i jump 1[d_S_i(x) >= 0] over the configured manifolds",
      { { "outside", 0.0 }, { "jump", 1.0 }, { "sigma", 1.0 }, { "sigma_wiggle", 0.0 } } },
    { "cir_like", "1D: b = a - k x, sigma = eta + min(s |x|^{1/2}, cap)",
      { { "a", 0.5 }, { "k", 1.0 }, { "eta", 0.1 }, { "s", 1.0 }, { "cap", 2.0 } } },
    { "time_linear_sigma", "b = drift, sigma = sigma0 (1 + slope t) I",
      { { "sigma0", 1.0 }, { "slope", 0.5 }, { "drift", 0.0 } } },
    { "time_sine_sigma", "b = drift, sigma = sigma0 (1 + amp sin(2 pi freq t)) I",
      { { "sigma0", 1.0 }, { "amp", 0.2 }, { "freq", 1.0 }, { "drift", 0.0 } } },
  };
  return table;
}

} // namespace

std::vector<std::pair<std::string, std::string>> list_models()
{
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : model_table())
    out.emplace_back(e.name, e.description);
  return out;
}

FieldPtr make_model(const ModelSpec& spec)
{
  const auto& table = model_table();
  const auto it = std::find_if(table.begin(), table.end(),
                               [&](const ModelEntry& e) { return spec.name == e.name; });
  if (it == table.end())
    throw ConfigError("unknown model '" + spec.name + "'");
  std::map<std::string, double> p = it->defaults;
  for (const auto& [key, value] : spec.params) {
    if (!p.contains(key))
      throw ConfigError("unknown parameter '" + key + "' for model '" + spec.name + "'");
    p[key] = value;
  }
  if (spec.dim < 1 || spec.dim > kMaxDim)
    throw ConfigError("model dimension must be in [1, 3]");
  const int d = spec.dim;
  const std::string& n = spec.name;
  const auto one_d = [&] {
    if (d != 1)
      throw ConfigError("model '" + n + "' is one-dimensional");
  };
  if (n != "piecewise_drift" && !spec.manifolds.empty())
    throw ConfigError("model '" + n + "' does not take discontinuity manifolds");
  if (n == "constant")
    return constant_field(d, p["drift"], p["sigma"]);
  if (n == "ou")
    return ou_field(d, p["theta"], p["mean"], p["sigma"]);
  if (n == "tanh_drift")
    return tanh_drift_field(d, p["amp"], p["sigma"], p["sigma_wiggle"]);
  if (n == "linear_bounded")
    return linear_bounded_field(d, p["kappa"], p["sigma"]);
  if (n == "weierstrass_sigma") {
    WeierstrassSigmaParams w;
    w.gamma = p["gamma"];
    w.base = static_cast<int>(p["base"]);
    w.n_terms = static_cast<int>(p["n_terms"]);
    w.sigma0 = p["sigma0"];
    w.amp = p["amp"];
    w.clip = p["clip"];
    w.drift_kappa = p["drift_kappa"];
    return weierstrass_sigma_field(d, w);
  }
  if (n == "sign_drift") {
    one_d();
    return sign_drift_field(p["amp"], p["point"], p["sigma"]);
  }
  if (n == "piecewise_drift") {
    DiscontinuitySet set;
    set.manifolds = spec.manifolds;
    std::vector<double> jumps(set.manifolds.size(), p["jump"]);
    return piecewise_drift_field(d, std::move(set), p["outside"], std::move(jumps), p["sigma"],
                                 p["sigma_wiggle"]);
  }
  if (n == "cir_like") {
    one_d();
    return cir_like_field(p["a"], p["k"], p["eta"], p["s"], p["cap"]);
  }
  if (n == "time_linear_sigma")
    return time_linear_sigma_field(d, p["sigma0"], p["slope"], p["drift"]);
  if (n == "time_sine_sigma")
    return time_sine_sigma_field(d, p["sigma0"], p["amp"], p["freq"], p["drift"]);
  throw ConfigError("unknown model '" + n + "'");
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::vector<Vec> sample_points(int dim, double radius, int per_axis)
{
  std::vector<Vec> pts;
  const int n = std::max(per_axis, 1);
  const auto coord = [&](int i) {
    return n == 1 ? 0.0 : -radius + 2.0 * radius * i / (n - 1);
  };
  if (dim == 1) {
    for (int i = 0; i < n; ++i)
      pts.push_back({ coord(i), 0.0, 0.0 });
  } else if (dim == 2) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        pts.push_back({ coord(i), coord(j), 0.0 });
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          pts.push_back({ coord(i), coord(j), coord(k) });
  }
  return pts;
}

ValidationReport validate_assumptions(const CoefficientField& field, const SampleGrid& grid)
{
  const int d = field.dim();
  const FieldBounds& declared = field.bounds();
  ValidationReport report;
  // keep the 3D grid affordable
  const int per_axis = d == 1 ? grid.space_points : (d == 2 ? std::min(grid.space_points, 101)
                                                            : std::min(grid.space_points, 31));
  const std::vector<Vec> nodes = sample_points(d, grid.radius, per_axis);
  const int nt = std::max(grid.time_points, 1);
  const double slack = 1e-12;

  for (int it = 0; it < nt; ++it) {
    const double t = nt == 1 ? 0.0 : grid.horizon * it / (nt - 1);
    for (const Vec& x : nodes) {
      const Vec b = field.drift(t, x);
      const Mat s = field.sigma_mat(t, x);
      const double bn = norm(b, d);
      const double sn = frobenius(s, d);
      if (!std::isfinite(bn) || !std::isfinite(sn)) {
        report.violations.push_back({ "non_finite", t, x, bn + sn });
        continue;
      }
      report.k1_measured = std::max(report.k1_measured, bn);
      report.k2_measured = std::max(report.k2_measured, sn);
      if (bn > declared.k1 * (1.0 + slack))
        report.violations.push_back({ "drift_bound", t, x, bn });
      if (sn > declared.k2 * (1.0 + slack))
        report.violations.push_back({ "sigma_bound", t, x, sn });
      const auto ev = symmetric_eigenvalues(outer_self(s, d), d);
      const double lo = ev[0];
      const double hi = ev[static_cast<std::size_t>(d - 1)];
      report.ellipticity_min = std::min(report.ellipticity_min, lo);
      report.ellipticity_max = std::max(report.ellipticity_max, hi);
      if (!(lo > 0.0) || lo * declared.lambda < 1.0 - slack || hi > declared.lambda * (1.0 + slack))
        report.violations.push_back({ "ellipticity", t, x, lo });
    }
  }

  // Holder quotients on random pairs anchored at grid nodes; pair distances
  // are log-uniform in [1e-6, 1].
  const double g = field.gamma();
  constexpr int kBins = 12; // half decades over [1e-6, 1]
  std::array<double, kBins> worst{};
  const auto increment = [&](double s, const Vec& x, double t, const Vec& y) {
    const Vec bx = field.drift(s, x);
    const Vec by = field.drift(t, y);
    const Mat sx = field.sigma_mat(s, x);
    const Mat sy = field.sigma_mat(t, y);
    Vec db{};
    Mat ds{};
    for (int i = 0; i < d; ++i)
      db[i] = bx[i] - by[i];
    for (std::size_t i = 0; i < ds.size(); ++i)
      ds[i] = sx[i] - sy[i];
    return norm(db, d) + frobenius(ds, d);
  };
  const auto stream = stream_id(Stream::validation);
  for (int k = 0; k < grid.holder_pairs; ++k) {
    const auto [u0, u1] = uniform_pair(grid.seed, stream, static_cast<std::uint64_t>(k), 0);
    const auto [u2, u3] = uniform_pair(grid.seed, stream, static_cast<std::uint64_t>(k), 1);
    const auto [z0, z1] = normal_pair(grid.seed, stream, static_cast<std::uint64_t>(k), 2);
    const auto [z2, u4] = uniform_pair(grid.seed, stream, static_cast<std::uint64_t>(k), 3);
    const Vec& x = nodes[std::min(nodes.size() - 1, static_cast<std::size_t>(u0 * nodes.size()))];
    const double r = std::pow(10.0, -6.0 * u1);
    Vec dir{ z0, z1, z2 - 0.5 };
    if (d == 1)
      dir = { u2 < 0.5 ? -1.0 : 1.0, 0.0, 0.0 };
    const double dn = norm(dir, d);
    Vec y = x;
    for (int i = 0; i < d; ++i)
      y[i] += r * dir[i] / dn;
    const double t = grid.horizon * u3;
    // space-only pair for the exponent estimate
    const double inc = increment(t, x, t, y);
    const int bin = std::clamp(static_cast<int>(-std::log10(r) * 2.0), 0, kBins - 1);
    worst[static_cast<std::size_t>(kBins - 1 - bin)] =
      std::max(worst[static_cast<std::size_t>(kBins - 1 - bin)], inc);
    // joint time-space quotient
    const double dt = std::min(grid.horizon, r * r) * u4;
    const double t2 = std::min(grid.horizon, t + dt);
    const double inc2 = increment(t, x, t2, y);
    const double denom = std::pow(std::abs(t2 - t), g / 2.0) + std::pow(r, g);
    report.holder_quotient = std::max(report.holder_quotient, inc2 / denom);
  }
  // least-squares slope of log(worst) on log(r) over bins inside [1e-5, 1e-1]
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (int b = 0; b < kBins; ++b) {
    const double lo = -6.0 + 0.5 * b;
    const double center = lo + 0.25;
    if (lo < -5.0 || lo + 0.5 > -1.0 || !(worst[static_cast<std::size_t>(b)] > 0.0))
      continue;
    const double lx = center * std::log(10.0);
    const double ly = std::log(worst[static_cast<std::size_t>(b)]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++used;
  }
  if (used >= 2) {
    const double den = used * sxx - sx * sx;
    report.holder_exponent = (used * sxy - sx * sy) / den;
  }
  return report;
}

} // namespace ewel
