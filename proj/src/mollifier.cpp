#include "ewel/mollifier.hpp"

#include "ewel/errors.hpp"
#include "ewel/quadrature.hpp"
#include "ewel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ewel {

namespace {

double bump(double r2)
{
  return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0;
}

double sphere_area(int dim)
{
  switch (dim) {
    case 1:
      return 2.0;
    case 2:
      return 2.0 * std::numbers::pi;
    default:
      return 4.0 * std::numbers::pi;
  }
}

//! int_0^1 r^p exp(-1/(1-r^2)) dr with geometric panels towards 0 (r^p may
//! be non-smooth there) and uniform panels elsewhere.
double radial_integral(double power)
{
  static const QuadratureRule gl = gauss_legendre(16);
  double total = 0.0;
  const auto panel = [&](double a, double b) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (b + a);
    double s = 0.0;
    for (std::size_t k = 0; k < gl.size(); ++k) {
      const double r = mid + half * gl.nodes[k];
      s += gl.weights[k] * std::pow(r, power) * bump(r * r);
    }
    return s * half;
  };
  double lo = 0x1p-40;
  while (lo < 0.5) {
    total += panel(lo, 2.0 * lo);
    lo *= 2.0;
  }
  constexpr int kPanels = 96;
  for (int i = 0; i < kPanels; ++i)
    total += panel(0.5 + 0.5 * i / kPanels, 0.5 + 0.5 * (i + 1) / kPanels);
  return total;
}

} // namespace

// ---------------------------------------------------------------------------
// MollifierKernel
// ---------------------------------------------------------------------------

MollifierKernel::MollifierKernel(int dim, std::size_t nodes_per_axis)
  : dim_(dim)
{
  if (dim < 1 || dim > kMaxDim)
    throw ConfigError("mollifier dimension must be in [1, 3]");
  if (nodes_per_axis < 8)
    throw ConfigError("mollifier quadrature needs at least 8 nodes per axis, got " +
                      std::to_string(nodes_per_axis));
  norm_ = 1.0 / (sphere_area(dim) * radial_integral(dim - 1));

  const QuadratureRule gl = gauss_legendre(nodes_per_axis);
  const std::size_t n = gl.size();
  std::size_t total = 1;
  for (int i = 0; i < dim; ++i)
    total *= n;
  for (std::size_t flat = 0; flat < total; ++flat) {
    Vec z{};
    double w = 1.0;
    std::size_t rest = flat;
    for (int i = 0; i < dim; ++i) {
      const std::size_t k = rest % n;
      rest /= n;
      z[i] = gl.nodes[k];
      w *= gl.weights[k];
    }
    const double r2 = dot(z, z, dim);
    if (r2 >= 1.0)
      continue;
    const double v = w * norm_ * bump(r2);
    if (v == 0.0)
      continue;
    nodes_.push_back(z);
    weights_.push_back(v);
    raw_mass_ += v;
  }
  for (double& w : weights_)
    w /= raw_mass_;
}

double MollifierKernel::operator()(std::span<const double> z) const
{
  double r2 = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i)
    r2 += z[i] * z[i];
  return norm_ * bump(r2);
}

double MollifierKernel::radial(double r) const
{
  return norm_ * bump(r * r);
}

double MollifierKernel::moment(double gamma) const
{
  if (!(gamma >= 0.0))
    throw ArgumentError("moment: exponent must be non-negative");
  return norm_ * sphere_area(dim_) * radial_integral(dim_ - 1 + gamma);
}

// ---------------------------------------------------------------------------
// MollifiedField
// ---------------------------------------------------------------------------

std::string to_string(MollifyMethod m)
{
  return m == MollifyMethod::holder_convolution ? "holder_convolution" : "piecewise_blend";
}

namespace {

FieldBounds mollified_bounds(const CoefficientField& base, MollifyMethod method)
{
  FieldBounds b = base.bounds();
  // the blend weights sum to at most 2 (about 1.84 at the manifold)
  if (method == MollifyMethod::piecewise_blend)
    b.k1 *= 2.0;
  return b;
}

void check_base(const FieldPtr& base)
{
  if (!base)
    throw ConfigError("mollify: missing base field");
}

} // namespace

MollifiedField::MollifiedField(FieldPtr base,
                               double epsilon,
                               MollifyMethod method,
                               MollifierSettings settings)
  : CoefficientField((check_base(base), base->dim()), base->regime(), base->gamma(),
                     mollified_bounds(*base, method))
  , base_(std::move(base))
  , eps_(epsilon)
  , method_(method)
  , settings_(settings)
{
  if (!(eps_ > 0.0))
    throw ConfigError("mollify: epsilon must be positive");
  if (method_ == MollifyMethod::holder_convolution) {
    space_ = std::make_unique<MollifierKernel>(dim(), settings_.nodes);
    if (!base_->time_homogeneous()) {
      if (!(settings_.horizon > 0.0))
        throw ConfigError("mollify: horizon must be positive");
      if (eps_ * eps_ > settings_.horizon)
        throw ConfigError("mollify: eps^2 exceeds the time horizon");
      time_ = std::make_unique<MollifierKernel>(1, settings_.nodes);
    }
  }
}

std::string MollifiedField::name() const
{
  return base_->name() + "_mollified";
}

void MollifiedField::convolve(double t, const double* x, double* b, double* s) const
{
  const int d = dim();
  const std::size_t du = static_cast<std::size_t>(d);
  const auto& nodes = space_->nodes();
  const auto& weights = space_->weights();
  const std::size_t n = nodes.size();
  std::vector<double> ys(n * du);
  std::vector<double> bs(n * du);
  std::vector<double> ss(n * du * du);
  for (std::size_t k = 0; k < n; ++k)
    for (int i = 0; i < d; ++i)
      ys[k * du + i] = x[i] - eps_ * nodes[k][i];

  for (std::size_t i = 0; i < du; ++i)
    b[i] = 0.0;
  for (std::size_t i = 0; i < du * du; ++i)
    s[i] = 0.0;

  const auto accumulate = [&](double tt, double wt) {
    base_->eval_batch(tt, n, ys.data(), bs.data(), ss.data());
    for (std::size_t k = 0; k < n; ++k) {
      const double w = wt * weights[k];
      for (std::size_t i = 0; i < du; ++i)
        b[i] += w * bs[k * du + i];
      for (std::size_t i = 0; i < du * du; ++i)
        s[i] += w * ss[k * du * du + i];
    }
  };

  if (!time_) {
    accumulate(t, 1.0);
    return;
  }
  const double horizon = settings_.horizon;
  const auto& tn = time_->nodes();
  const auto& tw = time_->weights();
  for (std::size_t j = 0; j < tn.size(); ++j) {
    double u = t - eps_ * eps_ * tn[j][0];
    if (u < 0.0)
      u = -u; // b(-t) = b(t)
    else if (u > horizon)
      u = 2.0 * horizon - u; // b(T + s) = b(T - s)
    accumulate(u, tw[j]);
  }
}

std::array<double, 2> MollifiedField::blend_weights(std::span<const double> x) const
{
  const DiscontinuitySet* set = base_->discontinuities();
  if (!set || set->manifolds.empty())
    return { 0.0, 0.0 };
  const auto [index, ds] = set->nearest(x);
  (void)index;
  if (std::abs(ds) >= eps_)
    return { 0.0, 0.0 };
  const double e14 = std::exp(0.25);
  const double d1 = (ds + eps_) / eps_;
  const double d2 = (ds - eps_) / eps_;
  return { e14 * std::exp(-1.0 / (4.0 - d1 * d1)), e14 * std::exp(-1.0 / (4.0 - d2 * d2)) };
}

void MollifiedField::blend(double t, const double* x, double* b, double* s) const
{
  const auto du = static_cast<std::size_t>(dim());
  const std::span<const double> xs(x, du);
  base_->sigma(t, xs, { s, du * du });
  const DiscontinuitySet* set = base_->discontinuities();
  const auto [index, ds] = set->nearest(xs);
  if (std::abs(ds) >= eps_) {
    base_->drift(t, xs, { b, du });
    return;
  }
  const Manifold& m = set->manifolds[index];
  const auto w = blend_weights(xs);
  const Vec p1 = project(xs, m, -eps_);
  const Vec p2 = project(xs, m, eps_);
  Vec b1{};
  Vec b2{};
  base_->drift(t, { p1.data(), du }, { b1.data(), du });
  base_->drift(t, { p2.data(), du }, { b2.data(), du });
  for (std::size_t i = 0; i < du; ++i)
    b[i] = b1[i] * w[0] + b2[i] * w[1];
}

void MollifiedField::drift(double t, std::span<const double> x, std::span<double> b) const
{
  std::array<double, kMaxDim * kMaxDim> s{};
  if (method_ == MollifyMethod::holder_convolution)
    convolve(t, x.data(), b.data(), s.data());
  else
    blend(t, x.data(), b.data(), s.data());
}

void MollifiedField::sigma(double t, std::span<const double> x, std::span<double> s) const
{
  Vec b{};
  if (method_ == MollifyMethod::holder_convolution)
    convolve(t, x.data(), b.data(), s.data());
  else
    base_->sigma(t, x, s);
}

void MollifiedField::eval_batch(double t, std::size_t n, const double* x, double* b, double* s) const
{
  const auto d = static_cast<std::size_t>(dim());
  for (std::size_t i = 0; i < n; ++i) {
    if (method_ == MollifyMethod::holder_convolution)
      convolve(t, x + i * d, b + i * d, s + i * d * d);
    else
      blend(t, x + i * d, b + i * d, s + i * d * d);
  }
}

MollifiedPtr mollify_holder(FieldPtr field, double eps, MollifierSettings settings)
{
  check_base(field);
  if (field->regime() != Regime::holder)
    throw ConfigError("mollify_holder: field '" + field->name() + "' is not in the Holder regime");
  if (!(eps > 0.0 && eps <= 1.0))
    throw ConfigError("mollify_holder: epsilon must lie in (0, 1]");
  return std::make_shared<MollifiedField>(std::move(field), eps, MollifyMethod::holder_convolution,
                                          settings);
}

MollifiedPtr mollify_piecewise(FieldPtr field, double eps, MollifierSettings settings)
{
  check_base(field);
  const DiscontinuitySet* set = field->discontinuities();
  if (!set || set->manifolds.empty())
    throw ConfigError("mollify_piecewise: field '" + field->name() +
                      "' carries no discontinuity set");
  if (!(eps > 0.0))
    throw ConfigError("mollify_piecewise: epsilon must be positive");
  for (std::size_t i = 0; i < set->manifolds.size(); ++i) {
    const Manifold& m = set->manifolds[i];
    if (m.kind == ManifoldKind::sphere && !(eps < m.radius))
      throw ConfigError("mollify_piecewise: epsilon exceeds the radius of sphere " +
                        std::to_string(i));
    for (std::size_t j = i + 1; j < set->manifolds.size(); ++j) {
      DiscontinuitySet pair;
      pair.manifolds = { m, set->manifolds[j] };
      const double sep = pair.min_separation();
      if (!(sep > 2.0 * eps))
        throw ConfigError("mollify_piecewise: eps-neighbourhoods of manifolds " +
                          std::to_string(i) + " and " + std::to_string(j) +
                          " overlap (separation " + std::to_string(sep) + ")");
    }
  }
  return std::make_shared<MollifiedField>(std::move(field), eps, MollifyMethod::piecewise_blend,
                                          settings);
}

// ---------------------------------------------------------------------------
// Tabulated field
// ---------------------------------------------------------------------------

namespace {

class TabulatedField final : public CoefficientField
{
public:
  TabulatedField(FieldPtr source, double lo, double hi, double spacing)
    : CoefficientField(source->dim(), source->regime(), source->gamma(), source->bounds())
    , source_(std::move(source))
    , lo_(lo)
  {
    const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / spacing)) + 1;
    step_ = (hi - lo) / static_cast<double>(n - 1);
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i)
      xs[i] = lo + step_ * static_cast<double>(i);
    drift_.resize(n);
    sigma_.resize(n);
    source_->eval_batch(0.0, n, xs.data(), drift_.data(), sigma_.data());
  }

  using CoefficientField::drift;

  std::string name() const override { return source_->name() + "_tabulated"; }

  void drift(double t, std::span<const double> x, std::span<double> b) const override
  {
    double s = 0.0;
    eval_batch(t, 1, x.data(), b.data(), &s);
  }

  void sigma(double t, std::span<const double> x, std::span<double> s) const override
  {
    double b = 0.0;
    eval_batch(t, 1, x.data(), &b, s.data());
  }

  void eval_batch(double t, std::size_t n, const double* x, double* b, double* s) const override
  {
    const double last = static_cast<double>(drift_.size()) - 3.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double u = (x[k] - lo_) / step_;
      const double fl = std::floor(u);
      if (!(fl >= 1.0 && fl <= last)) {
        source_->eval_batch(t, 1, x + k, b + k, s + k);
        continue;
      }
      const auto i = static_cast<std::size_t>(fl);
      const double f = u - fl;
      const double wm = -f * (f - 1.0) * (f - 2.0) / 6.0;
      const double w0 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
      const double w1 = -(f + 1.0) * f * (f - 2.0) / 2.0;
      const double w2 = (f + 1.0) * f * (f - 1.0) / 6.0;
      b[k] = wm * drift_[i - 1] + w0 * drift_[i] + w1 * drift_[i + 1] + w2 * drift_[i + 2];
      s[k] = wm * sigma_[i - 1] + w0 * sigma_[i] + w1 * sigma_[i + 1] + w2 * sigma_[i + 2];
    }
  }

private:
  FieldPtr source_;
  double lo_;
  double step_ = 0.0;
  std::vector<double> drift_;
  std::vector<double> sigma_;
};

} // namespace

FieldPtr tabulate_1d(FieldPtr source, double lo, double hi, double spacing)
{
  if (!source)
    throw ConfigError("tabulate_1d: missing source field");
  if (source->dim() != 1 || !source->time_homogeneous())
    throw ConfigError("tabulate_1d: only one-dimensional time-homogeneous fields");
  if (!(hi > lo) || !(spacing > 0.0) || (hi - lo) / spacing < 4.0)
    throw ConfigError("tabulate_1d: need hi > lo and at least four intervals");
  if ((hi - lo) / spacing > 1e8)
    throw BudgetError("tabulate_1d: table would exceed 1e8 nodes");
  return std::make_shared<TabulatedField>(std::move(source), lo, hi, spacing);
}

// ---------------------------------------------------------------------------
// Scans
// ---------------------------------------------------------------------------

DeviationReport sup_deviation(const CoefficientField& field,
                              const CoefficientField& mollified,
                              const SampleGrid& grid,
                              double eta)
{
  if (field.dim() != mollified.dim())
    throw ArgumentError("sup_deviation: dimension mismatch");
  if (!(eta > 0.0 && eta < field.gamma()))
    throw ArgumentError("sup_deviation: eta must lie in (0, gamma)");
  const int d = field.dim();
  const auto du = static_cast<std::size_t>(d);
  const int per_axis = d == 1 ? grid.space_points
                              : (d == 2 ? std::min(grid.space_points, 101)
                                        : std::min(grid.space_points, 31));
  const std::vector<Vec> pts = sample_points(d, grid.radius, per_axis);
  const int nt = std::max(grid.time_points, 1);
  DeviationReport rep;
  rep.eta = eta;

  // contiguous batch evaluation keeps the convolution cost vectorized
  std::vector<double> xs(pts.size() * du);
  for (std::size_t k = 0; k < pts.size(); ++k)
    for (std::size_t i = 0; i < du; ++i)
      xs[k * du + i] = pts[k][i];
  std::vector<double> b0(xs.size()), b1(xs.size());
  std::vector<double> s0(pts.size() * du * du), s1(s0.size());
  for (int it = 0; it < nt; ++it) {
    const double t = nt == 1 ? 0.0 : grid.horizon * it / (nt - 1);
    field.eval_batch(t, pts.size(), xs.data(), b0.data(), s0.data());
    mollified.eval_batch(t, pts.size(), xs.data(), b1.data(), s1.data());
    for (std::size_t k = 0; k < pts.size(); ++k) {
      double db = 0.0;
      double ds = 0.0;
      for (std::size_t i = 0; i < du; ++i)
        db += (b0[k * du + i] - b1[k * du + i]) * (b0[k * du + i] - b1[k * du + i]);
      for (std::size_t i = 0; i < du * du; ++i) {
        const double v = s0[k * du * du + i] - s1[k * du * du + i];
        ds += v * v;
      }
      rep.delta_b = std::max(rep.delta_b, std::sqrt(db));
      rep.delta_sigma = std::max(rep.delta_sigma, std::sqrt(ds));
    }
  }

  // eta-Holder seminorm of g = sigma - sigma_eps on random pairs
  const auto g = [&](double t, const Vec& x) {
    Mat a = field.sigma_mat(t, x);
    const Mat m = mollified.sigma_mat(t, x);
    for (std::size_t i = 0; i < a.size(); ++i)
      a[i] -= m[i];
    return a;
  };
  const auto stream = stream_id(Stream::validation, 1);
  for (int k = 0; k < grid.holder_pairs; ++k) {
    const auto [u0, u1] = uniform_pair(grid.seed, stream, static_cast<std::uint64_t>(k), 0);
    const auto [z0, z1] = normal_pair(grid.seed, stream, static_cast<std::uint64_t>(k), 1);
    const auto [z2, u2] = normal_pair(grid.seed, stream, static_cast<std::uint64_t>(k), 2);
    (void)u2;
    const Vec& x = pts[std::min(pts.size() - 1, static_cast<std::size_t>(u0 * pts.size()))];
    const double r = std::pow(10.0, -6.0 * u1);
    Vec dir{ z0, z1, z2 };
    if (d == 1)
      dir = { z0 < 0.0 ? -1.0 : 1.0, 0.0, 0.0 };
    const double dn = norm(dir, d);
    Vec y = x;
    for (int i = 0; i < d; ++i)
      y[i] += r * dir[i] / dn;
    const double t = 0.0;
    const Mat gx = g(t, x);
    const Mat gy = g(t, y);
    Mat diff{};
    for (std::size_t i = 0; i < diff.size(); ++i)
      diff[i] = gx[i] - gy[i];
    rep.delta_sigma_eta = std::max(rep.delta_sigma_eta, frobenius(diff, d) / std::pow(r, eta));
  }
  return rep;
}

double lq_deviation(const CoefficientField& field,
                    const MollifiedField& mollified,
                    double q,
                    double horizon,
                    double extent)
{
  const int d = field.dim();
  if (!(q > d))
    throw ConfigError("lq_deviation: q must exceed the dimension (q = " + std::to_string(q) +
                      ", d = " + std::to_string(d) + ")");
  if (!(horizon > 0.0))
    throw ArgumentError("lq_deviation: horizon must be positive");
  if (mollified.dim() != d)
    throw ArgumentError("lq_deviation: dimension mismatch");
  const double eps = mollified.epsilon();

  // integration box and per-axis breakpoints
  std::array<double, kMaxDim> lo{};
  std::array<double, kMaxDim> hi{};
  std::array<std::vector<double>, kMaxDim> breaks;
  for (int i = 0; i < d; ++i) {
    lo[i] = std::numeric_limits<double>::infinity();
    hi[i] = -std::numeric_limits<double>::infinity();
  }
  const DiscontinuitySet* set = field.discontinuities();
  if (!set || set->manifolds.empty()) {
    for (int i = 0; i < d; ++i)
      lo[i] = -extent, hi[i] = extent;
  } else {
    for (const Manifold& m : set->manifolds) {
      switch (m.kind) {
        case ManifoldKind::point:
          lo[0] = std::min(lo[0], m.center[0] - 3.0 * eps);
          hi[0] = std::max(hi[0], m.center[0] + 3.0 * eps);
          breaks[0].insert(breaks[0].end(),
                           { m.center[0] - eps, m.center[0], m.center[0] + eps });
          break;
        case ManifoldKind::sphere:
          for (int i = 0; i < d; ++i) {
            lo[i] = std::min(lo[i], m.center[i] - m.radius - 3.0 * eps);
            hi[i] = std::max(hi[i], m.center[i] + m.radius + 3.0 * eps);
          }
          break;
        case ManifoldKind::hyperplane:
          for (int i = 0; i < d; ++i) {
            lo[i] = std::min(lo[i], -extent);
            hi[i] = std::max(hi[i], extent);
          }
          break;
      }
    }
  }
  const int uniform_panels = d == 1 ? 64 : (d == 2 ? 48 : 16);
  std::array<QuadratureRule, kMaxDim> rules;
  static const QuadratureRule gl = gauss_legendre(8);
  for (int i = 0; i < d; ++i) {
    std::vector<double> cuts;
    for (int p = 0; p <= uniform_panels; ++p)
      cuts.push_back(lo[i] + (hi[i] - lo[i]) * p / uniform_panels);
    for (double c : breaks[i])
      if (c > lo[i] && c < hi[i])
        cuts.push_back(c);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
      const double half = 0.5 * (cuts[p + 1] - cuts[p]);
      const double mid = 0.5 * (cuts[p + 1] + cuts[p]);
      if (half <= 0.0)
        continue;
      for (std::size_t k = 0; k < gl.size(); ++k) {
        rules[i].nodes.push_back(mid + half * gl.nodes[k]);
        rules[i].weights.push_back(half * gl.weights[k]);
      }
    }
  }

  const bool homogeneous = field.time_homogeneous() && mollified.time_homogeneous();
  const QuadratureRule time_rule =
    homogeneous ? QuadratureRule{ { 0.0 }, { horizon } } : gauss_legendre(16, 0.0, horizon);

  std::size_t total = 1;
  for (int i = 0; i < d; ++i)
    total *= rules[i].size();
  double integral = 0.0;
  for (std::size_t j = 0; j < time_rule.size(); ++j) {
    const double t = time_rule.nodes[j];
    double space = 0.0;
    for (std::size_t flat = 0; flat < total; ++flat) {
      Vec x{};
      double w = 1.0;
      std::size_t rest = flat;
      for (int i = 0; i < d; ++i) {
        const std::size_t k = rest % rules[i].size();
        rest /= rules[i].size();
        x[i] = rules[i].nodes[k];
        w *= rules[i].weights[k];
      }
      const Vec b0 = field.drift(t, x);
      const Vec b1 = mollified.drift(t, x);
      Vec diff{};
      for (int i = 0; i < d; ++i)
        diff[i] = b0[i] - b1[i];
      space += w * std::pow(norm(diff, d), q);
    }
    integral += time_rule.weights[j] * space;
  }
  return std::pow(integral, 1.0 / q);
}

namespace {

//! Central difference stencil for the k-th derivative (offsets -2..2).
std::array<double, 5> central_stencil(int k)
{
  switch (k) {
    case 0:
      return { 0.0, 0.0, 1.0, 0.0, 0.0 };
    case 1:
      return { 0.0, -0.5, 0.0, 0.5, 0.0 };
    case 2:
      return { 0.0, 1.0, -2.0, 1.0, 0.0 };
    case 3:
      return { -0.5, 1.0, 0.0, -1.0, 0.5 };
    case 4:
      return { 1.0, -4.0, 6.0, -4.0, 1.0 };
    default:
      throw ArgumentError("derivative order above 4");
  }
}

} // namespace

DerivativeReport derivative_blowup_scan(const MollifiedField& mollified,
                                        const std::array<int, kMaxDim>& alpha,
                                        const std::vector<Vec>& points,
                                        double t,
                                        double step)
{
  const int d = mollified.dim();
  const double eps = mollified.epsilon();
  int order = 0;
  for (int i = 0; i < kMaxDim; ++i) {
    if (alpha[i] < 0)
      throw ArgumentError("derivative_blowup_scan: negative multi-index entry");
    if (i >= d && alpha[i] != 0)
      throw ArgumentError("derivative_blowup_scan: multi-index exceeds the dimension");
    order += alpha[i];
  }
  if (order > 4)
    throw ArgumentError("derivative_blowup_scan: |alpha| must be at most 4");
  if (step == 0.0)
    step = eps / 20.0;
  if (!(step > 0.0) || step >= eps / 4.0)
    throw ConfigError("derivative_blowup_scan: finite-difference step " + std::to_string(step) +
                      " does not resolve epsilon " + std::to_string(eps));

  // tensor stencil: offsets and weights
  std::vector<std::array<int, kMaxDim>> offsets;
  std::vector<double> weights;
  std::size_t combos = 1;
  for (int i = 0; i < d; ++i)
    combos *= 5;
  for (std::size_t flat = 0; flat < combos; ++flat) {
    std::array<int, kMaxDim> off{};
    double w = 1.0;
    std::size_t rest = flat;
    for (int i = 0; i < d; ++i) {
      const int j = static_cast<int>(rest % 5);
      rest /= 5;
      off[i] = j - 2;
      w *= central_stencil(alpha[i])[static_cast<std::size_t>(j)];
    }
    if (w != 0.0) {
      offsets.push_back(off);
      weights.push_back(w);
    }
  }
  const double scale = std::pow(step, -order);

  const auto du = static_cast<std::size_t>(d);
  const std::size_t ns = offsets.size();
  std::vector<double> xs(ns * du), bs(ns * du), ss(ns * du * du);
  DerivativeReport rep;
  rep.step = step;
  for (const Vec& p : points) {
    for (std::size_t k = 0; k < ns; ++k)
      for (std::size_t i = 0; i < du; ++i)
        xs[k * du + i] = p[i] + offsets[k][i] * step;
    mollified.eval_batch(t, ns, xs.data(), bs.data(), ss.data());
    Vec db{};
    Mat dsig{};
    for (std::size_t k = 0; k < ns; ++k) {
      for (std::size_t i = 0; i < du; ++i)
        db[i] += weights[k] * bs[k * du + i];
      for (std::size_t i = 0; i < du * du; ++i)
        dsig[i] += weights[k] * ss[k * du * du + i];
    }
    double sn = 0.0;
    for (std::size_t i = 0; i < du * du; ++i)
      sn += dsig[i] * dsig[i];
    rep.max_drift = std::max(rep.max_drift, norm(db, d) * scale);
    rep.max_sigma = std::max(rep.max_sigma, std::sqrt(sn) * scale);
  }
  return rep;
}

} // namespace ewel
