#include "ewel/parametrix.hpp"

#include "ewel/errors.hpp"
#include "ewel/format.hpp"
#include "ewel/parallel.hpp"
#include "ewel/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ewel {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::size_t kCovarianceNodes = 16;

//! Centered Gaussian N(0, cov) with its inverse covariance.
struct Gaussian
{
  Mat inv{};
  double norm = 0.0; // (2 pi)^{-d/2} det^{-1/2}
};

Gaussian make_gaussian(const Mat& cov, int dim, double u, double t)
{
  Gaussian g;
  double det = 0.0;
  if (!spd_inverse(cov, dim, g.inv, det) || !(det > 0.0) || !std::isfinite(det))
    throw NumericalFault("proxy covariance on [" + format_double(u) + ", " + format_double(t) +
                         "] is not positive definite (ellipticity violated?)");
  g.norm = 1.0 / std::sqrt(std::pow(2.0 * kPi, dim) * det);
  return g;
}

//! Gaussian value at diff and m = inv * diff.
double gaussian_at(const Gaussian& g, const double* diff, int dim, double* m)
{
  double q = 0.0;
  for (int i = 0; i < dim; ++i) {
    double v = 0.0;
    for (int j = 0; j < dim; ++j)
      v += g.inv[i * kMaxDim + j] * diff[j];
    m[i] = v;
    q += diff[i] * v;
  }
  return g.norm * std::exp(-0.5 * q);
}

//! H = p [<b, m> + 1/2 sum_ij da_ij (m_i m_j - inv_ij)] with diff = y - z.
double kernel_at(const Gaussian& g, const double* diff, const double* b, const double* da, int dim)
{
  double m[kMaxDim];
  const double p = gaussian_at(g, diff, dim, m);
  double acc = 0.0;
  for (int i = 0; i < dim; ++i)
    acc += b[i] * m[i];
  double second = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      second += da[i * dim + j] * (m[i] * m[j] - g.inv[i * kMaxDim + j]);
  return p * (acc + 0.5 * second);
}

//! a = s s^T for a compact row-major d x d sigma.
void compact_diffusion(const double* s, int dim, double* a)
{
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      double v = 0.0;
      for (int k = 0; k < dim; ++k)
        v += s[i * dim + k] * s[j * dim + k];
      a[i * dim + j] = v;
    }
}

//! Composite rule on [a, b]: each half uses u = end -+ len sigma^p with
//! p = 2 / gamma, which flattens endpoint singularities of order
//! (u - a)^{gamma/2 - 1}.
QuadratureRule graded_rule(const QuadratureRule& unit, double a, double b, double gamma)
{
  const double p = 2.0 / gamma;
  const double len = 0.5 * (b - a);
  QuadratureRule r;
  r.nodes.reserve(2 * unit.size());
  r.weights.reserve(2 * unit.size());
  for (std::size_t k = 0; k < unit.size(); ++k) {
    const double sg = unit.nodes[k];
    const double off = len * std::pow(sg, p);
    const double jac = len * p * std::pow(sg, p - 1.0) * unit.weights[k];
    r.nodes.push_back(a + off);
    r.weights.push_back(jac);
    r.nodes.push_back(b - off);
    r.weights.push_back(jac);
  }
  return r;
}

//! Per-axis Gauss-Legendre window; empty when lo >= hi.
struct Window
{
  double lo[kMaxDim];
  double hi[kMaxDim];
  bool empty = false;
};

Window intersect(const Vec& c1, double r1, const Vec& c2, double r2, int dim)
{
  Window w;
  for (int k = 0; k < dim; ++k) {
    w.lo[k] = std::max(c1[k] - r1, c2[k] - r2);
    w.hi[k] = std::min(c1[k] + r1, c2[k] + r2);
    if (!(w.lo[k] < w.hi[k]))
      w.empty = true;
  }
  return w;
}

//! Tensor nodes (n^d x d) and weights of a window.
void window_nodes(const Window& w,
                  const QuadratureRule& unit,
                  int dim,
                  std::vector<double>& pts,
                  std::vector<double>& wts)
{
  const std::size_t n = unit.size();
  std::size_t total = 1;
  for (int k = 0; k < dim; ++k)
    total *= n;
  pts.resize(total * static_cast<std::size_t>(dim));
  wts.resize(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    double weight = 1.0;
    for (int k = dim - 1; k >= 0; --k) {
      const std::size_t j = rem % n;
      rem /= n;
      const double half = 0.5 * (w.hi[k] - w.lo[k]);
      pts[idx * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)] =
        w.lo[k] + half * (unit.nodes[j] + 1.0);
      weight *= half * unit.weights[j];
    }
    wts[idx] = weight;
  }
}

void check_finite(double v, const char* what, double u, const double* z, int dim)
{
  if (std::isfinite(v))
    return;
  std::string where = std::string(what) + ": non-finite integrand at u = " + format_double(u) + ", z = (";
  for (int k = 0; k < dim; ++k)
    where += (k ? ", " : "") + format_double(z[k]);
  throw NumericalFault(where + ")");
}

double diffusion_bound(const CoefficientField& field)
{
  const double k2 = field.bounds().k2;
  if (!std::isfinite(k2) || !(k2 > 0.0))
    throw ConfigError("parametrix: field '" + field.name() + "' has no finite diffusion bound");
  return k2 * k2;
}

} // namespace

// ---------------------------------------------------------------------------
// Proxy and kernels
// ---------------------------------------------------------------------------

Mat proxy_covariance(const CoefficientField& field, double s, double t, const Vec& y)
{
  const int d = field.dim();
  if (field.time_homogeneous()) {
    Mat a = field.diffusion(s, y);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        at(a, i, j) *= (t - s);
    return a;
  }
  static const QuadratureRule unit = gauss_legendre(kCovarianceNodes);
  const double half = 0.5 * (t - s);
  Mat cov{};
  for (std::size_t q = 0; q < unit.size(); ++q) {
    const Mat a = field.diffusion(s + half * (unit.nodes[q] + 1.0), y);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        at(cov, i, j) += half * unit.weights[q] * at(a, i, j);
  }
  return cov;
}

double proxy_density(const CoefficientField& field, double s, double t, const Vec& x, const Vec& y)
{
  if (!(s < t))
    throw ArgumentError("proxy_density: need s < t");
  const int d = field.dim();
  const Gaussian g = make_gaussian(proxy_covariance(field, s, t, y), d, s, t);
  double diff[kMaxDim];
  double m[kMaxDim];
  for (int k = 0; k < d; ++k)
    diff[k] = y[k] - x[k];
  return gaussian_at(g, diff, d, m);
}

double kernel_H(const CoefficientField& field, double u, double t, const Vec& z, const Vec& y)
{
  if (!(u < t))
    throw ArgumentError("kernel_H: need u < t");
  const int d = field.dim();
  const Gaussian g = make_gaussian(proxy_covariance(field, u, t, y), d, u, t);
  const Vec b = field.drift(u, z);
  const Mat az = field.diffusion(u, z);
  const Mat ay = field.diffusion(u, y);
  double da[kMaxDim * kMaxDim];
  double diff[kMaxDim];
  for (int i = 0; i < d; ++i) {
    diff[i] = y[i] - z[i];
    for (int j = 0; j < d; ++j)
      da[i * d + j] = at(az, i, j) - at(ay, i, j);
  }
  return kernel_at(g, diff, b.data(), da, d);
}

double euler_chain_kernel(const CoefficientField& field,
                          double ti,
                          double tj,
                          const Vec& z,
                          const Vec& y,
                          double h,
                          std::size_t hermite_nodes)
{
  if (!(h > 0.0))
    throw ArgumentError("euler_chain_kernel: h must be positive");
  const double steps = (tj - ti) / h;
  const auto n = static_cast<long>(std::llround(steps));
  if (std::abs(steps - static_cast<double>(n)) > 1e-9 * std::max(1.0, steps))
    throw ArgumentError("euler_chain_kernel: t_j - t_i must be a multiple of h");
  if (n < 2)
    throw ArgumentError("euler_chain_kernel: need t_j >= t_i + 2h");
  const int d = field.dim();

  // chain proxy from t_i + h to t_j frozen at y: covariance h sum a(t_l, y)
  Mat cov{};
  for (long l = 1; l < n; ++l) {
    const Mat a = field.diffusion(ti + static_cast<double>(l) * h, y);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        at(cov, i, j) += h * at(a, i, j);
  }
  const Gaussian g = make_gaussian(cov, d, ti + h, tj);

  const Vec b = field.drift(ti, z);
  const Mat sz = field.sigma_mat(ti, z);
  const Mat sy = field.sigma_mat(ti, y);
  const QuadratureRule gh = gauss_hermite_normal(hermite_nodes);
  const double sh = std::sqrt(h);
  std::size_t total = 1;
  for (int k = 0; k < d; ++k)
    total *= gh.size();

  double full = 0.0;
  double frozen = 0.0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    double xi[kMaxDim];
    double w = 1.0;
    std::size_t rem = idx;
    for (int k = d - 1; k >= 0; --k) {
      const std::size_t j = rem % gh.size();
      rem /= gh.size();
      xi[k] = gh.nodes[j];
      w *= gh.weights[j];
    }
    double d1[kMaxDim];
    double d2[kMaxDim];
    double m[kMaxDim];
    for (int i = 0; i < d; ++i) {
      double n1 = z[i] + b[i] * h;
      double n2 = z[i];
      for (int j = 0; j < d; ++j) {
        n1 += at(sz, i, j) * sh * xi[j];
        n2 += at(sy, i, j) * sh * xi[j];
      }
      d1[i] = y[i] - n1;
      d2[i] = y[i] - n2;
    }
    full += w * gaussian_at(g, d1, d, m);
    frozen += w * gaussian_at(g, d2, d, m);
  }
  return (full - frozen) / h;
}

double term_bound(int r, double dt, double gamma, double c1, double horizon)
{
  if (r < 0 || !(dt > 0.0))
    throw ArgumentError("term_bound: need r >= 0 and dt > 0");
  const double lead = std::max(1.0, std::pow(horizon, 0.5 * (1.0 - gamma))) * c1;
  const double rr = static_cast<double>(r);
  const double log_gamma_part = rr * std::lgamma(0.5 * gamma) - std::lgamma(1.0 + rr * gamma * 0.5);
  return std::pow(lead, rr + 1.0) * std::exp(log_gamma_part) * std::pow(dt, rr * gamma * 0.5);
}

// ---------------------------------------------------------------------------
// Generic convolution
// ---------------------------------------------------------------------------

double convolve_step(const SpaceTimeKernel& f,
                     const SpaceTimeKernel& g,
                     double s,
                     double t,
                     const Vec& x,
                     const Vec& y,
                     int dim,
                     const ConvolutionQuadrature& q)
{
  if (!(s < t))
    throw ArgumentError("convolve_step: need s < t");
  if (dim < 1 || dim > kMaxDim)
    throw ArgumentError("convolve_step: unsupported dimension");
  if (q.space_nodes < 2 || q.time_nodes < 2 || !(q.radius > 0.0) || !(q.variance_scale > 0.0))
    throw ConfigError("convolve_step: invalid quadrature settings");

  std::vector<double> times;
  std::vector<double> tw;
  double total = 0.0;
  if (q.h > 0.0) {
    const double steps = (t - s) / q.h;
    const auto n = static_cast<long>(std::llround(steps));
    if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-9 * std::max(1.0, steps))
      throw ArgumentError("convolve_step: t - s must be a positive multiple of h");
    // k = 0: f(s, s, x, .) is the Dirac mass at x
    total += q.h * g(s, t, x, y);
    for (long k = 1; k < n; ++k) {
      times.push_back(s + static_cast<double>(k) * q.h);
      tw.push_back(q.h);
    }
  } else {
    const QuadratureRule unit = gauss_legendre(std::max<std::size_t>(1, q.time_nodes / 2), 0.0, 1.0);
    const QuadratureRule rule = graded_rule(unit, s, t, q.gamma);
    times = rule.nodes;
    tw = rule.weights;
  }

  const QuadratureRule space = gauss_legendre(q.space_nodes);
  std::vector<double> pts;
  std::vector<double> wts;
  for (std::size_t a = 0; a < times.size(); ++a) {
    const double u = times[a];
    const Window w = intersect(x, q.radius * std::sqrt(q.variance_scale * (u - s)), y,
                               q.radius * std::sqrt(q.variance_scale * (t - u)), dim);
    if (w.empty)
      continue;
    window_nodes(w, space, dim, pts, wts);
    double inner = 0.0;
    for (std::size_t k = 0; k < wts.size(); ++k) {
      Vec z{};
      for (int i = 0; i < dim; ++i)
        z[static_cast<std::size_t>(i)] = pts[k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)];
      const double v = f(s, u, x, z) * g(u, t, z, y);
      check_finite(v, "convolve_step", u, z.data(), dim);
      inner += wts[k] * v;
    }
    total += tw[a] * inner;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Parametrix series
// ---------------------------------------------------------------------------

double SeriesAccumulator::value() const
{
  double v = 0.0;
  for (double term : terms)
    v += term;
  return v;
}

namespace {

//! Evaluates the series for one query (s, t, x, y). Iterated kernels
//! H^(r)(v, t, w, y) are stored for r >= 2 as tau^kappa H^(r) on a tensor
//! Chebyshev grid in eta = (w - y) / sqrt(tau), tau = t - v, one slice per
//! stored time; r = 1 is evaluated in closed form.
class SeriesEngine
{
public:
  SeriesEngine(const CoefficientField& field,
               double s,
               double t,
               const Vec& x,
               const Vec& y,
               const ParametrixSettings& settings,
               SeriesMode mode,
               double h)
    : field_(field)
    , d_(field.dim())
    , s_(s)
    , t_(t)
    , x_(x)
    , y_(y)
    , set_(settings)
    , mode_(mode)
    , h_(h)
    , gamma_(field.gamma())
    , kappa_(1.5 - 0.5 * field.gamma())
    , lambda_(diffusion_bound(field))
    , half_width_(settings.radius * std::sqrt(lambda_))
    , eta_(settings.space_nodes, -half_width_, half_width_)
    , space_(gauss_legendre(settings.space_nodes))
  {
    std::size_t cells = 1;
    for (int k = 0; k < d_; ++k)
      cells *= set_.space_nodes;
    cells_ = cells;

    if (mode_ == SeriesMode::continuous) {
      unit_ = gauss_legendre(std::max<std::size_t>(1, set_.time_nodes / 2), 0.0, 1.0);
      theta_ = ChebyshevInterpolant1d(set_.table_nodes, 0.0, 1.0);
      for (double th : theta_.nodes())
        slices_.push_back(t_ - (t_ - s_) * std::pow(th, 2.0 / gamma_));
    } else {
      steps_ = static_cast<std::size_t>(std::llround((t_ - s_) / h_));
      for (std::size_t l = 0; l < steps_; ++l)
        slices_.push_back(grid_time(l));
    }
    // frozen proxy toward (t, y) for every time the closed-form H(v, t, ., y)
    // is needed: memoized lazily by value of v
  }

  std::vector<double> run()
  {
    std::vector<double> terms;
    terms.push_back(proxy_density(field_, s_, t_, x_, y_));
    if (set_.r_max >= 1)
      terms.push_back(outer(1));
    for (int r = 2; r <= set_.r_max; ++r) {
      build_table(r);
      terms.push_back(outer(r));
    }
    return terms;
  }

private:
  double grid_time(std::size_t l) const
  {
    return l == steps_ ? t_ : s_ + static_cast<double>(l) * h_;
  }

  //! Inner time rule of H (x) G on (u, t) for stored slice c.
  void inner_rule(std::size_t c, std::vector<double>& v, std::vector<double>& w) const
  {
    v.clear();
    w.clear();
    if (mode_ == SeriesMode::continuous) {
      const QuadratureRule r = graded_rule(unit_, slices_[c], t_, gamma_);
      v = r.nodes;
      w = r.weights;
    } else {
      for (std::size_t m = c + 1; m < steps_; ++m) {
        v.push_back(grid_time(m));
        w.push_back(h_);
      }
    }
  }

  //! Per-time data of G_{r}(v, .): either the frozen Gaussian toward (t, y)
  //! (closed form, r = 1) or the interpolated eta slice of the table.
  struct Slice
  {
    double v = 0.0;
    double tau = 0.0;
    double scale = 0.0; // tau^{-kappa}
    Gaussian proxy;     // r = 1
    Mat a_y{};          // a(v, y), r = 1
    std::vector<double> values; // r >= 2, cells_ entries
  };

  void prepare(Slice& sl, double v, int r, std::vector<double>& wt) const
  {
    sl.v = v;
    sl.tau = t_ - v;
    sl.scale = std::pow(sl.tau, -kappa_);
    if (r == 1) {
      sl.proxy = make_gaussian(proxy_covariance(field_, v, t_, y_), d_, v, t_);
      sl.a_y = field_.diffusion(v, y_);
      return;
    }
    sl.values.assign(cells_, 0.0);
    if (mode_ == SeriesMode::discrete) {
      const auto m = static_cast<std::size_t>(std::llround((v - s_) / h_));
      std::copy(table_.begin() + static_cast<std::ptrdiff_t>(m * cells_),
                table_.begin() + static_cast<std::ptrdiff_t>((m + 1) * cells_), sl.values.begin());
      return;
    }
    wt.resize(theta_.size());
    theta_.weights_at(std::pow(sl.tau / (t_ - s_), 0.5 * gamma_), wt);
    for (std::size_t c = 0; c < theta_.size(); ++c) {
      if (wt[c] == 0.0)
        continue;
      const double* row = table_.data() + c * cells_;
      for (std::size_t k = 0; k < cells_; ++k)
        sl.values[k] += wt[c] * row[k];
    }
  }

  //! G_r(v, w) at n points w (n x d), using the batch field values b, s at
  //! (v, w) for the closed-form case.
  void evaluate(const Slice& sl,
                int r,
                std::size_t n,
                const double* w,
                const double* b,
                const double* sg,
                double* out,
                std::vector<double>& axis) const
  {
    const auto d = static_cast<std::size_t>(d_);
    if (r == 1) {
      double a[kMaxDim * kMaxDim];
      double da[kMaxDim * kMaxDim];
      double diff[kMaxDim];
      for (std::size_t p = 0; p < n; ++p) {
        compact_diffusion(sg + p * d * d, d_, a);
        for (std::size_t i = 0; i < d; ++i) {
          diff[i] = y_[i] - w[p * d + i];
          for (std::size_t j = 0; j < d; ++j)
            da[i * d + j] = a[i * d + j] - sl.a_y[i * kMaxDim + j];
        }
        out[p] = kernel_at(sl.proxy, diff, b + p * d, da, d_);
      }
      return;
    }
    const std::size_t ne = eta_.size();
    axis.resize(d * ne);
    const double inv_sqrt = 1.0 / std::sqrt(sl.tau);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t i = 0; i < d; ++i)
        eta_.weights_at((w[p * d + i] - y_[i]) * inv_sqrt, std::span<double>(axis.data() + i * ne, ne));
      double acc = 0.0;
      if (d == 1) {
        for (std::size_t k = 0; k < ne; ++k)
          acc += axis[k] * sl.values[k];
      } else {
        for (std::size_t k0 = 0; k0 < ne; ++k0) {
          if (axis[k0] == 0.0)
            continue;
          double row = 0.0;
          for (std::size_t k1 = 0; k1 < ne; ++k1)
            row += axis[ne + k1] * sl.values[k0 * ne + k1];
          acc += axis[k0] * row;
        }
      }
      out[p] = sl.scale * acc;
    }
  }

  //! Stored grid point k of slice c in physical coordinates.
  Vec table_point(std::size_t k, double tau) const
  {
    Vec z{};
    const double st = std::sqrt(tau);
    std::size_t rem = k;
    for (int i = d_ - 1; i >= 0; --i) {
      const std::size_t j = rem % eta_.size();
      rem /= eta_.size();
      z[static_cast<std::size_t>(i)] = y_[static_cast<std::size_t>(i)] + eta_.nodes()[j] * st;
    }
    return z;
  }

  //! table_ <- tau^kappa H^(r) on every stored slice, from H^(r-1).
  void build_table(int r)
  {
    std::vector<double> next(slices_.size() * cells_, 0.0);
    parallel_for(slices_.size(), set_.jobs, [&](std::size_t c) {
      const double u = slices_[c];
      const double tau_u = t_ - u;
      std::vector<double> vs;
      std::vector<double> vw;
      inner_rule(c, vs, vw);
      std::vector<Slice> prepared(vs.size());
      std::vector<double> wt;
      for (std::size_t q = 0; q < vs.size(); ++q)
        prepare(prepared[q], vs[q], r - 1, wt);

      const auto d = static_cast<std::size_t>(d_);
      std::vector<double> pts;
      std::vector<double> wts;
      std::vector<double> bu;
      std::vector<double> su;
      std::vector<double> bv;
      std::vector<double> sv;
      std::vector<double> gv;
      std::vector<double> axis;
      std::vector<double> az(d * d);
      for (std::size_t k = 0; k < cells_; ++k) {
        const Vec z = table_point(k, tau_u);
        const Vec bz = field_.drift(u, z);
        const Mat sz = field_.sigma_mat(u, z);
        double sz_c[kMaxDim * kMaxDim];
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            sz_c[i * d + j] = sz[i * kMaxDim + j];
        compact_diffusion(sz_c, d_, az.data());
        double total = 0.0;
        for (std::size_t q = 0; q < vs.size(); ++q) {
          const double v = vs[q];
          const Window win = intersect(z, set_.radius * std::sqrt(lambda_ * (v - u)), y_,
                                       half_width_ * std::sqrt(t_ - v), d_);
          if (win.empty)
            continue;
          window_nodes(win, space_, d_, pts, wts);
          const std::size_t n = wts.size();
          bu.resize(n * d);
          su.resize(n * d * d);
          field_.eval_batch(u, n, pts.data(), bu.data(), su.data());
          const double* bvp = bu.data();
          const double* svp = su.data();
          if (!field_.time_homogeneous() && r - 1 == 1) {
            bv.resize(n * d);
            sv.resize(n * d * d);
            field_.eval_batch(v, n, pts.data(), bv.data(), sv.data());
            bvp = bv.data();
            svp = sv.data();
          }
          gv.resize(n);
          evaluate(prepared[q], r - 1, n, pts.data(), bvp, svp, gv.data(), axis);
          double inner = 0.0;
          for (std::size_t p = 0; p < n; ++p) {
            if (gv[p] == 0.0)
              continue;
            const double hk = inner_kernel(u, v, bz.data(), az.data(), z, pts.data() + p * d,
                                           su.data() + p * d * d);
            const double val = hk * gv[p];
            check_finite(val, "density_series", v, pts.data() + p * d, d_);
            inner += wts[p] * val;
          }
          total += vw[q] * inner;
        }
        next[c * cells_ + k] = std::pow(tau_u, kappa_) * total;
      }
    });
    table_ = std::move(next);
  }

  //! H(u, v, z, w): generator difference at time u between the true field at
  //! z and the proxy frozen at w, applied to p~(u, v, z, w).
  double inner_kernel(double u,
                      double v,
                      const double* bz,
                      const double* az,
                      const Vec& z,
                      const double* w,
                      const double* sw) const
  {
    const auto d = static_cast<std::size_t>(d_);
    double aw[kMaxDim * kMaxDim];
    compact_diffusion(sw, d_, aw);
    Mat cov{};
    if (field_.time_homogeneous()) {
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          cov[i * kMaxDim + j] = (v - u) * aw[i * d + j];
    } else {
      Vec wv{};
      for (std::size_t i = 0; i < d; ++i)
        wv[i] = w[i];
      cov = proxy_covariance(field_, u, v, wv);
    }
    const Gaussian g = make_gaussian(cov, d_, u, v);
    double diff[kMaxDim];
    double da[kMaxDim * kMaxDim];
    for (std::size_t i = 0; i < d; ++i) {
      diff[i] = w[i] - z[i];
      for (std::size_t j = 0; j < d; ++j)
        da[i * d + j] = az[i * d + j] - aw[i * d + j];
    }
    return kernel_at(g, diff, bz, da, d_);
  }

  //! p~ (x) H^(r) at (s, t, x, y).
  double outer(int r) const
  {
    std::vector<double> us;
    std::vector<double> uw;
    double total = 0.0;
    std::vector<double> wt;
    std::vector<double> axis;
    const auto d = static_cast<std::size_t>(d_);
    if (mode_ == SeriesMode::continuous) {
      const QuadratureRule rule = graded_rule(unit_, s_, t_, gamma_);
      us = rule.nodes;
      uw = rule.weights;
    } else {
      // k = 0: p~(t_i, t_i, x, .) is the Dirac mass at x
      Slice sl;
      prepare(sl, s_, r, wt);
      const Vec b = field_.drift(s_, x_);
      const Mat sg = field_.sigma_mat(s_, x_);
      double sc[kMaxDim * kMaxDim];
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
          sc[i * d + j] = sg[i * kMaxDim + j];
      double g0 = 0.0;
      evaluate(sl, r, 1, x_.data(), b.data(), sc, &g0, axis);
      total += h_ * g0;
      for (std::size_t k = 1; k < steps_; ++k) {
        us.push_back(grid_time(k));
        uw.push_back(h_);
      }
    }

    std::vector<double> pts;
    std::vector<double> wts;
    std::vector<double> bb;
    std::vector<double> ss;
    std::vector<double> gv;
    for (std::size_t a = 0; a < us.size(); ++a) {
      const double u = us[a];
      const Window win = intersect(x_, set_.radius * std::sqrt(lambda_ * (u - s_)), y_,
                                   half_width_ * std::sqrt(t_ - u), d_);
      if (win.empty)
        continue;
      Slice sl;
      prepare(sl, u, r, wt);
      window_nodes(win, space_, d_, pts, wts);
      const std::size_t n = wts.size();
      bb.resize(n * d);
      ss.resize(n * d * d);
      field_.eval_batch(u, n, pts.data(), bb.data(), ss.data());
      gv.resize(n);
      evaluate(sl, r, n, pts.data(), bb.data(), ss.data(), gv.data(), axis);
      double inner = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        if (gv[p] == 0.0)
          continue;
        Vec z{};
        for (std::size_t i = 0; i < d; ++i)
          z[i] = pts[p * d + i];
        const double val = proxy_density(field_, s_, u, x_, z) * gv[p];
        check_finite(val, "density_series", u, z.data(), d_);
        inner += wts[p] * val;
      }
      total += uw[a] * inner;
    }
    return total;
  }

  const CoefficientField& field_;
  int d_;
  double s_;
  double t_;
  Vec x_;
  Vec y_;
  ParametrixSettings set_;
  SeriesMode mode_;
  double h_;
  double gamma_;
  double kappa_;
  double lambda_;
  double half_width_;
  ChebyshevInterpolant1d eta_;
  QuadratureRule space_;
  QuadratureRule unit_;
  ChebyshevInterpolant1d theta_;
  std::size_t steps_ = 0;
  std::size_t cells_ = 1;
  std::vector<double> slices_;
  std::vector<double> table_;
};

void check_series_inputs(const CoefficientField& field,
                         double s,
                         double t,
                         const Vec& x,
                         const Vec& y,
                         const ParametrixSettings& set,
                         SeriesMode mode,
                         double h)
{
  const int d = field.dim();
  if (d > 2)
    throw ConfigError("density_series: dimension " + std::to_string(d) + " is not supported (d <= 2)");
  if (!(s < t))
    throw ArgumentError("density_series: need s < t");
  if (set.r_max < 0 || set.r_max > 6)
    throw ConfigError("density_series: r_max must lie in [0, 6]");
  if (set.time_nodes < 2 || set.table_nodes < 2 || set.space_nodes < 4)
    throw ConfigError("density_series: too few quadrature nodes");
  // Gaussian mass outside the truncation window, all axes
  const double loss = 1.0 - std::pow(1.0 - std::erfc(set.radius / std::sqrt(2.0)), d);
  if (!(loss <= 1e-6))
    throw ConfigError("density_series: truncation radius " + format_double(set.radius) +
                      " loses Gaussian mass " + format_double(loss) + " > 1e-6");
  if (mode == SeriesMode::discrete) {
    if (!(h > 0.0))
      throw ConfigError("density_series: discrete mode needs h > 0");
    const double steps = (t - s) / h;
    const double n = std::round(steps);
    if (n < 1.0 || std::abs(steps - n) > 1e-9 * std::max(1.0, steps) ||
        std::abs(s / h - std::round(s / h)) > 1e-9 * std::max(1.0, s / h))
      throw ConfigError("density_series: s and t must lie on the grid of step h");
  }
  if (d == 2) {
    const Vec mid{ 0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1]), 0.0 };
    for (const Vec& p : { x, y, mid })
      for (double tt : { s, 0.5 * (s + t), t }) {
        const Mat sg = field.sigma_mat(tt, p);
        if (at(sg, 0, 1) != 0.0 || at(sg, 1, 0) != 0.0)
          throw ConfigError("density_series: d = 2 requires a diagonal sigma");
      }
  }
}

} // namespace

SeriesAccumulator density_series(const CoefficientField& field,
                                 double s,
                                 double t,
                                 const Vec& x,
                                 const Vec& y,
                                 const ParametrixSettings& settings,
                                 SeriesMode mode,
                                 double h)
{
  check_series_inputs(field, s, t, x, y, settings, mode, h);
  SeriesAccumulator acc;
  acc.s = s;
  acc.t = t;
  acc.dim = field.dim();
  acc.x = x;
  acc.y = y;
  acc.mode = mode;
  acc.h = mode == SeriesMode::discrete ? h : 0.0;
  acc.r_max = settings.r_max;
  SeriesEngine engine(field, s, t, x, y, settings, mode, h);
  acc.terms = engine.run();

  // tail: fit c1 so that term_bound reproduces |term_1| / |term_0|, then sum
  // the predicted magnitudes beyond r_max
  const double gamma = field.gamma();
  const double dt = t - s;
  if (acc.terms.size() >= 2 && acc.terms[0] != 0.0 && acc.terms[1] != 0.0) {
    const double ratio = std::abs(acc.terms[1] / acc.terms[0]);
    const double unit = term_bound(1, dt, gamma, 1.0, t) / term_bound(0, dt, gamma, 1.0, t);
    acc.c1 = ratio / unit;
    const double base = term_bound(0, dt, gamma, acc.c1, t);
    double tail = 0.0;
    for (int r = settings.r_max + 1; r <= settings.r_max + 60; ++r)
      tail += term_bound(r, dt, gamma, acc.c1, t) / base;
    acc.tail_estimate = std::abs(acc.terms[0]) * tail;
  }
  return acc;
}

std::string series_csv(const std::vector<SeriesAccumulator>& rows)
{
  std::ostringstream os;
  const int d = rows.empty() ? 1 : rows.front().dim;
  os << "s,t";
  for (int k = 0; k < d; ++k)
    os << ",x" << k;
  for (int k = 0; k < d; ++k)
    os << ",y" << k;
  os << ",r_max,value,tail_estimate,method\n";
  for (const auto& r : rows) {
    os << format_double(r.s) << ',' << format_double(r.t);
    for (int k = 0; k < d; ++k)
      os << ',' << format_double(r.x[static_cast<std::size_t>(k)]);
    for (int k = 0; k < d; ++k)
      os << ',' << format_double(r.y[static_cast<std::size_t>(k)]);
    os << ',' << r.r_max << ',' << format_double(r.value()) << ',' << format_double(r.tail_estimate)
       << ',' << (r.mode == SeriesMode::continuous ? "continuous" : "discrete:" + format_double(r.h))
       << '\n';
  }
  return os.str();
}

double gaussian_envelope(double c, double dt, double distance, int dim)
{
  return std::pow(c / (2.0 * kPi * dt), 0.5 * dim) * std::exp(-c * distance * distance / (2.0 * dt));
}

EnvelopeFit fit_gaussian_envelope(const std::vector<EnvelopeSample>& samples, int dim)
{
  if (samples.empty())
    throw ArgumentError("fit_gaussian_envelope: no samples");
  EnvelopeFit best;
  best.big_c = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 100; ++k) {
    const double c = 0.01 * k;
    double big = 0.0;
    for (const auto& p : samples)
      big = std::max(big, std::abs(p.value) / gaussian_envelope(c, p.dt, p.distance, dim));
    if (big < best.big_c) {
      best.big_c = big;
      best.c = c;
    }
  }
  return best;
}

} // namespace ewel
