#include "ewel/weak_error.hpp"

#include "ewel/errors.hpp"
#include "ewel/format.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ewel {

double psi_from_log(double log_inv_h)
{
  if (!(log_inv_h > std::numbers::e) || !std::isfinite(log_inv_h))
    throw ArgumentError("psi: need ln(1/h) > e (h < exp(-e)), got ln(1/h) = " +
                        format_double(log_inv_h));
  const double l2 = std::log(log_inv_h);
  return std::log(l2) / l2;
}

double psi(double h)
{
  if (!(h > 0.0) || !(h < std::exp(-std::numbers::e)))
    throw ArgumentError("psi: h = " + format_double(h) + " outside (0, exp(-e))");
  return psi_from_log(-std::log(h));
}

double epsilon_schedule(double h, double dt, double gamma, double c_eta)
{
  if (!(dt > 0.0) || !(gamma > 0.0 && gamma <= 1.0) || !(c_eta > 0.0))
    throw ArgumentError("epsilon_schedule: need dt > 0, gamma in (0, 1], c_eta > 0");
  const double eta = 2.0 * psi(h);
  const double p = 1.0 / (2.0 - eta);
  return std::pow(h / std::pow(dt, 1.0 - gamma), p) * std::pow(c_eta, -p);
}

// ---------------------------------------------------------------------------
// Domains and test functions
// ---------------------------------------------------------------------------

Domain Domain::ball(std::span<const double> center, double radius)
{
  if (center.empty() || center.size() > static_cast<std::size_t>(kMaxDim))
    throw ConfigError("ball: dimension must be 1..3");
  if (!(radius > 0.0))
    throw ConfigError("ball: radius must be positive");
  Domain d;
  d.shape = Shape::ball;
  d.dim = static_cast<int>(center.size());
  d.center = to_vec(center);
  d.radius = radius;
  return d;
}

Domain Domain::half_space(std::span<const double> normal, double offset)
{
  if (normal.empty() || normal.size() > static_cast<std::size_t>(kMaxDim))
    throw ConfigError("half_space: dimension must be 1..3");
  Domain d;
  d.shape = Shape::half_space;
  d.dim = static_cast<int>(normal.size());
  d.normal = to_vec(normal);
  const double n = norm(d.normal, d.dim);
  if (!(n > 0.0))
    throw ConfigError("half_space: zero normal");
  for (int k = 0; k < d.dim; ++k)
    d.normal[static_cast<std::size_t>(k)] /= n;
  d.offset = offset / n;
  return d;
}

double Domain::signed_distance(const Vec& x) const
{
  if (shape == Shape::ball)
    return radius - distance(x, center, dim);
  return dot(normal, x, dim) - offset;
}

Vec Domain::inner_normal(const Vec& x) const
{
  if (shape == Shape::half_space)
    return normal;
  Vec n{};
  const double r = distance(x, center, dim);
  if (r == 0.0)
    throw ArgumentError("inner normal undefined at the ball center");
  for (int k = 0; k < dim; ++k)
    n[static_cast<std::size_t>(k)] = (center[static_cast<std::size_t>(k)] - x[static_cast<std::size_t>(k)]) / r;
  return n;
}

double Domain::reach() const
{
  return shape == Shape::ball ? radius : std::numeric_limits<double>::infinity();
}

namespace {

void check_delta(const Domain& domain, double delta)
{
  if (!(delta > 0.0))
    throw ArgumentError("smooth_indicator: delta must be positive");
  if (!(delta < domain.reach()))
    throw ConfigError("smooth_indicator: delta " + format_double(delta) + " exceeds the reach " +
                      format_double(domain.reach()) + " of the domain");
}

} // namespace

double smooth_indicator(const Vec& x, const Domain& domain, double delta)
{
  check_delta(domain, delta);
  const double d = domain.signed_distance(x);
  if (d >= 0.0)
    return 1.0;
  if (d <= -delta)
    return 0.0;
  const double u = d * d / (delta * delta);
  return std::exp(1.0 - 1.0 / (1.0 - u));
}

Vec smooth_indicator_gradient(const Vec& x, const Domain& domain, double delta)
{
  check_delta(domain, delta);
  Vec g{};
  const double d = domain.signed_distance(x);
  if (d >= 0.0 || d <= -delta)
    return g;
  const double u = d * d / (delta * delta);
  const double f = std::exp(1.0 - 1.0 / (1.0 - u));
  const double scale = -2.0 * d / (delta * delta) / ((1.0 - u) * (1.0 - u)) * f;
  const Vec n = domain.inner_normal(x);
  for (int k = 0; k < domain.dim; ++k)
    g[static_cast<std::size_t>(k)] = scale * n[static_cast<std::size_t>(k)];
  return g;
}

TestFunction TestFunction::cosine()
{
  return TestFunction{};
}

TestFunction TestFunction::coordinate(int k)
{
  if (k < 0 || k >= kMaxDim)
    throw ConfigError("coordinate test function: index out of range");
  TestFunction f;
  f.kind_ = Kind::coordinate;
  f.coord_ = k;
  return f;
}

TestFunction TestFunction::holder(double beta, std::span<const double> center)
{
  if (!(beta > 0.0 && beta <= 1.0))
    throw ConfigError("holder test function: beta must lie in (0, 1]");
  TestFunction f;
  f.kind_ = Kind::holder;
  f.beta_ = beta;
  f.center_ = to_vec(center);
  return f;
}

TestFunction TestFunction::indicator(const Domain& domain)
{
  TestFunction f;
  f.kind_ = Kind::indicator;
  f.beta_ = 0.0;
  f.domain_ = domain;
  return f;
}

TestFunction TestFunction::smooth_indicator(const Domain& domain, double delta)
{
  check_delta(domain, delta);
  TestFunction f;
  f.kind_ = Kind::smooth_indicator;
  f.domain_ = domain;
  f.delta_ = delta;
  return f;
}

std::string TestFunction::name() const
{
  switch (kind_) {
  case Kind::cosine:
    return "cos";
  case Kind::coordinate:
    return "x" + std::to_string(coord_);
  case Kind::holder:
    return "holder:" + format_double(beta_);
  case Kind::indicator:
    return "indicator";
  case Kind::smooth_indicator:
    return "smooth_indicator:" + format_double(delta_);
  }
  return "?";
}

double TestFunction::operator()(const double* x, int dim) const
{
  switch (kind_) {
  case Kind::cosine: {
    double s = 0.0;
    for (int k = 0; k < dim; ++k)
      s += x[k];
    return std::cos(s);
  }
  case Kind::coordinate:
    return coord_ < dim ? x[coord_] : 0.0;
  case Kind::holder: {
    double s = 0.0;
    for (int k = 0; k < dim; ++k)
      s += (x[k] - center_[static_cast<std::size_t>(k)]) * (x[k] - center_[static_cast<std::size_t>(k)]);
    return std::pow(std::sqrt(s), beta_);
  }
  case Kind::indicator:
    return domain_.contains(to_vec(std::span<const double>(x, static_cast<std::size_t>(dim)))) ? 1.0 : 0.0;
  case Kind::smooth_indicator:
    return ewel::smooth_indicator(to_vec(std::span<const double>(x, static_cast<std::size_t>(dim))), domain_,
                                  delta_);
  }
  return 0.0;
}

TestFunction parse_test_function(const std::string& spec)
{
  if (spec == "cos")
    return TestFunction::cosine();
  if (spec.size() == 2 && spec[0] == 'x' && spec[1] >= '0' && spec[1] <= '2')
    return TestFunction::coordinate(spec[1] - '0');
  if (spec.rfind("holder:", 0) == 0) {
    const std::string v = spec.substr(7);
    std::size_t used = 0;
    double beta = 0.0;
    try {
      beta = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty())
      throw ConfigError("test function '" + spec + "': bad exponent");
    return TestFunction::holder(beta);
  }
  throw ConfigError("unknown test function '" + spec + "' (expected cos, x0, x1, x2, holder:<beta>)");
}

// ---------------------------------------------------------------------------
// Weak errors
// ---------------------------------------------------------------------------

namespace {

struct MeanStd
{
  double mean = 0.0;
  double std_error = 0.0;
};

//! Two-pass mean and standard error of the mean, sequential order.
template<class Fn>
MeanStd mean_std(std::size_t m, Fn&& value)
{
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    sum += value(i);
  const double mean = sum / static_cast<double>(m);
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = value(i) - mean;
    ss += r * r;
  }
  const double var = m > 1 ? ss / static_cast<double>(m - 1) : 0.0;
  return { mean, std::sqrt(var / static_cast<double>(m)) };
}

unsigned log2_factor(std::size_t factor)
{
  return static_cast<unsigned>(std::countr_zero(factor));
}

WeakErrorEstimate compare_terminals(const TestFunction& f,
                                    const std::vector<double>& coarse,
                                    const std::vector<double>& fine,
                                    std::size_t m,
                                    int dim,
                                    double h)
{
  const auto d = static_cast<std::size_t>(dim);
  std::vector<double> diff(m);
  double cs = 0.0;
  double fs = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double a = f(coarse.data() + i * d, dim);
    const double b = f(fine.data() + i * d, dim);
    cs += a;
    fs += b;
    diff[i] = a - b;
  }
  const MeanStd ms = mean_std(m, [&](std::size_t i) { return diff[i]; });
  WeakErrorEstimate e;
  e.h = h;
  e.error = ms.mean;
  e.std_error = ms.std_error;
  e.coarse_mean = cs / static_cast<double>(m);
  e.fine_mean = fs / static_cast<double>(m);
  return e;
}

} // namespace

WeakErrorEstimate estimate_weak_error(const CoefficientField& field,
                                      const TestFunction& f,
                                      std::span<const double> x0,
                                      const GridSchedule& coarse,
                                      std::size_t refinement_factor,
                                      std::size_t m,
                                      std::uint64_t seed,
                                      const SimOptions& options)
{
  if (refinement_factor < 16)
    throw ConfigError("estimate_weak_error: refinement factor must be >= 16");
  if (m < 2)
    throw ConfigError("estimate_weak_error: need at least two paths");
  if (std::has_single_bit(refinement_factor)) {
    const LevelTerminals lt = simulate_levels({ &field }, x0, coarse.horizon, coarse.steps,
                                              log2_factor(refinement_factor), m, seed, options);
    return compare_terminals(f, lt.terminals[0].front(), lt.terminals[0].back(), m, field.dim(),
                             coarse.h());
  }
  SimOptions o = options;
  o.keep_states = false;
  o.keep_increments = true;
  const TrajectoryBatch cb = simulate_batch(field, x0, coarse, m, seed, o);
  RefinedIncrements ri = refine_common_noise(cb, refinement_factor, o);
  o.keep_increments = false;
  const TrajectoryBatch fb =
    simulate_from_increments(field, x0, ri.grid, m, seed, std::move(ri.increments), o);
  return compare_terminals(f, cb.terminal, fb.terminal, m, field.dim(), coarse.h());
}

std::vector<WeakErrorSweep> weak_error_sweeps(const CoefficientField& field,
                                              const std::vector<TestFunction>& fs,
                                              std::span<const double> x0,
                                              double horizon,
                                              std::size_t n_coarse,
                                              unsigned levels,
                                              std::size_t refinement_factor,
                                              std::size_t m,
                                              std::uint64_t seed,
                                              const SimOptions& options)
{
  if (refinement_factor < 16 || !std::has_single_bit(refinement_factor))
    throw ConfigError("weak_error_sweep: refinement factor must be a power of two >= 16");
  if (m < 2)
    throw ConfigError("weak_error_sweep: need at least two paths");
  const unsigned r = log2_factor(refinement_factor);
  const LevelTerminals lt =
    simulate_levels({ &field }, x0, horizon, n_coarse, levels + r, m, seed, options);
  std::vector<WeakErrorSweep> out;
  for (const TestFunction& f : fs) {
    WeakErrorSweep sweep;
    sweep.noise_dominated = true;
    for (unsigned l = 0; l <= levels; ++l) {
      const double h = horizon / static_cast<double>(lt.steps(l));
      sweep.cells.push_back(
        compare_terminals(f, lt.terminals[0][l], lt.terminals[0][l + r], m, field.dim(), h));
      if (!(sweep.cells.back().std_error > std::abs(sweep.cells.back().error)))
        sweep.noise_dominated = false;
    }
    out.push_back(std::move(sweep));
  }
  return out;
}

WeakErrorSweep weak_error_sweep(const CoefficientField& field,
                                const TestFunction& f,
                                std::span<const double> x0,
                                double horizon,
                                std::size_t n_coarse,
                                unsigned levels,
                                std::size_t refinement_factor,
                                std::size_t m,
                                std::uint64_t seed,
                                const SimOptions& options)
{
  return weak_error_sweeps(field, { f }, x0, horizon, n_coarse, levels, refinement_factor, m, seed, options)
    .front();
}

// ---------------------------------------------------------------------------
// Kernel density estimation
// ---------------------------------------------------------------------------

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

//! Product Gaussian kernel K_bw(u) for u in R^d.
double kernel(const double* u, int dim, double bw)
{
  double q = 0.0;
  for (int k = 0; k < dim; ++k)
    q += u[k] * u[k];
  return std::pow(kInvSqrt2Pi / bw, dim) * std::exp(-0.5 * q / (bw * bw));
}

//! Per-sample contributions of a KDE functional: value and the Laplacian by
//! second differences with step `step`.
struct KdeProbe
{
  int dim;
  double bw;
  double step;
  Vec y;

  double value(const double* x) const
  {
    double u[kMaxDim];
    for (int k = 0; k < dim; ++k)
      u[k] = y[static_cast<std::size_t>(k)] - x[k];
    return kernel(u, dim, bw);
  }

  double laplacian(const double* x) const
  {
    double u[kMaxDim];
    for (int k = 0; k < dim; ++k)
      u[k] = y[static_cast<std::size_t>(k)] - x[k];
    const double center = kernel(u, dim, bw);
    double acc = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double keep = u[k];
      u[k] = keep + step;
      const double plus = kernel(u, dim, bw);
      u[k] = keep - step;
      const double minus = kernel(u, dim, bw);
      u[k] = keep;
      acc += (plus - 2.0 * center + minus) / (step * step);
    }
    return acc;
  }
};

} // namespace

DensityEstimate kde_density(std::span<const double> samples,
                            int dim,
                            std::span<const double> eval_points,
                            double bandwidth)
{
  if (!(bandwidth > 0.0))
    throw ArgumentError("kde_density: bandwidth must be positive");
  if (dim < 1 || dim > kMaxDim)
    throw ArgumentError("kde_density: unsupported dimension");
  const auto d = static_cast<std::size_t>(dim);
  if (samples.empty() || samples.size() % d != 0)
    throw ArgumentError("kde_density: empty batch");
  const std::size_t m = samples.size() / d;
  DensityEstimate out;
  out.points.assign(eval_points.begin(), eval_points.end());
  out.bandwidth = bandwidth;
  const std::size_t n = eval_points.size() / d;
  out.values.resize(n);
  double max_lap = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    KdeProbe probe{ dim, bandwidth, 2.0 * bandwidth, to_vec(eval_points.subspan(j * d, d)) };
    double v = 0.0;
    double lap = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      v += probe.value(samples.data() + i * d);
      lap += probe.laplacian(samples.data() + i * d);
    }
    out.values[j] = v / static_cast<double>(m);
    max_lap = std::max(max_lap, std::abs(lap / static_cast<double>(m)));
  }
  out.bias_bound = 0.5 * bandwidth * bandwidth * max_lap;
  return out;
}

DensityEstimate kde_density(const TrajectoryBatch& batch,
                            std::span<const double> eval_points,
                            double bandwidth)
{
  return kde_density(batch.terminal, batch.dim, eval_points, bandwidth);
}

double silverman_bandwidth(std::span<const double> samples, int dim, double scale)
{
  const auto d = static_cast<std::size_t>(dim);
  if (samples.size() < 2 * d)
    throw ArgumentError("silverman_bandwidth: need at least two samples");
  const std::size_t m = samples.size() / d;
  double spread = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const MeanStd ms = mean_std(m, [&](std::size_t i) { return samples[i * d + k]; });
    spread += ms.std_error * std::sqrt(static_cast<double>(m));
  }
  spread /= static_cast<double>(d);
  const double dd = static_cast<double>(dim);
  return scale * spread *
         std::pow(4.0 / ((dd + 2.0) * static_cast<double>(m)), 1.0 / (dd + 4.0));
}

std::vector<DensityErrorRow> density_error_sweep(const CoefficientField& field,
                                                 std::span<const double> x0,
                                                 double horizon,
                                                 std::span<const double> y_points,
                                                 std::size_t n_coarse,
                                                 unsigned levels,
                                                 std::size_t m,
                                                 std::uint64_t seed,
                                                 const DensitySweepOptions& options)
{
  const std::size_t factor = options.refinement_factor;
  if (factor < 16 || !std::has_single_bit(factor))
    throw ConfigError("density_error_sweep: refinement factor must be a power of two >= 16");
  if (m < 2)
    throw ConfigError("density_error_sweep: need at least two paths");
  const int dim = field.dim();
  const auto d = static_cast<std::size_t>(dim);
  if (y_points.empty() || y_points.size() % d != 0)
    throw ConfigError("density_error_sweep: y points must hold a multiple of d values");
  const bool decomposition = options.mode == DensitySweepOptions::Mode::mollified_decomposition;
  if (decomposition && (options.mollified == nullptr || options.mollified->dim() != dim))
    throw ConfigError("density_error_sweep: decomposition mode needs a mollified field");

  std::vector<const CoefficientField*> fields{ &field };
  if (decomposition)
    fields.push_back(options.mollified);
  const unsigned r = log2_factor(factor);
  const LevelTerminals lt =
    simulate_levels(fields, x0, horizon, n_coarse, levels + r, m, seed, options.sim);

  const double bw = options.bandwidth > 0.0
                      ? options.bandwidth
                      : silverman_bandwidth(lt.terminals[0].back(), dim, 0.5);

  // (label, field a, level a, field b, level b): error of law a against law
  // b. Levels are offsets from the coarse level l, or kFinest for the finest
  // simulated level, which stands in for the exact laws p and p_eps in the
  // decomposition so that they are the same for every h.
  constexpr unsigned kFinest = ~0u;
  struct Pair
  {
    const char* label;
    std::size_t fa;
    unsigned la;
    std::size_t fb;
    unsigned lb;
  };
  std::vector<Pair> pairs;
  if (decomposition) {
    pairs.push_back({ "scheme", 0, 0, 0, kFinest });
    pairs.push_back({ "p-p_eps", 0, kFinest, 1, kFinest });
    pairs.push_back({ "p_eps-p_eps^h", 1, kFinest, 1, 0 });
    pairs.push_back({ "p_eps^h-p^h", 1, 0, 0, 0 });
  } else {
    pairs.push_back({ "scheme", 0, 0, 0, r });
  }
  const auto level = [&](unsigned l, unsigned offset) { return offset == kFinest ? levels + r : l + offset; };

  const DiscontinuitySet* set = field.discontinuities();
  const std::size_t ny = y_points.size() / d;
  std::vector<DensityErrorRow> rows;
  for (std::size_t j = 0; j < ny; ++j) {
    const Vec y = to_vec(y_points.subspan(j * d, d));
    const KdeProbe probe{ dim, bw, 4.0 * bw, y };
    const double dist = set ? set->nearest(std::span<const double>(y.data(), d)).second : 0.0;
    for (const Pair& pr : pairs) {
      const std::size_t first_row = rows.size();
      for (unsigned l = 0; l <= levels; ++l) {
        const std::vector<double>& a = lt.terminals[pr.fa][level(l, pr.la)];
        const std::vector<double>& b = lt.terminals[pr.fb][level(l, pr.lb)];
        const MeanStd val = mean_std(m, [&](std::size_t i) {
          return probe.value(a.data() + i * d) - probe.value(b.data() + i * d);
        });
        const MeanStd lap = mean_std(m, [&](std::size_t i) {
          return probe.laplacian(a.data() + i * d) - probe.laplacian(b.data() + i * d);
        });
        DensityErrorRow row;
        row.model = field.name();
        row.component = pr.label;
        row.h = horizon / static_cast<double>(lt.steps(l));
        row.epsilon = decomposition ? options.epsilon : 0.0;
        row.y = y;
        row.distance = dist;
        row.error = std::abs(val.mean);
        row.std_error = val.std_error;
        row.bias_bound = 0.5 * bw * bw * (std::abs(lap.mean) + 2.0 * lap.std_error);
        if (row.std_error > row.error)
          row.flags.push_back("noise-dominated");
        rows.push_back(std::move(row));
      }
      double smallest = std::numeric_limits<double>::infinity();
      for (std::size_t k = first_row; k < rows.size(); ++k)
        smallest = std::min(smallest, rows[k].error);
      for (std::size_t k = first_row; k < rows.size(); ++k)
        if (rows[k].bias_bound > 0.5 * smallest)
          rows[k].flags.push_back("bias-limited");
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Rates and formula evaluators
// ---------------------------------------------------------------------------

double RateFit::predict(double h) const
{
  return std::exp(intercept + slope * std::log(h));
}

RateFit fit_rate(const std::vector<RatePoint>& points)
{
  RateFit fit;
  for (const RatePoint& p : points) {
    if (!(p.error > 0.0) || !(p.h > 0.0)) {
      fit.notes.push_back("excluded h=" + format_double(p.h) + ": non-positive error " +
                          format_double(p.error));
      continue;
    }
    fit.points.push_back(p);
  }
  const std::size_t n = fit.points.size();
  if (n < 4)
    throw NumericalFault("fit_rate: " + std::to_string(n) + " usable points, need at least 4");
  bool weighted = true;
  for (const RatePoint& p : fit.points)
    if (!(p.std_error > 0.0))
      weighted = false;
  if (!weighted)
    fit.notes.push_back("uniform weights (missing standard errors)");

  std::vector<double> w(n);
  std::vector<double> lx(n);
  std::vector<double> ly(n);
  double sw = 0.0;
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = weighted ? 1.0 / (fit.points[i].std_error * fit.points[i].std_error) : 1.0;
    lx[i] = std::log(fit.points[i].h);
    ly[i] = std::log(fit.points[i].error);
    sw += w[i];
    mx += w[i] * lx[i];
    my += w[i] * ly[i];
  }
  mx /= sw;
  my /= sw;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w[i] * (lx[i] - mx) * (lx[i] - mx);
    sxy += w[i] * (lx[i] - mx) * (ly[i] - my);
    syy += w[i] * (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0))
    throw NumericalFault("fit_rate: all step sizes coincide");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double res = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ssr += w[i] * res * res;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  // normalize weights so that the residual variance is per unit weight
  const double sigma2 = ssr / static_cast<double>(n - 2);
  fit.slope_stderr = std::sqrt(sigma2 / sxx);
  return fit;
}

std::string rate_fit_json(const RateFit& fit)
{
  nlohmann::ordered_json j;
  j["slope"] = fit.slope;
  j["slope_stderr"] = fit.slope_stderr;
  j["intercept"] = fit.intercept;
  j["r2"] = fit.r_squared;
  auto pts = nlohmann::ordered_json::array();
  for (const RatePoint& p : fit.points)
    pts.push_back({ { "h", p.h }, { "error", p.error }, { "stderr", p.std_error } });
  j["points"] = std::move(pts);
  if (!fit.notes.empty())
    j["notes"] = fit.notes;
  return j.dump(2) + "\n";
}

double borel_bound_factor(double dist, double gamma)
{
  if (!(dist > 0.0))
    throw ArgumentError("borel_bound_factor: distance must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw ArgumentError("borel_bound_factor: gamma must lie in (0, 1]");
  // the branch point itself belongs to the first branch
  if (dist >= std::exp(-1.0 / gamma))
    return 1.0 / (gamma * std::pow(dist, gamma)) + 1.0;
  return std::abs(std::log(dist)) + 1.0;
}

double alpha_q(double q, int dim)
{
  if (!(q > static_cast<double>(dim)))
    throw ArgumentError("alpha_q: need q > d");
  if (std::isinf(q))
    return 0.5;
  return 0.5 * (1.0 - static_cast<double>(dim) / q);
}

SensitivityConstant sensitivity_constant(double eta, double q, int dim, double base_c)
{
  if (!(eta > 0.0 && eta <= 1.0))
    throw ArgumentError("sensitivity_constant: eta must lie in (0, 1]");
  if (!(base_c > 0.0))
    throw ArgumentError("sensitivity_constant: base constant must be positive");
  SensitivityConstant out;
  out.alpha = alpha_q(q, dim);
  out.theta = std::min(0.5 * eta, out.alpha);
  const double k = 1.0 / out.theta + 1.0;
  out.log_value = std::log(base_c) + base_c * std::pow(k, k);
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows)
{
  std::ostringstream os;
  os << "model,h,epsilon,test_function,error,stderr,bias_bound,flags\n";
  for (const SweepRow& r : rows) {
    std::string flags;
    for (const auto& f : r.flags)
      flags += (flags.empty() ? "" : ";") + f;
    os << r.model << ',' << format_double(r.h) << ',' << format_double(r.epsilon) << ','
       << r.test_function << ',' << format_double(r.error) << ',' << format_double(r.std_error) << ','
       << format_double(r.bias_bound) << ',' << flags << '\n';
  }
  return os.str();
}

SweepRow to_sweep_row(const DensityErrorRow& row, int dim)
{
  SweepRow s;
  s.model = row.model;
  s.h = row.h;
  s.epsilon = row.epsilon;
  s.test_function = "density:" + row.component + "@";
  for (int k = 0; k < dim; ++k)
    s.test_function += (k ? ":" : "") + format_double(row.y[static_cast<std::size_t>(k)]);
  s.error = row.error;
  s.std_error = row.std_error;
  s.bias_bound = row.bias_bound;
  s.flags = row.flags;
  return s;
}

} // namespace ewel
