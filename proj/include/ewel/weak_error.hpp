#pragma once

#include "ewel/euler.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ewel {

//! ln ln ln (1/h) / ln ln (1/h); requires h < exp(-e).
double psi(double h);
//! The same ratio from L = ln(1/h), for steps too small to represent.
double psi_from_log(double log_inv_h);

//! Noise-balancing mollification scale for a step h over a time lag dt:
//! (h / dt^{1-gamma})^{1/(2-eta)} c_eta^{-1/(2-eta)} with eta = 2 psi(h).
double epsilon_schedule(double h, double dt, double gamma, double c_eta = 1.0);

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

//! Ball or half-space A with signed distance to its boundary, positive in A.
struct Domain
{
  enum class Shape
  {
    ball,
    half_space,
  };

  Shape shape = Shape::ball;
  int dim = 1;
  Vec center{};
  double radius = 1.0;
  Vec normal{}; // half-space {<normal, x> >= offset}, unit length
  double offset = 0.0;

  static Domain ball(std::span<const double> center, double radius);
  static Domain half_space(std::span<const double> normal, double offset);

  double signed_distance(const Vec& x) const;
  //! Inner unit normal at the projection of x on the boundary.
  Vec inner_normal(const Vec& x) const;
  //! Largest delta for which the signed distance stays smooth on the shell.
  double reach() const;
  bool contains(const Vec& x) const { return signed_distance(x) >= 0.0; }
};

//! f_delta: 1 on A, e exp(-1/(1 - d^2/delta^2)) on the outer shell of width
//! delta, 0 beyond.
double smooth_indicator(const Vec& x, const Domain& domain, double delta);
Vec smooth_indicator_gradient(const Vec& x, const Domain& domain, double delta);

class TestFunction
{
public:
  enum class Kind
  {
    cosine,           // cos(sum_k x_k)
    coordinate,       // x_k
    holder,           // |x - c|^beta
    indicator,        // 1_A
    smooth_indicator, // f_delta
  };

  static TestFunction cosine();
  static TestFunction coordinate(int k);
  static TestFunction holder(double beta, std::span<const double> center = {});
  static TestFunction indicator(const Domain& domain);
  static TestFunction smooth_indicator(const Domain& domain, double delta);

  Kind kind() const { return kind_; }
  //! Holder exponent (1 for the smooth kinds, 0 for the indicator).
  double beta() const { return beta_; }
  std::string name() const;

  double operator()(const double* x, int dim) const;

private:
  Kind kind_ = Kind::cosine;
  double beta_ = 1.0;
  int coord_ = 0;
  Vec center_{};
  Domain domain_{};
  double delta_ = 0.0;
};

//! Parses "cos", "x0", "holder:0.5", as used in configuration files.
TestFunction parse_test_function(const std::string& spec);

// ---------------------------------------------------------------------------
// Weak errors
// ---------------------------------------------------------------------------

struct WeakErrorEstimate
{
  double h = 0.0;
  double error = 0.0; // E f(X^h) - E f(X^{h / factor})
  double std_error = 0.0;
  double coarse_mean = 0.0;
  double fine_mean = 0.0;
};

//! Coupled estimate of E f(X_T^h) - E f(X_T^{h/factor}) with common Brownian
//! increments. factor >= 16.
WeakErrorEstimate estimate_weak_error(const CoefficientField& field,
                                      const TestFunction& f,
                                      std::span<const double> x0,
                                      const GridSchedule& coarse,
                                      std::size_t refinement_factor,
                                      std::size_t m,
                                      std::uint64_t seed,
                                      const SimOptions& options = {});

struct WeakErrorSweep
{
  std::vector<WeakErrorEstimate> cells;
  //! Every cell has stderr > |error|.
  bool noise_dominated = false;
};

//! Weak errors for the step counts n_coarse 2^l, l = 0 .. levels, each against
//! its own reference n 2^{log2 factor}, all drawn from one common-noise
//! hierarchy. factor must be a power of two >= 16.
WeakErrorSweep weak_error_sweep(const CoefficientField& field,
                                const TestFunction& f,
                                std::span<const double> x0,
                                double horizon,
                                std::size_t n_coarse,
                                unsigned levels,
                                std::size_t refinement_factor,
                                std::size_t m,
                                std::uint64_t seed,
                                const SimOptions& options = {});

//! One sweep per test function, all from the same simulated hierarchy.
std::vector<WeakErrorSweep> weak_error_sweeps(const CoefficientField& field,
                                              const std::vector<TestFunction>& fs,
                                              std::span<const double> x0,
                                              double horizon,
                                              std::size_t n_coarse,
                                              unsigned levels,
                                              std::size_t refinement_factor,
                                              std::size_t m,
                                              std::uint64_t seed,
                                              const SimOptions& options = {});

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

struct DensityEstimate
{
  std::vector<double> points; // n x d evaluation nodes
  std::vector<double> values;
  double bandwidth = 0.0;
  double bias_bound = 0.0; // 1/2 bw^2 max |Laplacian estimate|
};

//! Gaussian product-kernel estimate from samples (m x d, row-major).
DensityEstimate kde_density(std::span<const double> samples,
                            int dim,
                            std::span<const double> eval_points,
                            double bandwidth);

//! Terminal-state KDE of a simulated batch.
DensityEstimate kde_density(const TrajectoryBatch& batch,
                            std::span<const double> eval_points,
                            double bandwidth);

//! Silverman's rule of thumb scaled by `scale` (per axis, from the first
//! coordinate's spread).
double silverman_bandwidth(std::span<const double> samples, int dim, double scale = 0.5);

struct DensityErrorRow
{
  std::string model;
  std::string component; // "scheme", "p-p_eps", "p_eps-p_eps^h", "p_eps^h-p^h"
  double h = 0.0;
  double epsilon = 0.0; // 0 when not mollified
  Vec y{};
  double distance = 0.0; // d(y, I) for piecewise fields, else 0
  double error = 0.0;    // |difference of the two KDEs|
  double std_error = 0.0;
  double bias_bound = 0.0;
  std::vector<std::string> flags;
};

struct DensitySweepOptions
{
  enum class Mode
  {
    scheme_vs_fine,
    mollified_decomposition,
  };

  Mode mode = Mode::scheme_vs_fine;
  double epsilon = 0.0;  // decomposition mode
  const CoefficientField* mollified = nullptr; // decomposition mode
  std::size_t refinement_factor = 64;
  double bandwidth = 0.0; // 0 selects 0.5 x Silverman from the finest law
  SimOptions sim{};
};

//! Density errors at y_points (n x d) for the step counts n_coarse 2^l,
//! l = 0 .. levels, against references refined by the factor, from one
//! common-noise hierarchy. In decomposition mode p and p_eps are both taken
//! at the finest level (n_coarse 2^levels times the factor) for every h.
std::vector<DensityErrorRow> density_error_sweep(const CoefficientField& field,
                                                 std::span<const double> x0,
                                                 double horizon,
                                                 std::span<const double> y_points,
                                                 std::size_t n_coarse,
                                                 unsigned levels,
                                                 std::size_t m,
                                                 std::uint64_t seed,
                                                 const DensitySweepOptions& options = {});

// ---------------------------------------------------------------------------
// Rates and formula evaluators
// ---------------------------------------------------------------------------

struct RatePoint
{
  double h = 0.0;
  double error = 0.0;
  double std_error = 0.0;
};

struct RateFit
{
  std::vector<RatePoint> points; // points used in the fit
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
  std::vector<std::string> notes;

  double predict(double h) const;
};

//! Weighted least squares of ln(error) on ln(h) with weights 1/stderr^2
//! (uniform when any stderr is not positive). Non-positive errors are
//! dropped with a note; fewer than four remaining points is a fault.
RateFit fit_rate(const std::vector<RatePoint>& points);

//! {slope, slope_stderr, intercept, r2, points[]} as JSON.
std::string rate_fit_json(const RateFit& fit);

//! Factor multiplying h^{gamma/2} in the weak error bound for indicators of
//! a Borel set at distance `dist` from its boundary.
double borel_bound_factor(double dist, double gamma);

//! (1 - d/q) / 2
double alpha_q(double q, int dim);

struct SensitivityConstant
{
  double alpha = 0.0;
  double theta = 0.0;     // min(eta/2, alpha)
  double log_value = 0.0; // ln C + C (1/theta + 1)^{1/theta + 1}
};

SensitivityConstant sensitivity_constant(double eta, double q, int dim, double base_c);

//! Sweep table with columns model, h, epsilon, test_function, error, stderr,
//! bias_bound, flags.
struct SweepRow
{
  std::string model;
  double h = 0.0;
  double epsilon = 0.0;
  std::string test_function;
  double error = 0.0;
  double std_error = 0.0;
  double bias_bound = 0.0;
  std::vector<std::string> flags;
};

std::string sweep_csv(const std::vector<SweepRow>& rows);

//! Density rows in sweep form; test_function reads "density:<component>@<y>".
SweepRow to_sweep_row(const DensityErrorRow& row, int dim);

} // namespace ewel
