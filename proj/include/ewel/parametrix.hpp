#pragma once

#include "ewel/coefficients.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ewel {

//! Sigma(s, t, y) = int_s^t a(v, y) dv, the covariance of the driftless
//! Gaussian proxy frozen at y. Closed form for time-homogeneous fields,
//! Gauss-Legendre in v otherwise.
Mat proxy_covariance(const CoefficientField& field, double s, double t, const Vec& y);

//! Frozen Gaussian proxy density p~(s, t, x, y): N(0, Sigma(s,t,y)) at y - x.
double proxy_density(const CoefficientField& field, double s, double t, const Vec& x, const Vec& y);

//! Parametrix kernel H(u, t, z, y) = (L_u - L~_u^y) p~(u, t, ., y)(z) with
//! closed-form Gaussian derivatives.
double kernel_H(const CoefficientField& field, double u, double t, const Vec& z, const Vec& y);

//! Markov chain analogue of kernel_H for the Euler scheme with step h:
//! one-step generator difference applied to the chain proxy density
//! p~^h(t_i + h, t_j, ., y), expectations by Gauss-Hermite quadrature.
double euler_chain_kernel(const CoefficientField& field,
                          double ti,
                          double tj,
                          const Vec& z,
                          const Vec& y,
                          double h,
                          std::size_t hermite_nodes = 24);

//! Gaussian-free prefactor of the parametrix term bound:
//! ((1 v T^{(1-gamma)/2}) c1)^{r+1} Gamma(gamma/2)^r / Gamma(1 + r gamma/2) dt^{r gamma/2}.
double term_bound(int r, double dt, double gamma, double c1, double horizon);

// ---------------------------------------------------------------------------
// Time-space convolution
// ---------------------------------------------------------------------------

//! Function of (s, t, x, y) such as a density or a kernel.
using SpaceTimeKernel = std::function<double(double, double, const Vec&, const Vec&)>;

struct ConvolutionQuadrature
{
  std::size_t time_nodes = 64;  // graded toward both endpoints
  std::size_t space_nodes = 48; // per axis
  double radius = 6.0;          // window half-width in standard deviations
  double variance_scale = 1.0;  // envelope variance per unit time
  double gamma = 1.0;           // grading exponent 2/gamma
  double h = 0.0;               // > 0 selects the discrete convolution
};

//! (f (x) g)(s, t, x, y) = int_s^t du int f(s,u,x,z) g(u,t,z,y) dz. The
//! discrete variant sums over u = s + k h, k = 0 .. N-1, with f(s,s,x,.)
//! read as the Dirac mass at x.
double convolve_step(const SpaceTimeKernel& f,
                     const SpaceTimeKernel& g,
                     double s,
                     double t,
                     const Vec& x,
                     const Vec& y,
                     int dim,
                     const ConvolutionQuadrature& quadrature = {});

// ---------------------------------------------------------------------------
// Parametrix series
// ---------------------------------------------------------------------------

enum class SeriesMode
{
  continuous,
  discrete,
};

struct ParametrixSettings
{
  int r_max = 4;
  std::size_t time_nodes = 64;  // quadrature nodes per time integral
  std::size_t table_nodes = 32; // stored time slices of the iterated kernels
  std::size_t space_nodes = 48; // per axis
  double radius = 6.0;          // truncation in standard deviations
  unsigned jobs = 1;
};

struct SeriesAccumulator
{
  double s = 0.0;
  double t = 1.0;
  int dim = 1;
  Vec x{};
  Vec y{};
  SeriesMode mode = SeriesMode::continuous;
  double h = 0.0;
  int r_max = 0;
  //! terms[r] = p~ (x) H^(r) at (s, t, x, y), r = 0 .. r_max.
  std::vector<double> terms;
  double c1 = 0.0; // fitted from the first two terms
  double tail_estimate = 0.0;

  double value() const;
};

//! Partial sum of the parametrix series for the transition density at
//! (s, t, x, y), d <= 2 with diagonal sigma. In discrete mode s and t must
//! lie on the grid of step h.
SeriesAccumulator density_series(const CoefficientField& field,
                                 double s,
                                 double t,
                                 const Vec& x,
                                 const Vec& y,
                                 const ParametrixSettings& settings = {},
                                 SeriesMode mode = SeriesMode::continuous,
                                 double h = 0.0);

//! Columns s, t, x..., y..., r_max, value, tail_estimate, method.
std::string series_csv(const std::vector<SeriesAccumulator>& rows);

//! Gaussian upper envelope C p_c(t, z) fitted over samples (dt, |y - x|, value).
struct EnvelopeSample
{
  double dt;
  double distance;
  double value;
};

struct EnvelopeFit
{
  double big_c = 0.0;
  double c = 1.0;
};

//! Smallest C over a grid of c in (0, 1] such that every |value| <= C p_c.
EnvelopeFit fit_gaussian_envelope(const std::vector<EnvelopeSample>& samples, int dim);

double gaussian_envelope(double c, double dt, double distance, int dim);

} // namespace ewel
