#pragma once

#include "ewel/coefficients.hpp"

#include <array>
#include <memory>
#include <vector>

namespace ewel {

//! Normalized bump rho(z) = c exp(-1 / (1 - |z|^2)) on the open unit ball of
//! R^d, together with a tensor Gauss-Legendre rule restricted to the ball.
class MollifierKernel
{
public:
  explicit MollifierKernel(int dim, std::size_t nodes_per_axis = 24);

  int dim() const { return dim_; }
  double support_radius() const { return 1.0; }
  //! The constant c making the continuous profile integrate to one.
  double normalization() const { return norm_; }

  double operator()(std::span<const double> z) const;
  //! Profile as a function of |z|.
  double radial(double r) const;

  //! int |z|^gamma rho(z) dz, computed by a high-order radial rule.
  double moment(double gamma) const;

  //! Nodes inside the unit ball and weights w_k proportional to
  //! (GL weight) * rho(z_k), normalized to sum exactly to one.
  const std::vector<Vec>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  //! Sum of the raw weights before normalization (about 1).
  double raw_mass() const { return raw_mass_; }

private:
  int dim_;
  double norm_;
  double raw_mass_ = 0.0;
  std::vector<Vec> nodes_;
  std::vector<double> weights_;
};

enum class MollifyMethod
{
  holder_convolution,
  piecewise_blend,
};

std::string to_string(MollifyMethod m);

struct MollifierSettings
{
  std::size_t nodes = 24; // Gauss-Legendre nodes per axis, at least 8
  double horizon = 1.0;   // T, used by the time reflection b(T + s) = b(T - s)
};

//! Coefficient field obtained from a base field by one of the two
//! mollification procedures. Evaluation is pure and thread-safe.
class MollifiedField final : public CoefficientField
{
public:
  MollifiedField(FieldPtr base, double epsilon, MollifyMethod method, MollifierSettings settings);

  using CoefficientField::drift;

  std::string name() const override;
  bool time_homogeneous() const override { return base_->time_homogeneous(); }

  void drift(double t, std::span<const double> x, std::span<double> b) const override;
  void sigma(double t, std::span<const double> x, std::span<double> s) const override;
  void eval_batch(double t, std::size_t n, const double* x, double* b, double* s) const override;

  const CoefficientField& base() const { return *base_; }
  FieldPtr base_ptr() const { return base_; }
  double epsilon() const { return eps_; }
  MollifyMethod method() const { return method_; }
  const MollifierSettings& settings() const { return settings_; }

  //! Blend weights (w1, w2) at x for the piecewise method; (0, 0) outside the
  //! eps-neighbourhood of the discontinuity set.
  std::array<double, 2> blend_weights(std::span<const double> x) const;

private:
  void convolve(double t, const double* x, double* b, double* s) const;
  void blend(double t, const double* x, double* b, double* s) const;

  FieldPtr base_;
  double eps_;
  MollifyMethod method_;
  MollifierSettings settings_;
  std::unique_ptr<MollifierKernel> space_;
  std::unique_ptr<MollifierKernel> time_;
};

using MollifiedPtr = std::shared_ptr<const MollifiedField>;

//! Space (and, for time-dependent fields, time) convolution with rho_eps and
//! zeta_{eps^2}. Requires a Holder-regime field and eps in (0, 1].
MollifiedPtr mollify_holder(FieldPtr field, double eps, MollifierSettings settings = {});

//! Two-sided projection bump blend around each manifold of the field's
//! discontinuity set; sigma is left untouched.
MollifiedPtr mollify_piecewise(FieldPtr field, double eps, MollifierSettings settings = {});

//! One-dimensional, time-homogeneous field sampled on a uniform table and
//! interpolated with 4-point Lagrange polynomials. Points outside the table
//! fall back to the source field. Used to make Monte Carlo on convolution
//! mollified fields affordable.
FieldPtr tabulate_1d(FieldPtr source, double lo, double hi, double spacing);

// ---------------------------------------------------------------------------
// Deviation and derivative scans
// ---------------------------------------------------------------------------

struct DeviationReport
{
  double delta_b = 0.0;         // sup |b - b_eps|
  double delta_sigma = 0.0;     // sup |sigma - sigma_eps| (Frobenius)
  double delta_sigma_eta = 0.0; // eta-Holder seminorm of sigma - sigma_eps on sampled pairs
  double eta = 0.0;
};

//! Suprema over the grid nodes of the coefficient deviations, plus the
//! sampled eta-Holder seminorm of sigma - sigma_eps (requires 0 < eta < gamma).
DeviationReport sup_deviation(const CoefficientField& field,
                              const CoefficientField& mollified,
                              const SampleGrid& grid,
                              double eta);

//! (int_0^T int_box |b - b_eps|^q dx dt)^(1/q) by composite Gauss-Legendre.
//! The box is the bounding box of the discontinuity set inflated by 3 eps
//! (unbounded directions are cut at +-extent). q must exceed the dimension.
double lq_deviation(const CoefficientField& field,
                    const MollifiedField& mollified,
                    double q,
                    double horizon,
                    double extent = 4.0);

struct DerivativeReport
{
  double max_drift = 0.0;
  double max_sigma = 0.0;
  double step = 0.0;
};

//! Max over the grid of |D^alpha b_eps| and |D^alpha sigma_eps| by central
//! finite differences with the given step (default eps / 20). Steps of at
//! least eps / 4 do not resolve the mollifier and are rejected.
DerivativeReport derivative_blowup_scan(const MollifiedField& mollified,
                                        const std::array<int, kMaxDim>& alpha,
                                        const std::vector<Vec>& points,
                                        double t = 0.0,
                                        double step = 0.0);

} // namespace ewel
