#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ewel {

//! Nodes and weights of a one-dimensional rule on a reference interval.
struct QuadratureRule
{
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

//! n-point Gauss-Legendre rule on [-1, 1].
QuadratureRule gauss_legendre(std::size_t n);

//! Gauss-Legendre rule mapped affinely onto [a, b].
QuadratureRule gauss_legendre(std::size_t n, double a, double b);

//! Composite Gauss-Legendre: `panels` equal panels of `order` nodes on [a, b].
QuadratureRule composite_gauss_legendre(std::size_t panels,
                                        std::size_t order,
                                        double a,
                                        double b);

//! n-point probabilists' Gauss-Hermite rule: integrates f(z) against the
//! standard normal density. Weights sum to one.
QuadratureRule gauss_hermite_normal(std::size_t n);

//! Chebyshev points of the first kind on [a, b], ascending.
std::vector<double> chebyshev_nodes(std::size_t n, double a, double b);

//! Barycentric Lagrange interpolation on Chebyshev points of the first kind.
//! Precomputes nothing beyond the node set; weights are closed form.
class ChebyshevInterpolant1d
{
public:
  ChebyshevInterpolant1d() = default;
  ChebyshevInterpolant1d(std::size_t n, double a, double b);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<double>& nodes() const { return nodes_; }
  double lower() const { return a_; }
  double upper() const { return b_; }

  //! Interpolation weights such that p(x) = sum_k w_k f(x_k). Outside [a, b]
  //! the weights are all zero (the interpolated function is taken to vanish).
  void weights_at(double x, std::span<double> w) const;

private:
  std::vector<double> nodes_;
  std::vector<double> bary_;
  double a_ = 0.0;
  double b_ = 0.0;
};

} // namespace ewel
