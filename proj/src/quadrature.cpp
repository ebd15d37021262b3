#include "ewel/quadrature.hpp"

#include "ewel/errors.hpp"

#include <cmath>
#include <numbers>

namespace ewel {

QuadratureRule gauss_legendre(std::size_t n)
{
  if (n == 0)
    throw ArgumentError("gauss_legendre: n must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  // Legendre P_n and its derivative by the three-term recurrence
  const auto legendre = [n](double x, double& deriv) {
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double p2 =
        ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
      p0 = p1;
      p1 = p2;
    }
    deriv = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    return p1;
  };
  for (std::size_t i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      const double dx = legendre(x, dp) / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16)
        break;
    }
    legendre(x, dp);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1)
    rule.nodes[n / 2] = 0.0;
  return rule;
}

QuadratureRule gauss_legendre(std::size_t n, double a, double b)
{
  QuadratureRule rule = gauss_legendre(n);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (std::size_t i = 0; i < n; ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

QuadratureRule composite_gauss_legendre(std::size_t panels,
                                        std::size_t order,
                                        double a,
                                        double b)
{
  if (panels == 0)
    throw ArgumentError("composite_gauss_legendre: panels must be positive");
  const QuadratureRule ref = gauss_legendre(order);
  QuadratureRule rule;
  rule.nodes.reserve(panels * order);
  rule.weights.reserve(panels * order);
  const double width = (b - a) / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + width * static_cast<double>(p);
    for (std::size_t i = 0; i < order; ++i) {
      rule.nodes.push_back(lo + 0.5 * width * (ref.nodes[i] + 1.0));
      rule.weights.push_back(0.5 * width * ref.weights[i]);
    }
  }
  return rule;
}

QuadratureRule gauss_hermite_normal(std::size_t n)
{
  if (n == 0)
    throw ArgumentError("gauss_hermite_normal: n must be positive");
  // Golub-Welsch would need an eigen-solver; Newton on the orthonormal
  // Hermite recurrence is enough for the modest n used here.
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double pim4 = std::pow(std::numbers::pi, -0.25);
  double z = 0.0;
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double dn = static_cast<double>(n);
    if (i == 0)
      z = std::sqrt(2.0 * dn + 1.0) - 1.85575 * std::pow(2.0 * dn + 1.0, -1.0 / 6.0);
    else if (i == 1)
      z -= 1.14 * std::pow(dn, 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * rule.nodes[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * rule.nodes[1];
    else
      z = 2.0 * z - rule.nodes[i - 2];
    double pp = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      double p1 = pim4;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double dj = static_cast<double>(j);
        p1 = z * std::sqrt(2.0 / dj) * p2 - std::sqrt((dj - 1.0) / dj) * p3;
      }
      pp = std::sqrt(2.0 * dn) * p2;
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15)
        break;
    }
    rule.nodes[i] = z;
    rule.nodes[n - 1 - i] = -z;
    rule.weights[i] = 2.0 / (pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  // physicists' nodes/weights -> standard normal: z = sqrt(2) x, w / sqrt(pi)
  std::vector<double> nodes(n);
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = std::sqrt(2.0) * rule.nodes[n - 1 - i];
    weights[i] = rule.weights[n - 1 - i] / std::sqrt(std::numbers::pi);
  }
  if (n % 2 == 1)
    nodes[n / 2] = 0.0;
  rule.nodes = std::move(nodes);
  rule.weights = std::move(weights);
  return rule;
}

std::vector<double> chebyshev_nodes(std::size_t n, double a, double b)
{
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double theta =
      std::numbers::pi * (2.0 * static_cast<double>(n - 1 - k) + 1.0) /
      (2.0 * static_cast<double>(n));
    x[k] = 0.5 * (a + b) + 0.5 * (b - a) * std::cos(theta);
  }
  return x;
}

ChebyshevInterpolant1d::ChebyshevInterpolant1d(std::size_t n, double a, double b)
  : nodes_(chebyshev_nodes(n, a, b))
  , bary_(n)
  , a_(a)
  , b_(b)
{
  for (std::size_t k = 0; k < n; ++k) {
    const double theta =
      std::numbers::pi * (2.0 * static_cast<double>(n - 1 - k) + 1.0) /
      (2.0 * static_cast<double>(n));
    const double sign = ((n - 1 - k) % 2 == 0) ? 1.0 : -1.0;
    bary_[k] = sign * std::sin(theta);
  }
}

void ChebyshevInterpolant1d::weights_at(double x, std::span<double> w) const
{
  const std::size_t n = nodes_.size();
  if (x < a_ || x > b_) {
    for (std::size_t k = 0; k < n; ++k)
      w[k] = 0.0;
    return;
  }
  double denom = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double diff = x - nodes_[k];
    if (diff == 0.0) {
      for (std::size_t j = 0; j < n; ++j)
        w[j] = (j == k) ? 1.0 : 0.0;
      return;
    }
    w[k] = bary_[k] / diff;
    denom += w[k];
  }
  for (std::size_t k = 0; k < n; ++k)
    w[k] /= denom;
}

} // namespace ewel
