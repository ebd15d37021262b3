#include "ewel/linalg.hpp"

#include <algorithm>
#include <numbers>

namespace ewel {

std::array<double, kMaxDim> symmetric_eigenvalues(const Mat& a, int dim)
{
  std::array<double, kMaxDim> ev{};
  if (dim == 1) {
    ev[0] = at(a, 0, 0);
    return ev;
  }
  if (dim == 2) {
    const double m = 0.5 * (at(a, 0, 0) + at(a, 1, 1));
    const double d = 0.5 * (at(a, 0, 0) - at(a, 1, 1));
    const double r = std::hypot(d, at(a, 0, 1));
    ev[0] = m - r;
    ev[1] = m + r;
    return ev;
  }
  // trigonometric solution of the characteristic cubic
  const double p1 = at(a, 0, 1) * at(a, 0, 1) + at(a, 0, 2) * at(a, 0, 2) +
                    at(a, 1, 2) * at(a, 1, 2);
  if (p1 == 0.0) {
    ev = { at(a, 0, 0), at(a, 1, 1), at(a, 2, 2) };
    std::sort(ev.begin(), ev.end());
    return ev;
  }
  const double q = (at(a, 0, 0) + at(a, 1, 1) + at(a, 2, 2)) / 3.0;
  const double p2 = (at(a, 0, 0) - q) * (at(a, 0, 0) - q) +
                    (at(a, 1, 1) - q) * (at(a, 1, 1) - q) +
                    (at(a, 2, 2) - q) * (at(a, 2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Mat b{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      at(b, i, j) = (at(a, i, j) - (i == j ? q : 0.0)) / p;
  const double det_b =
    at(b, 0, 0) * (at(b, 1, 1) * at(b, 2, 2) - at(b, 1, 2) * at(b, 2, 1)) -
    at(b, 0, 1) * (at(b, 1, 0) * at(b, 2, 2) - at(b, 1, 2) * at(b, 2, 0)) +
    at(b, 0, 2) * (at(b, 1, 0) * at(b, 2, 1) - at(b, 1, 1) * at(b, 2, 0));
  const double r = std::clamp(det_b / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double e2 = 3.0 * q - e1 - e3;
  ev = { e3, e2, e1 };
  std::sort(ev.begin(), ev.end());
  return ev;
}

bool spd_inverse(const Mat& a, int dim, Mat& inverse, double& determinant)
{
  inverse = Mat{};
  if (dim == 1) {
    determinant = at(a, 0, 0);
    if (!(determinant > 0.0))
      return false;
    at(inverse, 0, 0) = 1.0 / determinant;
    return true;
  }
  if (dim == 2) {
    determinant = at(a, 0, 0) * at(a, 1, 1) - at(a, 0, 1) * at(a, 1, 0);
    if (!(at(a, 0, 0) > 0.0) || !(determinant > 0.0))
      return false;
    at(inverse, 0, 0) = at(a, 1, 1) / determinant;
    at(inverse, 1, 1) = at(a, 0, 0) / determinant;
    at(inverse, 0, 1) = -at(a, 0, 1) / determinant;
    at(inverse, 1, 0) = -at(a, 1, 0) / determinant;
    return true;
  }
  const double c00 = at(a, 1, 1) * at(a, 2, 2) - at(a, 1, 2) * at(a, 2, 1);
  const double c01 = at(a, 1, 2) * at(a, 2, 0) - at(a, 1, 0) * at(a, 2, 2);
  const double c02 = at(a, 1, 0) * at(a, 2, 1) - at(a, 1, 1) * at(a, 2, 0);
  determinant = at(a, 0, 0) * c00 + at(a, 0, 1) * c01 + at(a, 0, 2) * c02;
  const double minor2 = at(a, 0, 0) * at(a, 1, 1) - at(a, 0, 1) * at(a, 1, 0);
  if (!(at(a, 0, 0) > 0.0) || !(minor2 > 0.0) || !(determinant > 0.0))
    return false;
  const double inv = 1.0 / determinant;
  at(inverse, 0, 0) = c00 * inv;
  at(inverse, 1, 0) = c01 * inv;
  at(inverse, 2, 0) = c02 * inv;
  at(inverse, 0, 1) = (at(a, 0, 2) * at(a, 2, 1) - at(a, 0, 1) * at(a, 2, 2)) * inv;
  at(inverse, 1, 1) = (at(a, 0, 0) * at(a, 2, 2) - at(a, 0, 2) * at(a, 2, 0)) * inv;
  at(inverse, 2, 1) = (at(a, 0, 1) * at(a, 2, 0) - at(a, 0, 0) * at(a, 2, 1)) * inv;
  at(inverse, 0, 2) = (at(a, 0, 1) * at(a, 1, 2) - at(a, 0, 2) * at(a, 1, 1)) * inv;
  at(inverse, 1, 2) = (at(a, 0, 2) * at(a, 1, 0) - at(a, 0, 0) * at(a, 1, 2)) * inv;
  at(inverse, 2, 2) = (at(a, 0, 0) * at(a, 1, 1) - at(a, 0, 1) * at(a, 1, 0)) * inv;
  return true;
}

} // namespace ewel
