#pragma once

#include <array>
#include <cmath>
#include <span>

namespace ewel {

//! Largest state dimension handled anywhere in the library.
inline constexpr int kMaxDim = 3;

//! Point or vector in R^d, d <= kMaxDim; unused trailing entries are zero.
using Vec = std::array<double, kMaxDim>;
//! d x d matrix stored row-major with stride kMaxDim.
using Mat = std::array<double, kMaxDim * kMaxDim>;

inline double& at(Mat& m, int i, int j) { return m[i * kMaxDim + j]; }
inline double at(const Mat& m, int i, int j) { return m[i * kMaxDim + j]; }

inline Vec to_vec(std::span<const double> x)
{
  Vec v{};
  for (std::size_t i = 0; i < x.size() && i < v.size(); ++i)
    v[i] = x[i];
  return v;
}

inline double dot(const Vec& a, const Vec& b, int dim)
{
  double s = 0.0;
  for (int i = 0; i < dim; ++i)
    s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a, int dim) { return std::sqrt(dot(a, a, dim)); }

inline double distance(const Vec& a, const Vec& b, int dim)
{
  double s = 0.0;
  for (int i = 0; i < dim; ++i)
    s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

//! a = s s^T
inline Mat outer_self(const Mat& s, int dim)
{
  Mat a{};
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      double v = 0.0;
      for (int k = 0; k < dim; ++k)
        v += at(s, i, k) * at(s, j, k);
      at(a, i, j) = v;
    }
  return a;
}

//! Frobenius norm of the leading dim x dim block.
inline double frobenius(const Mat& m, int dim)
{
  double s = 0.0;
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      s += at(m, i, j) * at(m, i, j);
  return std::sqrt(s);
}

//! Eigenvalues (ascending) of a symmetric matrix, d <= 3.
std::array<double, kMaxDim> symmetric_eigenvalues(const Mat& a, int dim);

//! Inverse and determinant of a symmetric positive definite matrix, d <= 3.
//! Returns false when the matrix is not positive definite.
bool spd_inverse(const Mat& a, int dim, Mat& inverse, double& determinant);

} // namespace ewel
