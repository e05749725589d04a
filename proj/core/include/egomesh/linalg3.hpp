#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace egomesh {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

/// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
  static Mat3 diagonal(double a, double b, double c) { return Mat3{{a, 0, 0, 0, b, 0, 0, 0, c}}; }

  double operator()(std::size_t r, std::size_t c) const { return m[r * 3 + c]; }
  double& operator()(std::size_t r, std::size_t c) { return m[r * 3 + c]; }

  Vec3 column(std::size_t c) const { return {m[c], m[3 + c], m[6 + c]}; }
  void set_column(std::size_t c, Vec3 v) {
    m[c] = v.x;
    m[3 + c] = v.y;
    m[6 + c] = v.z;
  }

  Mat3 transposed() const;
  double determinant() const;

  friend Mat3 operator*(const Mat3& a, const Mat3& b);
  friend Vec3 operator*(const Mat3& a, Vec3 v) {
    return {a.m[0] * v.x + a.m[1] * v.y + a.m[2] * v.z, a.m[3] * v.x + a.m[4] * v.y + a.m[5] * v.z,
            a.m[6] * v.x + a.m[7] * v.y + a.m[8] * v.z};
  }
  friend Mat3 operator-(const Mat3& a, const Mat3& b);
};

/// Max absolute entry of a - b.
double max_abs_diff(const Mat3& a, const Mat3& b);

struct Svd3 {
  Mat3 u;
  Vec3 singular;  // descending, nonnegative
  Mat3 v;         // a = u * diag(singular) * v^T
};

/// One-sided (Hestenes) cyclic Jacobi SVD: Jacobi rotations that diagonalize
/// the Gram matrix a^T a, applied implicitly to the columns of a. U and V are
/// orthogonal; for rank-deficient input the missing columns of U complete an
/// orthonormal basis.
Svd3 svd3(const Mat3& a);

/// Rotation matrix of an axis-angle vector (Rodrigues).
Mat3 axis_angle_to_matrix(Vec3 axis_angle);
/// Inverse of axis_angle_to_matrix with angle in [0, pi].
Vec3 matrix_to_axis_angle(const Mat3& r);

}  // namespace egomesh
