#include "egomesh/linalg3.hpp"

#include <algorithm>
#include <numbers>
#include <utility>

namespace egomesh {

Mat3 Mat3::transposed() const {
  return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
}

double Mat3::determinant() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 c;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      c.m[i * 3 + j] = a.m[i * 3] * b.m[j] + a.m[i * 3 + 1] * b.m[3 + j] + a.m[i * 3 + 2] * b.m[6 + j];
  return c;
}

Mat3 operator-(const Mat3& a, const Mat3& b) {
  Mat3 c;
  for (std::size_t i = 0; i < 9; ++i) c.m[i] = a.m[i] - b.m[i];
  return c;
}

double max_abs_diff(const Mat3& a, const Mat3& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < 9; ++i) d = std::max(d, std::fabs(a.m[i] - b.m[i]));
  return d;
}

namespace {

// Any unit vector orthogonal to a (unit) vector.
Vec3 orthogonal_unit(Vec3 a) {
  const Vec3 trial = std::fabs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 c = cross(a, trial);
  return (1.0 / norm(c)) * c;
}

}  // namespace

Svd3 svd3(const Mat3& a) {
  std::array<Vec3, 3> w = {a.column(0), a.column(1), a.column(2)};
  Mat3 v = Mat3::identity();

  constexpr double kEps = 1e-15;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p < 2; ++p) {
      for (std::size_t q = p + 1; q < 3; ++q) {
        const double alpha = dot(w[p], w[p]);
        const double beta = dot(w[q], w[q]);
        const double gamma = dot(w[p], w[q]);
        if (std::fabs(gamma) <= kEps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const Vec3 wp = w[p];
        const Vec3 wq = w[q];
        w[p] = c * wp - s * wq;
        w[q] = s * wp + c * wq;
        const Vec3 vp = v.column(p);
        const Vec3 vq = v.column(q);
        v.set_column(p, c * vp - s * vq);
        v.set_column(q, s * vp + c * vq);
      }
    }
    if (!rotated) break;
  }

  std::array<std::size_t, 3> order = {0, 1, 2};
  std::array<double, 3> sigma = {norm(w[0]), norm(w[1]), norm(w[2])};
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

  Svd3 out;
  std::array<Vec3, 3> ucols;
  const double tiny = std::max(sigma[order[0]], 1e-300) * 1e-14;
  std::size_t rank = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t src = order[k];
    out.singular[k] = sigma[src];
    out.v.set_column(k, v.column(src));
    if (sigma[src] > tiny) {
      ucols[k] = (1.0 / sigma[src]) * w[src];
      ++rank;
    }
  }
  if (rank == 0) ucols[0] = {1, 0, 0};
  if (rank <= 1) ucols[1] = orthogonal_unit(ucols[0]);
  if (rank <= 2) ucols[2] = cross(ucols[0], ucols[1]);
  for (std::size_t k = 0; k < 3; ++k) out.u.set_column(k, ucols[k]);
  return out;
}

Mat3 axis_angle_to_matrix(Vec3 aa) {
  const double theta2 = dot(aa, aa);
  const double theta = std::sqrt(theta2);
  double a;
  double b;
  if (theta < 1e-8) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 k{{0, -aa.z, aa.y, aa.z, 0, -aa.x, -aa.y, aa.x, 0}};
  const Mat3 k2 = k * k;
  Mat3 r = Mat3::identity();
  for (std::size_t i = 0; i < 9; ++i) r.m[i] += a * k.m[i] + b * k2.m[i];
  return r;
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  // atan2 of (sin, cos) stays accurate at both ends of [0, pi], where acos of
  // the trace alone loses half the significant digits.
  const Vec3 skew = {r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)};
  const double sin_theta = 0.5 * norm(skew);
  const double cos_theta = 0.5 * (r(0, 0) + r(1, 1) + r(2, 2) - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta < 1e-8) return 0.5 * skew;
  if (std::numbers::pi - theta > 1e-3) return (theta / (2.0 * sin_theta)) * skew;
  // Near pi: (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) n n^T gives the
  // axis up to sign; the skew part fixes the sign.
  Mat3 s;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      s(i, j) = 0.5 * (r(i, j) + r(j, i)) - (i == j ? cos_theta : 0.0);
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i)
    if (s(i, i) > s(best, best)) best = i;
  Vec3 axis = s.column(best);
  axis = (1.0 / norm(axis)) * axis;
  if (dot(axis, skew) < 0.0) axis = -1.0 * axis;
  return theta * axis;
}

}  // namespace egomesh
