#include "egomesh/metrics.hpp"

#include "egomesh/error.hpp"

namespace egomesh {

std::vector<Vec3> Alignment::apply(std::span<const Vec3> points) const {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(apply(p));
  return out;
}

std::vector<Vec3> to_points(const Tensor& rows) {
  if (rows.rank() != 2 || rows.dim(1) != 3) {
    throw DimensionError("expected [N x 3] points, got " + shape_str(rows.shape()));
  }
  const auto v = rows.values();
  std::vector<Vec3> out(rows.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

double mean_point_error(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw ContractError("point error needs equal nonempty sets, got " +
                        std::to_string(pred.size()) + " and " + std::to_string(gt.size()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += norm(pred[i] - gt[i]);
  return 1000.0 * total / static_cast<double>(pred.size());
}

Alignment umeyama_align(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  const std::size_t n = pred.size();
  if (n != gt.size()) {
    throw ContractError("alignment needs equal point counts, got " + std::to_string(n) + " and " +
                        std::to_string(gt.size()));
  }
  if (n < 3) throw ContractError("alignment needs at least 3 points, got " + std::to_string(n));
  const double inv = 1.0 / static_cast<double>(n);
  Vec3 mp{};
  Vec3 mg{};
  for (std::size_t i = 0; i < n; ++i) {
    mp = mp + pred[i];
    mg = mg + gt[i];
  }
  mp = inv * mp;
  mg = inv * mg;
  double var_p = 0.0;
  double var_g = 0.0;
  Mat3 cov{};
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = pred[i] - mp;
    const Vec3 g = gt[i] - mg;
    var_p += dot(p, p);
    var_g += dot(g, g);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) cov(r, c) += g[r] * p[c];
  }
  var_p *= inv;
  var_g *= inv;
  if (!(var_p > 1e-30)) throw DegenerateError("prediction points are all coincident");
  if (!(var_g > 1e-30)) throw DegenerateError("target points are all coincident");
  for (double& v : cov.m) v *= inv;

  const Svd3 svd = svd3(cov);
  const double sign = svd.u.determinant() * svd.v.determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 s = Mat3::diagonal(1.0, 1.0, sign);
  Alignment a;
  a.rotation = svd.u * s * svd.v.transposed();
  const double trace = svd.singular.x + svd.singular.y + sign * svd.singular.z;
  a.scale = trace / var_p;
  if (!(a.scale > 0.0)) throw DegenerateError("point sets admit no positive alignment scale");
  a.translation = mg - a.scale * (a.rotation * mp);
  return a;
}

double pa_error(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  const Alignment a = umeyama_align(pred, gt);
  const auto aligned = a.apply(pred);
  return mean_point_error(aligned, gt);
}

}  // namespace egomesh
