#include "egomesh/body.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "egomesh/error.hpp"
#include "egomesh/linalg3.hpp"
#include "egomesh/rng.hpp"

namespace egomesh {

namespace {

struct JointSpec {
  const char* name;
  int parent;
  Vec3 position;
  double radius;    // radius of the capsule ending at this joint
  double tip;       // extension length when the joint is a leaf
  double tip_radius;
};

// Left joints precede their right mirror images so that prefixes stay as
// symmetric as possible.
constexpr JointSpec kSkeleton[kMaxToyJoints + 1] = {
    {"pelvis", -1, {0.0, 0.0, 0.0}, 0.0, 0.06, 0.10},
    {"spine", 0, {0.0, 0.0, -0.12}, 0.13, 0.08, 0.12},
    {"chest", 1, {0.0, 0.0, -0.28}, 0.14, 0.08, 0.12},
    {"neck", 2, {0.0, 0.0, -0.46}, 0.06, 0.05, 0.05},
    {"head", 3, {0.0, 0.0, -0.56}, 0.05, 0.20, 0.09},
    {"l_shoulder", 2, {0.17, 0.0, -0.40}, 0.05, 0.06, 0.05},
    {"r_shoulder", 2, {-0.17, 0.0, -0.40}, 0.05, 0.06, 0.05},
    {"l_elbow", 5, {0.20, 0.0, -0.13}, 0.045, 0.12, 0.04},
    {"r_elbow", 6, {-0.20, 0.0, -0.13}, 0.045, 0.12, 0.04},
    {"l_wrist", 7, {0.21, 0.0, 0.12}, 0.04, 0.08, 0.035},
    {"r_wrist", 8, {-0.21, 0.0, 0.12}, 0.04, 0.08, 0.035},
    {"l_hip", 0, {0.09, 0.0, 0.04}, 0.08, 0.20, 0.07},
    {"r_hip", 0, {-0.09, 0.0, 0.04}, 0.08, 0.20, 0.07},
    {"l_knee", 11, {0.10, 0.0, 0.44}, 0.07, 0.20, 0.05},
    {"r_knee", 12, {-0.10, 0.0, 0.44}, 0.07, 0.20, 0.05},
    {"l_ankle", 13, {0.10, 0.0, 0.84}, 0.05, 0.10, 0.045},
    {"r_ankle", 14, {-0.10, 0.0, 0.84}, 0.05, 0.10, 0.045},
};

constexpr std::size_t kRingSize = 8;
constexpr double kSkinSigma = 0.03;
constexpr double kRegressorSigma = 0.04;

struct Segment {
  Vec3 a;
  Vec3 b;
  double radius;
};

double segment_distance_sq(Vec3 p, const Segment& s) {
  const Vec3 ab = s.b - s.a;
  const double len_sq = dot(ab, ab);
  double t = len_sq > 0.0 ? dot(p - s.a, ab) / len_sq : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 d = p - (s.a + t * ab);
  return dot(d, d);
}

// Orthonormal ring frame for a capsule axis; mirrored axes give mirrored
// rings (as point sets) because e1 is built from the lateral axis.
void ring_frame(Vec3 dir, Vec3& e1, Vec3& e2) {
  const Vec3 lateral{1.0, 0.0, 0.0};
  const Vec3 alt{0.0, 1.0, 0.0};
  const Vec3 ref = std::abs(dot(dir, lateral)) < 0.9 ? lateral : alt;
  Vec3 u = ref - dot(ref, dir) * dir;
  u = (1.0 / norm(u)) * u;
  e1 = u;
  e2 = cross(dir, u);
}

// Softmax-style normalized Gaussian weights of squared distances.
void gaussian_row(std::span<const double> dist_sq, double sigma, std::span<double> out) {
  const double dmin = *std::min_element(dist_sq.begin(), dist_sq.end());
  double total = 0.0;
  for (std::size_t i = 0; i < dist_sq.size(); ++i) {
    out[i] = std::exp(-(dist_sq[i] - dmin) / (2.0 * sigma * sigma));
    total += out[i];
  }
  for (double& v : out) v /= total;
}

}  // namespace

void BodyModel::validate() const {
  const std::size_t nj = parents.size();
  if (nj < 2) throw ContractError("body model needs a root and at least one joint");
  if (parents[0] != -1) throw ContractError("joint 0 must be the root");
  for (std::size_t j = 1; j < nj; ++j) {
    if (parents[j] < 0 || static_cast<std::size_t>(parents[j]) >= j) {
      throw ContractError("joint " + std::to_string(j) + " has parent " +
                          std::to_string(parents[j]) + "; parents must precede children");
    }
  }
  const std::size_t nv = num_vertices();
  if (template_vertices.shape() != Shape{nv, 3}) {
    throw ContractError("template must be [Nv x 3]");
  }
  if (shape_dirs.shape() != Shape{nv, 3, kShapeCoeffs}) {
    throw ContractError("shape_dirs must be [Nv x 3 x 10], got " + shape_str(shape_dirs.shape()));
  }
  if (joint_regressor.shape() != Shape{nj, nv}) {
    throw ContractError("joint regressor must be [(J+1) x Nv], got " +
                        shape_str(joint_regressor.shape()));
  }
  if (skin_weights.shape() != Shape{nv, nj}) {
    throw ContractError("skin weights must be [Nv x (J+1)], got " +
                        shape_str(skin_weights.shape()));
  }
  auto check_convex = [](const Tensor& t, const char* what) {
    const std::size_t rows = t.dim(0);
    const std::size_t cols = t.dim(1);
    const auto v = t.values();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!(v[r * cols + c] >= 0.0)) {
          throw ContractError(std::string(what) + " row " + std::to_string(r) +
                              " has a negative entry");
        }
        total += v[r * cols + c];
      }
      if (std::abs(total - 1.0) > 1e-9) {
        throw ContractError(std::string(what) + " row " + std::to_string(r) + " sums to " +
                            std::to_string(total));
      }
    }
  };
  check_convex(joint_regressor, "joint regressor");
  check_convex(skin_weights, "skin weights");
  for (const auto& f : faces) {
    for (std::size_t idx : f) {
      if (idx >= nv) {
        throw ContractError("face references vertex " + std::to_string(idx) + " of " +
                            std::to_string(nv));
      }
    }
  }
}

BodyModel build_toy_body(std::uint64_t seed, std::size_t joints, std::size_t vertices) {
  if (joints < 1 || joints > kMaxToyJoints) {
    throw ConfigError("toy body supports 1.." + std::to_string(kMaxToyJoints) +
                      " joints, got " + std::to_string(joints));
  }
  const std::size_t nj = joints + 1;
  if (vertices < nj) {
    throw ConfigError("toy body needs at least " + std::to_string(nj) + " vertices, got " +
                      std::to_string(vertices));
  }

  std::vector<std::vector<std::size_t>> children(nj);
  for (std::size_t j = 1; j < nj; ++j) {
    children[static_cast<std::size_t>(kSkeleton[j].parent)].push_back(j);
  }

  // Capsules owned by each joint: towards each child, or a tip for leaves.
  // The mesh is made of the same capsules.
  std::vector<std::vector<Segment>> owned(nj);
  struct Bone {
    Segment seg;
    std::size_t mirror_of;  // index of the left twin, or npos
    bool midline;
  };
  std::vector<Bone> bones;
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> bone_of_joint(nj, npos);  // capsule ending at joint j / tip of leaf j
  std::vector<std::size_t> tip_of_joint(nj, npos);
  for (std::size_t j = 0; j < nj; ++j) {
    const Vec3 pj = kSkeleton[j].position;
    for (std::size_t c : children[j]) {
      const Segment s{pj, kSkeleton[c].position, kSkeleton[c].radius};
      owned[j].push_back(s);
      bone_of_joint[c] = bones.size();
      bones.push_back({s, npos, pj.x == 0.0 && kSkeleton[c].position.x == 0.0});
    }
    if (children[j].empty()) {
      Vec3 dir{0.0, 0.0, -1.0};
      if (j > 0) {
        const Vec3 d = pj - kSkeleton[kSkeleton[j].parent].position;
        dir = (1.0 / norm(d)) * d;
      }
      const Segment s{pj, pj + kSkeleton[j].tip * dir, kSkeleton[j].tip_radius};
      owned[j].push_back(s);
      tip_of_joint[j] = bones.size();
      bones.push_back({s, npos, pj.x == 0.0});
    }
  }
  // Pair right bones with their left twins (same name with the side swapped).
  auto twin_joint = [&](std::size_t j) -> std::size_t {
    const std::string name = kSkeleton[j].name;
    if (name.rfind("r_", 0) != 0) return npos;
    const std::string left = "l_" + name.substr(2);
    for (std::size_t k = 0; k < nj; ++k) {
      if (left == kSkeleton[k].name) return k;
    }
    return npos;
  };
  for (std::size_t j = 0; j < nj; ++j) {
    const std::size_t twin = twin_joint(j);
    if (twin == npos) continue;
    if (bone_of_joint[j] != npos && bone_of_joint[twin] != npos) {
      bones[bone_of_joint[j]].mirror_of = bone_of_joint[twin];
    }
    if (tip_of_joint[j] != npos && tip_of_joint[twin] != npos) {
      bones[tip_of_joint[j]].mirror_of = tip_of_joint[twin];
    }
  }
  // A left bone without a twin breaks the pairing; allocation treats every
  // bone that is neither midline nor paired independently.

  // Ring allocation proportional to capsule length; leftovers go to midline
  // bones so paired bones keep equal ring counts.
  const std::size_t ring_budget = vertices / kRingSize;
  double total_len = 0.0;
  for (const auto& b : bones) total_len += norm(b.seg.b - b.seg.a);
  const std::size_t base = std::min<std::size_t>(2, ring_budget / bones.size());
  std::vector<std::size_t> rings(bones.size(), base);
  std::size_t used = base * bones.size();
  const std::size_t spare = ring_budget - used;
  for (std::size_t i = 0; i < bones.size(); ++i) {
    const double len = norm(bones[i].seg.b - bones[i].seg.a);
    const auto extra =
        static_cast<std::size_t>(std::floor(static_cast<double>(spare) * len / total_len));
    rings[i] += extra;
    used += extra;
  }
  std::vector<std::size_t> midline;
  for (std::size_t i = 0; i < bones.size(); ++i) {
    if (bones[i].midline) midline.push_back(i);
  }
  std::stable_sort(midline.begin(), midline.end(), [&](std::size_t a, std::size_t b) {
    return norm(bones[a].seg.b - bones[a].seg.a) > norm(bones[b].seg.b - bones[b].seg.a);
  });
  for (std::size_t k = 0; used < ring_budget && !midline.empty(); ++k, ++used) {
    ++rings[midline[k % midline.size()]];
  }

  std::vector<Vec3> verts;
  verts.reserve(vertices);
  std::vector<std::array<std::size_t, 3>> faces;
  std::vector<std::size_t> ring_start(bones.size(), 0);
  for (std::size_t i = 0; i < bones.size(); ++i) {
    ring_start[i] = verts.size();
    const std::size_t n = rings[i];
    if (n == 0) continue;
    const Segment& s = bones[i].seg;
    if (bones[i].mirror_of != npos) {
      // Exact mirror image of the left twin's vertices.
      const std::size_t src = ring_start[bones[i].mirror_of];
      for (std::size_t k = 0; k < n * kRingSize; ++k) {
        const Vec3 p = verts[src + k];
        verts.push_back({-p.x, p.y, p.z});
      }
    } else {
      const Vec3 axis = s.b - s.a;
      const Vec3 dir = (1.0 / norm(axis)) * axis;
      Vec3 e1;
      Vec3 e2;
      ring_frame(dir, e1, e2);
      for (std::size_t r = 0; r < n; ++r) {
        const double t = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
        const Vec3 c = s.a + t * axis;
        for (std::size_t k = 0; k < kRingSize; ++k) {
          const double a = std::numbers::pi / 2 +
                           2.0 * std::numbers::pi * static_cast<double>(k) / kRingSize;
          verts.push_back(c + s.radius * (std::cos(a) * e1 + std::sin(a) * e2));
        }
      }
    }
    for (std::size_t r = 0; r + 1 < n; ++r) {
      for (std::size_t k = 0; k < kRingSize; ++k) {
        const std::size_t k1 = (k + 1) % kRingSize;
        const std::size_t a = ring_start[i] + r * kRingSize + k;
        const std::size_t b = ring_start[i] + r * kRingSize + k1;
        const std::size_t c = ring_start[i] + (r + 1) * kRingSize + k1;
        const std::size_t d = ring_start[i] + (r + 1) * kRingSize + k;
        faces.push_back({a, b, c});
        faces.push_back({a, c, d});
      }
    }
  }
  // Pad with midline points on the front of the torso axis.
  const std::size_t pad = vertices - verts.size();
  const Vec3 top = kSkeleton[std::min<std::size_t>(nj - 1, 2)].position;
  for (std::size_t i = 0; i < pad; ++i) {
    const double t = (static_cast<double>(i) + 1.0) / (static_cast<double>(pad) + 1.0);
    verts.push_back({0.0, -0.05, t * top.z});
  }

  const std::size_t nv = verts.size();
  std::vector<double> tmpl(nv * 3);
  for (std::size_t n = 0; n < nv; ++n) {
    tmpl[3 * n] = verts[n].x;
    tmpl[3 * n + 1] = verts[n].y;
    tmpl[3 * n + 2] = verts[n].z;
  }

  std::vector<double> skin(nv * nj);
  std::vector<double> dist(nj);
  for (std::size_t n = 0; n < nv; ++n) {
    for (std::size_t j = 0; j < nj; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& seg : owned[j]) best = std::min(best, segment_distance_sq(verts[n], seg));
      dist[j] = best;
    }
    gaussian_row(dist, kSkinSigma, std::span<double>(skin.data() + n * nj, nj));
  }

  std::vector<double> regressor(nj * nv);
  std::vector<double> vdist(nv);
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t n = 0; n < nv; ++n) {
      const Vec3 d = verts[n] - kSkeleton[j].position;
      vdist[n] = dot(d, d);
    }
    gaussian_row(vdist, kRegressorSigma, std::span<double>(regressor.data() + j * nv, nv));
  }

  // Each shape coefficient drives a small random affine displacement field.
  Rng rng(seed);
  std::vector<double> dirs(nv * 3 * kShapeCoeffs);
  for (std::size_t k = 0; k < kShapeCoeffs; ++k) {
    double a[9];
    double b[3];
    for (double& v : a) v = rng.normal(0.0, 0.03);
    for (double& v : b) v = rng.normal(0.0, 0.005);
    for (std::size_t n = 0; n < nv; ++n) {
      const double p[3] = {verts[n].x, verts[n].y, verts[n].z};
      for (std::size_t c = 0; c < 3; ++c) {
        dirs[(n * 3 + c) * kShapeCoeffs + k] =
            a[3 * c] * p[0] + a[3 * c + 1] * p[1] + a[3 * c + 2] * p[2] + b[c];
      }
    }
  }

  BodyModel m;
  m.template_vertices = Tensor({nv, 3}, std::move(tmpl));
  m.faces = std::move(faces);
  m.shape_dirs = Tensor({nv, 3, kShapeCoeffs}, std::move(dirs));
  m.parents.resize(nj);
  m.joint_names.resize(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    m.parents[j] = kSkeleton[j].parent;
    m.joint_names[j] = kSkeleton[j].name;
  }
  m.joint_regressor = Tensor({nj, nv}, std::move(regressor));
  m.skin_weights = Tensor({nv, nj}, std::move(skin));
  m.validate();
  return m;
}

namespace {

// R = I + A K + B K^2 with K = skew(w), plus the derivative coefficients
// C = A'/theta and D = B'/theta.
struct RodriguesCoeffs {
  double a;
  double b;
  double c;
  double d;
};

RodriguesCoeffs rodrigues_coeffs(double theta) {
  RodriguesCoeffs k{};
  const double t2 = theta * theta;
  if (theta < 1e-8) {
    k.a = 1.0 - t2 / 6.0;
    k.b = 0.5 - t2 / 24.0;
  } else {
    const double h = std::sin(0.5 * theta);
    k.a = std::sin(theta) / theta;
    k.b = 2.0 * h * h / t2;
  }
  if (theta < 1e-3) {
    k.c = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
    k.d = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
  } else {
    const double s = std::sin(theta);
    const double co = std::cos(theta);
    k.c = (theta * co - s) / (t2 * theta);
    k.d = (theta * s - 2.0 * (1.0 - co)) / (t2 * t2);
  }
  return k;
}

using M3 = std::array<double, 9>;

M3 skew(const double* w) { return {0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0}; }

M3 mm(const M3& x, const M3& y) {
  M3 r{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) r[i * 3 + j] += x[i * 3 + k] * y[k * 3 + j];
  return r;
}

}  // namespace

Tensor rodrigues(const Tensor& axis_angles) {
  if (axis_angles.rank() != 2 || axis_angles.dim(1) != 3) {
    throw DimensionError("rodrigues expects [K x 3] axis-angles, got " +
                         shape_str(axis_angles.shape()));
  }
  const std::size_t count = axis_angles.dim(0);
  const auto w = axis_angles.values();
  std::vector<double> out(count * 9);
  for (std::size_t i = 0; i < count; ++i) {
    const double* wi = w.data() + 3 * i;
    const double theta = std::sqrt(wi[0] * wi[0] + wi[1] * wi[1] + wi[2] * wi[2]);
    const auto k = rodrigues_coeffs(theta);
    const M3 kk = skew(wi);
    const M3 k2 = mm(kk, kk);
    for (std::size_t e = 0; e < 9; ++e) {
      out[9 * i + e] = (e % 4 == 0 ? 1.0 : 0.0) + k.a * kk[e] + k.b * k2[e];
    }
  }
  return make_op({count, 3, 3}, std::move(out), {axis_angles}, [count](detail::Node& self) {
    const auto& w = self.inputs[0]->value;
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < count; ++i) {
      const double* wi = w.data() + 3 * i;
      const double* gi = self.grad.data() + 9 * i;
      const double theta = std::sqrt(wi[0] * wi[0] + wi[1] * wi[1] + wi[2] * wi[2]);
      const auto k = rodrigues_coeffs(theta);
      const M3 kk = skew(wi);
      const M3 k2 = mm(kk, kk);
      for (std::size_t c = 0; c < 3; ++c) {
        double unit[3] = {0.0, 0.0, 0.0};
        unit[c] = 1.0;
        const M3 ek = skew(unit);
        const M3 ekk = mm(ek, kk);
        const M3 kek = mm(kk, ek);
        double acc = 0.0;
        for (std::size_t e = 0; e < 9; ++e) {
          const double dr = k.c * wi[c] * kk[e] + k.a * ek[e] + k.d * wi[c] * k2[e] +
                            k.b * (ekk[e] + kek[e]);
          acc += gi[e] * dr;
        }
        g[3 * i + c] += acc;
      }
    }
  });
}

MeshResult body_forward(const BodyModel& model, const BodyParams& params) {
  const std::size_t nj = model.parents.size();
  const std::size_t nv = model.num_vertices();
  if (params.theta_s.shape() != Shape{kShapeCoeffs}) {
    throw ContractError("theta_s must be [10], got " + shape_str(params.theta_s.shape()));
  }
  if (params.theta_p.shape() != Shape{nj - 1, 3}) {
    throw ContractError("theta_p must be [" + std::to_string(nj - 1) + " x 3] for this body, got " +
                        shape_str(params.theta_p.shape()));
  }
  if (params.orient.shape() != Shape{3}) {
    throw ContractError("orient must be [3], got " + shape_str(params.orient.shape()));
  }

  const Tensor dirs = reshape(model.shape_dirs, {nv * 3, kShapeCoeffs});
  const Tensor offsets = reshape(matmul(dirs, reshape(params.theta_s, {kShapeCoeffs, 1})), {nv, 3});
  const Tensor v_shaped = add(model.template_vertices, offsets);
  const Tensor rest = matmul(model.joint_regressor, v_shaped);  // [nj x 3]
  const Tensor rots = rodrigues(concat({reshape(params.orient, {1, 3}), params.theta_p}, 0));
  const Tensor eye = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});

  std::vector<Tensor> world(nj);
  std::vector<Tensor> delta(nj);  // posed joint minus rest joint, [3 x 1]
  std::vector<Tensor> rest_j(nj);
  std::vector<Tensor> blend_rows(nj);
  std::vector<Tensor> delta_rows(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    const Tensor local = reshape(slice(rots, 0, j, j + 1), {3, 3});
    rest_j[j] = reshape(slice(rest, 0, j, j + 1), {3, 1});
    if (j == 0) {
      world[j] = local;
      delta[j] = matmul(sub(local, eye), rest_j[j]);
    } else {
      const auto p = static_cast<std::size_t>(model.parents[j]);
      world[j] = matmul(world[p], local);
      delta[j] = add(delta[p], matmul(sub(world[p], eye), sub(rest_j[j], rest_j[p])));
    }
    const Tensor m = sub(world[j], eye);
    const Tensor t = sub(delta[j], matmul(m, rest_j[j]));
    blend_rows[j] = reshape(concat({m, t}, 1), {1, 12});
    delta_rows[j] = reshape(delta[j], {1, 3});
  }
  const Tensor blend = concat(blend_rows, 0);                                   // [nj x 12]
  const Tensor per_vertex = reshape(matmul(model.skin_weights, blend), {nv, 3, 4});
  const Tensor homog = reshape(concat({v_shaped, Tensor::ones({nv, 1})}, 1), {nv, 4, 1});
  const Tensor displacement = reshape(matmul(per_vertex, homog), {nv, 3});
  return {add(v_shaped, displacement), add(rest, concat(delta_rows, 0))};
}

namespace {

struct ProjectionJacobian {
  double u;
  double v;
  double du[3];
  double dv[3];
};

ProjectionJacobian project_one(const double* p, const CameraRig& rig) {
  const double x = p[0];
  const double y = p[1];
  const double z = p[2];
  const double rho = std::sqrt(x * x + y * y);
  ProjectionJacobian j{rig.u0, rig.v0, {0, 0, 0}, {0, 0, 0}};
  double s = 0.0;      // theta / rho
  double g = 0.0;      // (ds/drho) / rho
  double ds_dz = 0.0;
  if (z > 0.0 && rho < 1e-3 * z) {
    const double q2 = (rho / z) * (rho / z);
    s = (1.0 - q2 / 3.0 + q2 * q2 / 5.0 - q2 * q2 * q2 / 7.0) / z;
    g = (-2.0 / 3.0 + 4.0 * q2 / 5.0 - 6.0 * q2 * q2 / 7.0) / (z * z * z);
    ds_dz = -1.0 / (rho * rho + z * z);
  } else if (rho < 1e-12) {
    return j;  // origin or directly behind the camera
  } else {
    const double theta = std::atan2(rho, z);
    const double r2 = rho * rho + z * z;
    s = theta / rho;
    g = (z * rho / r2 - theta) / (rho * rho * rho);
    ds_dz = -1.0 / r2;
  }
  const double f = rig.focal;
  j.u = rig.u0 + f * s * x;
  j.v = rig.v0 + f * s * y;
  j.du[0] = f * (s + x * x * g);
  j.du[1] = f * x * y * g;
  j.du[2] = f * x * ds_dz;
  j.dv[0] = f * x * y * g;
  j.dv[1] = f * (s + y * y * g);
  j.dv[2] = f * y * ds_dz;
  return j;
}

}  // namespace

Tensor project_points(const Tensor& points, const CameraRig& rig) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("project_points expects [N x 3], got " + shape_str(points.shape()));
  }
  const std::size_t n = points.dim(0);
  const auto pv = points.values();
  auto jac = std::make_shared<std::vector<ProjectionJacobian>>(n);
  std::vector<double> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    (*jac)[i] = project_one(pv.data() + 3 * i, rig);
    out[2 * i] = (*jac)[i].u;
    out[2 * i + 1] = (*jac)[i].v;
  }
  return make_op({n, 2}, std::move(out), {points}, [jac, n](detail::Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& j = (*jac)[i];
      const double gu = self.grad[2 * i];
      const double gv = self.grad[2 * i + 1];
      for (std::size_t c = 0; c < 3; ++c) g[3 * i + c] += gu * j.du[c] + gv * j.dv[c];
    }
  });
}

Tensor project_joints(const Tensor& joints3d, const Tensor& cam_t, const CameraRig& rig) {
  const Tensor cam = add(joints3d, cam_t);
  const auto v = cam.values();
  for (std::size_t i = 0; i < cam.dim(0); ++i) {
    const Vec3 p{v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    if (p.x == 0.0 && p.y == 0.0 && p.z == 0.0) {
      throw DegenerateError("joint " + std::to_string(i) + " coincides with the camera center");
    }
    const double theta = off_axis_angle(p);
    if (theta > std::numbers::pi / 2) {
      throw FieldOfViewError("joint " + std::to_string(i) + " lies outside the field of view (" +
                             std::to_string(theta) + " rad off axis)");
    }
  }
  return project_points(cam, rig);
}

Tensor project_joints_masked(const Tensor& joints3d, const Tensor& cam_t, const CameraRig& rig,
                             std::span<const std::uint8_t> mask) {
  if (mask.size() != joints3d.dim(0)) {
    throw ContractError("visibility mask has " + std::to_string(mask.size()) + " entries for " +
                        std::to_string(joints3d.dim(0)) + " joints");
  }
  std::vector<std::size_t> visible;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) visible.push_back(i);
  }
  if (visible.empty()) throw ContractError("project_joints_masked: no visible joints");
  return project_points(gather_rows(add(joints3d, cam_t), visible), rig);
}

void write_obj(std::ostream& os, const Tensor& vertices,
               std::span<const std::array<std::size_t, 3>> faces) {
  const auto v = vertices.values();
  char line[128];
  for (std::size_t i = 0; i < vertices.dim(0); ++i) {
    std::snprintf(line, sizeof line, "v %.17g %.17g %.17g\n", v[3 * i], v[3 * i + 1],
                  v[3 * i + 2]);
    os << line;
  }
  for (const auto& f : faces) {
    std::snprintf(line, sizeof line, "f %zu %zu %zu\n", f[0] + 1, f[1] + 1, f[2] + 1);
    os << line;
  }
}

}  // namespace egomesh
