#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "egomesh/geometry.hpp"
#include "egomesh/heads.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

/// Largest supported non-root joint count of the toy skeleton.
inline constexpr std::size_t kMaxToyJoints = 16;

/// Procedural parametric body. Joint 0 is the root; `parents[0] == -1` and
/// every other parent index precedes its child.
struct BodyModel {
  Tensor template_vertices;  // [Nv x 3], meters
  std::vector<std::array<std::size_t, 3>> faces;
  Tensor shape_dirs;       // [Nv x 3 x 10]
  std::vector<int> parents;  // [J + 1]
  Tensor joint_regressor;  // [(J + 1) x Nv], rows convex
  Tensor skin_weights;     // [Nv x (J + 1)], rows convex
  std::vector<std::string> joint_names;

  std::size_t num_joints() const { return parents.size() - 1; }  // excludes the root
  std::size_t num_vertices() const { return template_vertices.dim(0); }
  /// Throws ContractError when any structural invariant is violated.
  void validate() const;
};

struct MeshResult {
  Tensor vertices;  // [Nv x 3]
  Tensor joints3d;  // [(J + 1) x 3]
};

/// Capsule-limb humanoid with `joints` non-root joints (a prefix of the
/// 16-joint skeleton) and exactly `vertices` vertices. The frame has x
/// lateral, -y forward and +z toward the feet, with the pelvis at the origin.
/// Throws ConfigError for joints outside [1, 16] or vertices < joints + 1.
BodyModel build_toy_body(std::uint64_t seed, std::size_t joints = 16,
                         std::size_t vertices = 400);

/// Rotation matrices [K x 3 x 3] of axis-angle rows [K x 3].
Tensor rodrigues(const Tensor& axis_angles);

/// Shape blend, joint regression, forward kinematics and linear blend
/// skinning. The root rotation `orient` acts about the frame origin.
MeshResult body_forward(const BodyModel& model, const BodyParams& params);

/// Equidistant projection of camera-frame points [N x 3] to pixels [N x 2].
/// Defined for every direction except the optical axis behind the camera,
/// which maps to the principal point with zero gradient.
Tensor project_points(const Tensor& points, const CameraRig& rig);

/// joints2d[i] = fisheye_project(joints3d[i] + cam_t). Throws
/// FieldOfViewError (or DegenerateError) naming the first offending joint.
Tensor project_joints(const Tensor& joints3d, const Tensor& cam_t, const CameraRig& rig);

/// Projection of the joints whose mask entry is nonzero, in index order.
/// Never throws for out-of-view predictions.
Tensor project_joints_masked(const Tensor& joints3d, const Tensor& cam_t, const CameraRig& rig,
                             std::span<const std::uint8_t> mask);

/// ASCII OBJ: "v x y z" lines, then 1-based "f i j k" lines.
void write_obj(std::ostream& os, const Tensor& vertices,
               std::span<const std::array<std::size_t, 3>> faces);

}  // namespace egomesh
