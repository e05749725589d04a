#pragma once

#include <span>
#include <vector>

#include "egomesh/linalg3.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

/// Similarity transform x -> s R x + t.
struct Alignment {
  double scale = 1.0;
  Mat3 rotation = Mat3::identity();
  Vec3 translation{};

  Vec3 apply(Vec3 p) const { return scale * (rotation * p) + translation; }
  std::vector<Vec3> apply(std::span<const Vec3> points) const;
};

/// Rows of an [N x 3] tensor as points.
std::vector<Vec3> to_points(const Tensor& rows);

/// Mean Euclidean distance in millimeters between point sets given in meters.
double mean_point_error(std::span<const Vec3> pred, std::span<const Vec3> gt);

/// Least-squares similarity mapping pred onto gt, with a reflection guard.
/// Throws ContractError for N < 3 or mismatched sizes and DegenerateError
/// when either set has zero spread.
Alignment umeyama_align(std::span<const Vec3> pred, std::span<const Vec3> gt);

/// mean_point_error after aligning pred onto gt.
double pa_error(std::span<const Vec3> pred, std::span<const Vec3> gt);

}  // namespace egomesh
