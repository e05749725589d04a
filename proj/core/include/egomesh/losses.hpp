#pragma once

#include <cstdint>
#include <span>

#include "egomesh/heads.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

struct LossWeights {
  double a = 1.0;  // parameter terms (shape, pose, orientation)
  double b = 1.0;  // 3D joints
  double c = 0.1;  // 2D joints

  /// Throws ConfigError for negative or non-finite weights, or all zero.
  void validate() const;
};

/// Scalar ([1]) tape tensors.
struct LossBreakdown {
  Tensor smpl;
  Tensor orient;
  Tensor j3d;
  Tensor j2d;
  Tensor total;
};

/// What the model predicts for one sample, or the matching ground truth.
/// `joints2d` is [(J+1) x 2]; rows with a zero mask entry are ignored.
struct PoseEstimate {
  BodyParams params;
  Tensor joints3d;
  Tensor joints2d;
};

/// smpl = mean sq. error over shape + mean sq. error over pose; orient, j3d
/// and j2d are mean absolute errors. j2d averages over visible rows only and
/// is 0 when nothing is visible. `total` is left undefined.
LossBreakdown component_losses(const PoseEstimate& pred, const PoseEstimate& gt,
                               std::span<const std::uint8_t> mask);

/// a * (smpl + orient) + b * j3d + c * j2d.
Tensor total_loss(const LossBreakdown& parts, const LossWeights& weights);

}  // namespace egomesh
