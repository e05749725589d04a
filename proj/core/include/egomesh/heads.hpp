#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "egomesh/backbone.hpp"
#include "egomesh/nn.hpp"
#include "egomesh/rng.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

inline constexpr std::size_t kShapeCoeffs = 10;

/// Body parameters as tape tensors: theta_s [10], theta_p [J x 3] (axis-angle
/// per non-root joint), orient [3] (root axis-angle), cam_t [3] in meters.
struct BodyParams {
  Tensor theta_s;
  Tensor theta_p;
  Tensor orient;
  Tensor cam_t;

  static BodyParams zeros(std::size_t joints);
  /// Splits a flat vector laid out (theta_s, theta_p, orient, cam_t).
  static BodyParams from_flat(std::span<const double> flat, std::size_t joints);

  std::size_t joints() const { return theta_p.dim(0); }
  static std::size_t flat_size(std::size_t joints) { return kShapeCoeffs + 3 * joints + 6; }
  std::vector<double> flat() const;
  /// Throws ContractError on non-finite entries or malformed shapes.
  void validate() const;
};

struct HeadWeights {
  Mlp smpl;    // width -> hidden -> 10 + 3J
  Mlp cam;     // width -> hidden -> 3
  Mlp orient;  // width -> hidden -> 3
  std::size_t joints = 0;

  static HeadWeights init(std::size_t width, std::size_t joints, std::size_t hidden, Rng& rng);
  std::size_t in_features() const { return smpl.fc1.in_features(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Global average pool over the grid followed by the three heads.
BodyParams regress_params(const FeatureMap& features, const HeadWeights& weights);

}  // namespace egomesh
