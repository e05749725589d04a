#pragma once

#include <vector>

#include "egomesh/backbone.hpp"
#include "egomesh/body.hpp"
#include "egomesh/config.hpp"
#include "egomesh/epe.hpp"
#include "egomesh/heads.hpp"
#include "egomesh/nn.hpp"

namespace egomesh {

struct ModelOutput {
  BodyParams params;
  MeshResult mesh;
  Tensor joints2d;  // [(J+1) x 2], every joint projected
};

/// Position embedding, backbone, heads, body model and camera rig of one
/// configuration. Weights are drawn from `config.seed` in a fixed order.
class Model {
 public:
  explicit Model(const RunConfig& config);

  const RunConfig& config() const { return config_; }
  const CameraRig& rig() const { return rig_; }
  const BodyModel& body() const { return body_; }
  const PositionTable& epe() const { return weights_.epe; }

  /// Throws InputError unless the image is [H x W x 3] for this config.
  ModelOutput forward(const Tensor& image) const;
  /// Backbone output after the final LayerNorm.
  FeatureMap features(const Tensor& image) const;

  /// Every weight tensor with a stable name, including frozen ones.
  std::vector<NamedTensor> named_tensors() const;
  /// Tensors updated by the optimizer (EPE tables only when enabled).
  std::vector<NamedTensor> trainable() const;

 private:
  RunConfig config_;
  CameraRig rig_;
  BodyModel body_;
  struct Weights {
    PositionTable epe;
    BackboneWeights backbone;
    HeadWeights heads;
  };
  static Weights init_weights(const RunConfig& config, const CameraRig& rig);

  Weights weights_;
  std::vector<BinIndex> bins_;  // per token or per pixel, by epe.site
};

}  // namespace egomesh
