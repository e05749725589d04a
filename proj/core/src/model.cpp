#include "egomesh/model.hpp"

#include "egomesh/error.hpp"

namespace egomesh {

Model::Weights Model::init_weights(const RunConfig& c, const CameraRig& rig) {
  // One stream for all weights: EPE tables first, then backbone, then heads.
  Rng rng(c.seed);
  const std::size_t dim = c.epe.site == EpeSite::kTokens ? c.backbone.channels : 3;
  PositionTable epe(c.epe.bins, dim, rig.projection.radius, c.epe.enabled ? c.epe.init_std : 0.0,
                    rng);
  BackboneWeights backbone = BackboneWeights::init(c.backbone, rng);
  HeadWeights heads =
      HeadWeights::init(c.backbone.output_channels(), c.joints, c.head_hidden, rng);
  return {std::move(epe), std::move(backbone), std::move(heads)};
}

Model::Model(const RunConfig& config)
    : config_((config.validate(), config)),
      rig_(CameraRig::inscribed(config.backbone.height, config.backbone.width)),
      body_(build_toy_body(config.body_seed, config.joints, config.vertices)),
      weights_(init_weights(config_, rig_)) {
  std::vector<PixelCoord> centers;
  const BackboneConfig& b = config_.backbone;
  if (config_.epe.site == EpeSite::kTokens) {
    const double half = static_cast<double>(b.patch) / 2.0;
    for (std::size_t ty = 0; ty < b.height / b.patch; ++ty)
      for (std::size_t tx = 0; tx < b.width / b.patch; ++tx)
        centers.push_back({static_cast<double>(tx * b.patch) + half,
                           static_cast<double>(ty * b.patch) + half});
  } else {
    for (std::size_t r = 0; r < b.height; ++r)
      for (std::size_t c = 0; c < b.width; ++c)
        centers.push_back({static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5});
  }
  bins_ = weights_.epe.bin_pixels(centers, rig_);

  for (auto& t : trainable()) t.tensor.set_requires_grad(true);
}

FeatureMap Model::features(const Tensor& image) const {
  const BackboneConfig& b = config_.backbone;
  if (image.shape() != Shape{b.height, b.width, 3}) {
    throw InputError("model expects a " + shape_str({b.height, b.width, 3}) + " image, got " +
                     shape_str(image.shape()));
  }
  Tensor x = image;
  if (config_.epe.site == EpeSite::kPixels) {
    x = reshape(embed_tokens(reshape(image, {b.height * b.width, 3}), bins_, weights_.epe),
                {b.height, b.width, 3});
  }
  FeatureMap f = patch_embed(x, weights_.backbone.embed, b.patch);
  if (config_.epe.site == EpeSite::kTokens) f.tokens = embed_tokens(f.tokens, bins_, weights_.epe);
  for (std::size_t s = 0; s < b.stages(); ++s) {
    if (s > 0) f = patch_merge(f, weights_.backbone.merges[s - 1]);
    f = swin_stage(f, weights_.backbone.stages[s], b.window);
  }
  f.tokens = weights_.backbone.final_norm(f.tokens);
  return f;
}

ModelOutput Model::forward(const Tensor& image) const {
  ModelOutput out;
  out.params = regress_params(features(image), weights_.heads);
  out.mesh = body_forward(body_, out.params);
  out.joints2d = project_points(add(out.mesh.joints3d, out.params.cam_t), rig_);
  return out;
}

std::vector<NamedTensor> Model::named_tensors() const {
  std::vector<NamedTensor> out;
  weights_.epe.collect("epe", out);
  weights_.backbone.collect("backbone", out);
  weights_.heads.collect("heads", out);
  return out;
}

std::vector<NamedTensor> Model::trainable() const {
  std::vector<NamedTensor> out;
  if (config_.epe.enabled) weights_.epe.collect("epe", out);
  weights_.backbone.collect("backbone", out);
  weights_.heads.collect("heads", out);
  return out;
}

}  // namespace egomesh
