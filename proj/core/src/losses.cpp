#include "egomesh/losses.hpp"

#include <cmath>
#include <vector>

#include "egomesh/error.hpp"

namespace egomesh {

void LossWeights::validate() const {
  for (double w : {a, b, c}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ConfigError("loss weights must be finite and nonnegative");
    }
  }
  if (a == 0.0 && b == 0.0 && c == 0.0) throw ConfigError("loss weights are all zero");
}

namespace {

void require_same(const Tensor& p, const Tensor& g, const char* what) {
  if (p.shape() != g.shape()) {
    throw ContractError(std::string(what) + ": prediction " + shape_str(p.shape()) +
                        " vs ground truth " + shape_str(g.shape()));
  }
}

Tensor mean_squared(const Tensor& p, const Tensor& g) {
  const Tensor d = sub(p, g);
  return mean(mul(d, d));
}

Tensor mean_abs(const Tensor& p, const Tensor& g) { return mean(abs(sub(p, g))); }

}  // namespace

LossBreakdown component_losses(const PoseEstimate& pred, const PoseEstimate& gt,
                               std::span<const std::uint8_t> mask) {
  require_same(pred.params.theta_s, gt.params.theta_s, "theta_s");
  require_same(pred.params.theta_p, gt.params.theta_p, "theta_p");
  require_same(pred.params.orient, gt.params.orient, "orient");
  require_same(pred.joints3d, gt.joints3d, "joints3d");
  require_same(pred.joints2d, gt.joints2d, "joints2d");
  if (mask.size() != gt.joints2d.dim(0)) {
    throw ContractError("visibility mask has " + std::to_string(mask.size()) + " entries for " +
                        std::to_string(gt.joints2d.dim(0)) + " joints");
  }
  LossBreakdown out;
  out.smpl = add(mean_squared(pred.params.theta_s, gt.params.theta_s),
                 mean_squared(pred.params.theta_p, gt.params.theta_p));
  out.orient = mean_abs(pred.params.orient, gt.params.orient);
  out.j3d = mean_abs(pred.joints3d, gt.joints3d);
  std::vector<std::size_t> visible;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) visible.push_back(i);
  }
  if (visible.empty()) {
    out.j2d = Tensor::scalar(0.0);
  } else {
    out.j2d = mean_abs(gather_rows(pred.joints2d, visible), gather_rows(gt.joints2d, visible));
  }
  return out;
}

Tensor total_loss(const LossBreakdown& p, const LossWeights& w) {
  return add(add(scale(add(p.smpl, p.orient), w.a), scale(p.j3d, w.b)), scale(p.j2d, w.c));
}

}  // namespace egomesh
