#include "egomesh/heads.hpp"

#include <cmath>

#include "egomesh/error.hpp"

namespace egomesh {

BodyParams BodyParams::zeros(std::size_t joints) {
  return {Tensor::zeros({kShapeCoeffs}), Tensor::zeros({joints, 3}), Tensor::zeros({3}),
          Tensor::zeros({3})};
}

BodyParams BodyParams::from_flat(std::span<const double> flat, std::size_t joints) {
  if (flat.size() != flat_size(joints)) {
    throw ContractError("flat body parameters have " + std::to_string(flat.size()) +
                        " values, expected " + std::to_string(flat_size(joints)));
  }
  auto piece = [&](std::size_t begin, std::size_t count) {
    return std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(begin),
                               flat.begin() + static_cast<std::ptrdiff_t>(begin + count));
  };
  const std::size_t p = kShapeCoeffs;
  const std::size_t o = p + 3 * joints;
  return {Tensor({kShapeCoeffs}, piece(0, kShapeCoeffs)), Tensor({joints, 3}, piece(p, 3 * joints)),
          Tensor({3}, piece(o, 3)), Tensor({3}, piece(o + 3, 3))};
}

std::vector<double> BodyParams::flat() const {
  std::vector<double> out;
  out.reserve(flat_size(joints()));
  for (const Tensor* t : {&theta_s, &theta_p, &orient, &cam_t}) {
    const auto v = t->values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void BodyParams::validate() const {
  if (theta_s.shape() != Shape{kShapeCoeffs}) {
    throw ContractError("theta_s must be [10], got " + shape_str(theta_s.shape()));
  }
  if (theta_p.rank() != 2 || theta_p.dim(1) != 3) {
    throw ContractError("theta_p must be [J x 3], got " + shape_str(theta_p.shape()));
  }
  if (orient.shape() != Shape{3} || cam_t.shape() != Shape{3}) {
    throw ContractError("orient and cam_t must be [3]");
  }
  for (double v : flat()) {
    if (!std::isfinite(v)) throw ContractError("body parameters contain a non-finite value");
  }
}

HeadWeights HeadWeights::init(std::size_t width, std::size_t joints, std::size_t hidden,
                              Rng& rng) {
  HeadWeights h;
  h.smpl = Mlp::init(width, hidden, kShapeCoeffs + 3 * joints, rng);
  h.cam = Mlp::init(width, hidden, 3, rng);
  h.orient = Mlp::init(width, hidden, 3, rng);
  h.joints = joints;
  return h;
}

void HeadWeights::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  smpl.collect(prefix + ".smpl", out);
  cam.collect(prefix + ".cam", out);
  orient.collect(prefix + ".orient", out);
}

BodyParams regress_params(const FeatureMap& f, const HeadWeights& w) {
  const std::size_t c = f.channels();
  if (c != w.in_features()) {
    throw DimensionError("heads were built for width " + std::to_string(w.in_features()) +
                         ", feature map has width " + std::to_string(c));
  }
  const Tensor pooled = reshape(mean_rows(f.tokens), {1, c});
  const Tensor smpl = w.smpl(pooled);
  const std::size_t j = w.joints;
  BodyParams p;
  p.theta_s = reshape(slice(smpl, 1, 0, kShapeCoeffs), {kShapeCoeffs});
  p.theta_p = reshape(slice(smpl, 1, kShapeCoeffs, kShapeCoeffs + 3 * j), {j, 3});
  p.orient = reshape(w.orient(pooled), {3});
  p.cam_t = reshape(w.cam(pooled), {3});
  return p;
}

}  // namespace egomesh
