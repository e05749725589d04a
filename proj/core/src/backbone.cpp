#include "egomesh/backbone.hpp"

#include <cmath>

#include "egomesh/error.hpp"

namespace egomesh {

void BackboneConfig::validate() const {
  if (patch == 0 || channels == 0 || window == 0) {
    throw ConfigError("backbone patch, channels and window must be positive");
  }
  if (depths.empty()) throw ConfigError("backbone needs at least one stage");
  if (heads.size() != depths.size()) {
    throw ConfigError("backbone heads list has " + std::to_string(heads.size()) +
                      " entries for " + std::to_string(depths.size()) + " stages");
  }
  if (height % patch != 0 || width % patch != 0) {
    throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by patch " + std::to_string(patch));
  }
  const std::size_t unit = window << (stages() - 1);
  if ((height / patch) % unit != 0 || (width / patch) % unit != 0) {
    throw ConfigError("token grid " + std::to_string(height / patch) + "x" +
                      std::to_string(width / patch) + " not divisible by window * 2^(stages-1) = " +
                      std::to_string(unit));
  }
  for (std::size_t s = 0; s < stages(); ++s) {
    if (depths[s] == 0 || depths[s] % 2 != 0) {
      throw ConfigError("stage " + std::to_string(s) + " depth " + std::to_string(depths[s]) +
                        " must be a positive even number");
    }
    if (heads[s] == 0 || stage_channels(s) % heads[s] != 0) {
      throw ConfigError("stage " + std::to_string(s) + " width " +
                        std::to_string(stage_channels(s)) + " not divisible by " +
                        std::to_string(heads[s]) + " heads");
    }
  }
}

PatchEmbedWeights PatchEmbedWeights::init(std::size_t patch, std::size_t channels, Rng& rng) {
  return {Linear::init(patch * patch * 3, channels, true, rng), LayerNormParams::init(channels)};
}

void PatchEmbedWeights::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  proj.collect(prefix + ".proj", out);
  norm.collect(prefix + ".norm", out);
}

PatchMergeWeights PatchMergeWeights::init(std::size_t channels, Rng& rng) {
  return {LayerNormParams::init(4 * channels), Linear::init(4 * channels, 2 * channels, false, rng)};
}

void PatchMergeWeights::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  norm.collect(prefix + ".norm", out);
  reduction.collect(prefix + ".reduction", out);
}

WindowAttentionWeights WindowAttentionWeights::init(std::size_t channels, std::size_t heads,
                                                    Rng& rng) {
  WindowAttentionWeights w;
  w.qkv = Linear::init(channels, 3 * channels, true, rng);
  w.proj = Linear::init(channels, channels, true, rng);
  w.heads = heads;
  return w;
}

void WindowAttentionWeights::collect(const std::string& prefix,
                                     std::vector<NamedTensor>& out) const {
  qkv.collect(prefix + ".qkv", out);
  proj.collect(prefix + ".proj", out);
}

SwinBlockWeights SwinBlockWeights::init(std::size_t channels, std::size_t heads, Rng& rng) {
  SwinBlockWeights b;
  b.norm1 = LayerNormParams::init(channels);
  b.attn = WindowAttentionWeights::init(channels, heads, rng);
  b.norm2 = LayerNormParams::init(channels);
  b.mlp = Mlp::init(channels, 4 * channels, channels, rng);
  return b;
}

void SwinBlockWeights::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  norm1.collect(prefix + ".norm1", out);
  attn.collect(prefix + ".attn", out);
  norm2.collect(prefix + ".norm2", out);
  mlp.collect(prefix + ".mlp", out);
}

void SwinStageWeights::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect(prefix + ".block" + std::to_string(i), out);
  }
}

BackboneWeights BackboneWeights::init(const BackboneConfig& config, Rng& rng) {
  config.validate();
  BackboneWeights w;
  w.embed = PatchEmbedWeights::init(config.patch, config.channels, rng);
  for (std::size_t s = 0; s < config.stages(); ++s) {
    const std::size_t c = config.stage_channels(s);
    if (s > 0) w.merges.push_back(PatchMergeWeights::init(c / 2, rng));
    SwinStageWeights stage;
    for (std::size_t b = 0; b < config.depths[s]; ++b) {
      stage.blocks.push_back(SwinBlockWeights::init(c, config.heads[s], rng));
    }
    w.stages.push_back(std::move(stage));
  }
  w.final_norm = LayerNormParams::init(config.output_channels());
  return w;
}

void BackboneWeights::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  embed.collect(prefix + ".embed", out);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (s > 0) merges[s - 1].collect(prefix + ".merge" + std::to_string(s), out);
    stages[s].collect(prefix + ".stage" + std::to_string(s), out);
  }
  final_norm.collect(prefix + ".final_norm", out);
}

FeatureMap patch_embed(const Tensor& image, const PatchEmbedWeights& weights, std::size_t patch) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("patch_embed expects an [H x W x 3] image, got " +
                         shape_str(image.shape()));
  }
  const std::size_t height = image.dim(0);
  const std::size_t width = image.dim(1);
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                      " not divisible by patch " + std::to_string(patch));
  }
  if (weights.proj.in_features() != patch * patch * 3) {
    throw DimensionError("patch_embed weights expect " +
                         std::to_string(weights.proj.in_features()) + " inputs per patch, got " +
                         std::to_string(patch * patch * 3));
  }
  const std::size_t gh = height / patch;
  const std::size_t gw = width / patch;
  std::vector<std::size_t> order;
  order.reserve(height * width);
  std::vector<PixelCoord> centers;
  centers.reserve(gh * gw);
  const double half = static_cast<double>(patch) / 2.0;
  for (std::size_t ty = 0; ty < gh; ++ty) {
    for (std::size_t tx = 0; tx < gw; ++tx) {
      for (std::size_t py = 0; py < patch; ++py)
        for (std::size_t px = 0; px < patch; ++px)
          order.push_back((ty * patch + py) * width + tx * patch + px);
      centers.push_back({static_cast<double>(tx * patch) + half,
                         static_cast<double>(ty * patch) + half});
    }
  }
  const Tensor pixels = reshape(image, {height * width, 3});
  const Tensor patches = reshape(gather_rows(pixels, order), {gh * gw, patch * patch * 3});
  return {weights.norm(weights.proj(patches)), gh, gw, std::move(centers)};
}

FeatureMap patch_merge(const FeatureMap& f, const PatchMergeWeights& weights) {
  if (f.height % 2 != 0 || f.width % 2 != 0) {
    throw ConfigError("patch_merge needs even grid dimensions, got " + std::to_string(f.height) +
                      "x" + std::to_string(f.width));
  }
  const std::size_t c = f.channels();
  if (weights.reduction.in_features() != 4 * c) {
    throw DimensionError("patch_merge weights expect " +
                         std::to_string(weights.reduction.in_features()) + " inputs, got 4 x " +
                         std::to_string(c));
  }
  const std::size_t oh = f.height / 2;
  const std::size_t ow = f.width / 2;
  std::vector<std::size_t> order;
  order.reserve(f.height * f.width);
  std::vector<PixelCoord> centers;
  centers.reserve(oh * ow);
  static constexpr std::size_t kDy[4] = {0, 1, 0, 1};
  static constexpr std::size_t kDx[4] = {0, 0, 1, 1};
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      PixelCoord center{0.0, 0.0};
      for (std::size_t q = 0; q < 4; ++q) {
        const std::size_t src = (2 * oy + kDy[q]) * f.width + 2 * ox + kDx[q];
        order.push_back(src);
        center.u += 0.25 * f.centers[src].u;
        center.v += 0.25 * f.centers[src].v;
      }
      centers.push_back(center);
    }
  }
  const Tensor grouped = reshape(gather_rows(f.tokens, order), {oh * ow, 4 * c});
  return {weights.reduction(weights.norm(grouped)), oh, ow, std::move(centers)};
}

std::vector<std::size_t> window_order(std::size_t height, std::size_t width, std::size_t window,
                                      std::size_t shift) {
  std::vector<std::size_t> order;
  order.reserve(height * width);
  for (std::size_t wy = 0; wy < height / window; ++wy)
    for (std::size_t wx = 0; wx < width / window; ++wx)
      for (std::size_t ty = 0; ty < window; ++ty)
        for (std::size_t tx = 0; tx < window; ++tx) {
          const std::size_t y = (wy * window + ty + shift) % height;
          const std::size_t x = (wx * window + tx + shift) % width;
          order.push_back(y * width + x);
        }
  return order;
}

Tensor shifted_window_mask(std::size_t height, std::size_t width, std::size_t window,
                           std::size_t shift) {
  auto region = [&](std::size_t idx, std::size_t extent) -> std::size_t {
    if (idx < extent - window) return 0;
    if (idx < extent - shift) return 1;
    return 2;
  };
  const std::size_t nwy = height / window;
  const std::size_t nwx = width / window;
  const std::size_t t = window * window;
  std::vector<double> mask(nwy * nwx * t * t, 0.0);
  std::vector<std::size_t> label(t);
  for (std::size_t wy = 0; wy < nwy; ++wy) {
    for (std::size_t wx = 0; wx < nwx; ++wx) {
      for (std::size_t ty = 0; ty < window; ++ty)
        for (std::size_t tx = 0; tx < window; ++tx)
          label[ty * window + tx] =
              3 * region(wy * window + ty, height) + region(wx * window + tx, width);
      double* m = mask.data() + (wy * nwx + wx) * t * t;
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j) m[i * t + j] = label[i] == label[j] ? 0.0 : -1e9;
    }
  }
  return Tensor({nwy * nwx, t, t}, std::move(mask));
}

FeatureMap window_attention(const FeatureMap& f, const WindowAttentionWeights& weights,
                            std::size_t window, std::size_t shift, Tensor* attention) {
  const std::size_t h = f.height;
  const std::size_t w = f.width;
  const std::size_t c = f.channels();
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ConfigError("grid " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by window " + std::to_string(window));
  }
  if (shift >= window && shift != 0) {
    throw ConfigError("window shift " + std::to_string(shift) + " must be smaller than window " +
                      std::to_string(window));
  }
  const std::size_t heads = weights.heads;
  if (heads == 0 || c % heads != 0) {
    throw ConfigError("width " + std::to_string(c) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (weights.qkv.in_features() != c) {
    throw DimensionError("attention weights expect width " +
                         std::to_string(weights.qkv.in_features()) + ", got " +
                         std::to_string(c));
  }
  const std::size_t dh = c / heads;
  const std::size_t t = window * window;
  const std::size_t nw = (h / window) * (w / window);
  const std::size_t n = h * w;

  const auto order = window_order(h, w, window, shift);
  std::vector<std::size_t> inverse(n);
  for (std::size_t i = 0; i < n; ++i) inverse[order[i]] = i;

  const Tensor x = gather_rows(f.tokens, order);
  Tensor qkv = reshape(weights.qkv(x), {nw, t, 3, heads, dh});
  qkv = permute(qkv, {2, 3, 0, 1, 4});  // [3, heads, windows, t, dh]
  const Tensor q = reshape(slice(qkv, 0, 0, 1), {heads * nw, t, dh});
  const Tensor k = reshape(slice(qkv, 0, 1, 2), {heads * nw, t, dh});
  const Tensor v = reshape(slice(qkv, 0, 2, 3), {heads * nw, t, dh});

  Tensor scores = reshape(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh))),
                          {heads, nw, t, t});
  if (shift > 0) scores = add(scores, shifted_window_mask(h, w, window, shift));
  const Tensor probs = softmax_rows(scores);
  if (attention != nullptr) *attention = probs;

  Tensor out = matmul(reshape(probs, {heads * nw, t, t}), v);
  out = permute(reshape(out, {heads, nw, t, dh}), {1, 2, 0, 3});  // [windows, t, heads, dh]
  out = weights.proj(reshape(out, {n, c}));
  return {gather_rows(out, inverse), h, w, f.centers};
}

FeatureMap swin_block(const FeatureMap& f, const SwinBlockWeights& weights, std::size_t window,
                      std::size_t shift) {
  FeatureMap normed{weights.norm1(f.tokens), f.height, f.width, f.centers};
  const FeatureMap attended = window_attention(normed, weights.attn, window, shift);
  const Tensor x = add(f.tokens, attended.tokens);
  const Tensor y = add(x, weights.mlp(weights.norm2(x)));
  return {y, f.height, f.width, f.centers};
}

FeatureMap swin_stage(const FeatureMap& f, const SwinStageWeights& weights, std::size_t window) {
  if (weights.blocks.empty() || weights.blocks.size() % 2 != 0) {
    throw ConfigError("swin stage depth " + std::to_string(weights.blocks.size()) +
                      " must be a positive even number");
  }
  FeatureMap x = f;
  for (std::size_t b = 0; b < weights.blocks.size(); ++b) {
    x = swin_block(x, weights.blocks[b], window, b % 2 == 1 ? window / 2 : 0);
  }
  return x;
}

}  // namespace egomesh
