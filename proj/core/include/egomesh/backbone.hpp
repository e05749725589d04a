#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "egomesh/geometry.hpp"
#include "egomesh/nn.hpp"
#include "egomesh/rng.hpp"
#include "egomesh/tensor.hpp"

namespace egomesh {

struct BackboneConfig {
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t patch = 4;
  std::size_t channels = 32;
  std::vector<std::size_t> depths{2, 2, 2, 2};
  std::vector<std::size_t> heads{2, 4, 8, 8};
  std::size_t window = 4;

  /// Throws ConfigError on divisibility or size violations.
  void validate() const;

  std::size_t stages() const { return depths.size(); }
  std::size_t stage_channels(std::size_t stage) const { return channels << stage; }
  std::size_t grid_height(std::size_t stage) const { return (height / patch) >> stage; }
  std::size_t grid_width(std::size_t stage) const { return (width / patch) >> stage; }
  std::size_t output_channels() const { return stage_channels(stages() - 1); }
};

/// Token grid. `tokens` is [height * width x channels] in row-major grid
/// order; `centers[t]` is the source pixel center of token t.
struct FeatureMap {
  Tensor tokens;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<PixelCoord> centers;

  std::size_t channels() const { return tokens.dim(1); }
};

struct PatchEmbedWeights {
  Linear proj;           // [patch * patch * 3 x C]
  LayerNormParams norm;  // over C, applied to the projected patches
  static PatchEmbedWeights init(std::size_t patch, std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct PatchMergeWeights {
  LayerNormParams norm;  // over the concatenated 4c
  Linear reduction;      // [4c x 2c], no bias
  static PatchMergeWeights init(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Multi-head window attention. There is deliberately no relative position
/// bias table: scores are exactly Q K^T / sqrt(d) (plus the shift mask).
struct WindowAttentionWeights {
  Linear qkv;   // [c x 3c]
  Linear proj;  // [c x c]
  std::size_t heads = 1;
  static WindowAttentionWeights init(std::size_t channels, std::size_t heads, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct SwinBlockWeights {
  LayerNormParams norm1;
  WindowAttentionWeights attn;
  LayerNormParams norm2;
  Mlp mlp;  // c -> 4c -> c
  static SwinBlockWeights init(std::size_t channels, std::size_t heads, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct SwinStageWeights {
  std::vector<SwinBlockWeights> blocks;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct BackboneWeights {
  PatchEmbedWeights embed;
  std::vector<PatchMergeWeights> merges;  // one before every stage but the first
  std::vector<SwinStageWeights> stages;
  LayerNormParams final_norm;

  static BackboneWeights init(const BackboneConfig& config, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Non-overlapping patch x patch tiles of an [H x W x 3] image, flattened
/// (row, col, channel), projected to C channels and layer-normalized.
FeatureMap patch_embed(const Tensor& image, const PatchEmbedWeights& weights, std::size_t patch);

/// 2x2 neighborhoods concatenated as (top-left, bottom-left, top-right,
/// bottom-right) into 4c, layer-normalized, then mapped to 2c.
FeatureMap patch_merge(const FeatureMap& features, const PatchMergeWeights& weights);

/// Grid-order row for each window-major position after a cyclic shift of
/// `shift` tokens up and left.
std::vector<std::size_t> window_order(std::size_t height, std::size_t width, std::size_t window,
                                      std::size_t shift);

/// Region-label mask [windows x M^2 x M^2]: 0 where two tokens of a shifted
/// window were contiguous before the shift, -1e9 elsewhere.
Tensor shifted_window_mask(std::size_t height, std::size_t width, std::size_t window,
                           std::size_t shift);

/// W-MSA (shift == 0) or SW-MSA (0 < shift < window). When `attention` is
/// non-null it receives the [heads x windows x M^2 x M^2] softmax weights.
FeatureMap window_attention(const FeatureMap& features, const WindowAttentionWeights& weights,
                            std::size_t window, std::size_t shift, Tensor* attention = nullptr);

/// x + MSA(LN(x)), then x + MLP(LN(x)).
FeatureMap swin_block(const FeatureMap& features, const SwinBlockWeights& weights,
                      std::size_t window, std::size_t shift);

/// Blocks alternate shift 0 and window / 2; the depth must be even.
FeatureMap swin_stage(const FeatureMap& features, const SwinStageWeights& weights,
                      std::size_t window);

}  // namespace egomesh
