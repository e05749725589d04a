#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "egomesh/backbone.hpp"
#include "egomesh/error.hpp"
#include "egomesh/heads.hpp"
#include "helpers.hpp"

namespace egomesh {
namespace {

FeatureMap random_map(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  FeatureMap f{test::random_tensor({h * w, c}, rng), h, w, {}};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) f.centers.push_back({x + 0.5, y + 0.5});
  return f;
}

void fill(Tensor& t, double value) {
  for (auto& v : t.mutable_values()) v = value;
}

TEST(PatchEmbed, ShapesAndCenters) {
  Rng rng(1);
  const auto w = PatchEmbedWeights::init(4, 32, rng);
  const FeatureMap f = patch_embed(Tensor::zeros({128, 128, 3}), w, 4);
  EXPECT_EQ(f.height, 32u);
  EXPECT_EQ(f.width, 32u);
  EXPECT_EQ(f.tokens.shape(), (Shape{1024, 32}));
  ASSERT_EQ(f.centers.size(), 1024u);
  EXPECT_EQ(f.centers[0].u, 2.0);
  EXPECT_EQ(f.centers[33].u, 6.0);
  EXPECT_EQ(f.centers[33].v, 6.0);
}

TEST(PatchEmbed, ZeroImageAndZeroBiasGiveZeroTokens) {
  Rng rng(2);
  const auto w = PatchEmbedWeights::init(4, 8, rng);
  const FeatureMap f = patch_embed(Tensor::zeros({16, 16, 3}), w, 4);
  for (double v : f.tokens.values()) EXPECT_EQ(v, 0.0);
}

TEST(PatchEmbed, IdenticalPatchesShareTokens) {
  Rng rng(3);
  auto w = PatchEmbedWeights::init(2, 6, rng);
  Tensor image = test::random_tensor({8, 8, 3}, rng);
  auto px = image.mutable_values();
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch)
        px[((y + 4) * 8 + x + 6) * 3 + ch] = px[(y * 8 + x) * 3 + ch];
  const FeatureMap f = patch_embed(image, w, 2);
  const std::size_t other = 2 * 4 + 3;
  for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(f.tokens.at(d), f.tokens.at(other * 6 + d));
}

TEST(PatchEmbed, DivisibilityIsConfigError) {
  Rng rng(4);
  const auto w = PatchEmbedWeights::init(4, 8, rng);
  EXPECT_THROW(patch_embed(Tensor::zeros({18, 16, 3}), w, 4), ConfigError);
}

TEST(PatchMerge, HalvesGridAndDoublesWidth) {
  Rng rng(5);
  const FeatureMap f = random_map(8, 8, 32, rng);
  const FeatureMap m = patch_merge(f, PatchMergeWeights::init(32, rng));
  EXPECT_EQ(m.height, 4u);
  EXPECT_EQ(m.width, 4u);
  EXPECT_EQ(m.tokens.shape(), (Shape{16, 64}));
  EXPECT_DOUBLE_EQ(m.centers[0].u, 1.0);
  EXPECT_DOUBLE_EQ(m.centers[0].v, 1.0);
  EXPECT_THROW(patch_merge(random_map(3, 4, 32, rng), PatchMergeWeights::init(32, rng)),
               ConfigError);
}

TEST(PatchMerge, ConstantInputGivesConstantOutput) {
  Rng rng(6);
  FeatureMap f = random_map(4, 4, 2, rng);
  auto v = f.tokens.mutable_values();
  for (std::size_t t = 0; t < 16; ++t) {
    v[2 * t] = 0.3;
    v[2 * t + 1] = -0.7;
  }
  PatchMergeWeights w = PatchMergeWeights::init(2, rng);
  // Block-identity reduction: output channel k reads input channel k of the
  // first two quadrants.
  fill(w.reduction.weight, 0.0);
  for (std::size_t k = 0; k < 4; ++k) w.reduction.weight.mutable_values()[k * 4 + k] = 1.0;
  const FeatureMap m = patch_merge(f, w);
  for (std::size_t t = 1; t < 4; ++t)
    for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(m.tokens.at(t * 4 + d), m.tokens.at(d));
  // LayerNorm of (0.3, -0.7, 0.3, -0.7, ...) is (+1, -1, ...) up to eps.
  EXPECT_NEAR(m.tokens.at(0), 1.0, 1e-4);
  EXPECT_NEAR(m.tokens.at(1), -1.0, 1e-4);
}

TEST(BackboneConfig, DefaultPyramid) {
  const BackboneConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  const std::size_t widths[] = {32, 64, 128, 256};
  const std::size_t grids[] = {32, 16, 8, 4};
  for (std::size_t s = 0; s < 4; ++s) {
    EXPECT_EQ(cfg.stage_channels(s), widths[s]);
    EXPECT_EQ(cfg.grid_height(s), grids[s]);
    EXPECT_EQ(cfg.grid_width(s), grids[s]);
  }
  BackboneConfig bad = cfg;
  bad.height = 120;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.heads = {3, 4, 8, 8};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.depths = {2, 3, 2, 2};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Backbone, FourStagePipelineWidths) {
  const BackboneConfig cfg;
  Rng rng(7);
  const BackboneWeights w = BackboneWeights::init(cfg, rng);
  ASSERT_EQ(w.merges.size(), 3u);
  FeatureMap f = patch_embed(Tensor::zeros({128, 128, 3}), w.embed, cfg.patch);
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) f = patch_merge(f, w.merges[s - 1]);
    f = swin_stage(f, w.stages[s], cfg.window);
    EXPECT_EQ(f.height, cfg.grid_height(s));
    EXPECT_EQ(f.channels(), cfg.stage_channels(s));
  }
  std::vector<NamedTensor> named;
  w.collect("backbone", named);
  for (const auto& n : named) {
    EXPECT_EQ(n.name.find("relative"), std::string::npos) << n.name;
    EXPECT_EQ(n.name.find("bias_table"), std::string::npos) << n.name;
  }
}

TEST(WindowAttention, SingleTokenWindowsAreIndependent) {
  Rng rng(8);
  const FeatureMap f = random_map(4, 4, 4, rng);
  const auto w = WindowAttentionWeights::init(4, 2, rng);
  const FeatureMap out = window_attention(f, w, 1, 0);
  // With one token per window the softmax weight is 1, so out = proj(V(x)).
  const Tensor v = slice(w.qkv(f.tokens), 1, 8, 12);
  EXPECT_LT(test::max_abs_diff(out.tokens, w.proj(v)), 1e-14);
}

TEST(WindowAttention, ZeroQueryAveragesValues) {
  Rng rng(9);
  const FeatureMap f = random_map(4, 4, 4, rng);
  auto w = WindowAttentionWeights::init(4, 2, rng);
  auto wv = w.qkv.weight.mutable_values();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) wv[r * 12 + c] = 0.0;
  for (std::size_t c = 0; c < 4; ++c) w.qkv.bias.mutable_values()[c] = 0.0;
  const FeatureMap out = window_attention(f, w, 2, 0);
  const Tensor v = slice(w.qkv(f.tokens), 1, 8, 12);
  for (std::size_t t = 0; t < 16; ++t) {
    const std::size_t y0 = (t / 4) / 2 * 2, x0 = (t % 4) / 2 * 2;
    std::vector<double> mean(4, 0.0);
    for (std::size_t dy = 0; dy < 2; ++dy)
      for (std::size_t dx = 0; dx < 2; ++dx)
        for (std::size_t d = 0; d < 4; ++d) mean[d] += 0.25 * v.at(((y0 + dy) * 4 + x0 + dx) * 4 + d);
    const Tensor expected = w.proj(Tensor({1, 4}, mean));
    for (std::size_t d = 0; d < 4; ++d) EXPECT_NEAR(out.tokens.at(t * 4 + d), expected.at(d), 1e-14);
  }
}

TEST(WindowAttention, ScalarHeadMatchesBruteForceSoftmax) {
  // Square windows only, so the smallest multi-token case is one 2x2 window.
  Rng rng(10);
  const FeatureMap f = random_map(2, 2, 1, rng);
  const auto w = WindowAttentionWeights::init(1, 1, rng);
  Tensor attn;
  window_attention(f, w, 2, 0, &attn);
  ASSERT_EQ(attn.shape(), (Shape{1, 1, 4, 4}));
  const Tensor qkv = w.qkv(f.tokens);
  for (std::size_t i = 0; i < 4; ++i) {
    const double q = qkv.at(i * 3);
    double denom = 0.0;
    for (std::size_t j = 0; j < 4; ++j) denom += std::exp(q * qkv.at(j * 3 + 1));
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(attn.at(i * 4 + j), std::exp(q * qkv.at(j * 3 + 1)) / denom, 1e-14);
    }
  }
}

TEST(WindowAttention, RowsAreStochastic) {
  Rng rng(11);
  const FeatureMap f = random_map(8, 8, 8, rng);
  auto w = WindowAttentionWeights::init(8, 2, rng);
  for (auto& v : w.qkv.weight.mutable_values()) v *= 40.0;
  for (std::size_t shift : {0u, 2u}) {
    Tensor attn;
    window_attention(f, w, 4, shift, &attn);
    const std::size_t rows = attn.numel() / 16;
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 16; ++j) {
        EXPECT_GE(attn.at(r * 16 + j), 0.0);
        s += attn.at(r * 16 + j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(WindowAttention, UnshiftedOutputIsWindowLocal) {
  Rng rng(12);
  FeatureMap f = random_map(8, 8, 4, rng);
  const auto w = WindowAttentionWeights::init(4, 2, rng);
  const FeatureMap a = window_attention(f, w, 4, 0);
  // Token (7, 7) lives in the bottom-right window.
  f.tokens.mutable_values()[(7 * 8 + 7) * 4] += 3.0;
  const FeatureMap b = window_attention(f, w, 4, 0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const bool same_window = y >= 4 && x >= 4;
      double diff = 0.0;
      for (std::size_t d = 0; d < 4; ++d) {
        diff = std::max(diff, std::abs(a.tokens.at((y * 8 + x) * 4 + d) - b.tokens.at((y * 8 + x) * 4 + d)));
      }
      if (same_window) {
        EXPECT_GT(diff, 0.0);
      } else {
        EXPECT_EQ(diff, 0.0) << y << "," << x;
      }
    }
}

TEST(ShiftedWindowMask, MatchesBruteForceAdjacency) {
  const std::size_t h = 4, w = 4, m = 2, shift = 1;
  const Tensor mask = shifted_window_mask(h, w, m, shift);
  const auto order = window_order(h, w, m, shift);
  const std::size_t t = m * m;
  ASSERT_EQ(mask.shape(), (Shape{4, t, t}));
  std::size_t blocked = 0;
  for (std::size_t win = 0; win < 4; ++win) {
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        const std::size_t a = order[win * t + i], b = order[win * t + j];
        const long dy = std::labs(static_cast<long>(a / w) - static_cast<long>(b / w));
        const long dx = std::labs(static_cast<long>(a % w) - static_cast<long>(b % w));
        const bool neighbors = dy < static_cast<long>(m) && dx < static_cast<long>(m);
        const double value = mask.at((win * t + i) * t + j);
        EXPECT_EQ(value, neighbors ? 0.0 : -1e9) << win << " " << i << " " << j;
        blocked += neighbors ? 0 : 1;
      }
    }
  }
  EXPECT_GT(blocked, 0u);
}

TEST(WindowOrder, IsPermutation) {
  for (std::size_t shift : {0u, 1u, 2u}) {
    auto order = window_order(8, 12, 4, shift);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size(); ++i) ASSERT_EQ(order[i], i);
  }
}

SwinStageWeights zero_stage(std::size_t c, std::size_t heads, std::size_t depth, Rng& rng) {
  SwinStageWeights s;
  for (std::size_t b = 0; b < depth; ++b) {
    auto block = SwinBlockWeights::init(c, heads, rng);
    for (Tensor* t : {&block.attn.qkv.weight, &block.attn.qkv.bias, &block.attn.proj.weight,
                      &block.attn.proj.bias, &block.mlp.fc1.weight, &block.mlp.fc1.bias,
                      &block.mlp.fc2.weight, &block.mlp.fc2.bias}) {
      if (t->defined()) fill(*t, 0.0);
    }
    for (auto& g : block.norm1.gamma.mutable_values()) g = rng.uniform(0.5, 2.0);
    for (auto& g : block.norm2.beta.mutable_values()) g = rng.uniform(-1.0, 1.0);
    s.blocks.push_back(std::move(block));
  }
  return s;
}

TEST(SwinStage, ZeroBranchesGiveIdentity) {
  Rng rng(13);
  const FeatureMap f = random_map(8, 8, 8, rng);
  const FeatureMap out = swin_stage(f, zero_stage(8, 2, 2, rng), 4);
  EXPECT_TRUE(test::bit_equal(out.tokens, f.tokens));
}

TEST(SwinStage, PreservesShapeAndRejectsOddDepth) {
  Rng rng(14);
  const FeatureMap f = random_map(8, 8, 8, rng);
  SwinStageWeights s;
  for (int b = 0; b < 2; ++b) s.blocks.push_back(SwinBlockWeights::init(8, 2, rng));
  const FeatureMap out = swin_stage(f, s, 4);
  EXPECT_EQ(out.tokens.shape(), f.tokens.shape());
  EXPECT_EQ(out.height, 8u);
  s.blocks.pop_back();
  EXPECT_THROW(swin_stage(f, s, 4), ConfigError);
  EXPECT_THROW(window_attention(random_map(6, 8, 8, rng), s.blocks[0].attn, 4, 0), ConfigError);
}

TEST(Heads, ZeroFeaturesAndBiasGiveZeroParams) {
  Rng rng(15);
  HeadWeights w = HeadWeights::init(8, 5, 16, rng);
  for (Mlp* m : {&w.smpl, &w.cam, &w.orient}) fill(m->fc2.bias, 0.0);
  FeatureMap f = random_map(2, 2, 8, rng);
  fill(f.tokens, 0.0);
  const BodyParams p = regress_params(f, w);
  EXPECT_EQ(p.theta_s.shape(), (Shape{10}));
  EXPECT_EQ(p.theta_p.shape(), (Shape{5, 3}));
  EXPECT_EQ(p.flat().size(), BodyParams::flat_size(5));
  EXPECT_EQ(BodyParams::flat_size(5), 10u + 15u + 3u + 3u);
  for (double v : p.flat()) EXPECT_EQ(v, 0.0);
}

TEST(Heads, PoolingIsPermutationInvariant) {
  Rng rng(16);
  const HeadWeights w = HeadWeights::init(8, 16, 32, rng);
  const FeatureMap f = random_map(2, 2, 8, rng);
  FeatureMap g = f;
  g.tokens = gather_rows(f.tokens, std::vector<std::size_t>{3, 1, 0, 2});
  const auto a = regress_params(f, w).flat();
  const auto b = regress_params(g, w).flat();
  ASSERT_EQ(a.size(), 10u + 48u + 6u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
  const auto c = regress_params(f, w).flat();
  EXPECT_EQ(a, c);
  EXPECT_THROW(regress_params(random_map(2, 2, 4, rng), w), DimensionError);
}

}  // namespace
}  // namespace egomesh
