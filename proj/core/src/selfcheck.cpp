#include "egomesh/selfcheck.hpp"

#include <cmath>

#include "egomesh/backbone.hpp"
#include "egomesh/body.hpp"
#include "egomesh/data.hpp"
#include "egomesh/epe.hpp"
#include "egomesh/heads.hpp"
#include "egomesh/losses.hpp"
#include "egomesh/model.hpp"
#include "egomesh/rng.hpp"
#include "egomesh/training.hpp"

namespace egomesh {

RunConfig toy_config() {
  RunConfig c;
  c.backbone.height = 16;
  c.backbone.width = 16;
  c.backbone.patch = 2;
  c.backbone.channels = 8;
  c.backbone.depths = {2, 2};
  c.backbone.heads = {1, 2};
  c.backbone.window = 2;
  c.head_hidden = 16;
  c.epe.bins = 8;
  c.joints = 16;
  c.vertices = 200;
  return c;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Values bounded away from zero, for kinks such as abs.
Tensor away_from_zero(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return Tensor(std::move(shape), std::move(v));
}

// Scalar <t, w> with a fixed random w, so every output entry gets a
// distinct upstream gradient.
Tensor probe(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(t, random_tensor(t.shape(), rng)));
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(const SelfCheckOptions& options) {
  std::vector<GradCheckReport> reports;
  Rng rng(options.seed);
  GradCheckOptions op;
  op.tolerance = options.op_tolerance;
  op.seed = options.seed;
  auto run = [&](const char* name, std::vector<Tensor> leaves, std::function<Tensor()> fn) {
    reports.push_back(check_gradients(name, std::move(leaves), fn, op));
  };

  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    run("add_broadcast", {a, b}, [=] { return probe(add(a, b), 11); });
  }
  {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    run("sub", {a, b}, [=] { return probe(sub(a, b), 12); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    run("mul_broadcast", {a, b}, [=] { return probe(mul(a, b), 13); });
  }
  {
    Tensor a = random_tensor({5}, rng);
    run("scale", {a}, [=] { return probe(scale(a, -2.5), 14); });
  }
  {
    Tensor a = away_from_zero({3, 3}, rng);
    run("abs", {a}, [=] { return probe(abs(a), 15); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    run("matmul_shared", {a, b}, [=] { return probe(matmul(a, b), 16); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({2, 4, 5}, rng);
    run("matmul_batched", {a, b}, [=] { return probe(matmul(a, b), 17); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    run("reshape_permute", {a},
        [=] { return probe(permute(reshape(a, {4, 3, 2}), {2, 0, 1}), 18); });
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng);
    run("transpose", {a}, [=] { return probe(transpose(a), 19); });
  }
  {
    Tensor a = random_tensor({3, 5, 2}, rng);
    run("slice", {a}, [=] { return probe(slice(a, 1, 1, 4), 20); });
  }
  {
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 2}, rng);
    run("concat", {a, b}, [=] { return probe(concat({a, b}, 1), 21); });
  }
  {
    Tensor a = random_tensor({3, 6}, rng, -3.0, 3.0);
    run("softmax_rows", {a}, [=] { return probe(softmax_rows(a), 22); });
  }
  {
    Tensor x = random_tensor({4, 6}, rng);
    Tensor g = random_tensor({6}, rng, 0.5, 1.5);
    Tensor b = random_tensor({6}, rng);
    run("layer_norm", {x, g, b}, [=] { return probe(layer_norm(x, g, b), 23); });
  }
  {
    Tensor a = random_tensor({4, 5}, rng, -3.0, 3.0);
    run("gelu", {a}, [=] { return probe(gelu(a), 24); });
  }
  {
    Tensor a = random_tensor({3, 4}, rng);
    run("sum_mean", {a}, [=] { return add(scale(sum(a), 0.3), scale(mean(a), 1.7)); });
  }
  {
    Tensor a = random_tensor({5, 2, 3}, rng);
    run("mean_rows", {a}, [=] { return probe(mean_rows(a), 25); });
  }
  {
    Tensor t = random_tensor({4, 3}, rng);
    const std::vector<std::size_t> idx{2, 0, 2, 3, 2};
    run("gather_rows", {t}, [=] { return probe(gather_rows(t, idx), 26); });
  }
  {
    Tensor w = random_tensor({4, 3}, rng, -2.0, 2.0);
    auto v = w.mutable_values();
    v[3] = 1e-6;  // one nearly-zero rotation
    v[4] = -2e-6;
    v[5] = 5e-7;
    run("rodrigues", {w}, [=] { return probe(rodrigues(w), 27); });
  }
  {
    // On-axis, off-axis, beyond 90 degrees and far off-axis points.
    Tensor p({4, 3}, {1e-7, -2e-7, 0.8, 0.3, -0.2, 0.5, 0.4, 0.3, -0.2, -0.5, 0.6, 0.05});
    const CameraRig rig = CameraRig::inscribed(128, 128);
    run("project_points", {p}, [=] { return probe(project_points(p, rig), 28); });
  }
  {
    Rng table_rng(3);
    const PositionTable table(8, 4, 10.0, 0.5, table_rng);
    Tensor x = random_tensor({5, 4}, rng);
    const std::vector<BinIndex> bins{{0, 1, 2}, {7, 7, 7}, {3, 3, 0}, {0, 1, 2}, {5, 2, 6}};
    run("embed_tokens", {x, table.table_x(), table.table_y(), table.table_z()},
        [=] { return probe(embed_tokens(x, bins, table), 29); });
  }
  {
    Tensor image = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
    Rng wr(4);
    PatchEmbedWeights w = PatchEmbedWeights::init(2, 5, wr);
    w.proj.bias = random_tensor({5}, rng);
    w.norm.gamma = random_tensor({5}, rng);
    w.norm.beta = random_tensor({5}, rng);
    run("patch_embed", {image, w.proj.weight, w.proj.bias, w.norm.gamma, w.norm.beta},
        [=] { return probe(patch_embed(image, w, 2).tokens, 30); });
  }
  {
    Tensor tokens = random_tensor({16, 2}, rng);
    Rng wr(5);
    PatchMergeWeights w = PatchMergeWeights::init(2, wr);
    w.norm.gamma = random_tensor({8}, rng, 0.5, 1.5);
    w.norm.beta = random_tensor({8}, rng, -0.5, 0.5);
    w.reduction.weight = random_tensor({8, 4}, rng, -0.5, 0.5);
    std::vector<PixelCoord> centers(16);
    run("patch_merge", {tokens, w.norm.gamma, w.norm.beta, w.reduction.weight}, [=] {
      return probe(patch_merge({tokens, 4, 4, centers}, w).tokens, 31);
    });
  }
  {
    Tensor tokens = random_tensor({16, 4}, rng);
    Rng wr(6);
    WindowAttentionWeights w = WindowAttentionWeights::init(4, 2, wr);
    for (auto* t : {&w.qkv.weight, &w.proj.weight}) *t = random_tensor(t->shape(), rng, -0.5, 0.5);
    std::vector<PixelCoord> centers(16);
    run("window_attention_shifted", {tokens, w.qkv.weight, w.qkv.bias, w.proj.weight},
        [=] { return probe(window_attention({tokens, 4, 4, centers}, w, 2, 1).tokens, 32); });
  }
  {
    Tensor tokens = random_tensor({64, 8}, rng);
    Rng wr(7);
    SwinStageWeights stage;
    for (int b = 0; b < 2; ++b) stage.blocks.push_back(SwinBlockWeights::init(8, 2, wr));
    for (auto& blk : stage.blocks) {
      blk.attn.qkv.weight = random_tensor(blk.attn.qkv.weight.shape(), rng, -0.4, 0.4);
      blk.mlp.fc1.weight = random_tensor(blk.mlp.fc1.weight.shape(), rng, -0.4, 0.4);
    }
    std::vector<Tensor> leaves{tokens};
    std::vector<NamedTensor> named;
    stage.collect("stage", named);
    for (auto& n : named) leaves.push_back(n.tensor);
    std::vector<PixelCoord> centers(64);
    run("swin_stage", leaves,
        [=] { return probe(swin_stage({tokens, 8, 8, centers}, stage, 4).tokens, 33); });
  }
  {
    Tensor tokens = random_tensor({4, 8}, rng);
    Rng wr(8);
    HeadWeights heads = HeadWeights::init(8, 3, 16, wr);
    std::vector<Tensor> leaves{tokens};
    std::vector<NamedTensor> named;
    heads.collect("heads", named);
    for (auto& n : named) leaves.push_back(n.tensor);
    std::vector<PixelCoord> centers(4);
    run("regress_params", leaves, [=] {
      const BodyParams p = regress_params({tokens, 2, 2, centers}, heads);
      return add(add(probe(p.theta_s, 34), probe(p.theta_p, 35)),
                 add(probe(p.orient, 36), probe(p.cam_t, 37)));
    });
  }
  {
    const BodyModel body = build_toy_body(9, 16, 400);
    BodyParams p{random_tensor({10}, rng), random_tensor({16, 3}, rng, -0.6, 0.6),
                 random_tensor({3}, rng, -0.6, 0.6), Tensor::zeros({3})};
    run("body_forward", {p.theta_s, p.theta_p, p.orient}, [=] {
      const MeshResult m = body_forward(body, p);
      return add(probe(m.vertices, 38), probe(m.joints3d, 39));
    });
  }
  {
    const std::size_t j = 4;
    BodyParams pred{random_tensor({10}, rng), random_tensor({j, 3}, rng), random_tensor({3}, rng),
                    random_tensor({3}, rng)};
    BodyParams gt{random_tensor({10}, rng), random_tensor({j, 3}, rng), random_tensor({3}, rng),
                  random_tensor({3}, rng)};
    Tensor pj3 = random_tensor({j + 1, 3}, rng);
    Tensor gj3 = random_tensor({j + 1, 3}, rng);
    Tensor pj2 = random_tensor({j + 1, 2}, rng, 0.0, 128.0);
    Tensor gj2 = random_tensor({j + 1, 2}, rng, 0.0, 128.0);
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
    const LossWeights w{1.0, 2.0, 0.5};
    run("total_loss", {pred.theta_s, pred.theta_p, pred.orient, pj3, pj2}, [=] {
      LossBreakdown br = component_losses({pred, pj3, pj2}, {gt, gj3, gj2}, mask);
      return total_loss(br, w);
    });
  }

  if (options.include_model) {
    RunConfig cfg = toy_config();
    cfg.seed = options.seed;
    Model model(cfg);
    // At the init point every bias and beta is zero, so background tokens stay
    // exactly zero through each block and every LayerNorm sits at its eps
    // floor. The loss is then curved on a scale far below any usable finite
    // difference step, so the check is taken at a nearby generic point.
    Rng jitter(options.seed + 7);
    for (auto& n : model.named_tensors())
      for (double& v : n.tensor.mutable_values()) v += jitter.normal(0.0, 0.05);
    const Sample sample =
        generate_sample(options.seed + 100, model.body(), model.rig(), PoseRanges{});
    std::vector<Tensor> leaves;
    for (auto& n : model.trainable()) leaves.push_back(n.tensor);
    auto loss = [&model, &sample] { return sample_losses(model, sample).total; };
    GradCheckOptions mo;
    mo.tolerance = options.model_tolerance;
    mo.seed = options.seed;
    mo.max_coords_per_leaf = 3;
    reports.push_back(check_gradients("full_model", leaves, loss, mo));
    reports.push_back(check_directional("full_model_directional", leaves, loss, mo));
  }
  return reports;
}

}  // namespace egomesh
