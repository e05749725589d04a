#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "egomesh/epe.hpp"
#include "egomesh/error.hpp"
#include "helpers.hpp"

namespace egomesh {
namespace {

TEST(Discretize, BoundariesAndInteriorValue) {
  for (std::size_t b : {2u, 7u, 64u}) {
    EXPECT_EQ(discretize_coords({-1.5, -1.5, -1.5}, b, 1.5), (BinIndex{0, 0, 0}));
    EXPECT_EQ(discretize_coords({1.5, 1.5, 1.5}, b, 1.5), (BinIndex{b - 1, b - 1, b - 1}));
  }
  // (1 + cos 0.2) / 2 * 64 = 63.36, so z lands in bin 63.
  const BinIndex mid = discretize_coords({0.0, 0.0, std::cos(0.2)}, 64, 1.0);
  EXPECT_EQ(mid, (BinIndex{32, 32, 63}));
}

TEST(Discretize, MonotoneAndInRange) {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const double r = rng.uniform(0.5, 50.0);
    const double a = rng.uniform(-r, r);
    const double b = rng.uniform(-r, r);
    const BinIndex ia = discretize_coords({a, 0, 0}, 17, r);
    const BinIndex ib = discretize_coords({b, 0, 0}, 17, r);
    EXPECT_LT(ia.x, 17u);
    if (a <= b) EXPECT_LE(ia.x, ib.x);
  }
}

TEST(Discretize, RejectsNonFinite) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(discretize_coords({nan, 0, 0}, 8, 1.0), ContractError);
  EXPECT_THROW(discretize_coords({0, inf, 0}, 8, 1.0), ContractError);
  EXPECT_THROW(discretize_coords({0, 0, 1.0}, 1, 1.0), ContractError);
}

struct Grid {
  CameraRig rig = CameraRig::inscribed(32, 32);
  std::vector<PixelCoord> centers;
  Grid() {
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) centers.push_back({4.0 * x + 2.0, 4.0 * y + 2.0});
  }
};

TEST(EmbedTokens, ZeroTablesAreIdentity) {
  const Grid g;
  Rng rng(1);
  const PositionTable table(64, 6, g.rig.projection.radius, 0.0, rng);
  const Tensor tokens = test::random_tensor({64, 6}, rng);
  EXPECT_TRUE(test::bit_equal(embed_tokens(tokens, g.centers, table, g.rig), tokens));
}

TEST(EmbedTokens, AddsSumOfThreeRows) {
  const Grid g;
  Rng rng(2);
  const PositionTable table(16, 5, g.rig.projection.radius, 0.5, rng);
  const Tensor tokens = test::random_tensor({64, 5}, rng);
  const Tensor out = embed_tokens(tokens, g.centers, table, g.rig);
  const double radius = g.rig.projection.radius;
  for (std::size_t t = 0; t < 64; ++t) {
    const Vec3 c = pixel_to_cart(g.rig.planar(g.centers[t]), g.rig.projection);
    EXPECT_NEAR(norm(c), radius, 1e-9 * radius);
    const BinIndex b = discretize_coords(c, 16, radius);
    for (std::size_t d = 0; d < 5; ++d) {
      const double expected = tokens.at(t * 5 + d) + table.table_x().at(b.x * 5 + d) +
                              table.table_y().at(b.y * 5 + d) + table.table_z().at(b.z * 5 + d);
      EXPECT_NEAR(out.at(t * 5 + d), expected, 1e-15);
    }
  }
}

TEST(EmbedTokens, IdenticalCentersGetIdenticalEmbeddings) {
  const Grid g;
  Rng rng(4);
  const PositionTable table(8, 4, g.rig.projection.radius, 1.0, rng);
  std::vector<PixelCoord> centers = {g.centers[5], g.centers[20], g.centers[5]};
  const Tensor zero = Tensor::zeros({3, 4});
  const Tensor out = embed_tokens(zero, centers, table, g.rig);
  for (std::size_t d = 0; d < 4; ++d) EXPECT_EQ(out.at(d), out.at(8 + d));

  // Permuting the tokens permutes their embeddings.
  std::vector<PixelCoord> swapped = {g.centers[20], g.centers[5], g.centers[5]};
  const Tensor out2 = embed_tokens(zero, swapped, table, g.rig);
  for (std::size_t d = 0; d < 4; ++d) {
    EXPECT_EQ(out2.at(d), out.at(4 + d));
    EXPECT_EQ(out2.at(4 + d), out.at(d));
  }
}

TEST(EmbedTokens, TableGradientCountsBinnedTokens) {
  const Grid g;
  Rng rng(5);
  const PositionTable table(8, 3, g.rig.projection.radius, 0.1, rng);
  Tensor tx = table.table_x();
  tx.set_requires_grad(true);
  const auto bins = table.bin_pixels(g.centers, g.rig);
  std::map<std::size_t, double> counts;
  for (const auto& b : bins) counts[b.x] += 1.0;
  ASSERT_GT(counts.size(), 2u);

  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(embed_tokens(Tensor::zeros({64, 3}), bins, table)));
  }
  const auto grad = tx.grad();
  for (std::size_t i = 0; i < 8; ++i) {
    const double expected = counts.count(i) ? counts[i] : 0.0;
    for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(grad[i * 3 + d], expected) << "row " << i;
  }
  tx.set_requires_grad(false);
}

TEST(EmbedTokens, WidthMismatchIsDimensionError) {
  const Grid g;
  Rng rng(6);
  const PositionTable table(8, 3, g.rig.projection.radius, 0.1, rng);
  EXPECT_THROW(embed_tokens(Tensor::zeros({64, 4}), g.centers, table, g.rig), DimensionError);
  EXPECT_THROW(PositionTable(1, 3, 1.0, 0.0, rng), ConfigError);
}

TEST(EmbedTokens, SharedBinTriplesAreBitIdentical) {
  CameraRig rig = CameraRig::inscribed(64, 64);
  Rng rng(7);
  const PositionTable table(4, 2, rig.projection.radius, 1.0, rng);
  std::vector<PixelCoord> pixels;
  for (int y = 0; y < 64; y += 3)
    for (int x = 0; x < 64; x += 3) {
      const PixelCoord p{x + 0.5, y + 0.5};
      const double du = p.u - rig.u0, dv = p.v - rig.v0;
      if (du * du + dv * dv < 31.0 * 31.0) pixels.push_back(p);
    }
  const auto bins = table.bin_pixels(pixels, rig);
  const Tensor emb = table.lookup(bins);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> first;
  std::size_t shared = 0;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto key = std::make_tuple(bins[i].x, bins[i].y, bins[i].z);
    auto [it, inserted] = first.emplace(key, i);
    if (inserted) continue;
    ++shared;
    for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(emb.at(i * 2 + d), emb.at(it->second * 2 + d));
  }
  EXPECT_GT(shared, 10u);
}

}  // namespace
}  // namespace egomesh
