#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "egomesh/error.hpp"
#include "egomesh/metrics.hpp"
#include "egomesh/rng.hpp"

namespace egomesh {
namespace {

std::vector<Vec3> random_cloud(std::size_t n, Rng& rng, double spread = 0.5) {
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = {rng.normal(0, spread), rng.normal(0, spread), rng.normal(0, spread)};
  return pts;
}

Mat3 random_rotation(Rng& rng) {
  Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
  return axis_angle_to_matrix((rng.uniform(0.0, 3.1) / norm(axis)) * axis);
}

double residual(const Alignment& a, const std::vector<Vec3>& pred, const std::vector<Vec3>& gt) {
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 d = a.apply(pred[i]) - gt[i];
    s += dot(d, d);
  }
  return s;
}

TEST(MeanPointError, Examples) {
  const std::vector<Vec3> gt{{0, 0, 0}, {1, 1, 1}, {-1, 0.5, 2}};
  EXPECT_EQ(mean_point_error(gt, gt), 0.0);
  std::vector<Vec3> shifted = gt;
  for (auto& p : shifted) p.x += 0.010;
  EXPECT_NEAR(mean_point_error(shifted, gt), 10.0, 1e-9);
  const std::vector<Vec3> fixture{{0.003, 0, 0}, {1, 1.004, 1}, {-1, 0.5, 2.005}};
  EXPECT_NEAR(mean_point_error(fixture, gt), 4.0, 1e-9);
  EXPECT_THROW(mean_point_error(fixture, std::vector<Vec3>(2)), ContractError);
}

TEST(Umeyama, IdentityForEqualSets) {
  Rng rng(1);
  const auto pts = random_cloud(10, rng);
  const Alignment a = umeyama_align(pts, pts);
  EXPECT_NEAR(a.scale, 1.0, 1e-12);
  EXPECT_LT(max_abs_diff(a.rotation, Mat3::identity()), 1e-12);
  EXPECT_LT(norm(a.translation), 1e-12);
}

TEST(Umeyama, RecoversExactSimilarity) {
  Rng rng(2);
  const auto pred = random_cloud(12, rng);
  const Mat3 rz = axis_angle_to_matrix({0, 0, std::numbers::pi / 6});
  const Vec3 t{1, 2, 3};
  std::vector<Vec3> gt;
  for (const auto& p : pred) gt.push_back(2.0 * (rz * p) + t);
  const Alignment a = umeyama_align(pred, gt);
  EXPECT_NEAR(a.scale, 2.0, 1e-9);
  EXPECT_LT(max_abs_diff(a.rotation, rz), 1e-9);
  EXPECT_LT(norm(a.translation - t), 1e-9);
  EXPECT_NEAR(pa_error(pred, gt), 0.0, 1e-9);
}

TEST(Umeyama, BeatsRandomSearch) {
  Rng rng(3);
  const auto pred = random_cloud(5, rng);
  const auto gt = random_cloud(5, rng);
  const Alignment best = umeyama_align(pred, gt);
  const double closed = residual(best, pred, gt);
  for (int i = 0; i < 10000; ++i) {
    Alignment cand;
    cand.scale = rng.uniform(0.05, 3.0);
    cand.rotation = random_rotation(rng);
    cand.translation = {rng.normal(0, 0.5), rng.normal(0, 0.5), rng.normal(0, 0.5)};
    ASSERT_LE(closed, residual(cand, pred, gt) + 1e-12);
  }
  // Local perturbations of the optimum can only increase the residual.
  for (int i = 0; i < 200; ++i) {
    Alignment cand = best;
    cand.scale *= 1.0 + rng.normal(0, 1e-3);
    cand.rotation = axis_angle_to_matrix({rng.normal(0, 1e-3), rng.normal(0, 1e-3), rng.normal(0, 1e-3)}) * best.rotation;
    cand.translation = best.translation + Vec3{rng.normal(0, 1e-3), 0, rng.normal(0, 1e-3)};
    EXPECT_LE(closed, residual(cand, pred, gt) + 1e-12);
  }
}

TEST(Umeyama, ProperRotationWithScaleAlways) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto pred = random_cloud(3 + i % 20, rng);
    const auto gt = random_cloud(pred.size(), rng);
    const Alignment a = umeyama_align(pred, gt);
    EXPECT_GT(a.scale, 0.0);
    EXPECT_LT(max_abs_diff(a.rotation.transposed() * a.rotation, Mat3::identity()), 1e-9);
    EXPECT_NEAR(a.rotation.determinant(), 1.0, 1e-9);
  }
}

TEST(Umeyama, Errors) {
  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(umeyama_align(two, two), ContractError);
  const std::vector<Vec3> same(5, Vec3{1, 2, 3});
  const std::vector<Vec3> spread{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  EXPECT_THROW(umeyama_align(same, spread), DegenerateError);
  EXPECT_THROW(pa_error(same, spread), DegenerateError);
  EXPECT_THROW(umeyama_align(spread, std::vector<Vec3>(4, Vec3{})), ContractError);
}

TEST(PaError, ReflectionIsNotRemoved) {
  const std::vector<Vec3> gt{{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 3}, {0.5, 0.3, 0.1}};
  std::vector<Vec3> mirrored;
  for (const auto& p : gt) mirrored.push_back({-p.x, p.y, p.z});
  EXPECT_GT(pa_error(mirrored, gt), 1.0);
  const Alignment a = umeyama_align(mirrored, gt);
  EXPECT_NEAR(a.rotation.determinant(), 1.0, 1e-12);
}

TEST(PaError, NeverExceedsUnalignedError) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto gt = random_cloud(17, rng);
    auto pred = gt;
    for (auto& p : pred) p = p + Vec3{rng.normal(0, 0.05), rng.normal(0, 0.05), rng.normal(0, 0.05)};
    EXPECT_LE(pa_error(pred, gt), mean_point_error(pred, gt) + 1e-9);
  }
}

TEST(PaError, InvariantToSimilarityOfPrediction) {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto gt = random_cloud(17, rng);
    const auto pred = random_cloud(17, rng);
    Alignment sim;
    sim.scale = rng.uniform(0.2, 5.0);
    sim.rotation = random_rotation(rng);
    sim.translation = {rng.normal(), rng.normal(), rng.normal()};
    EXPECT_NEAR(pa_error(sim.apply(pred), gt), pa_error(pred, gt), 1e-8);
  }
}

TEST(Svd3, ReconstructsAndOrders) {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    Mat3 a;
    for (auto& v : a.m) v = rng.normal(0, std::pow(10.0, rng.uniform(-3, 3)));
    if (i % 10 == 0) a.set_column(2, 2.0 * a.column(0) - a.column(1));  // rank 2
    if (i % 17 == 0) a = Mat3{};
    const Svd3 s = svd3(a);
    EXPECT_GE(s.singular.x, s.singular.y);
    EXPECT_GE(s.singular.y, s.singular.z);
    EXPECT_GE(s.singular.z, 0.0);
    const Mat3 back = s.u * Mat3::diagonal(s.singular.x, s.singular.y, s.singular.z) * s.v.transposed();
    double scale = 1.0;
    for (double v : a.m) scale = std::max(scale, std::abs(v));
    EXPECT_LT(max_abs_diff(back, a), 1e-10 * scale);
    EXPECT_LT(max_abs_diff(s.u.transposed() * s.u, Mat3::identity()), 1e-10);
    EXPECT_LT(max_abs_diff(s.v.transposed() * s.v, Mat3::identity()), 1e-10);
  }
}

TEST(Svd3, DiagonalInput) {
  const Svd3 s = svd3(Mat3::diagonal(1.0, -5.0, 3.0));
  EXPECT_NEAR(s.singular.x, 5.0, 1e-14);
  EXPECT_NEAR(s.singular.y, 3.0, 1e-14);
  EXPECT_NEAR(s.singular.z, 1.0, 1e-14);
}

}  // namespace
}  // namespace egomesh
