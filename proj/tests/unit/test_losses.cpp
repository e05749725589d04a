#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "egomesh/error.hpp"
#include "egomesh/losses.hpp"
#include "helpers.hpp"

namespace egomesh {
namespace {

PoseEstimate random_estimate(std::size_t joints, Rng& rng) {
  PoseEstimate e;
  e.params = BodyParams::zeros(joints);
  for (Tensor* t : {&e.params.theta_s, &e.params.theta_p, &e.params.orient, &e.params.cam_t}) {
    for (auto& v : t->mutable_values()) v = rng.normal();
  }
  e.joints3d = test::random_tensor({joints + 1, 3}, rng);
  e.joints2d = test::random_tensor({joints + 1, 2}, rng, 30.0);
  return e;
}

// Deep copy, so that editing one side never aliases the other.
PoseEstimate copy(const PoseEstimate& e) {
  PoseEstimate c;
  c.params.theta_s = e.params.theta_s.detach();
  c.params.theta_p = e.params.theta_p.detach();
  c.params.orient = e.params.orient.detach();
  c.params.cam_t = e.params.cam_t.detach();
  c.joints3d = e.joints3d.detach();
  c.joints2d = e.joints2d.detach();
  return c;
}

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& order) { return gather_rows(t, order); }

TEST(ComponentLosses, ZeroWhenPredictionEqualsTruth) {
  Rng rng(1);
  const PoseEstimate gt = random_estimate(16, rng);
  const std::vector<std::uint8_t> mask(17, 1);
  const LossBreakdown l = component_losses(copy(gt), gt, mask);
  EXPECT_EQ(l.smpl.item(), 0.0);
  EXPECT_EQ(l.orient.item(), 0.0);
  EXPECT_EQ(l.j3d.item(), 0.0);
  EXPECT_EQ(l.j2d.item(), 0.0);
  EXPECT_EQ(total_loss(l, LossWeights{}).item(), 0.0);
}

TEST(ComponentLosses, ShapeOffsetInOneCoordinate) {
  Rng rng(2);
  const PoseEstimate gt = random_estimate(16, rng);
  PoseEstimate pred = copy(gt);
  pred.params.theta_s.mutable_values()[4] += 1.0;
  const std::vector<std::uint8_t> mask(17, 1);
  const LossBreakdown l = component_losses(pred, gt, mask);
  EXPECT_NEAR(l.smpl.item(), 0.1, 1e-15);
  EXPECT_EQ(l.orient.item(), 0.0);
  EXPECT_EQ(l.j3d.item(), 0.0);
}

TEST(ComponentLosses, MeanReductionsByHand) {
  Rng rng(3);
  const PoseEstimate gt = random_estimate(2, rng);
  const PoseEstimate pred = random_estimate(2, rng);
  const std::vector<std::uint8_t> mask{1, 0, 1};
  const LossBreakdown l = component_losses(pred, gt, mask);
  auto mse = [](const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
    return s / static_cast<double>(a.numel());
  };
  auto mae = [](const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a.at(i) - b.at(i));
    return s / static_cast<double>(a.numel());
  };
  EXPECT_NEAR(l.smpl.item(),
              mse(pred.params.theta_s, gt.params.theta_s) + mse(pred.params.theta_p, gt.params.theta_p),
              1e-14);
  EXPECT_NEAR(l.orient.item(), mae(pred.params.orient, gt.params.orient), 1e-14);
  EXPECT_NEAR(l.j3d.item(), mae(pred.joints3d, gt.joints3d), 1e-14);
  double j2d = 0.0;
  for (std::size_t r : {0u, 2u})
    for (std::size_t k = 0; k < 2; ++k) j2d += std::abs(pred.joints2d.at(2 * r + k) - gt.joints2d.at(2 * r + k));
  EXPECT_NEAR(l.j2d.item(), j2d / 4.0, 1e-12);
}

TEST(ComponentLosses, MaskedRowsDoNotLeakNonFiniteValues) {
  Rng rng(4);
  const PoseEstimate gt = random_estimate(3, rng);
  PoseEstimate pred = copy(gt);
  pred.joints2d.mutable_values()[2] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  EXPECT_EQ(component_losses(pred, gt, mask).j2d.item(), 0.0);
  const std::vector<std::uint8_t> none(4, 0);
  EXPECT_EQ(component_losses(pred, gt, none).j2d.item(), 0.0);
}

TEST(ComponentLosses, JointReorderingInvariance) {
  Rng rng(5);
  const PoseEstimate gt = random_estimate(6, rng);
  const PoseEstimate pred = random_estimate(6, rng);
  const std::vector<std::uint8_t> mask(7, 1);
  const std::vector<std::size_t> order{3, 0, 6, 1, 5, 2, 4};
  PoseEstimate pp = copy(pred), gp = copy(gt);
  pp.joints3d = permute_rows(pred.joints3d, order);
  gp.joints3d = permute_rows(gt.joints3d, order);
  pp.joints2d = permute_rows(pred.joints2d, order);
  gp.joints2d = permute_rows(gt.joints2d, order);
  const LossBreakdown a = component_losses(pred, gt, mask);
  const LossBreakdown b = component_losses(pp, gp, mask);
  EXPECT_NEAR(a.j3d.item(), b.j3d.item(), 1e-15);
  EXPECT_NEAR(a.j2d.item(), b.j2d.item(), 1e-12);
}

TEST(ComponentLosses, DimensionMismatchIsContractError) {
  Rng rng(6);
  const PoseEstimate gt = random_estimate(4, rng);
  const PoseEstimate pred = random_estimate(3, rng);
  EXPECT_THROW(component_losses(pred, gt, std::vector<std::uint8_t>(5, 1)), ContractError);
  EXPECT_THROW(component_losses(copy(gt), gt, std::vector<std::uint8_t>(4, 1)), ContractError);
}

LossBreakdown fixture(double smpl, double orient, double j3d, double j2d) {
  return {Tensor::scalar(smpl), Tensor::scalar(orient), Tensor::scalar(j3d), Tensor::scalar(j2d), {}};
}

TEST(TotalLoss, WeightedFixtureAndLinearity) {
  const LossBreakdown parts = fixture(0.5, 0.2, 0.3, 0.1);
  EXPECT_NEAR(total_loss(parts, {1.0, 2.0, 4.0}).item(), 1.7, 1e-15);
  EXPECT_EQ(total_loss(fixture(0, 0, 0, 0), {1.0, 2.0, 4.0}).item(), 0.0);
  const double base = total_loss(parts, {1.0, 0.0, 0.0}).item();
  const double doubled = total_loss(parts, {2.0, 0.0, 0.0}).item();
  EXPECT_EQ(doubled, 2.0 * base);
  EXPECT_EQ(total_loss(parts, {0.0, 1.0, 0.0}).item(), 0.3);
}

TEST(TotalLoss, NonNegativeAndZeroOnlyWhenAllComponentsVanish) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const LossWeights w{rng.uniform(0.01, 3), rng.uniform(0.01, 3), rng.uniform(0.01, 3)};
    const int zero = static_cast<int>(rng.uniform(0, 4));
    double c[4] = {rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    c[zero] = 0.0;
    const double total = total_loss(fixture(c[0], c[1], c[2], c[3]), w).item();
    EXPECT_GT(total, 0.0);
  }
}

TEST(TotalLoss, GradientFlowsToEveryComponent) {
  Tensor s = test::leaf(Tensor::scalar(0.5));
  Tensor o = test::leaf(Tensor::scalar(0.2));
  Tensor j = test::leaf(Tensor::scalar(0.3));
  Tensor k = test::leaf(Tensor::scalar(0.1));
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(total_loss({s, o, j, k, {}}, {1.5, 2.0, 4.0}));
  }
  EXPECT_EQ(s.grad()[0], 1.5);
  EXPECT_EQ(o.grad()[0], 1.5);
  EXPECT_EQ(j.grad()[0], 2.0);
  EXPECT_EQ(k.grad()[0], 4.0);
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(LossWeights{}.validate());
  EXPECT_NO_THROW((LossWeights{1.0, 0.0, 0.0}.validate()));
  EXPECT_THROW((LossWeights{0.0, 0.0, 0.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{-1.0, 1.0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((LossWeights{1.0, std::nan(""), 1.0}.validate()), ConfigError);
}

}  // namespace
}  // namespace egomesh
