#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <string>

#include "egomesh/error.hpp"
#include "egomesh/gradcheck.hpp"
#include "egomesh/selfcheck.hpp"
#include "egomesh/tensor.hpp"
#include "helpers.hpp"

namespace egomesh {
namespace {

using test::leaf;
using test::random_tensor;

TEST(Matmul, IdentityZeroAndHandProduct) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_TRUE(test::bit_equal(matmul(a, eye), a));
  EXPECT_TRUE(test::bit_equal(matmul(a, Tensor::zeros({2, 2})), Tensor::zeros({2, 2})));
  EXPECT_TRUE(test::bit_equal(matmul(a, Tensor::matrix({{5, 6}, {7, 8}})),
                              Tensor::matrix({{19, 22}, {43, 50}})));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativeOnRandomChains) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    const Tensor c = random_tensor({2, 5}, rng);
    EXPECT_LT(test::max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))), 1e-9);
  }
}

TEST(Matmul, BatchedMatchesPerSlice) {
  Rng rng(3);
  const Tensor a = random_tensor({2, 3, 4}, rng);
  const Tensor b = random_tensor({2, 4, 5}, rng);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 2; ++i) {
    const Tensor ai = reshape(slice(a, 0, i, i + 1), {3, 4});
    const Tensor bi = reshape(slice(b, 0, i, i + 1), {4, 5});
    const Tensor ci = reshape(slice(c, 0, i, i + 1), {3, 5});
    EXPECT_TRUE(test::bit_equal(matmul(ai, bi), ci));
  }
}

TEST(Kernels, GemmVariantsAgreeWithNaiveLoops) {
  Rng rng(5);
  for (const auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {7, 5, 9}, {13, 17, 11},
                               {6, 8, 16}, {25, 3, 33}}) {
    const Tensor a = random_tensor({m, k}, rng);
    const Tensor b = random_tensor({k, n}, rng);
    std::vector<double> ref(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a.at(i * k + p) * b.at(p * n + j);
      }
    }
    std::vector<double> c(m * n, 0.0);
    kernels::gemm_nn(m, k, n, a.values().data(), b.values().data(), c.data());
    const Tensor at = transpose(a);
    std::vector<double> c_tn(m * n, 0.0);
    kernels::gemm_tn(m, k, n, at.values().data(), b.values().data(), c_tn.data());
    const Tensor bt = transpose(b);
    std::vector<double> c_nt(m * n, 0.0);
    kernels::gemm_nt(m, k, n, a.values().data(), bt.values().data(), c_nt.data());
    for (std::size_t i = 0; i < m * n; ++i) {
      EXPECT_NEAR(c[i], ref[i], 1e-12);
      EXPECT_NEAR(c_tn[i], ref[i], 1e-12);
      EXPECT_NEAR(c_nt[i], ref[i], 1e-12);
    }
  }
}

TEST(Softmax, HandValues) {
  const Tensor s = softmax_rows(Tensor::matrix({{0, 0, 0}, {0, std::log(2.0), 0}}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.at(j), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.at(3), 0.25, 1e-15);
  EXPECT_NEAR(s.at(4), 0.5, 1e-15);
  const Tensor two = softmax_rows(Tensor::matrix({{0, std::log(2.0)}}));
  EXPECT_NEAR(two.at(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(two.at(1), 2.0 / 3.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(2);
  const Tensor x = random_tensor({4, 4, 7}, rng, 30.0);
  const Tensor s = softmax_rows(x);
  const Tensor shifted = softmax_rows(add(x, Tensor::full({7}, 123.0)));
  for (std::size_t r = 0; r < 16; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_GE(s.at(r * 7 + j), 0.0);
      total += s.at(r * 7 + j);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_LT(test::max_abs_diff(s, shifted), 1e-12);
}

TEST(Softmax, LargeInputsStayFinite) {
  const Tensor s = softmax_rows(Tensor::matrix({{1000.0, 999.0, -1000.0}}));
  for (double v : s.values()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(s.at(0) + s.at(1) + s.at(2), 1.0, 1e-15);
}

TEST(LayerNorm, Examples) {
  const Tensor ones = Tensor::ones({2});
  const Tensor zeros = Tensor::zeros({2});
  const Tensor c = layer_norm(Tensor::matrix({{5, 5}}), ones, zeros);
  EXPECT_EQ(c.at(0), 0.0);
  EXPECT_EQ(c.at(1), 0.0);
  const Tensor y = layer_norm(Tensor::matrix({{1, 3}}), ones, zeros, 1e-14);
  EXPECT_NEAR(y.at(0), -1.0, 1e-12);
  EXPECT_NEAR(y.at(1), 1.0, 1e-12);
  const Tensor b = layer_norm(Tensor::matrix({{2, 2}}), ones, Tensor::vector({0.25, -4}));
  EXPECT_EQ(b.at(0), 0.25);
  EXPECT_EQ(b.at(1), -4.0);
}

TEST(LayerNorm, NormalizesLastAxis) {
  Rng rng(8);
  const Tensor x = random_tensor({3, 4, 6}, rng, 5.0);
  const Tensor y = layer_norm(x, Tensor::ones({6}), Tensor::zeros({6}), 1e-12);
  for (std::size_t r = 0; r < 12; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t j = 0; j < 6; ++j) m += y.at(r * 6 + j) / 6.0;
    for (std::size_t j = 0; j < 6; ++j) v += (y.at(r * 6 + j) - m) * (y.at(r * 6 + j) - m) / 6.0;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-9);
  }
}

TEST(Gelu, Values) {
  const Tensor y = gelu(Tensor::vector({0.0, 1.0, 10.0, -10.0}));
  EXPECT_EQ(y.at(0), 0.0);
  EXPECT_NEAR(y.at(1), 0.841345, 1e-6);
  EXPECT_NEAR(y.at(2), 10.0, 1e-6);
  EXPECT_NEAR(y.at(3), 0.0, 1e-6);
}

TEST(GatherRows, DuplicationZeroAndMultiplicityGradient) {
  Rng rng(4);
  const Tensor table = random_tensor({5, 3}, rng);
  const std::vector<std::size_t> twice{0, 0};
  const Tensor g = gather_rows(table, twice);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(g.at(j), table.at(j));
    EXPECT_EQ(g.at(3 + j), table.at(j));
  }
  const std::vector<std::size_t> idx{4, 1, 4, 4, 2};
  EXPECT_TRUE(test::bit_equal(gather_rows(Tensor::zeros({5, 3}), idx), Tensor::zeros({5, 3})));

  Tensor t = leaf(table.detach());
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(gather_rows(t, idx)));
  }
  const double expected[5] = {0, 1, 1, 0, 3};
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(t.grad()[r * 3 + j], expected[r]);
  }
}

TEST(GatherRows, OutOfRangeNamesIndex) {
  const std::vector<std::size_t> idx{1, 9};
  try {
    gather_rows(Tensor::zeros({3, 2}), idx);
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    EXPECT_NE(std::string(e.what()).find('9'), std::string::npos);
  }
}

TEST(Backward, LinearAndSquareExamples) {
  Tensor x = leaf(Tensor::vector({1, 2, 3}));
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(x));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  Tape tape2;
  {
    TapeScope scope(tape2);
    tape2.backward(sum(mul(x, x)));
  }
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
  EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Backward, AccumulatesAcrossCalls) {
  Tensor x = leaf(Tensor::vector({1, -2}));
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(scale(x, 2.0)));
  }
  EXPECT_EQ(x.grad()[0], 6.0);
  EXPECT_EQ(x.grad()[1], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = leaf(Tensor::vector({1, 2}));
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = mul(x, x);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, DeterministicAcrossRuns) {
  Rng rng(9);
  const Tensor w0 = random_tensor({4, 4}, rng);
  const Tensor x0 = random_tensor({3, 4}, rng);
  auto run = [&] {
    Tensor w = leaf(w0.detach());
    Tape tape;
    TapeScope scope(tape);
    const Tensor h = gelu(matmul(x0, w));
    tape.backward(mean(softmax_rows(mul(h, h))));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(Backward, NoGradScopeRecordsNothing) {
  Tensor x = leaf(Tensor::vector({1, 2}));
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope off;
    const Tensor y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Broadcast, LeadingBatchOnlyOtherwiseDimensionError) {
  const Tensor a = Tensor::ones({2, 3});
  const Tensor y = add(a, Tensor::vector({1, 2, 3}));
  EXPECT_EQ(y.at(5), 4.0);
  EXPECT_THROW(add(a, Tensor::vector({1, 2})), DimensionError);
  EXPECT_THROW(mul(a, Tensor::ones({3, 2})), DimensionError);
  EXPECT_THROW(sub(Tensor::ones({2, 1}), a), DimensionError);
}

TEST(ShapeOps, ReshapePermuteSliceConcat) {
  Rng rng(6);
  const Tensor x = random_tensor({2, 3, 4}, rng);
  EXPECT_THROW(reshape(x, {5, 5}), DimensionError);
  const Tensor p = permute(x, {2, 0, 1});
  EXPECT_EQ(p.shape(), (Shape{4, 2, 3}));
  EXPECT_EQ(p.at((3 * 2 + 1) * 3 + 2), x.at((1 * 3 + 2) * 4 + 3));
  EXPECT_TRUE(test::bit_equal(permute(p, {1, 2, 0}), x));
  const Tensor joined = concat({slice(x, 1, 0, 1), slice(x, 1, 1, 3)}, 1);
  EXPECT_TRUE(test::bit_equal(joined, x));
  EXPECT_THROW(slice(x, 1, 2, 4), DimensionError);
}

TEST(GradCheck, EveryOpWithinOpTolerance) {
  SelfCheckOptions options;
  options.include_model = false;
  for (const auto& report : run_gradcheck_suite(options)) {
    EXPECT_TRUE(report.passed()) << report.name << " rel " << report.max_rel_error;
    EXPECT_GT(report.coords_checked, 0u) << report.name;
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  // An op whose backward is deliberately off by a factor of two.
  Tensor x = leaf(Tensor::vector({0.3, -0.7}));
  auto broken = [&] {
    const Tensor y = make_op({2}, {x.at(0) * x.at(0), x.at(1) * x.at(1)}, {x},
                             [](detail::Node& node) {
                               auto& in = *node.inputs[0];
                               auto g = in.grad_buffer();
                               for (std::size_t i = 0; i < 2; ++i) {
                                 g[i] += node.grad[i] * 4.0 * in.value[i];
                               }
                             });
    return sum(y);
  };
  const auto report = check_gradients("broken", {x}, broken);
  EXPECT_FALSE(report.passed());
}

}  // namespace
}  // namespace egomesh
