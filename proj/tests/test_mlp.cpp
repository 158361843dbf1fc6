// Copyright 2026 The neumat Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <vector>

#include "neumat/mlp.hpp"
#include "neumat/quantized_mlp.hpp"

namespace neumat {
namespace {

using MlpD = Mlp<double>;

// Plain triple loop, independent of the Eigen expression path.
std::vector<double> oracle_forward(const Mlp<float>& net, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (const auto& l : net.layers()) {
    std::vector<double> z(l.weight.rows());
    for (int r = 0; r < l.weight.rows(); ++r) {
      double s = l.bias[r];
      for (int c = 0; c < l.weight.cols(); ++c) s += double(l.weight(r, c)) * h[c];
      if (l.activation == Activation::kRelu) s = s > 0 ? s : 0;
      if (l.activation == Activation::kLeakyRelu) s = s > 0 ? s : kLeakySlope * s;
      z[r] = s;
    }
    h = std::move(z);
  }
  return h;
}

TEST(MlpForward, ZeroWeightsGiveBias) {
  MlpD net({4, 3}, Activation::kLinear, Activation::kLinear, 1);
  net.weight(0).setZero();
  net.bias(0) << 1, -2, 3;
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd::Random(4));
  EXPECT_EQ(y, net.bias(0));
}

TEST(MlpForward, IdentityLayer) {
  MlpD net({5, 5}, Activation::kLinear, Activation::kLinear, 1);
  net.weight(0).setIdentity();
  net.bias(0).setZero();
  const Eigen::VectorXd x = Eigen::VectorXd::Random(5);
  EXPECT_EQ(net.forward(x), x);
}

TEST(MlpForward, MatchesLoopOracle) {
  Mlp<float> net({14, 16, 16, 3}, Activation::kLeakyRelu, Activation::kLinear, 7);
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXf x(14);
    std::vector<double> xd(14);
    for (int i = 0; i < 14; ++i) xd[i] = x[i] = float(2 * rng.uniform() - 1);
    const Eigen::VectorXf y = net.forward(x);
    const auto ref = oracle_forward(net, xd);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(y[k], ref[k], 1e-6);
  }
}

TEST(MlpForward, DimensionMismatchThrows) {
  MlpD net({3, 2}, Activation::kLinear, Activation::kLinear, 1);
  EXPECT_THROW(net.forward(Eigen::VectorXd::Zero(4)), DimensionError);
}

TEST(MlpBackward, LinearLayerOuterProduct) {
  MlpD net({3, 2}, Activation::kLinear, Activation::kLinear, 1);
  const Eigen::Vector3d x(0.5, -1.0, 2.0);
  const Eigen::Vector2d c(3.0, -0.25);
  const auto r = net.backward(x, c);
  EXPECT_TRUE(r.grads.weight[0].isApprox(c * x.transpose()));
  EXPECT_TRUE(r.grads.bias[0].isApprox(c));
  EXPECT_TRUE(r.input_grad.isApprox(net.weight(0).transpose() * c));
}

TEST(MlpBackward, ZeroOutputGradient) {
  MlpD net({6, 8, 8, 2}, Activation::kRelu, Activation::kLinear, 3);
  const auto r = net.backward(Eigen::VectorXd::Random(6), Eigen::VectorXd::Zero(2));
  for (std::size_t i = 0; i < r.grads.weight.size(); ++i) {
    EXPECT_TRUE(r.grads.weight[i].isZero(0));
    EXPECT_TRUE(r.grads.bias[i].isZero(0));
  }
  EXPECT_TRUE(r.input_grad.isZero(0));
}

struct GradCase {
  std::vector<int> sizes;
  Activation hidden;
};

class MlpGradient : public ::testing::TestWithParam<GradCase> {};

// Central differences on L = <c, f(x)>. Away from activation kinks L is linear in any
// single weight, so a large step costs no truncation error and keeps roundoff small.
TEST_P(MlpGradient, MatchesFiniteDifferences) {
  const auto& gc = GetParam();
  Rng rng(41);
  for (int draw = 0; draw < 10; ++draw) {
    MlpD net(gc.sizes, gc.hidden, Activation::kLinear, 100 + draw);
    for (int i = 0; i < net.num_layers(); ++i) net.bias(i).setRandom();
    Eigen::VectorXd x(gc.sizes.front()), c(gc.sizes.back());
    for (auto& v : x) v = 2 * rng.uniform() - 1;
    for (auto& v : c) v = 2 * rng.uniform() - 1;
    const auto r = net.backward(x, c);
    const double h = 1e-5;
    auto loss = [&] { return c.dot(net.forward(x)); };
    for (int l = 0; l < net.num_layers(); ++l) {
      for (Eigen::Index k = 0; k < net.weight(l).size(); ++k) {
        double& w = net.weight(l).data()[k];
        const double w0 = w;
        w = w0 + h;
        const double lp = loss();
        w = w0 - h;
        const double lm = loss();
        w = w0;
        const double fd = (lp - lm) / (2 * h);
        const double an = r.grads.weight[l].data()[k];
        EXPECT_LE(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}), 1e-3)
            << "layer " << l << " weight " << k << " fd " << fd << " an " << an;
      }
    }
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double x0 = x[k];
      x[k] = x0 + h;
      const double lp = loss();
      x[k] = x0 - h;
      const double lm = loss();
      x[k] = x0;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_LE(std::abs(fd - r.input_grad[k]) / std::max({std::abs(fd), std::abs(r.input_grad[k]), 1e-6}), 1e-3);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    Architectures, MlpGradient,
    ::testing::Values(GradCase{{14, 12}, Activation::kLinear}, GradCase{{14, 16, 3}, Activation::kRelu},
                      GradCase{{14, 16, 16, 3}, Activation::kLeakyRelu},
                      GradCase{{20, 32, 32, 32, 9}, Activation::kLeakyRelu},
                      GradCase{{14, 64, 64, 64, 3}, Activation::kRelu}, GradCase{{8, 12}, Activation::kLinear}));

TEST(Adam, FirstStepIsLearningRateInGradientDirection) {
  MlpD net({2, 1}, Activation::kLinear, Activation::kLinear, 1);
  AdamState<double> state(net, {.lr = 1e-2});
  const Eigen::MatrixXd w0 = net.weight(0);
  auto g = net.zero_gradients();
  g.weight[0] << 3.0, -0.5;
  adam_step(net, g, state);
  EXPECT_NEAR(net.weight(0)(0, 0) - w0(0, 0), -1e-2, 1e-8);
  EXPECT_NEAR(net.weight(0)(0, 1) - w0(0, 1), 1e-2, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  MlpD net({3, 4, 2}, Activation::kRelu, Activation::kLinear, 2);
  const MlpD before = net;
  AdamState<double> state(net, {});
  for (int i = 0; i < 100; ++i) adam_step(net, net.zero_gradients(), state);
  for (int l = 0; l < net.num_layers(); ++l) {
    EXPECT_EQ(net.weight(l), before.layer(l).weight);
    EXPECT_EQ(net.bias(l), before.layer(l).bias);
  }
}

TEST(Adam, ConvergesOnQuadratic) {
  // L(w) = (w - 3)^2 on the bias of a 1x1 net.
  MlpD net({1, 1}, Activation::kLinear, Activation::kLinear, 1);
  net.bias(0)[0] = 2.5;
  AdamState<double> state(net, {.lr = 1e-2});
  for (int i = 0; i < 500; ++i) {
    auto g = net.zero_gradients();
    g.bias[0][0] = 2 * (net.bias(0)[0] - 3.0);
    adam_step(net, g, state);
  }
  EXPECT_NEAR(net.bias(0)[0], 3.0, 1e-3);
}

TEST(Quantize, RoundingExamples) {
  EXPECT_EQ(float(to_half(1.0f)), 1.0f);
  EXPECT_EQ(float(to_half(0.1f)), 0.0999755859375f);
  int clamped = 0;
  EXPECT_EQ(float(to_half(70000.0f, &clamped)), 65504.0f);
  EXPECT_EQ(clamped, 1);
}

TEST(Quantize, ClampCounter) {
  Mlp<float> net({2, 2}, Activation::kLinear, Activation::kLinear, 1);
  net.weight(0)(0, 0) = 70000.0f;
  net.weight(0)(1, 1) = -1e6f;
  EXPECT_EQ(quantize(net).clamp_count(), 2);
}

TEST(Quantize, DequantizeIsIdempotent) {
  Mlp<float> net({14, 32, 32, 3}, Activation::kLeakyRelu, Activation::kLinear, 4);
  const Mlp<float> once = quantize(net).dequantize();
  const Mlp<float> twice = quantize(once).dequantize();
  for (int l = 0; l < once.num_layers(); ++l) {
    EXPECT_EQ(once.layer(l).weight, twice.layer(l).weight);
    EXPECT_EQ(once.layer(l).bias, twice.layer(l).bias);
  }
}

TEST(FusedForward, MatchesDequantizedForward) {
  for (const auto& sizes : {std::vector<int>{14, 16, 16, 3}, std::vector<int>{14, 32, 32, 3},
                            std::vector<int>{14, 64, 64, 64, 3}, std::vector<int>{20, 32, 32, 32, 9}}) {
    Mlp<float> net(sizes, Activation::kLeakyRelu, Activation::kLinear, 9);
    const QuantizedMlp q = quantize(net);
    const Mlp<float> dq = q.dequantize();
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
      Eigen::VectorXf x(sizes.front());
      // FP16-representable inputs so the comparison isolates the weight path.
      for (auto& v : x) v = float(Eigen::half(float(2 * rng.uniform() - 1)));
      const Eigen::VectorXf ref = dq.forward(x);
      Eigen::VectorXf out(ref.size());
      q.fused_forward({x.data(), std::size_t(x.size())}, {out.data(), std::size_t(out.size())});
      for (Eigen::Index k = 0; k < ref.size(); ++k) EXPECT_NEAR(out[k], ref[k], 1e-5);
    }
  }
}

TEST(FusedForward, IdentityNetRoundsInputToHalf) {
  Mlp<float> net({4, 4}, Activation::kLinear, Activation::kLinear, 1);
  net.weight(0).setIdentity();
  net.bias(0).setZero();
  const QuantizedMlp q = quantize(net);
  const Eigen::Vector4f x(0.1f, 1.0f / 3.0f, -2.7182818f, 1000.123f);
  Eigen::Vector4f y;
  q.fused_forward({x.data(), 4}, {y.data(), 4});
  for (int i = 0; i < 4; ++i) EXPECT_EQ(y[i], float(Eigen::half(x[i])));
}

TEST(FusedForward, BatchMatchesPerSample) {
  Mlp<float> net({14, 32, 32, 3}, Activation::kLeakyRelu, Activation::kLinear, 5);
  const QuantizedMlp q = quantize(net);
  const int n = 37;  // not a multiple of the lane count
  Eigen::MatrixXf x = Eigen::MatrixXf::Random(14, n);
  Eigen::MatrixXf batched(3, n);
  q.fused_forward_batch(x.data(), batched.data(), n);
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3f y;
    q.fused_forward({x.col(i).data(), 14}, {y.data(), 3});
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(batched(k, i), y[k], 1e-6f);
  }
}

}  // namespace
}  // namespace neumat
