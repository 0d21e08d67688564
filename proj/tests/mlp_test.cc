// Copyright 2026 The fedpeft Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedpeft/mlp.h"

#include <cmath>

#include <gtest/gtest.h>

#include "fedpeft/rng.h"
#include "test_support.h"

namespace fedpeft {
namespace {

using testing::gradients_agree;
using testing::numeric_derivative;

TEST(Mlp, ZeroWeightsSigmoidOutputIsHalf) {
  Mlp net({3, 4, 2}, {Activation::kRelu, Activation::kSigmoid});
  const Vector out = mlp_forward(net, Vector{1.0, -2.0, 3.0}, Mode::kEval);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], 0.5);
  EXPECT_EQ(out[1], 0.5);
}

TEST(Mlp, IdentityReluLayer) {
  Mlp net({2, 2}, {Activation::kRelu});
  auto& w = net.mutable_layers()[0].weight;
  w(0, 0) = 1.0f;
  w(1, 1) = 1.0f;
  const Vector out = mlp_forward(net, Vector{-1.0, 2.0}, Mode::kEval);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 2.0);
}

TEST(Mlp, MatchesHandComputedChain) {
  Mlp net({2, 3, 1}, {Activation::kRelu, Activation::kIdentity});
  const float w0[3][2] = {{0.5f, -1.0f}, {1.5f, 0.25f}, {-0.75f, 2.0f}};
  const float b0[3] = {0.1f, -0.2f, 0.3f};
  const float w1[3] = {1.0f, -2.0f, 0.5f};
  const float b1 = 0.05f;
  auto& layers = net.mutable_layers();
  for (int o = 0; o < 3; ++o) {
    for (int i = 0; i < 2; ++i) layers[0].weight(o, i) = w0[o][i];
    layers[0].bias(0, o) = b0[o];
    layers[1].weight(0, o) = w1[o];
  }
  layers[1].bias(0, 0) = b1;

  const double x[2] = {0.8, -0.4};
  double expected = b1;
  for (int o = 0; o < 3; ++o) {
    double h = b0[o];
    for (int i = 0; i < 2; ++i) h += static_cast<double>(w0[o][i]) * x[i];
    expected += static_cast<double>(w1[o]) * std::max(h, 0.0);
  }
  const Vector out = mlp_forward(net, Vector{x[0], x[1]}, Mode::kEval);
  EXPECT_NEAR(out[0], expected, 1e-12);
}

TEST(Mlp, DimensionMismatchThrows) {
  Mlp net({3, 1}, {Activation::kIdentity});
  EXPECT_THROW(mlp_forward(net, Vector{1.0, 2.0}, Mode::kEval), Error);
}

TEST(Mlp, NonFiniteInputThrows) {
  Mlp net({2, 1}, {Activation::kIdentity});
  EXPECT_THROW(mlp_forward(net, Vector{1.0, std::nan("")}, Mode::kEval), Error);
}

TEST(Mlp, InconsistentLayerSpecThrows) {
  EXPECT_THROW(Mlp({2, 3}, {Activation::kRelu, Activation::kRelu}), Error);
}

TEST(Mlp, LinearLayerGradientIsOuterProduct) {
  RngStream rng(1, {});
  Mlp net = Mlp::glorot({3, 2}, {Activation::kIdentity}, 0.0, rng);
  const Vector x = {0.3, -1.2, 2.0};
  MlpCache cache;
  mlp_forward(net, x, Mode::kEval, nullptr, &cache);
  const Vector g = {0.7, -0.4};
  MlpGrads grads;
  const Vector dx = mlp_backward(net, cache, g, grads);
  for (int o = 0; o < 2; ++o) {
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(grads.weight[0](o, i), g[o] * x[i]);
    EXPECT_DOUBLE_EQ(grads.bias[0][o], g[o]);
  }
  for (int i = 0; i < 3; ++i) {
    const double want = g[0] * net.layers()[0].weight(0, i) + g[1] * net.layers()[0].weight(1, i);
    EXPECT_NEAR(dx[i], want, 1e-12);
  }
}

TEST(Mlp, ZeroOutputGradGivesZeroGradients) {
  RngStream rng(2, {});
  Mlp net = Mlp::glorot({4, 5, 3}, {Activation::kRelu, Activation::kSigmoid}, 0.0, rng);
  MlpCache cache;
  mlp_forward(net, Vector{1, 2, 3, 4}, Mode::kEval, nullptr, &cache);
  MlpGrads grads;
  const Vector dx = mlp_backward(net, cache, Vector(3, 0.0), grads);
  for (double v : dx) EXPECT_EQ(v, 0.0);
  for (const auto& w : grads.weight) {
    for (double v : w.values()) EXPECT_EQ(v, 0.0);
  }
  for (const auto& b : grads.bias) {
    for (double v : b) EXPECT_EQ(v, 0.0);
  }
}

TEST(Mlp, StaleCacheThrows) {
  RngStream rng(3, {});
  Mlp net = Mlp::glorot({2, 2}, {Activation::kIdentity}, 0.0, rng);
  MlpCache cache;
  mlp_forward(net, Vector{1, 2}, Mode::kEval, nullptr, &cache);
  net.mutable_layers()[0].weight(0, 0) += 1.0f;
  MlpGrads grads;
  EXPECT_THROW(mlp_backward(net, cache, Vector{1, 1}, grads), Error);
}

TEST(Mlp, EvalModeIsDeterministicAndIgnoresDropout) {
  RngStream rng(4, {});
  Mlp net = Mlp::glorot({4, 8, 1}, {Activation::kRelu, Activation::kIdentity}, 0.5, rng);
  const Vector x = {0.1, 0.2, 0.3, 0.4};
  const Vector a = mlp_forward(net, x, Mode::kEval);
  const Vector b = mlp_forward(net, x, Mode::kEval);
  EXPECT_EQ(a, b);
}

TEST(Mlp, TrainModeDropoutNeedsRng) {
  RngStream rng(5, {});
  Mlp net = Mlp::glorot({4, 8, 1}, {Activation::kRelu, Activation::kIdentity}, 0.5, rng);
  EXPECT_THROW(mlp_forward(net, Vector{1, 2, 3, 4}, Mode::kTrain), Error);
}

TEST(Mlp, DropoutMasksFollowStreamKey) {
  RngStream init(6, {});
  Mlp net = Mlp::glorot({4, 16, 1}, {Activation::kRelu, Activation::kIdentity}, 0.5, init);
  const Vector x = {0.5, -0.5, 1.0, 2.0};
  RngStream a(7, {Purpose::kDropout, 1, 2, 0});
  RngStream b(7, {Purpose::kDropout, 1, 2, 0});
  EXPECT_EQ(mlp_forward(net, x, Mode::kTrain, &a), mlp_forward(net, x, Mode::kTrain, &b));
}

// Finite-difference agreement for every activation, with dropout active.
class MlpGradientTest : public ::testing::TestWithParam<Activation> {};

TEST_P(MlpGradientTest, MatchesFiniteDifferences) {
  const Activation hidden = GetParam();
  int checked = 0;
  for (std::uint64_t trial = 0; checked < 10; ++trial) {
    ASSERT_LT(trial, 200u) << "could not draw kink-free instances";
    RngStream rng(100 + trial, {Purpose::kTest, 0, 0, 0});
    Mlp net = Mlp::glorot({3, 5, 4, 2}, {hidden, hidden, Activation::kSigmoid}, 0.3, rng);
    for (auto& layer : net.mutable_layers()) testing::fill_normal(layer.bias, 0.5, rng);
    Vector x(3);
    for (double& v : x) v = rng.normal();
    const Vector weights = {rng.normal(), rng.normal()};
    const StreamKey mask_key{Purpose::kDropout, trial, 0, 0};

    MlpCache cache;
    RngStream mask(9, mask_key);
    mlp_forward(net, x, Mode::kTrain, &mask, &cache);
    bool near_kink = false;
    if (hidden == Activation::kRelu) {
      for (std::size_t l = 0; l + 1 < cache.pre.size(); ++l) {
        for (double p : cache.pre[l]) near_kink |= std::abs(p) < 1e-2;
      }
    }
    if (near_kink) continue;
    ++checked;

    auto loss_of = [&](const Vector& input) {
      RngStream m(9, mask_key);
      const Vector out = mlp_forward(net, input, Mode::kTrain, &m);
      return weights[0] * out[0] + weights[1] * out[1];
    };
    MlpGrads grads;
    const Vector dx = mlp_backward(net, cache, weights, grads);

    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      const std::size_t rows = net.layers()[l].weight.rows();
      const std::size_t cols = net.layers()[l].weight.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          float& p = net.mutable_layers()[l].weight(r, c);
          const double num = numeric_derivative(p, [&] { return loss_of(x); });
          EXPECT_TRUE(gradients_agree(grads.weight[l](r, c), num))
              << "W" << l << "(" << r << "," << c << ") analytic " << grads.weight[l](r, c)
              << " numeric " << num;
        }
        float& b = net.mutable_layers()[l].bias(0, r);
        const double num = numeric_derivative(b, [&] { return loss_of(x); });
        EXPECT_TRUE(gradients_agree(grads.bias[l][r], num)) << "b" << l << "[" << r << "]";
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vector hi = x;
      Vector lo = x;
      hi[i] += 1e-5;
      lo[i] -= 1e-5;
      const double num = (loss_of(hi) - loss_of(lo)) / 2e-5;
      EXPECT_TRUE(gradients_agree(dx[i], num)) << "input " << i;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Activations, MlpGradientTest,
                         ::testing::Values(Activation::kRelu, Activation::kSigmoid,
                                           Activation::kIdentity));

TEST(Mlp, TensorRoundTrip) {
  RngStream rng(8, {});
  Mlp net = Mlp::glorot({3, 4, 2}, {Activation::kRelu, Activation::kIdentity}, 0.0, rng);
  const std::vector<Matrix> tensors = to_tensors(net);
  ASSERT_EQ(tensors.size(), 4u);
  Mlp other({3, 4, 2}, {Activation::kRelu, Activation::kIdentity});
  assign_tensors(other, tensors);
  EXPECT_EQ(to_tensors(other), tensors);
  EXPECT_EQ(net.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
}

}  // namespace
}  // namespace fedpeft
