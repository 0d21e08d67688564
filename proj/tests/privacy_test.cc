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

#include "fedpeft/privacy.h"

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fedpeft/rng.h"

namespace fedpeft {
namespace {

double variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / static_cast<double>(v.size() - 1);
}

TEST(Laplace, ZeroScaleIsExactZero) {
  RngStream rng(1, {});
  for (double v : laplace_noise(100, 0.0, rng)) EXPECT_EQ(v, 0.0);
}

TEST(Laplace, NegativeScaleThrows) {
  RngStream rng(1, {});
  EXPECT_THROW(laplace_noise(3, -0.1, rng), Error);
  DpConfig c;
  c.mode = DpMode::kLdp;
  c.delta = -1.0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Laplace, VarianceAndMedian) {
  constexpr std::size_t kN = 1000000;
  const double delta = 0.1;
  RngStream rng(2, {Purpose::kTest, 0, 0, 0});
  std::vector<double> s = laplace_noise(kN, delta, rng);
  EXPECT_NEAR(variance(s), 2 * delta * delta, 0.02 * 2 * delta * delta);
  std::nth_element(s.begin(), s.begin() + kN / 2, s.end());
  EXPECT_LT(std::abs(s[kN / 2]), 3 * delta / std::sqrt(static_cast<double>(kN)));
}

TEST(Laplace, KeyedStreamsDiffer) {
  RngStream a(3, {Purpose::kClientNoise, 1, 5, 0});
  RngStream b(3, {Purpose::kClientNoise, 2, 5, 0});
  RngStream c(3, {Purpose::kClientNoise, 1, 6, 0});
  const auto na = laplace_noise(8, 1.0, a);
  EXPECT_NE(na, laplace_noise(8, 1.0, b));
  EXPECT_NE(na, laplace_noise(8, 1.0, c));
  RngStream again(3, {Purpose::kClientNoise, 1, 5, 0});
  EXPECT_EQ(na, laplace_noise(8, 1.0, again));
}

TEST(Dp, NoneIsPassthrough) {
  std::vector<Matrix> t = {Matrix(2, 2, 1.5f)};
  const auto before = t;
  DpConfig c;
  c.delta = 10.0;
  RngStream rng(4, {});
  apply_ldp(t, before, c, rng);
  apply_cdp(t, c, rng);
  EXPECT_EQ(t, before);
}

TEST(Dp, ZeroDeltaIsBitIdentical) {
  std::vector<Matrix> t = {Matrix(3, 2, 0.25f)};
  const auto before = t;
  for (DpMode mode : {DpMode::kLdp, DpMode::kCdp}) {
    DpConfig c;
    c.mode = mode;
    RngStream rng(5, {});
    apply_ldp(t, before, c, rng);
    apply_cdp(t, c, rng);
    EXPECT_EQ(t, before);
  }
}

TEST(Dp, ModesOnlyActOnTheirSide) {
  std::vector<Matrix> t = {Matrix(2, 2)};
  const auto zero = t;
  DpConfig ldp{DpMode::kLdp, 1.0, std::nullopt};
  DpConfig cdp{DpMode::kCdp, 1.0, std::nullopt};
  RngStream rng(6, {});
  apply_cdp(t, ldp, rng);
  EXPECT_EQ(t, zero);
  apply_ldp(t, zero, cdp, rng);
  EXPECT_EQ(t, zero);
  apply_ldp(t, zero, ldp, rng);
  EXPECT_NE(t, zero);
}

TEST(Dp, ClipBoundsUpdateNorm) {
  std::vector<Matrix> snapshot = {Matrix(1, 2)};
  std::vector<Matrix> upload = {Matrix(1, 2)};
  upload[0](0, 0) = 3.0f;
  upload[0](0, 1) = 4.0f;
  DpConfig c{DpMode::kLdp, 0.0, 1.0};
  RngStream rng(7, {});
  apply_ldp(upload, snapshot, c, rng);
  EXPECT_NEAR(upload[0](0, 0), 0.6, 1e-6);
  EXPECT_NEAR(upload[0](0, 1), 0.8, 1e-6);
}

// Mean over c clients of independently noised copies of one value.
double ldp_mean_variance(std::size_t clients, double delta, std::size_t trials) {
  std::vector<double> means(trials);
  const std::vector<Matrix> snapshot = {Matrix(1, 1)};
  for (std::size_t t = 0; t < trials; ++t) {
    double sum = 0.0;
    for (std::size_t c = 0; c < clients; ++c) {
      std::vector<Matrix> upload = snapshot;
      RngStream rng(8, {Purpose::kClientNoise, c, t, 0});
      apply_ldp(upload, snapshot, {DpMode::kLdp, delta, std::nullopt}, rng);
      sum += upload[0](0, 0);
    }
    means[t] = sum / static_cast<double>(clients);
  }
  return variance(means);
}

TEST(Dp, LdpMeanVarianceScalesWithClients) {
  const double delta = 0.1;
  const double v = ldp_mean_variance(10, delta, 100000);
  const double expected = 2 * delta * delta / 10;
  EXPECT_NEAR(v, expected, 0.05 * expected);
}

TEST(Dp, CdpVarianceIndependentOfClients) {
  const double delta = 0.1;
  std::vector<double> noise(100000);
  for (std::size_t t = 0; t < noise.size(); ++t) {
    std::vector<Matrix> agg = {Matrix(1, 1)};
    RngStream rng(9, {Purpose::kServerNoise, 0, t, 0});
    apply_cdp(agg, {DpMode::kCdp, delta, std::nullopt}, rng);
    noise[t] = agg[0](0, 0);
  }
  const double expected = 2 * delta * delta;
  EXPECT_NEAR(variance(noise), expected, 0.05 * expected);
}

TEST(Dp, NamesRoundTrip) {
  for (DpMode m : {DpMode::kNone, DpMode::kLdp, DpMode::kCdp}) {
    EXPECT_EQ(parse_dp_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_dp_mode("gauss"), ConfigError);
}

}  // namespace
}  // namespace fedpeft
