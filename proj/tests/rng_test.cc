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

#include "fedpeft/rng.h"

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

namespace fedpeft {
namespace {

TEST(RngStream, SameKeySameSequence) {
  RngStream a(42, {Purpose::kDropout, 3, 7, 0});
  RngStream b(42, {Purpose::kDropout, 3, 7, 0});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, IndependentOfOtherStreams) {
  RngStream first(9, {Purpose::kInit, 1, 0, 0});
  const double expected = first.uniform();
  RngStream other(9, {Purpose::kInit, 2, 0, 0});
  for (int i = 0; i < 1000; ++i) other.next_u64();
  RngStream again(9, {Purpose::kInit, 1, 0, 0});
  EXPECT_EQ(again.uniform(), expected);
}

TEST(RngStream, KeysSeparateStreams) {
  const StreamKey keys[] = {{Purpose::kDropout, 0, 0, 0},
                            {Purpose::kDropout, 1, 0, 0},
                            {Purpose::kDropout, 0, 1, 0},
                            {Purpose::kDropout, 0, 0, 1},
                            {Purpose::kInit, 0, 0, 0}};
  std::set<std::uint64_t> firsts;
  for (const StreamKey& k : keys) firsts.insert(RngStream(5, k).next_u64());
  EXPECT_EQ(firsts.size(), std::size(keys));
  EXPECT_NE(RngStream(5, keys[0]).next_u64(), RngStream(6, keys[0]).next_u64());
}

TEST(RngStream, UniformRange) {
  RngStream rng(1, {});
  double lo = 1.0;
  double hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1.0 - 1e-3);
}

TEST(RngStream, NormalMoments) {
  RngStream rng(2, {});
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.02);
}

TEST(RngStream, BelowIsUniform) {
  RngStream rng(3, {});
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7, n / 7 * 0.05);
}

TEST(RngStream, SampleWithoutReplacementDistinct) {
  RngStream rng(4, {});
  for (std::size_t count : {0u, 1u, 5u, 50u, 100u}) {
    const auto picked = rng.sample_without_replacement(100, count);
    ASSERT_EQ(picked.size(), count);
    std::set<std::size_t> unique(picked.begin(), picked.end());
    EXPECT_EQ(unique.size(), count);
    for (std::size_t v : picked) EXPECT_LT(v, 100u);
  }
}

TEST(RngStream, SampleMoreThanPopulationThrows) {
  RngStream rng(4, {});
  EXPECT_THROW(rng.sample_without_replacement(3, 4), std::exception);
}

TEST(RngStream, ShuffleIsPermutation) {
  RngStream rng(5, {});
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(std::span(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

}  // namespace
}  // namespace fedpeft
