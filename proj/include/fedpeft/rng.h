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

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace fedpeft {

// Every random decision in a run draws from a stream keyed by what it is for,
// not by when it is requested. Two streams with the same (seed, key) produce
// the same sequence regardless of how many other streams were used before.
enum class Purpose : std::uint32_t {
  kInit = 1,
  kClientSelection,
  kLocalTraining,
  kDropout,
  kTrainNegatives,
  kEvalNegatives,
  kFeatures,
  kSynthetic,
  kPretrain,
  kKMeans,
  kHashFunctions,
  kClientNoise,
  kServerNoise,
  kTest,
};

struct StreamKey {
  Purpose purpose = Purpose::kTest;
  std::uint64_t client = 0;
  std::uint64_t round = 0;
  std::uint64_t salt = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

class RngStream {
 public:
  RngStream(std::uint64_t seed, StreamKey key);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller.
  double normal();
  // Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

  // `count` distinct values from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace fedpeft
