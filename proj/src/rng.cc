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

#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include "fedpeft/error.h"

namespace fedpeft {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, const StreamKey& key) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(key.purpose));
  h = splitmix64(h ^ key.client);
  h = splitmix64(h ^ key.round);
  h = splitmix64(h ^ key.salt);
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, StreamKey key) : engine_(derive_seed(seed, key)) {}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_normal_ = true;
  return radius * std::cos(angle);
}

std::uint64_t RngStream::below(std::uint64_t bound) {
  FEDPEFT_CHECK(bound > 0, "RngStream::below requires a positive bound");
  // Rejection removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n,
                                                               std::size_t count) {
  FEDPEFT_CHECK(count <= n, "cannot sample {} distinct values from {}", count, n);
  std::vector<std::size_t> out;
  out.reserve(count);
  if (count * 4 >= n) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + below(n - i)]);
      out.push_back(pool[i]);
    }
    return out;
  }
  std::unordered_set<std::size_t> seen;
  while (out.size() < count) {
    const std::size_t v = below(n);
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

}  // namespace fedpeft
