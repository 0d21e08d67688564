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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedpeft/tensor.h"

namespace fedpeft {

class RngStream;

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  float rating = 0.0f;
  std::int64_t timestamp = 0;
};

// Implicit-feedback log with dense ids. `user_ids[u]` / `item_ids[i]` map a
// dense id back to the raw id found in the source file.
struct InteractionLog {
  std::vector<Interaction> records;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;

  // 1 - interactions / (users * items).
  double sparsity() const;
};

enum class LogFormat { kMl1m, kAmazonCsv };

// ML1M: `user::item::rating::timestamp`. Amazon: `user,item,rating,timestamp`
// with arbitrary string ids. Raw ids are remapped to dense ids in sorted
// order (numeric for ML1M, lexicographic for Amazon). Duplicate (user, item)
// pairs keep the record with the latest timestamp.
InteractionLog parse_interactions(std::istream& in, LogFormat format);
InteractionLog load_interactions(const std::filesystem::path& path, LogFormat format);

// Writes `kind<TAB>dense<TAB>raw` lines for users then items.
void write_id_map(const InteractionLog& log, const std::filesystem::path& path);

struct UserSplit {
  std::vector<std::uint32_t> train;      // sorted
  std::optional<std::uint32_t> test;     // latest interaction, if >= 2 interactions
  std::vector<std::uint32_t> negatives;  // fixed evaluation candidates
};

struct EvalSplit {
  std::size_t num_items = 0;
  std::vector<UserSplit> users;           // indexed by dense user id
  std::vector<std::uint32_t> test_users;  // users with a held-out item, ascending

  // Sorted train positives plus the test item.
  std::vector<std::uint32_t> positives(std::uint32_t user) const;
};

// Leave-one-out: each user's latest interaction (ties: larger item id) is
// held out; users with a single interaction keep it for training and are not
// evaluated. `eval_negatives` items are drawn per test user from the items
// the user never interacted with, from streams keyed by `seed`.
EvalSplit leave_one_out_split(const InteractionLog& log, std::size_t eval_negatives,
                              std::uint64_t seed);

// Uniform sample without replacement from [0, num_items) minus `positives`
// (which must be sorted).
std::vector<std::uint32_t> sample_negatives(std::span<const std::uint32_t> positives,
                                            std::size_t num_items, std::size_t count,
                                            RngStream& rng);

enum class FeatureSource { kFile, kSynthetic };

struct ItemFeatureMatrix {
  Matrix values;  // num_items x dim
  FeatureSource source = FeatureSource::kSynthetic;
  std::vector<std::uint32_t> category;  // synthetic only: latent cluster per item
};

// `item_id<TAB>v1,v2,...` keyed by raw item id. Every item of the log must
// appear; rows for unknown items are ignored.
ItemFeatureMatrix load_item_features(const std::filesystem::path& path, const InteractionLog& log);
ItemFeatureMatrix parse_item_features(std::istream& in, const InteractionLog& log);

// Items are grouped into `clusters` latent categories by k-means over a
// random sketch of their two-hop co-occurrence (item -> users -> items);
// each category gets a random direction and items receive that direction
// plus isotropic noise.
ItemFeatureMatrix synthetic_item_features(const InteractionLog& log, std::size_t dim,
                                          std::uint64_t seed, std::size_t clusters = 16);

// Category direction plus isotropic noise for items with known categories.
ItemFeatureMatrix category_features(std::span<const std::uint32_t> category, std::size_t dim,
                                    std::uint64_t seed, double noise = 0.5);

struct SyntheticLogSpec {
  std::size_t users = 200;
  std::size_t items = 100;
  std::size_t clusters = 16;
  std::size_t min_interactions = 4;
  std::size_t max_interactions = 10;
  // Probability that an interaction comes from the user's preferred cluster.
  double affinity = 0.8;
  std::uint64_t seed = 1;
};

// Users with clustered preferences over items; item i belongs to cluster
// `i % clusters` before a seeded permutation of ids.
InteractionLog synthetic_interactions(const SyntheticLogSpec& spec);

// Latent cluster of every item of synthetic_interactions(spec).
std::vector<std::uint32_t> synthetic_item_clusters(const SyntheticLogSpec& spec);

}  // namespace fedpeft
