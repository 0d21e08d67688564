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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedpeft/dataset.h"

namespace fedpeft {

struct RankResult {
  std::uint32_t user = 0;
  std::size_t rank = 0;        // 1-based
  std::size_t candidates = 0;  // test item included
};

// 1 + number of other candidates scoring at least as high as the test item,
// so ties count against it.
std::size_t rank_of(double test_score, std::span<const double> other_scores);

int hr_at_k(std::size_t rank, std::size_t k);
double ndcg_at_k(std::size_t rank, std::size_t k);

// Fills `out` with scores for `items` from the user's point of view. Must be
// safe to call concurrently for different users.
using Scorer = std::function<void(std::uint32_t user, std::span<const std::uint32_t> items,
                                  std::span<double> out)>;

struct EvalOptions {
  std::vector<std::size_t> ks = {10, 20};
  // Rank against every item the user has not trained on instead of the fixed
  // sampled negatives.
  bool full_ranking = false;
  std::size_t workers = 1;
};

struct MetricTable {
  std::vector<std::size_t> ks;
  std::vector<double> hr;    // fractions in [0, 1], one per K
  std::vector<double> ndcg;
  std::size_t users = 0;

  // "n@10,h@10,n@20,h@20,..."
  std::string csv_header() const;
  // Percentages with two decimals, in header order.
  std::string csv_row() const;
  double hr_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

RankResult rank_test_item(const Scorer& scorer, const EvalSplit& split, std::uint32_t user,
                          bool full_ranking = false);

std::vector<RankResult> rank_all(const Scorer& scorer, const EvalSplit& split,
                                 const EvalOptions& options);

MetricTable summarize(std::span<const RankResult> ranks, std::span<const std::size_t> ks);

MetricTable evaluate(const Scorer& scorer, const EvalSplit& split, const EvalOptions& options);

// Indices of the k highest scores, ties to the lower index.
std::vector<std::uint32_t> top_k(std::span<const double> scores, std::size_t k);

}  // namespace fedpeft
