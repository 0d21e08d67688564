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

#include "fedpeft/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "fedpeft/error.h"
#include "fedpeft/parallel.h"

namespace fedpeft {

std::size_t rank_of(double test_score, std::span<const double> other_scores) {
  FEDPEFT_CHECK(!std::isnan(test_score), "test item score is NaN");
  std::size_t rank = 1;
  for (double s : other_scores) {
    FEDPEFT_CHECK(!std::isnan(s), "candidate score is NaN");
    if (s >= test_score) ++rank;
  }
  return rank;
}

int hr_at_k(std::size_t rank, std::size_t k) {
  FEDPEFT_CHECK(k >= 1, "cutoff K must be >= 1");
  FEDPEFT_CHECK(rank >= 1, "rank is 1-based");
  return rank <= k ? 1 : 0;
}

double ndcg_at_k(std::size_t rank, std::size_t k) {
  FEDPEFT_CHECK(k >= 1, "cutoff K must be >= 1");
  FEDPEFT_CHECK(rank >= 1, "rank is 1-based");
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

std::string MetricTable::csv_header() const {
  std::string out;
  for (std::size_t k : ks) {
    if (!out.empty()) out += ',';
    out += fmt::format("n@{},h@{}", k, k);
  }
  return out;
}

std::string MetricTable::csv_row() const {
  std::string out;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (!out.empty()) out += ',';
    out += fmt::format("{:.2f},{:.2f}", 100.0 * ndcg[i], 100.0 * hr[i]);
  }
  return out;
}

double MetricTable::hr_at(std::size_t k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  FEDPEFT_CHECK(it != ks.end(), "HR@{} was not evaluated", k);
  return hr[static_cast<std::size_t>(it - ks.begin())];
}

double MetricTable::ndcg_at(std::size_t k) const {
  const auto it = std::find(ks.begin(), ks.end(), k);
  FEDPEFT_CHECK(it != ks.end(), "NDCG@{} was not evaluated", k);
  return ndcg[static_cast<std::size_t>(it - ks.begin())];
}

RankResult rank_test_item(const Scorer& scorer, const EvalSplit& split, std::uint32_t user,
                          bool full_ranking) {
  FEDPEFT_CHECK(user < split.users.size(), "user {} out of range", user);
  const UserSplit& u = split.users[user];
  FEDPEFT_CHECK(u.test.has_value(), "user {} has no held-out item", user);

  std::vector<std::uint32_t> candidates = {*u.test};
  if (full_ranking) {
    for (std::uint32_t i = 0; i < split.num_items; ++i) {
      if (i != *u.test && !std::binary_search(u.train.begin(), u.train.end(), i)) {
        candidates.push_back(i);
      }
    }
  } else {
    candidates.insert(candidates.end(), u.negatives.begin(), u.negatives.end());
  }
  std::vector<double> scores(candidates.size());
  scorer(user, candidates, scores);
  RankResult r;
  r.user = user;
  r.candidates = candidates.size();
  r.rank = rank_of(scores[0], std::span<const double>(scores).subspan(1));
  return r;
}

std::vector<RankResult> rank_all(const Scorer& scorer, const EvalSplit& split,
                                 const EvalOptions& options) {
  std::vector<RankResult> ranks(split.test_users.size());
  parallel_for(ranks.size(), options.workers, [&](std::size_t i) {
    ranks[i] = rank_test_item(scorer, split, split.test_users[i], options.full_ranking);
  });
  return ranks;
}

MetricTable summarize(std::span<const RankResult> ranks, std::span<const std::size_t> ks) {
  MetricTable t;
  t.ks.assign(ks.begin(), ks.end());
  t.hr.assign(ks.size(), 0.0);
  t.ndcg.assign(ks.size(), 0.0);
  t.users = ranks.size();
  if (ranks.empty()) return t;
  for (std::size_t j = 0; j < ks.size(); ++j) {
    double hr = 0.0;
    double ndcg = 0.0;
    for (const RankResult& r : ranks) {
      hr += hr_at_k(r.rank, ks[j]);
      ndcg += ndcg_at_k(r.rank, ks[j]);
    }
    t.hr[j] = hr / static_cast<double>(ranks.size());
    t.ndcg[j] = ndcg / static_cast<double>(ranks.size());
  }
  return t;
}

MetricTable evaluate(const Scorer& scorer, const EvalSplit& split, const EvalOptions& options) {
  for (std::size_t k : options.ks) FEDPEFT_CHECK(k >= 1, "cutoff K must be >= 1");
  const std::vector<RankResult> ranks = rank_all(scorer, split, options);
  return summarize(ranks, options.ks);
}

std::vector<std::uint32_t> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::uint32_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

}  // namespace fedpeft
