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

#include "fedpeft/kmeans.h"

#include <algorithm>
#include <limits>

#include "fedpeft/rng.h"

namespace fedpeft {

std::size_t nearest_centroid(std::span<const double> point, std::span<const Vector> centroids) {
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(point, centroids[c]);
    if (d < best_dist) {
      best_dist = d;
      best = c;
    }
  }
  return best;
}

namespace {

double assign(std::span<const Vector> points, std::span<const Vector> centroids,
              std::vector<std::size_t>& assignments) {
  double objective = 0.0;
  for (std::size_t p = 0; p < points.size(); ++p) {
    assignments[p] = nearest_centroid(points[p], centroids);
    objective += squared_distance(points[p], centroids[assignments[p]]);
  }
  return objective;
}

}  // namespace

KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::size_t iters,
                    RngStream& rng) {
  FEDPEFT_CHECK(!points.empty(), "kmeans over an empty point set");
  FEDPEFT_CHECK(k >= 1, "kmeans requires k >= 1");
  const std::size_t dim = points.front().size();
  for (const Vector& p : points) {
    FEDPEFT_CHECK(p.size() == dim, "kmeans points have mixed dimensions {} and {}", dim,
                  p.size());
  }

  // First occurrence of each distinct point, in input order.
  std::vector<std::size_t> distinct;
  {
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (i == 0 || points[order[i]] != points[order[i - 1]]) distinct.push_back(order[i]);
    }
    std::sort(distinct.begin(), distinct.end());
  }

  KMeansResult result;
  const std::size_t seeded = std::min(k, distinct.size());
  for (std::size_t idx : rng.sample_without_replacement(distinct.size(), seeded)) {
    result.centroids.push_back(points[distinct[idx]]);
  }
  for (std::size_t c = seeded; c < k; ++c) {
    result.centroids.push_back(points[distinct[c % distinct.size()]]);
  }

  result.assignments.assign(points.size(), 0);
  for (std::size_t it = 0; it < iters; ++it) {
    result.objective.push_back(assign(points, result.centroids, result.assignments));

    std::vector<Vector> sums(k, Vector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < points.size(); ++p) {
      const std::size_t c = result.assignments[p];
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[p][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t d = 0; d < dim; ++d) {
          result.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
      } else if (distinct.size() > k) {
        result.centroids[c] = points[rng.below(points.size())];
      }
    }
  }
  result.objective.push_back(assign(points, result.centroids, result.assignments));
  return result;
}

}  // namespace fedpeft
