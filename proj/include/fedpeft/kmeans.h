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

#include <span>
#include <vector>

#include "fedpeft/tensor.h"

namespace fedpeft {

class RngStream;

struct KMeansResult {
  std::vector<Vector> centroids;
  std::vector<std::size_t> assignments;
  // Sum of squared distances to the assigned centroid, one entry per
  // assignment pass (iters + 1 passes).
  std::vector<double> objective;
};

// Index of the nearest centroid; ties go to the lowest index.
std::size_t nearest_centroid(std::span<const double> point, std::span<const Vector> centroids);

// Lloyd's algorithm. Initial centroids are `k` distinct points sampled without
// replacement; when fewer than `k` distinct points exist the remaining
// centroids are copies of distinct points. A centroid that loses all of its
// points is re-seeded from a random point.
KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::size_t iters,
                    RngStream& rng);

}  // namespace fedpeft
