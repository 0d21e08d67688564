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

#include <cmath>

#include "fedpeft/rng.h"

namespace fedpeft {

std::string_view to_string(DpMode mode) {
  switch (mode) {
    case DpMode::kNone:
      return "none";
    case DpMode::kLdp:
      return "ldp";
    case DpMode::kCdp:
      return "cdp";
  }
  return "unknown";
}

DpMode parse_dp_mode(std::string_view name) {
  for (DpMode m : {DpMode::kNone, DpMode::kLdp, DpMode::kCdp}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError(fmt::format("dp.mode: unknown mode '{}' (expected none, ldp or cdp)", name));
}

void validate(const DpConfig& config) {
  if (!(config.delta >= 0.0) || !std::isfinite(config.delta)) {
    throw ConfigError(fmt::format("dp.delta: Laplace scale must be >= 0, got {}", config.delta));
  }
  if (config.clip && !(*config.clip > 0.0)) {
    throw ConfigError(fmt::format("dp.clip: bound must be > 0, got {}", *config.clip));
  }
}

double laplace_sample(double scale, RngStream& rng) {
  FEDPEFT_CHECK(scale >= 0.0, "Laplace scale must be >= 0, got {}", scale);
  if (scale == 0.0) return 0.0;
  // u in (-1/2, 1/2); the endpoint -1/2 would map to -inf.
  double u;
  do {
    u = rng.uniform() - 0.5;
  } while (u == -0.5);
  const double magnitude = -scale * std::log1p(-2.0 * std::abs(u));
  return u < 0.0 ? -magnitude : magnitude;
}

std::vector<double> laplace_noise(std::size_t count, double scale, RngStream& rng) {
  FEDPEFT_CHECK(scale >= 0.0, "Laplace scale must be >= 0, got {}", scale);
  std::vector<double> out(count);
  for (double& v : out) v = laplace_sample(scale, rng);
  return out;
}

void add_laplace(std::span<Matrix> tensors, double scale, RngStream& rng) {
  FEDPEFT_CHECK(scale >= 0.0, "Laplace scale must be >= 0, got {}", scale);
  if (scale == 0.0) return;
  for (Matrix& m : tensors) {
    for (float& v : m.values()) {
      v = static_cast<float>(static_cast<double>(v) + laplace_sample(scale, rng));
    }
  }
}

void apply_ldp(std::span<Matrix> upload, std::span<const Matrix> snapshot, const DpConfig& config,
               RngStream& rng) {
  if (config.mode != DpMode::kLdp) return;
  validate(config);
  if (config.clip) {
    FEDPEFT_CHECK(upload.size() == snapshot.size(), "clipping needs the snapshot of every tensor");
    double norm2 = 0.0;
    for (std::size_t t = 0; t < upload.size(); ++t) {
      FEDPEFT_CHECK(upload[t].same_shape(snapshot[t]), "upload tensor {} shape mismatch", t);
      const auto p = upload[t].values();
      const auto s = snapshot[t].values();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(s[i]);
        norm2 += d * d;
      }
    }
    const double norm = std::sqrt(norm2);
    if (norm > *config.clip) {
      const double factor = *config.clip / norm;
      for (std::size_t t = 0; t < upload.size(); ++t) {
        auto p = upload[t].values();
        const auto s = snapshot[t].values();
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double base = static_cast<double>(s[i]);
          p[i] = static_cast<float>(base + factor * (static_cast<double>(p[i]) - base));
        }
      }
    }
  }
  add_laplace(upload, config.delta, rng);
}

void apply_cdp(std::span<Matrix> aggregate, const DpConfig& config, RngStream& rng) {
  if (config.mode != DpMode::kCdp) return;
  validate(config);
  add_laplace(aggregate, config.delta, rng);
}

}  // namespace fedpeft
