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
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedpeft/tensor.h"

namespace fedpeft {

class RngStream;

enum class DpMode : std::uint8_t { kNone = 0, kLdp = 1, kCdp = 2 };

std::string_view to_string(DpMode mode);
DpMode parse_dp_mode(std::string_view name);

struct DpConfig {
  DpMode mode = DpMode::kNone;
  double delta = 0.0;          // Laplace scale
  std::optional<double> clip;  // L2 bound on a client's update, off by default
};

void validate(const DpConfig& config);

// One Laplace(0, scale) draw by inverse CDF. scale = 0 returns exactly 0
// without consuming randomness.
double laplace_sample(double scale, RngStream& rng);

std::vector<double> laplace_noise(std::size_t count, double scale, RngStream& rng);

// Adds i.i.d. Laplace noise in place, tensor by tensor in order.
void add_laplace(std::span<Matrix> tensors, double scale, RngStream& rng);

// Client side: optionally clips the update (params - snapshot) to the L2
// bound, then noises the uploaded tensors. No-op unless mode is LDP.
void apply_ldp(std::span<Matrix> upload, std::span<const Matrix> snapshot, const DpConfig& config,
               RngStream& rng);

// Server side: one noise draw on the aggregated tensors. No-op unless mode
// is CDP.
void apply_cdp(std::span<Matrix> aggregate, const DpConfig& config, RngStream& rng);

}  // namespace fedpeft
