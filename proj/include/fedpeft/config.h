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
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "fedpeft/backbone.h"
#include "fedpeft/dataset.h"
#include "fedpeft/embedding.h"
#include "fedpeft/privacy.h"

namespace fedpeft {

enum class DataSource : std::uint8_t { kSynthetic = 0, kMl1m = 1, kAmazonCsv = 2 };

struct DataConfig {
  DataSource source = DataSource::kSynthetic;
  std::string path;           // interaction log for ml1m / amazon
  std::string features_path;  // optional item feature file; synthesized when empty
  SyntheticLogSpec synthetic;
  std::size_t feature_dim = 64;  // k_p for synthesized features
};

struct PretrainConfig {
  bool enabled = true;  // false: E starts from U(-0.01, 0.01)
  std::vector<std::size_t> hidden = {512, 256, 128};
  std::size_t steps = 10000;
  std::size_t batch = 256;
  double lr = 1e-3;
  std::size_t rq_steps = 10000;
  std::size_t kmeans_iters = 10;
  double rq_beta = 0.25;
};

enum class Aggregation : std::uint8_t { kParams = 0, kDeltas = 1 };
enum class Weighting : std::uint8_t { kUniform = 0, kInteractions = 1 };

struct FederationConfig {
  double sample_ratio = 0.1;  // S
  std::size_t local_epochs = 2;
  std::size_t rounds = 1000;
  std::size_t warmup_rounds = 10;
  double lr = 0.01;
  std::size_t batch = 1;  // local minibatch size
  std::size_t train_negatives = 4;
  Aggregation aggregation = Aggregation::kParams;
  Weighting weighting = Weighting::kUniform;
  double server_lr = 1.0;  // deltas mode only
};

struct EvalConfig {
  std::vector<std::size_t> ks = {10, 20};
  std::size_t negatives = 99;
  std::size_t every = 10;
  bool full_ranking = false;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output = "fedpeft-out";
  std::size_t workers = 1;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
};

struct ExperimentConfig {
  DataConfig data;
  BackboneConfig backbone;
  StrategyConfig strategy;
  PretrainConfig pretrain;
  FederationConfig fed;
  DpConfig dp;
  EvalConfig eval;
  RunConfig run;
};

// Sets one key from its text form. Unknown keys and malformed values throw
// ConfigError naming the key.
void set_value(ExperimentConfig& config, std::string_view key, std::string_view value);

// Applies "key=value" assignments, e.g. from repeated --set flags.
void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments);

// Reads "key = value" lines. '#' starts a comment; a "[section]" line
// prefixes the keys that follow with "section.".
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

// Every key in sorted order as "key=value" lines.
std::string canonical_dump(const ExperimentConfig& config);
std::vector<std::string> config_keys();

// FNV-1a of the canonical dump without run.seed, run.output and
// run.workers, so it identifies what a run computes.
std::uint64_t config_hash(const ExperimentConfig& config);
std::string hash_hex(std::uint64_t hash);

// Structural checks always; tuning-grid checks unless `unsafe`.
void validate(const ExperimentConfig& config, bool unsafe = false);

}  // namespace fedpeft
