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
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedpeft/backbone.h"
#include "fedpeft/config.h"
#include "fedpeft/dataset.h"
#include "fedpeft/embedding.h"
#include "fedpeft/metrics.h"

namespace fedpeft {

enum class Phase : std::uint8_t { kWarmUp = 0, kPeft = 1 };

std::string_view to_string(Phase phase);

// Server state Theta = {E (+ adapter), W_g}.
struct GlobalModel {
  ItemEmbeddings items;
  Backbone backbone;
  std::size_t round = 0;
  Phase phase = Phase::kWarmUp;
};

// Uploaded tensors in wire order: trainable embedding tensors, then W_g.
std::vector<Matrix> upload_tensors(const ItemEmbeddings& items, const Backbone& backbone);
void assign_upload(ItemEmbeddings& items, Backbone& backbone, std::span<const Matrix> tensors);
std::size_t shared_weight_bytes(const Backbone& backbone);

// ceil(S * m) distinct ids drawn uniformly without replacement from a stream
// keyed by (seed, round), returned in ascending order.
std::vector<std::uint32_t> select_clients(std::size_t num_clients, double sample_ratio,
                                          std::uint64_t seed, std::size_t round);

struct ClientUpdate {
  std::uint32_t client = 0;
  std::vector<Matrix> tensors;
  std::size_t bytes = 0;       // serialized upload size
  double loss = 0.0;           // mean BCE over all local samples
  std::size_t interactions = 0;
  bool no_data = false;        // nothing to train on; excluded from aggregation
};

struct RoundContext {
  const GlobalModel* model = nullptr;
  std::span<const Matrix> snapshot;  // upload_tensors() of `model`
  FederationConfig fed;
  DpConfig dp;
  std::uint64_t seed = 1;
  std::size_t round = 0;
};

// Local training of one client on private copies of the snapshot. The
// user's local state persists through `user`.
ClientUpdate client_round(const RoundContext& context, std::uint32_t client, UserState& user,
                          std::span<const std::uint32_t> train_positives);

struct AggregateOptions {
  Aggregation mode = Aggregation::kParams;
  Weighting weighting = Weighting::kUniform;
  double server_lr = 1.0;
};

// Streaming mean in double precision. Adding updates in the same order
// always gives the same bits.
class Aggregator {
 public:
  Aggregator(std::span<const Matrix> snapshot, AggregateOptions options);

  void add(const ClientUpdate& update);
  std::size_t count() const { return count_; }
  std::vector<Matrix> finish() const;

 private:
  std::vector<Matrix> snapshot_;
  AggregateOptions options_;
  std::vector<std::vector<double>> sums_;
  double weight_ = 0.0;
  std::size_t count_ = 0;
};

// Mean over updates in ascending client order, so the result does not depend
// on the order of `updates`. `snapshot` is needed only for delta mode.
std::vector<Matrix> aggregate(std::span<const ClientUpdate> updates,
                              const AggregateOptions& options = {},
                              std::span<const Matrix> snapshot = {});

struct ExperimentData {
  InteractionLog log;
  EvalSplit split;
  Matrix initial_embeddings;        // n x k; empty when only the split was prepared
  std::optional<CodeTable> codes;   // RQ-VAE semantic codes
  std::vector<double> pretrain_loss;
  std::vector<double> rq_loss;
};

InteractionLog load_log(const ExperimentConfig& config);
// Drops every user's held-out interaction.
InteractionLog training_log(const InteractionLog& log, const EvalSplit& split);
ExperimentData prepare_data(const ExperimentConfig& config);
ExperimentData prepare_data(const ExperimentConfig& config, InteractionLog log,
                            std::optional<ItemFeatureMatrix> features = std::nullopt);
ExperimentData prepare_split(const ExperimentConfig& config);

struct RoundReport {
  std::size_t round = 0;  // 0-based index of the round just run
  Phase phase = Phase::kWarmUp;
  std::vector<std::uint32_t> clients;
  std::size_t trained_clients = 0;
  std::size_t bytes_per_client = 0;
  std::size_t aggregate_bytes = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
  std::uint64_t base_hash = 0;    // fingerprint of E after the round
  std::uint64_t frozen_hash = 0;  // E, hash functions and codes
};

struct EvalRecord {
  std::size_t round = 0;  // rounds completed
  Phase phase = Phase::kWarmUp;
  MetricTable metrics;
};

class Experiment {
 public:
  Experiment(ExperimentConfig config, ExperimentData data);

  const ExperimentConfig& config() const { return config_; }
  const ExperimentData& data() const { return data_; }
  const GlobalModel& model() const { return model_; }
  std::size_t round() const { return model_.round; }
  bool done() const { return model_.round >= config_.fed.rounds; }

  // True when the next round is the first PEFT round and the adapter has not
  // been attached yet.
  bool peft_due() const;
  // Freezes E and attaches a freshly initialized adapter.
  void begin_peft();

  RoundReport step();

  Scorer scorer() const;
  MetricTable evaluate() const;
  // Scores of every item for a user, in item order.
  std::vector<double> item_scores(std::uint32_t user) const;
  std::vector<std::uint32_t> top_items(std::uint32_t user, std::size_t k) const;

  // Local state of a user; users never selected keep their initial state.
  UserState user_state(std::uint32_t user) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  static Experiment load_checkpoint(const std::filesystem::path& path);

 private:
  UserState& materialize(std::uint32_t user);

  ExperimentConfig config_;
  ExperimentData data_;
  GlobalModel model_;
  std::vector<std::optional<UserState>> users_;
};

struct RunSinks {
  std::function<void(const EvalRecord&)> on_eval;
  std::function<void(const RoundReport&)> on_round;
  std::function<void(const Experiment&)> on_checkpoint;
};

struct RunResult {
  std::vector<EvalRecord> evals;
  std::vector<RoundReport> rounds;
};

// Evaluates before the first round, right after the adapter is attached,
// every eval.every rounds and after the last round.
RunResult run_experiment(Experiment& experiment, const RunSinks& sinks = {});

}  // namespace fedpeft
