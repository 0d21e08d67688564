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

#include "fedpeft/embedding.h"
#include "fedpeft/mlp.h"

namespace fedpeft {

class RngStream;

enum class BackboneKind : std::uint8_t { kFedMf = 0, kFedNcf = 1, kPFedRec = 2 };

std::string_view to_string(BackboneKind kind);
BackboneKind parse_backbone(std::string_view name);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::kFedMf;
  std::size_t dim = 32;
  // FedNCF: [2k, 128, 64] -> 1 over concat(user, item).
  std::vector<std::size_t> ncf_hidden = {128, 64};
  // PFedRec: [k, 64, 32] -> 1 over the item embedding, one per client.
  std::vector<std::size_t> pfedrec_hidden = {64, 32};
  double dropout = 0.5;
  // Half-width of the uniform initializer for user embeddings.
  double user_init = 0.01;
};

// Server-side scoring weights W_g; only FedNCF has any.
struct Backbone {
  BackboneKind kind = BackboneKind::kFedMf;
  std::optional<Mlp> shared;
};

// Client-private state; never part of an upload.
struct UserState {
  Matrix embedding;             // 1 x k (FedMF, FedNCF)
  std::optional<Mlp> personal;  // PFedRec
};

Backbone make_backbone(const BackboneConfig& config, std::uint64_t seed);
UserState make_user_state(const BackboneConfig& config, std::uint32_t user, std::uint64_t seed);

struct ScoreTrace {
  Vector input;  // MLP input (concat or item embedding)
  MlpCache mlp;
  bool valid = false;
};

// Logit for one (user, item embedding) pair. `rng` drives dropout in
// training mode for the MLP backbones.
double score(const Backbone& backbone, const UserState& user, std::span<const double> item,
             Mode mode, RngStream* rng = nullptr, ScoreTrace* trace = nullptr);

struct BceResult {
  double loss = 0.0;
  double grad = 0.0;  // dL/dlogit = sigmoid(s) - y
};

// -[y log sigmoid(s) + (1 - y) log(1 - sigmoid(s))] in a form that does not
// overflow for large |s|.
BceResult bce_loss(double logit, int label);

struct BackboneGrads {
  Vector user;
  MlpGrads shared;
  MlpGrads personal;
};

// Accumulates gradients of the backbone and user state for dL/dlogit and
// returns dL/d(item embedding).
Vector score_backward(const Backbone& backbone, const UserState& user, const ScoreTrace& trace,
                      std::span<const double> item, double dlogit, BackboneGrads& grads);

struct LabeledItem {
  std::uint32_t item = 0;
  int label = 0;
};

struct LocalGradients {
  double loss = 0.0;  // mean BCE over the batch
  BackboneGrads backbone;
  EmbeddingGrads embedding;
};

// Mean-BCE gradients over a batch with respect to the user state, W_g and
// every trainable embedding tensor. Dropout masks come from `rng` in sample
// order.
LocalGradients batch_gradients(const Backbone& backbone, const UserState& user,
                               const ItemEmbeddings& items, std::span<const LabeledItem> batch,
                               RngStream& rng);

// Mean BCE of the batch with the same dropout draws batch_gradients() makes.
double batch_loss(const Backbone& backbone, const UserState& user, const ItemEmbeddings& items,
                  std::span<const LabeledItem> batch, RngStream& rng);

// One SGD step on the client's copies of everything trainable; returns the
// batch loss before the update.
double local_step(Backbone& backbone, UserState& user, ItemEmbeddings& items,
                  std::span<const LabeledItem> batch, double lr, RngStream& rng);

}  // namespace fedpeft
