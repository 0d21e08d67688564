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

#include "fedpeft/backbone.h"

#include <cmath>

#include "fedpeft/rng.h"

namespace fedpeft {

namespace {

Mlp make_scoring_mlp(std::size_t input, const std::vector<std::size_t>& hidden, double dropout,
                     RngStream& rng) {
  std::vector<std::size_t> sizes = {input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  std::vector<Activation> acts(sizes.size() - 1, Activation::kRelu);
  acts.back() = Activation::kIdentity;
  return Mlp::glorot(std::move(sizes), std::move(acts), dropout, rng);
}

}  // namespace

std::string_view to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kFedMf:
      return "fedmf";
    case BackboneKind::kFedNcf:
      return "fedncf";
    case BackboneKind::kPFedRec:
      return "pfedrec";
  }
  return "unknown";
}

BackboneKind parse_backbone(std::string_view name) {
  for (BackboneKind k : {BackboneKind::kFedMf, BackboneKind::kFedNcf, BackboneKind::kPFedRec}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError(
      fmt::format("unknown backbone '{}' (expected fedmf, fedncf or pfedrec)", name));
}

Backbone make_backbone(const BackboneConfig& config, std::uint64_t seed) {
  Backbone b;
  b.kind = config.kind;
  if (config.kind == BackboneKind::kFedNcf) {
    RngStream rng(seed, {Purpose::kInit, 0, 0, 0x4e4346});
    b.shared = make_scoring_mlp(2 * config.dim, config.ncf_hidden, config.dropout, rng);
  }
  return b;
}

UserState make_user_state(const BackboneConfig& config, std::uint32_t user, std::uint64_t seed) {
  UserState s;
  RngStream rng(seed, {Purpose::kInit, user, 0, 0x55});
  if (config.kind == BackboneKind::kPFedRec) {
    s.personal = make_scoring_mlp(config.dim, config.pfedrec_hidden, config.dropout, rng);
  } else {
    s.embedding = random_uniform(1, config.dim, config.user_init, rng);
  }
  return s;
}

double score(const Backbone& backbone, const UserState& user, std::span<const double> item,
             Mode mode, RngStream* rng, ScoreTrace* trace) {
  if (trace != nullptr) *trace = ScoreTrace{};
  switch (backbone.kind) {
    case BackboneKind::kFedMf: {
      FEDPEFT_CHECK(user.embedding.size() == item.size(),
                    "FedMF user embedding has {} values, item has {}", user.embedding.size(),
                    item.size());
      if (trace != nullptr) trace->valid = true;
      return dot(user.embedding.values(), item);
    }
    case BackboneKind::kFedNcf: {
      FEDPEFT_CHECK(backbone.shared.has_value(), "FedNCF backbone has no MLP");
      FEDPEFT_CHECK(user.embedding.size() == item.size(),
                    "FedNCF user embedding has {} values, item has {}", user.embedding.size(),
                    item.size());
      Vector input = to_vector(user.embedding.values());
      input.insert(input.end(), item.begin(), item.end());
      const Vector out =
          mlp_forward(*backbone.shared, input, mode, rng, trace ? &trace->mlp : nullptr);
      if (trace != nullptr) {
        trace->input = std::move(input);
        trace->valid = true;
      }
      return out[0];
    }
    case BackboneKind::kPFedRec: {
      FEDPEFT_CHECK(user.personal.has_value(), "PFedRec client has no personal MLP");
      const Vector out =
          mlp_forward(*user.personal, item, mode, rng, trace ? &trace->mlp : nullptr);
      if (trace != nullptr) {
        trace->input.assign(item.begin(), item.end());
        trace->valid = true;
      }
      return out[0];
    }
  }
  fail("unhandled backbone");
}

BceResult bce_loss(double logit, int label) {
  FEDPEFT_CHECK(label == 0 || label == 1, "BCE label must be 0 or 1, got {}", label);
  const double y = static_cast<double>(label);
  BceResult r;
  r.loss = std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
  r.grad = sigmoid(logit) - y;
  return r;
}

Vector score_backward(const Backbone& backbone, const UserState& user, const ScoreTrace& trace,
                      std::span<const double> item, double dlogit, BackboneGrads& grads) {
  FEDPEFT_CHECK(trace.valid, "score_backward requires the trace of a forward pass");
  const double upstream[1] = {dlogit};
  switch (backbone.kind) {
    case BackboneKind::kFedMf: {
      const std::size_t k = item.size();
      if (grads.user.size() != k) grads.user.assign(k, 0.0);
      Vector d_item(k);
      const auto u = user.embedding.values();
      for (std::size_t d = 0; d < k; ++d) {
        grads.user[d] += dlogit * item[d];
        d_item[d] = dlogit * static_cast<double>(u[d]);
      }
      return d_item;
    }
    case BackboneKind::kFedNcf: {
      const std::size_t k = item.size();
      const Vector d_input = mlp_backward(*backbone.shared, trace.mlp, upstream, grads.shared);
      if (grads.user.size() != k) grads.user.assign(k, 0.0);
      for (std::size_t d = 0; d < k; ++d) grads.user[d] += d_input[d];
      return Vector(d_input.begin() + static_cast<std::ptrdiff_t>(k), d_input.end());
    }
    case BackboneKind::kPFedRec:
      return mlp_backward(*user.personal, trace.mlp, upstream, grads.personal);
  }
  fail("unhandled backbone");
}

LocalGradients batch_gradients(const Backbone& backbone, const UserState& user,
                               const ItemEmbeddings& items, std::span<const LabeledItem> batch,
                               RngStream& rng) {
  FEDPEFT_CHECK(!batch.empty(), "gradient of an empty batch");
  LocalGradients out;
  out.embedding = EmbeddingGrads::zeros_like(items);
  ComposeCache compose_cache;
  ScoreTrace trace;
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const LabeledItem& sample : batch) {
    const Vector e = compose(items, sample.item, &compose_cache);
    const double logit = score(backbone, user, e, Mode::kTrain, &rng, &trace);
    const BceResult bce = bce_loss(logit, sample.label);
    out.loss += scale * bce.loss;
    const Vector d_item =
        score_backward(backbone, user, trace, e, scale * bce.grad, out.backbone);
    accumulate_embedding_grad(items, sample.item, compose_cache, d_item, out.embedding);
  }
  return out;
}

double batch_loss(const Backbone& backbone, const UserState& user, const ItemEmbeddings& items,
                  std::span<const LabeledItem> batch, RngStream& rng) {
  FEDPEFT_CHECK(!batch.empty(), "loss of an empty batch");
  double loss = 0.0;
  for (const LabeledItem& sample : batch) {
    const Vector e = compose(items, sample.item);
    loss += bce_loss(score(backbone, user, e, Mode::kTrain, &rng), sample.label).loss;
  }
  return loss / static_cast<double>(batch.size());
}

double local_step(Backbone& backbone, UserState& user, ItemEmbeddings& items,
                  std::span<const LabeledItem> batch, double lr, RngStream& rng) {
  const LocalGradients g = batch_gradients(backbone, user, items, batch, rng);
  if (!g.backbone.user.empty()) sgd_step(user.embedding.values(), g.backbone.user, lr);
  if (backbone.shared && !g.backbone.shared.weight.empty()) {
    sgd_step(*backbone.shared, g.backbone.shared, lr);
  }
  if (user.personal && !g.backbone.personal.weight.empty()) {
    sgd_step(*user.personal, g.backbone.personal, lr);
  }
  sgd_step(items, g.embedding, lr);
  return g.loss;
}

}  // namespace fedpeft
