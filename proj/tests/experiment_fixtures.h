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

#include "fedpeft/config.h"
#include "fedpeft/federation.h"

namespace fedpeft::testing {

// A few seconds' worth of experiment: small synthetic log, shallow
// pre-training and a handful of rounds.
inline ExperimentConfig tiny_config(Strategy strategy, BackboneKind backbone = BackboneKind::kFedMf) {
  ExperimentConfig c;
  c.data.synthetic.users = 120;
  c.data.synthetic.items = 60;
  c.data.synthetic.clusters = 8;
  c.data.feature_dim = 16;
  c.backbone.kind = backbone;
  c.backbone.dim = 8;
  c.backbone.ncf_hidden = {8, 4};
  c.backbone.pfedrec_hidden = {8, 4};
  c.strategy.strategy = strategy;
  c.strategy.lora_rank = 2;
  c.strategy.hash_table = 256;
  c.strategy.hash_functions = 2;
  c.strategy.rq_levels = 2;
  c.strategy.rq_codebook = 32;
  c.pretrain.hidden = {16};
  c.pretrain.steps = 100;
  c.pretrain.batch = 32;
  c.pretrain.lr = 1e-2;
  c.pretrain.rq_steps = 50;
  c.fed.rounds = 6;
  c.fed.warmup_rounds = 2;
  c.fed.sample_ratio = 0.25;
  c.fed.lr = 0.05;
  c.eval.negatives = 20;
  c.eval.every = 2;
  return c;
}

}  // namespace fedpeft::testing
