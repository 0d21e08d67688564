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

#include "fedpeft/federation.h"

#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "experiment_fixtures.h"
#include "fedpeft/serialize.h"
#include "test_support.h"

namespace fedpeft {
namespace {

using testing::tiny_config;

TEST(SelectClients, TenPercentOfHundred) {
  const auto c = select_clients(100, 0.10, 1, 0);
  EXPECT_EQ(c.size(), 10u);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
  EXPECT_EQ(std::set<std::uint32_t>(c.begin(), c.end()).size(), 10u);
  for (std::uint32_t id : c) EXPECT_LT(id, 100u);
}

TEST(SelectClients, FullRatioSelectsEveryone) {
  const auto c = select_clients(37, 1.0, 1, 3);
  ASSERT_EQ(c.size(), 37u);
  for (std::uint32_t i = 0; i < 37; ++i) EXPECT_EQ(c[i], i);
}

TEST(SelectClients, CeilAndDeterminism) {
  EXPECT_EQ(select_clients(101, 0.1, 1, 0).size(), 11u);
  EXPECT_EQ(select_clients(6040, 0.1, 1, 0).size(), 604u);
  EXPECT_EQ(select_clients(100, 0.1, 5, 7), select_clients(100, 0.1, 5, 7));
  EXPECT_NE(select_clients(100, 0.1, 5, 7), select_clients(100, 0.1, 5, 8));
  EXPECT_NE(select_clients(100, 0.1, 5, 7), select_clients(100, 0.1, 6, 7));
}

TEST(SelectClients, RejectsBadRatio) {
  EXPECT_THROW(select_clients(10, 0.0, 1, 0), Error);
  EXPECT_THROW(select_clients(10, 1.5, 1, 0), Error);
}

ClientUpdate update_of(std::uint32_t client, std::vector<float> values) {
  ClientUpdate u;
  u.client = client;
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.values().begin());
  u.tensors = {m};
  u.interactions = 1;
  return u;
}

TEST(Aggregate, IdenticalUpdatesAreFixedPoint) {
  const std::vector<ClientUpdate> u = {update_of(3, {0.1f, -2.7f}), update_of(1, {0.1f, -2.7f}),
                                       update_of(2, {0.1f, -2.7f})};
  EXPECT_EQ(aggregate(u)[0], u[0].tensors[0]);
}

TEST(Aggregate, TwoUpdatesGiveMidpoint) {
  const std::vector<ClientUpdate> u = {update_of(0, {1.0f, 4.0f}), update_of(1, {3.0f, -2.0f})};
  const Matrix m = aggregate(u)[0];
  EXPECT_EQ(m(0, 0), 2.0f);
  EXPECT_EQ(m(0, 1), 1.0f);
}

TEST(Aggregate, SymmetricPerturbationCancels) {
  const std::vector<ClientUpdate> u = {update_of(0, {1.25f + 0.5f, -3.0f - 0.125f}),
                                       update_of(1, {1.25f - 0.5f, -3.0f + 0.125f})};
  EXPECT_EQ(aggregate(u)[0], update_of(9, {1.25f, -3.0f}).tensors[0]);
}

TEST(Aggregate, PermutationInvariant) {
  RngStream rng(1, {});
  std::vector<ClientUpdate> u;
  for (std::uint32_t c = 0; c < 12; ++c) {
    std::vector<float> v(5);
    for (float& x : v) x = static_cast<float>(rng.normal());
    u.push_back(update_of(c, v));
  }
  const auto base = aggregate(u);
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(std::span(u));
    EXPECT_EQ(aggregate(u), base);
  }
}

TEST(Aggregate, EmptyThrows) {
  EXPECT_THROW(aggregate(std::vector<ClientUpdate>{}), Error);
  ClientUpdate no_data = update_of(0, {1.0f});
  no_data.no_data = true;
  EXPECT_THROW(aggregate(std::vector<ClientUpdate>{no_data}), Error);
}

TEST(Aggregate, InteractionWeighting) {
  std::vector<ClientUpdate> u = {update_of(0, {0.0f}), update_of(1, {4.0f})};
  u[1].interactions = 3;
  AggregateOptions options;
  options.weighting = Weighting::kInteractions;
  EXPECT_EQ(aggregate(u, options)[0](0, 0), 3.0f);
}

TEST(Aggregate, DeltaModeWithUnitServerLrMatchesParams) {
  const std::vector<Matrix> snapshot = {update_of(0, {1.0f, 2.0f}).tensors[0]};
  const std::vector<ClientUpdate> u = {update_of(0, {1.5f, 1.0f}), update_of(1, {2.5f, 3.0f})};
  AggregateOptions options;
  options.mode = Aggregation::kDeltas;
  EXPECT_EQ(aggregate(u, options, snapshot), aggregate(u));
  options.server_lr = 0.5;
  const Matrix half = aggregate(u, options, snapshot)[0];
  EXPECT_EQ(half(0, 0), 1.5f);
  EXPECT_EQ(half(0, 1), 2.0f);
}

struct Fixture {
  explicit Fixture(ExperimentConfig config) : exp(config, prepare_data(config)) {}
  Experiment exp;
};

RoundContext context_for(const Experiment& exp, const std::vector<Matrix>& snapshot,
                         std::size_t epochs) {
  RoundContext ctx;
  ctx.model = &exp.model();
  ctx.snapshot = snapshot;
  ctx.fed = exp.config().fed;
  ctx.fed.local_epochs = epochs;
  ctx.dp = exp.config().dp;
  ctx.seed = exp.config().run.seed;
  return ctx;
}

TEST(ClientRound, ZeroEpochsReturnsSnapshot) {
  Fixture f(tiny_config(Strategy::kLora, BackboneKind::kFedNcf));
  f.exp.begin_peft();
  const auto snapshot = upload_tensors(f.exp.model().items, f.exp.model().backbone);
  UserState user = f.exp.user_state(4);
  const auto u = client_round(context_for(f.exp, snapshot, 0), 4, user,
                              f.exp.data().split.users[4].train);
  EXPECT_EQ(u.tensors, snapshot);
}

TEST(ClientRound, UploadBytesEqualCommCostPlusSharedWeights) {
  for (Strategy s : {Strategy::kLora, Strategy::kHashMean, Strategy::kHashSenet, Strategy::kRqVae}) {
    Fixture f(tiny_config(s, BackboneKind::kFedNcf));
    f.exp.begin_peft();
    const auto& model = f.exp.model();
    const auto snapshot = upload_tensors(model.items, model.backbone);
    UserState user = f.exp.user_state(7);
    const auto u =
        client_round(context_for(f.exp, snapshot, 1), 7, user, f.exp.data().split.users[7].train);
    const std::size_t expected = comm_cost(f.exp.config().strategy, model.items.num_items(), 8) +
                                 shared_weight_bytes(model.backbone);
    EXPECT_EQ(u.bytes, expected) << to_string(s);
    EXPECT_GT(shared_weight_bytes(model.backbone), 0u);
  }
}

TEST(ClientRound, PFedRecUploadsNoUserParameters) {
  Fixture f(tiny_config(Strategy::kLora, BackboneKind::kPFedRec));
  f.exp.begin_peft();
  const auto& model = f.exp.model();
  const auto snapshot = upload_tensors(model.items, model.backbone);
  UserState user = f.exp.user_state(2);
  const auto u =
      client_round(context_for(f.exp, snapshot, 1), 2, user, f.exp.data().split.users[2].train);
  EXPECT_EQ(u.tensors.size(), model.items.trainable().size());
  EXPECT_EQ(u.bytes, comm_cost(f.exp.config().strategy, model.items.num_items(), 8));
}

TEST(ClientRound, IdenticalInputsGiveIdenticalUpdates) {
  Fixture f(tiny_config(Strategy::kHashSenet, BackboneKind::kFedNcf));
  f.exp.begin_peft();
  const auto snapshot = upload_tensors(f.exp.model().items, f.exp.model().backbone);
  UserState a = f.exp.user_state(5);
  UserState b = f.exp.user_state(5);
  const auto& train = f.exp.data().split.users[5].train;
  const auto ctx = context_for(f.exp, snapshot, 2);
  const auto ua = client_round(ctx, 5, a, train);
  const auto ub = client_round(ctx, 5, b, train);
  EXPECT_EQ(ua.tensors, ub.tensors);
  EXPECT_EQ(ua.loss, ub.loss);
  EXPECT_NE(ua.tensors, snapshot);
}

TEST(ClientRound, NoDataIsFlaggedAndUnchanged) {
  Fixture f(tiny_config(Strategy::kLora));
  const auto snapshot = upload_tensors(f.exp.model().items, f.exp.model().backbone);
  UserState user = f.exp.user_state(0);
  const auto u = client_round(context_for(f.exp, snapshot, 2), 0, user, {});
  EXPECT_TRUE(u.no_data);
  EXPECT_EQ(u.tensors, snapshot);
}

TEST(Experiment, PhaseScheduleAndEvaluationRounds) {
  ExperimentConfig c = tiny_config(Strategy::kLora);
  Experiment exp(c, prepare_data(c));
  const RunResult r = run_experiment(exp);
  std::vector<std::size_t> rounds;
  for (const auto& e : r.evals) rounds.push_back(e.round);
  EXPECT_EQ(rounds, (std::vector<std::size_t>{0, 2, 2, 4, 6}));
  EXPECT_EQ(r.evals[1].phase, Phase::kWarmUp);
  EXPECT_EQ(r.evals[2].phase, Phase::kPeft);
  ASSERT_EQ(r.rounds.size(), 6u);
  for (const auto& rep : r.rounds) {
    EXPECT_EQ(rep.phase, rep.round < 2 ? Phase::kWarmUp : Phase::kPeft);
    EXPECT_EQ(rep.clients.size(), 30u);
  }
  EXPECT_TRUE(exp.model().items.base_frozen());
}

TEST(Experiment, PeftUploadsAreSmallerAndBaseStaysFrozen) {
  for (Strategy s : {Strategy::kLora, Strategy::kHashMean, Strategy::kHashSenet, Strategy::kRqVae}) {
    // Catalogue well above d_H so every adapter is smaller than E, as with
    // real datasets.
    ExperimentConfig c = tiny_config(s);
    c.data.synthetic.items = 1500;
    c.pretrain.enabled = false;
    Experiment exp(c, prepare_data(c));
    const RunResult r = run_experiment(exp);
    const std::size_t warm = r.rounds.front().bytes_per_client;
    std::set<std::uint64_t> base_hashes;
    std::set<std::uint64_t> frozen_hashes;
    for (const auto& rep : r.rounds) {
      if (rep.phase != Phase::kPeft) continue;
      EXPECT_LT(rep.bytes_per_client, warm) << to_string(s);
      base_hashes.insert(rep.base_hash);
      frozen_hashes.insert(rep.frozen_hash);
    }
    EXPECT_EQ(base_hashes.size(), 1u) << to_string(s);
    EXPECT_EQ(frozen_hashes.size(), 1u) << to_string(s);
  }
}

TEST(Experiment, FullStrategyNeverAttachesAdapter) {
  ExperimentConfig c = tiny_config(Strategy::kFull);
  Experiment exp(c, prepare_data(c));
  const RunResult r = run_experiment(exp);
  EXPECT_FALSE(exp.model().items.has_adapter());
  EXPECT_FALSE(exp.model().items.base_frozen());
  EXPECT_EQ(r.evals.size(), 4u);
  EXPECT_NE(r.rounds.front().base_hash, r.rounds.back().base_hash);
}

TEST(Experiment, RoundsEqualWarmupIsPureFullRun) {
  ExperimentConfig lora = tiny_config(Strategy::kLora);
  lora.fed.rounds = 2;
  ExperimentConfig full = lora;
  full.strategy.strategy = Strategy::kFull;
  Experiment a(lora, prepare_data(lora));
  Experiment b(full, prepare_data(full));
  const RunResult ra = run_experiment(a);
  const RunResult rb = run_experiment(b);
  EXPECT_FALSE(a.model().items.has_adapter());
  EXPECT_EQ(a.model().items.base(), b.model().items.base());
  ASSERT_EQ(ra.evals.size(), rb.evals.size());
  for (std::size_t i = 0; i < ra.evals.size(); ++i) {
    EXPECT_EQ(ra.evals[i].metrics.csv_row(), rb.evals[i].metrics.csv_row());
  }
}

TEST(Experiment, IdentityStartKeepsTopLists) {
  for (Strategy s : {Strategy::kLora, Strategy::kHashMean, Strategy::kHashSenet, Strategy::kRqVae}) {
    for (BackboneKind b : {BackboneKind::kFedMf, BackboneKind::kFedNcf, BackboneKind::kPFedRec}) {
      ExperimentConfig c = tiny_config(s, b);
      Experiment exp(c, prepare_data(c));
      exp.step();
      exp.step();
      ASSERT_TRUE(exp.peft_due());
      std::vector<std::vector<std::uint32_t>> before;
      for (std::uint32_t u : exp.data().split.test_users) before.push_back(exp.top_items(u, 20));
      const std::string metrics_before = exp.evaluate().csv_row();
      exp.begin_peft();
      std::size_t i = 0;
      for (std::uint32_t u : exp.data().split.test_users) {
        EXPECT_EQ(exp.top_items(u, 20), before[i++]) << to_string(s) << "/" << to_string(b);
      }
      EXPECT_EQ(exp.evaluate().csv_row(), metrics_before);
    }
  }
}

TEST(Experiment, WorkerCountDoesNotChangeResults) {
  ExperimentConfig c = tiny_config(Strategy::kHashSenet, BackboneKind::kFedNcf);
  c.fed.sample_ratio = 1.0;  // more than one block of clients
  c.dp.mode = DpMode::kLdp;
  c.dp.delta = 0.001;
  Experiment one(c, prepare_data(c));
  c.run.workers = 4;
  Experiment four(c, prepare_data(c));
  const RunResult a = run_experiment(one);
  const RunResult b = run_experiment(four);
  ASSERT_EQ(a.evals.size(), b.evals.size());
  for (std::size_t i = 0; i < a.evals.size(); ++i) {
    EXPECT_EQ(a.evals[i].metrics.hr, b.evals[i].metrics.hr);
    EXPECT_EQ(a.evals[i].metrics.ndcg, b.evals[i].metrics.ndcg);
  }
  EXPECT_EQ(one.model().items.trainable_copy(), four.model().items.trainable_copy());
}

TEST(Experiment, ZeroDeltaMatchesNoDp) {
  ExperimentConfig none = tiny_config(Strategy::kLora);
  for (DpMode mode : {DpMode::kLdp, DpMode::kCdp}) {
    ExperimentConfig dp = none;
    dp.dp.mode = mode;
    dp.dp.delta = 0.0;
    Experiment a(none, prepare_data(none));
    Experiment b(dp, prepare_data(dp));
    run_experiment(a);
    run_experiment(b);
    EXPECT_EQ(a.model().items.trainable_copy(), b.model().items.trainable_copy());
  }
}

TEST(Experiment, NonFiniteParametersAbortWithRound) {
  for (BackboneKind b : {BackboneKind::kFedMf, BackboneKind::kFedNcf}) {
    ExperimentConfig c = tiny_config(Strategy::kLora, b);
    c.fed.lr = 1e30;
    c.pretrain.enabled = false;
    Experiment exp(c, prepare_data(c));
    try {
      run_experiment(exp);
      FAIL() << "expected divergence";
    } catch (const Error& e) {
      EXPECT_NE(std::string(e.what()).find("round"), std::string::npos) << e.what();
    }
  }
}

TEST(Experiment, CheckpointRoundTrip) {
  for (Strategy s : {Strategy::kFull, Strategy::kLora, Strategy::kHashSenet, Strategy::kRqVae}) {
    for (BackboneKind b : {BackboneKind::kFedNcf, BackboneKind::kPFedRec}) {
      ExperimentConfig c = tiny_config(s, b);
      c.fed.rounds = 4;
      Experiment exp(c, prepare_data(c));
      run_experiment(exp);
      const auto dir = testing::scratch_dir("ckpt");
      exp.save_checkpoint(dir / "a.fpeb");
      const Experiment back = Experiment::load_checkpoint(dir / "a.fpeb");
      EXPECT_EQ(back.round(), exp.round());
      EXPECT_EQ(back.model().phase, exp.model().phase);
      EXPECT_EQ(back.evaluate().csv_row(), exp.evaluate().csv_row());
      for (std::uint32_t u : {0u, 5u, 17u}) EXPECT_EQ(back.item_scores(u), exp.item_scores(u));
      back.save_checkpoint(dir / "b.fpeb");
      EXPECT_EQ(read_file(dir / "a.fpeb"), read_file(dir / "b.fpeb"));
    }
  }
}

TEST(Experiment, CheckpointRejectsGarbage) {
  const auto dir = testing::scratch_dir("ckpt-bad");
  const std::vector<std::byte> junk(16, std::byte{0x41});
  write_file(dir / "junk.fpeb", junk);
  EXPECT_THROW(Experiment::load_checkpoint(dir / "junk.fpeb"), Error);
}

TEST(Experiment, EvaluationDoesNotMutateModel) {
  ExperimentConfig c = tiny_config(Strategy::kHashSenet, BackboneKind::kFedNcf);
  Experiment exp(c, prepare_data(c));
  exp.step();
  const auto before = upload_tensors(exp.model().items, exp.model().backbone);
  exp.evaluate();
  exp.evaluate();
  EXPECT_EQ(upload_tensors(exp.model().items, exp.model().backbone), before);
}

TEST(PrepareData, FeaturesIgnoreHeldOutItems) {
  ExperimentConfig c = tiny_config(Strategy::kLora);
  const ExperimentData d = prepare_split(c);
  const InteractionLog train = training_log(d.log, d.split);
  EXPECT_EQ(train.records.size(), d.log.records.size() - d.split.test_users.size());
  EXPECT_EQ(train.num_items, d.log.num_items);
}

}  // namespace
}  // namespace fedpeft
