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

#include "fedpeft/config.h"

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_support.h"

namespace fedpeft {
namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string config_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, DefaultsFollowReferenceSettings) {
  const ExperimentConfig c;
  EXPECT_EQ(c.fed.sample_ratio, 0.1);
  EXPECT_EQ(c.fed.local_epochs, 2u);
  EXPECT_EQ(c.fed.rounds, 1000u);
  EXPECT_EQ(c.fed.warmup_rounds, 10u);
  EXPECT_EQ(c.backbone.dim, 32u);
  EXPECT_EQ(c.pretrain.rq_beta, 0.25);
  EXPECT_EQ(c.strategy.hash_prime, 4096u);
  EXPECT_EQ(c.strategy.senet_ratio, 16u);
  EXPECT_EQ(c.eval.negatives, 99u);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, ParsesSectionsCommentsAndLists) {
  const ExperimentConfig c = parse(
      "# experiment\n"
      "run.seed = 7\n"
      "[strategy]\n"
      "name = rqvae   # trailing comment\n"
      "rq_levels = 4\n"
      "[eval]\n"
      "ks = 5,10,50\n"
      "[dp]\n"
      "mode = ldp\n"
      "delta = 0.05\n"
      "clip = 2.5\n");
  EXPECT_EQ(c.run.seed, 7u);
  EXPECT_EQ(c.strategy.strategy, Strategy::kRqVae);
  EXPECT_EQ(c.strategy.rq_levels, 4u);
  EXPECT_EQ(c.eval.ks, (std::vector<std::size_t>{5, 10, 50}));
  EXPECT_EQ(c.dp.mode, DpMode::kLdp);
  EXPECT_EQ(c.dp.delta, 0.05);
  ASSERT_TRUE(c.dp.clip.has_value());
  EXPECT_EQ(*c.dp.clip, 2.5);
}

TEST(Config, UnknownKeyNamesKey) {
  EXPECT_NE(config_error([] { parse("fed.bogus = 1\n"); }).find("fed.bogus"), std::string::npos);
}

TEST(Config, BadValueNamesKey) {
  EXPECT_NE(config_error([] { parse("fed.rounds = many\n"); }).find("fed.rounds"),
            std::string::npos);
  EXPECT_NE(config_error([] { parse("model.backbone = gnn\n"); }).find("model.backbone"),
            std::string::npos);
}

TEST(Config, MalformedLineNamesLine) {
  EXPECT_NE(config_error([] { parse("run.seed = 1\njust words\n"); }).find("line 2"),
            std::string::npos);
}

TEST(Config, OverridesWinOverFile) {
  const auto dir = testing::scratch_dir("config");
  std::ofstream(dir / "c.txt") << "fed.lr = 0.1\nfed.rounds = 5\n";
  ExperimentConfig c = load_config(dir / "c.txt");
  apply_overrides(c, {"fed.lr=0.001", "strategy.name=hash_senet"});
  EXPECT_EQ(c.fed.lr, 0.001);
  EXPECT_EQ(c.fed.rounds, 5u);
  EXPECT_EQ(c.strategy.strategy, Strategy::kHashSenet);
  EXPECT_THROW(apply_overrides(c, {"no-equals-sign"}), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.txt"), ConfigError);
}

TEST(Config, DumpRoundTrips) {
  ExperimentConfig c;
  apply_overrides(c, {"strategy.name=lora", "strategy.lora_rank=5", "fed.lr=0.003",
                      "eval.ks=1,3", "dp.mode=cdp", "dp.delta=0.2", "model.backbone=pfedrec",
                      "data.synthetic.users=77", "pretrain.hidden=64,32"});
  const std::string dump = canonical_dump(c);
  EXPECT_EQ(canonical_dump(parse(dump)), dump);
  EXPECT_EQ(config_hash(parse(dump)), config_hash(c));
  for (const std::string& key : config_keys()) {
    EXPECT_NE(dump.find(key + "="), std::string::npos) << key;
  }
}

TEST(Config, HashIgnoresSeedOutputAndWorkers) {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.run.seed = 99;
  b.run.output = "elsewhere";
  b.run.workers = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.fed.lr = 0.5;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(hash_hex(0xabc).size(), 16u);
}

TEST(Config, GridValidation) {
  for (const char* bad : {"strategy.lora_rank=7", "strategy.rq_levels=1",
                          "strategy.rq_codebook=100", "strategy.hash_table=128",
                          "strategy.hash_functions=5"}) {
    ExperimentConfig c;
    apply_overrides(c, {bad});
    const std::string key = std::string(bad).substr(0, std::string(bad).find('='));
    EXPECT_NE(config_error([&] { validate(c); }).find(key), std::string::npos) << bad;
    EXPECT_NO_THROW(validate(c, true)) << bad;
  }
}

TEST(Config, StructuralChecksIgnoreUnsafe) {
  for (const char* bad : {"fed.sample_ratio=0", "fed.sample_ratio=1.5", "dp.delta=-1",
                          "strategy.lora_rank=0", "fed.lr=0", "model.dropout=1"}) {
    ExperimentConfig c;
    apply_overrides(c, {bad});
    EXPECT_THROW(validate(c, true), ConfigError) << bad;
  }
}

TEST(Config, FileSourceNeedsPath) {
  ExperimentConfig c;
  apply_overrides(c, {"data.source=ml1m"});
  EXPECT_NE(config_error([&] { validate(c); }).find("data.path"), std::string::npos);
}

}  // namespace
}  // namespace fedpeft
