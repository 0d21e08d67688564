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

#include "fedpeft/serialize.h"

#include <gtest/gtest.h>

#include "fedpeft/rng.h"
#include "test_support.h"

namespace fedpeft {
namespace {

using testing::fill_normal;

TEST(ByteCodec, LittleEndianLayout) {
  ByteWriter w;
  w.u16(0x0102);
  w.u32(0x03040506);
  w.f32(1.0f);
  const auto& b = w.bytes();
  ASSERT_EQ(b.size(), 10u);
  EXPECT_EQ(b[0], std::byte{0x02});
  EXPECT_EQ(b[1], std::byte{0x01});
  EXPECT_EQ(b[2], std::byte{0x06});
  EXPECT_EQ(b[5], std::byte{0x03});
  EXPECT_EQ(b[9], std::byte{0x3f});
  EXPECT_EQ(b[8], std::byte{0x80});
}

TEST(ByteCodec, RoundTripAndTruncation) {
  ByteWriter w;
  w.u8(7);
  w.u64(0x1122334455667788ULL);
  w.f64(-2.5);
  ByteReader r(w.bytes());
  EXPECT_EQ(r.u8(), 7);
  EXPECT_EQ(r.u64(), 0x1122334455667788ULL);
  EXPECT_EQ(r.f64(), -2.5);
  EXPECT_TRUE(r.done());
  EXPECT_THROW(r.u8(), Error);
}

StrategyConfig base_config(Strategy s) {
  StrategyConfig c;
  c.strategy = s;
  return c;
}

TEST(CommCost, LoraMl1m) {
  StrategyConfig c = base_config(Strategy::kLora);
  c.lora_rank = 4;
  EXPECT_EQ(comm_cost(c, 3706, 32), 59808u);
}

TEST(CommCost, RqVae) {
  StrategyConfig c = base_config(Strategy::kRqVae);
  c.rq_codebook = 256;
  c.rq_levels = 4;
  EXPECT_EQ(comm_cost(c, 3706, 32), 131072u);
}

TEST(CommCost, FullMl1m) { EXPECT_EQ(comm_cost(base_config(Strategy::kFull), 3706, 32), 474368u); }

TEST(CommCost, HashMeanAndSenetOverhead) {
  StrategyConfig c = base_config(Strategy::kHashMean);
  c.hash_table = 512;
  c.hash_functions = 2;
  EXPECT_EQ(comm_cost(c, 3706, 32), 65536u);
  c.strategy = Strategy::kHashSenet;
  c.senet_ratio = 16;
  EXPECT_EQ(comm_cost(c, 3706, 32), 65536u + 512u);
}

TEST(Capacity, Examples) {
  StrategyConfig rq = base_config(Strategy::kRqVae);
  rq.rq_codebook = 256;
  rq.rq_levels = 3;
  EXPECT_EQ(representation_capacity(rq, 10).value, 16777216u);
  StrategyConfig hash = base_config(Strategy::kHashMean);
  hash.hash_table = 4;
  hash.hash_functions = 2;
  EXPECT_EQ(representation_capacity(hash, 10).value, 10u);
  EXPECT_EQ(representation_capacity(base_config(Strategy::kLora), 3706).value, 3706u);
  EXPECT_EQ(representation_capacity(base_config(Strategy::kFull), 3706).value, 3706u);
}

TEST(Capacity, HashMatchesMultisetEnumeration) {
  for (std::size_t d = 1; d <= 6; ++d) {
    for (std::size_t h = 1; h <= 3; ++h) {
      std::size_t count = 0;
      // Non-decreasing index tuples of length h over [0, d).
      std::vector<std::size_t> idx(h, 0);
      while (true) {
        ++count;
        std::size_t pos = h;
        while (pos > 0 && idx[pos - 1] == d - 1) --pos;
        if (pos == 0) break;
        ++idx[pos - 1];
        for (std::size_t q = pos; q < h; ++q) idx[q] = idx[pos - 1];
      }
      StrategyConfig c = base_config(Strategy::kHashMean);
      c.hash_table = d;
      c.hash_functions = h;
      EXPECT_EQ(representation_capacity(c, 10).value, count) << d << " " << h;
    }
  }
}

TEST(Capacity, Saturates) {
  StrategyConfig rq = base_config(Strategy::kRqVae);
  rq.rq_codebook = 512;
  rq.rq_levels = 8;  // 2^72
  const Capacity cap = representation_capacity(rq, 10);
  EXPECT_TRUE(cap.saturated);
  EXPECT_EQ(cap.value, ~std::uint64_t{0});
  rq.rq_levels = 6;
  EXPECT_FALSE(representation_capacity(rq, 10).saturated);
}

ItemEmbeddings build(const StrategyConfig& c, std::size_t n, std::size_t k, RngStream& rng) {
  Matrix base(n, k);
  fill_normal(base, 0.1, rng);
  CodeTable codes{c.rq_levels, c.rq_codebook, {}};
  for (std::size_t i = 0; i < n * c.rq_levels; ++i) {
    codes.codes.push_back(static_cast<std::uint32_t>(rng.below(c.rq_codebook)));
  }
  ItemEmbeddings emb(base);
  emb.attach(make_adapter(c, base, &codes, rng));
  for (Matrix* m : emb.mutable_trainable()) fill_normal(*m, 1.0, rng);
  return emb;
}

StrategyConfig random_config(Strategy s, RngStream& rng) {
  StrategyConfig c = base_config(s);
  c.lora_rank = 1 + rng.below(6);
  c.hash_table = 1 + rng.below(64);
  c.hash_functions = 1 + rng.below(4);
  c.hash_prime = 4093;
  c.senet_ratio = 1 + rng.below(16);
  c.rq_levels = 1 + rng.below(4);
  c.rq_codebook = 1 + rng.below(16);
  return c;
}

class UploadTest : public ::testing::TestWithParam<Strategy> {};

TEST_P(UploadTest, CommCostEqualsPayloadFor20RandomConfigs) {
  RngStream rng(11, {Purpose::kTest, 0, 0, static_cast<std::uint64_t>(GetParam())});
  for (int trial = 0; trial < 20; ++trial) {
    const StrategyConfig c = random_config(GetParam(), rng);
    const std::size_t n = 1 + rng.below(60);
    const std::size_t k = 1 + rng.below(16);
    const ItemEmbeddings emb = build(c, n, k, rng);
    EXPECT_EQ(serialize_upload(emb).size(), comm_cost(c, n, k));
  }
}

TEST_P(UploadTest, RoundTripIsByteIdentical) {
  RngStream rng(12, {Purpose::kTest, 0, 0, static_cast<std::uint64_t>(GetParam())});
  const StrategyConfig c = random_config(GetParam(), rng);
  const ItemEmbeddings emb = build(c, 20, 6, rng);
  const auto payload = serialize_upload(emb);
  ItemEmbeddings copy = build(c, 20, 6, rng);
  deserialize_upload(payload, copy);
  EXPECT_EQ(copy.trainable_copy(), emb.trainable_copy());
  EXPECT_EQ(serialize_upload(copy), payload);
}

TEST_P(UploadTest, CheckpointBlockRoundTrip) {
  RngStream rng(13, {Purpose::kTest, 0, 0, static_cast<std::uint64_t>(GetParam())});
  const StrategyConfig c = random_config(GetParam(), rng);
  const ItemEmbeddings emb = build(c, 15, 5, rng);
  ByteWriter w;
  write_embeddings(w, emb);
  ByteReader r(w.bytes());
  const ItemEmbeddings back = read_embeddings(r);
  EXPECT_TRUE(r.done());
  EXPECT_EQ(back.strategy(), emb.strategy());
  EXPECT_EQ(back.base(), emb.base());
  EXPECT_EQ(back.trainable_copy(), emb.trainable_copy());
  EXPECT_EQ(back.frozen_fingerprint(), emb.frozen_fingerprint());
  ByteWriter again;
  write_embeddings(again, back);
  EXPECT_EQ(again.bytes(), w.bytes());
}

INSTANTIATE_TEST_SUITE_P(Strategies, UploadTest,
                         ::testing::Values(Strategy::kFull, Strategy::kLora, Strategy::kHashMean,
                                           Strategy::kHashSenet, Strategy::kRqVae),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Upload, WrongSizeThrows) {
  RngStream rng(14, {});
  ItemEmbeddings emb = build(base_config(Strategy::kLora), 5, 4, rng);
  auto payload = serialize_upload(emb);
  payload.pop_back();
  EXPECT_THROW(deserialize_upload(payload, emb), Error);
}

TEST(Codes, FileRoundTrip) {
  const CodeTable codes{2, 8, {1, 2, 3, 4, 5, 6}};
  const std::vector<std::string> ids = {"a", "b", "c"};
  const auto dir = testing::scratch_dir("codes");
  write_codes(dir / "codes.tsv", codes, ids, 0xabc, 7);
  EXPECT_EQ(read_codes(dir / "codes.tsv", ids), codes);
  const std::vector<std::string> reordered = {"c", "a", "b"};
  const CodeTable shuffled = read_codes(dir / "codes.tsv", reordered);
  EXPECT_EQ(shuffled.codes, (std::vector<std::uint32_t>{5, 6, 1, 2, 3, 4}));
}

}  // namespace
}  // namespace fedpeft
