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
#include <span>
#include <string>
#include <vector>

#include "fedpeft/embedding.h"

namespace fedpeft {

// Little-endian primitive encoder/decoder for uploads and checkpoints.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<std::byte>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(std::span<const std::byte> data);
  void floats(std::span<const float> values);

  const std::vector<std::byte>& bytes() const { return bytes_; }
  std::vector<std::byte> take() { return std::move(bytes_); }

 private:
  std::vector<std::byte> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void floats(std::span<float> out);
  std::span<const std::byte> raw(std::size_t n);

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
};

// Upload payload: every trainable tensor (ItemEmbeddings::trainable order) as
// consecutive little-endian float32 values, no header.
std::vector<std::byte> serialize_upload(const ItemEmbeddings& emb);
void deserialize_upload(std::span<const std::byte> payload, ItemEmbeddings& emb);

// Same layout for an arbitrary tensor list (embedding tensors followed by
// shared backbone weights).
std::vector<std::byte> serialize_tensors(std::span<const Matrix> tensors);
void deserialize_tensors(std::span<const std::byte> payload, std::span<Matrix> tensors);

// Exact upload bytes of the PEFT phase for a strategy over n items of
// width k; equals serialize_upload().size() for a built adapter.
std::size_t comm_cost(const StrategyConfig& config, std::size_t num_items, std::size_t dim);

struct Capacity {
  std::uint64_t value = 0;
  bool saturated = false;  // true when the exact count exceeds 2^64 - 1
};

// Distinct composed representations the strategy can express:
// n for Full/LoRA, d_R^l for RQ-VAE, C(d_H + h - 1, h) for Hash.
Capacity representation_capacity(const StrategyConfig& config, std::size_t num_items);

// Adapter block of the FPEB container (see README for the byte layout).
void write_embeddings(ByteWriter& out, const ItemEmbeddings& emb);
ItemEmbeddings read_embeddings(ByteReader& in);

// `item_id<TAB>c_0,...,c_{l-1}` after a `#` header line carrying the format
// version, code shape, config hash and seed.
void write_codes(const std::filesystem::path& path, const CodeTable& codes,
                 std::span<const std::string> item_ids, std::uint64_t config_hash,
                 std::uint64_t seed);
CodeTable read_codes(const std::filesystem::path& path, std::span<const std::string> item_ids);

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);
std::vector<std::byte> read_file(const std::filesystem::path& path);

}  // namespace fedpeft
