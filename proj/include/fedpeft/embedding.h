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
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "fedpeft/tensor.h"

namespace fedpeft {

class RngStream;

// Wire tags; stable across versions of the checkpoint format.
enum class Strategy : std::uint8_t {
  kFull = 0,
  kLora = 1,
  kHashMean = 2,
  kHashSenet = 3,
  kRqVae = 4,
};

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

// How adapter tables start. `kZero` makes every strategy an exact identity
// over the frozen base; `kBaseDistribution` draws from a normal fitted to
// the base table. LoRA's B is zero in both modes.
enum class AdapterInit : std::uint8_t { kZero = 0, kBaseDistribution = 1 };

struct StrategyConfig {
  Strategy strategy = Strategy::kLora;
  std::size_t lora_rank = 4;         // k_L
  std::size_t hash_table = 512;      // d_H
  std::size_t hash_functions = 2;    // h
  std::uint64_t hash_prime = 4096;   // p
  std::size_t senet_ratio = 16;      // r_h, h_1 = r_h * h
  std::size_t rq_levels = 3;         // l
  std::size_t rq_codebook = 256;     // d_R
  AdapterInit init = AdapterInit::kZero;
};

struct HashFunction {
  std::uint64_t a = 1;
  std::uint64_t b = 0;
};

// ((a * id + b) mod p) mod table_size. Parameters are validated when the
// adapter is built, not here.
inline std::size_t hash_index(std::uint64_t id, const HashFunction& f, std::uint64_t prime,
                              std::size_t table_size) {
  return static_cast<std::size_t>(((f.a * id + f.b) % prime) % table_size);
}

// Throws unless a != 0, a != b, 1 <= table_size <= p < 2^32.
void validate_hash_function(const HashFunction& f, std::uint64_t prime, std::size_t table_size);

// Per-item semantic codes, row-major n x levels.
struct CodeTable {
  std::size_t levels = 0;
  std::size_t codebook_size = 0;
  std::vector<std::uint32_t> codes;

  std::size_t num_items() const { return levels == 0 ? 0 : codes.size() / levels; }
  std::span<const std::uint32_t> item(std::size_t i) const {
    return {codes.data() + i * levels, levels};
  }
  friend bool operator==(const CodeTable&, const CodeTable&) = default;
};

struct LoraAdapter {
  Matrix a;  // n x k_L
  Matrix b;  // k x k_L
};

struct HashAdapter {
  Matrix table;  // d_H x k
  std::vector<HashFunction> functions;
  std::uint64_t prime = 4096;
  bool senet = false;
  Matrix w1;  // h_1 x h (SENet only)
  Matrix w2;  // h x h_1 (SENet only)
  std::vector<std::uint32_t> indices;  // n x h, derived from `functions`
};

struct RqVaeAdapter {
  std::vector<Matrix> codebooks;  // l tables of d_R x k
  CodeTable codes;                // frozen
};

using AdapterParams = std::variant<std::monostate, LoraAdapter, HashAdapter, RqVaeAdapter>;

LoraAdapter make_lora(const Matrix& base, std::size_t rank, RngStream& rng);
HashAdapter make_hash(const Matrix& base, std::size_t table_size,
                      std::vector<HashFunction> functions, std::uint64_t prime, bool senet,
                      std::size_t senet_ratio, AdapterInit init, RngStream& rng);
// Draws `count` functions with a in [1, p), b in [0, p), a != b.
std::vector<HashFunction> draw_hash_functions(std::size_t count, std::uint64_t prime,
                                              RngStream& rng);
RqVaeAdapter make_rqvae(const Matrix& base, std::size_t codebook_size, CodeTable codes,
                        AdapterInit init, RngStream& rng);
// `codes` is required for RQ-VAE and ignored otherwise.
AdapterParams make_adapter(const StrategyConfig& config, const Matrix& base,
                           const CodeTable* codes, RngStream& rng);

// Frozen base table E plus an optional adapter. Before an adapter is attached
// E itself is trainable; attaching freezes it.
class ItemEmbeddings {
 public:
  ItemEmbeddings() = default;
  explicit ItemEmbeddings(Matrix base);

  std::size_t num_items() const { return base_.rows(); }
  std::size_t dim() const { return base_.cols(); }

  const Matrix& base() const { return base_; }
  bool base_frozen() const { return frozen_; }

  const AdapterParams& adapter() const { return adapter_; }
  Strategy strategy() const;
  bool has_adapter() const { return !std::holds_alternative<std::monostate>(adapter_); }
  void attach(AdapterParams adapter);

  // Tensors a client trains and uploads, in wire order:
  // [E] (unfrozen only), then LoRA [A, B] | Hash [H, (W1, W2)] | RQ [C_0..C_{l-1}].
  std::vector<const Matrix*> trainable() const;
  std::vector<Matrix*> mutable_trainable();
  std::vector<Matrix> trainable_copy() const;
  void assign_trainable(std::span<const Matrix> tensors);

  // Fingerprint of everything that must stay fixed in the PEFT phase: the
  // frozen base, hash functions and semantic codes.
  std::uint64_t frozen_fingerprint() const;

 private:
  Matrix base_;
  bool frozen_ = false;
  AdapterParams adapter_;
};

// Intermediates of one compose() call needed for the backward pass.
struct ComposeCache {
  std::uint32_t item = 0;
  bool valid = false;
  Vector squeeze;     // SENet: s, length h
  Vector hidden_pre;  // SENet: W1 s, length h_1
  Vector weights;     // SENet: w, length h
};

struct SenetForward {
  Vector squeeze;
  Vector hidden_pre;
  Vector weights;
};

// s_j = mean of vector j; w = sigmoid(W2 relu(W1 s)).
SenetForward senet_weights(std::span<const Vector> vectors, const Matrix& w1, const Matrix& w2);

// Final item embedding: e_i plus the adapter's contribution.
Vector compose(const ItemEmbeddings& emb, std::uint32_t item, ComposeCache* cache = nullptr);

// Gradients aligned with ItemEmbeddings::trainable().
struct EmbeddingGrads {
  std::vector<RowGrad> tensors;

  static EmbeddingGrads zeros_like(const ItemEmbeddings& emb);
  void clear();
};

// Chains dL/de (for the composed embedding of `item`) into parameter
// gradients. Requires the cache filled by compose() for the same item.
void accumulate_embedding_grad(const ItemEmbeddings& emb, std::uint32_t item,
                               const ComposeCache& cache, std::span<const double> upstream,
                               EmbeddingGrads& grads);

void sgd_step(ItemEmbeddings& emb, const EmbeddingGrads& grads, double lr);

}  // namespace fedpeft
