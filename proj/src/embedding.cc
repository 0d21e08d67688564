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

#include "fedpeft/embedding.h"

#include <cmath>

#include "fedpeft/mlp.h"
#include "fedpeft/rng.h"

namespace fedpeft {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

Moments moments(const Matrix& m) {
  Moments out;
  if (m.empty()) return out;
  double sum = 0.0;
  for (float v : m.values()) sum += v;
  out.mean = sum / static_cast<double>(m.size());
  double sq = 0.0;
  for (float v : m.values()) sq += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(m.size()));
  return out;
}

Matrix init_table(std::size_t rows, std::size_t cols, const Matrix& base, AdapterInit init,
                  RngStream& rng) {
  Matrix m(rows, cols);
  if (init == AdapterInit::kBaseDistribution) {
    const Moments mo = moments(base);
    for (float& v : m.values()) v = static_cast<float>(mo.mean + mo.stddev * rng.normal());
  }
  return m;
}

Matrix glorot_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return random_uniform(rows, cols, bound, rng);
}

void add_scaled(std::span<double> out, std::span<const float> v, double scale) {
  for (std::size_t d = 0; d < out.size(); ++d) out[d] += scale * static_cast<double>(v[d]);
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFull:
      return "full";
    case Strategy::kLora:
      return "lora";
    case Strategy::kHashMean:
      return "hash_mean";
    case Strategy::kHashSenet:
      return "hash_senet";
    case Strategy::kRqVae:
      return "rqvae";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::kFull, Strategy::kLora, Strategy::kHashMean, Strategy::kHashSenet,
                     Strategy::kRqVae}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError(fmt::format(
      "unknown strategy '{}' (expected full, lora, hash_mean, hash_senet or rqvae)", name));
}

void validate_hash_function(const HashFunction& f, std::uint64_t prime, std::size_t table_size) {
  FEDPEFT_CHECK(f.a != 0, "hash function requires a != 0");
  FEDPEFT_CHECK(f.a != f.b, "hash function requires a != b (got a = b = {})", f.a);
  FEDPEFT_CHECK(table_size >= 1, "hash table size must be at least 1");
  FEDPEFT_CHECK(prime >= table_size, "hash modulus p = {} is smaller than the table size {}",
                prime, table_size);
  FEDPEFT_CHECK(prime < (std::uint64_t{1} << 32), "hash modulus p = {} must be below 2^32",
                prime);
  FEDPEFT_CHECK(f.a < prime && f.b < prime, "hash parameters must be reduced modulo p");
}

LoraAdapter make_lora(const Matrix& base, std::size_t rank, RngStream& rng) {
  FEDPEFT_CHECK(rank >= 1, "LoRA rank must be at least 1");
  LoraAdapter lora;
  lora.a = init_table(base.rows(), rank, base, AdapterInit::kBaseDistribution, rng);
  lora.b = Matrix(base.cols(), rank);
  return lora;
}

std::vector<HashFunction> draw_hash_functions(std::size_t count, std::uint64_t prime,
                                              RngStream& rng) {
  FEDPEFT_CHECK(prime >= 2, "hash modulus must be at least 2");
  std::vector<HashFunction> out;
  while (out.size() < count) {
    HashFunction f{1 + rng.below(prime - 1), rng.below(prime)};
    if (f.a != f.b) out.push_back(f);
  }
  return out;
}

HashAdapter make_hash(const Matrix& base, std::size_t table_size,
                      std::vector<HashFunction> functions, std::uint64_t prime, bool senet,
                      std::size_t senet_ratio, AdapterInit init, RngStream& rng) {
  FEDPEFT_CHECK(!functions.empty(), "hash adapter needs at least one hash function");
  for (const HashFunction& f : functions) validate_hash_function(f, prime, table_size);
  HashAdapter hash;
  hash.functions = std::move(functions);
  hash.prime = prime;
  hash.senet = senet;
  hash.table = init_table(table_size, base.cols(), base, init, rng);
  const std::size_t h = hash.functions.size();
  if (senet) {
    FEDPEFT_CHECK(senet_ratio >= 1, "SENet expansion ratio must be at least 1");
    hash.w1 = glorot_matrix(senet_ratio * h, h, rng);
    hash.w2 = glorot_matrix(h, senet_ratio * h, rng);
  }
  hash.indices.resize(base.rows() * h);
  for (std::size_t i = 0; i < base.rows(); ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      hash.indices[i * h + j] =
          static_cast<std::uint32_t>(hash_index(i, hash.functions[j], prime, table_size));
    }
  }
  return hash;
}

RqVaeAdapter make_rqvae(const Matrix& base, std::size_t codebook_size, CodeTable codes,
                        AdapterInit init, RngStream& rng) {
  FEDPEFT_CHECK(codes.levels >= 1, "RQ-VAE adapter needs at least one level");
  FEDPEFT_CHECK(codes.num_items() == base.rows(), "semantic codes cover {} items, base has {}",
                codes.num_items(), base.rows());
  FEDPEFT_CHECK(codes.codebook_size == codebook_size,
                "codes were assigned with codebook size {}, adapter uses {}",
                codes.codebook_size, codebook_size);
  for (std::uint32_t c : codes.codes) {
    FEDPEFT_CHECK(c < codebook_size, "semantic code {} outside [0, {})", c, codebook_size);
  }
  RqVaeAdapter rq;
  for (std::size_t j = 0; j < codes.levels; ++j) {
    rq.codebooks.push_back(init_table(codebook_size, base.cols(), base, init, rng));
  }
  rq.codes = std::move(codes);
  return rq;
}

AdapterParams make_adapter(const StrategyConfig& config, const Matrix& base,
                           const CodeTable* codes, RngStream& rng) {
  switch (config.strategy) {
    case Strategy::kFull:
      return std::monostate{};
    case Strategy::kLora:
      return make_lora(base, config.lora_rank, rng);
    case Strategy::kHashMean:
    case Strategy::kHashSenet: {
      auto functions = draw_hash_functions(config.hash_functions, config.hash_prime, rng);
      return make_hash(base, config.hash_table, std::move(functions), config.hash_prime,
                       config.strategy == Strategy::kHashSenet, config.senet_ratio, config.init,
                       rng);
    }
    case Strategy::kRqVae:
      FEDPEFT_CHECK(codes != nullptr, "RQ-VAE adapter requires pre-trained semantic codes");
      FEDPEFT_CHECK(codes->levels == config.rq_levels,
                    "semantic codes have {} levels, config asks for {}", codes->levels,
                    config.rq_levels);
      return make_rqvae(base, config.rq_codebook, *codes, config.init, rng);
  }
  fail("unhandled strategy");
}

ItemEmbeddings::ItemEmbeddings(Matrix base) : base_(std::move(base)) {}

Strategy ItemEmbeddings::strategy() const {
  return std::visit(Overloaded{
                        [](const std::monostate&) { return Strategy::kFull; },
                        [](const LoraAdapter&) { return Strategy::kLora; },
                        [](const HashAdapter& h) {
                          return h.senet ? Strategy::kHashSenet : Strategy::kHashMean;
                        },
                        [](const RqVaeAdapter&) { return Strategy::kRqVae; },
                    },
                    adapter_);
}

void ItemEmbeddings::attach(AdapterParams adapter) {
  std::visit(Overloaded{
                 [](const std::monostate&) {},
                 [&](const LoraAdapter& l) {
                   FEDPEFT_CHECK(l.a.rows() == num_items() && l.b.rows() == dim() &&
                                     l.a.cols() == l.b.cols(),
                                 "LoRA adapter shape does not match the base table");
                 },
                 [&](const HashAdapter& h) {
                   FEDPEFT_CHECK(h.table.cols() == dim() &&
                                     h.indices.size() == num_items() * h.functions.size(),
                                 "hash adapter shape does not match the base table");
                 },
                 [&](const RqVaeAdapter& r) {
                   FEDPEFT_CHECK(r.codes.num_items() == num_items(),
                                 "semantic codes do not cover the base table");
                   for (const Matrix& c : r.codebooks) {
                     FEDPEFT_CHECK(c.cols() == dim(), "codebook width {} != k = {}", c.cols(),
                                   dim());
                   }
                 },
             },
             adapter);
  adapter_ = std::move(adapter);
  if (has_adapter()) frozen_ = true;
}

std::vector<Matrix*> ItemEmbeddings::mutable_trainable() {
  std::vector<Matrix*> out;
  if (!frozen_) out.push_back(&base_);
  std::visit(Overloaded{
                 [](std::monostate&) {},
                 [&](LoraAdapter& l) {
                   out.push_back(&l.a);
                   out.push_back(&l.b);
                 },
                 [&](HashAdapter& h) {
                   out.push_back(&h.table);
                   if (h.senet) {
                     out.push_back(&h.w1);
                     out.push_back(&h.w2);
                   }
                 },
                 [&](RqVaeAdapter& r) {
                   for (Matrix& c : r.codebooks) out.push_back(&c);
                 },
             },
             adapter_);
  return out;
}

std::vector<const Matrix*> ItemEmbeddings::trainable() const {
  auto mutable_view = const_cast<ItemEmbeddings*>(this)->mutable_trainable();
  return {mutable_view.begin(), mutable_view.end()};
}

std::vector<Matrix> ItemEmbeddings::trainable_copy() const {
  std::vector<Matrix> out;
  for (const Matrix* m : trainable()) out.push_back(*m);
  return out;
}

void ItemEmbeddings::assign_trainable(std::span<const Matrix> tensors) {
  auto targets = mutable_trainable();
  FEDPEFT_CHECK(targets.size() == tensors.size(), "expected {} trainable tensors, got {}",
                targets.size(), tensors.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    FEDPEFT_CHECK(targets[t]->same_shape(tensors[t]),
                  "trainable tensor {} has shape {}x{}, expected {}x{}", t, tensors[t].rows(),
                  tensors[t].cols(), targets[t]->rows(), targets[t]->cols());
    *targets[t] = tensors[t];
  }
}

std::uint64_t ItemEmbeddings::frozen_fingerprint() const {
  std::uint64_t h = fingerprint(base_);
  std::visit(Overloaded{
                 [](const std::monostate&) {},
                 [](const LoraAdapter&) {},
                 [&](const HashAdapter& a) {
                   h = fnv1a(std::as_bytes(std::span(a.functions)), h);
                   h = fnv1a(std::as_bytes(std::span(&a.prime, 1)), h);
                 },
                 [&](const RqVaeAdapter& r) {
                   h = fnv1a(std::as_bytes(std::span(r.codes.codes)), h);
                 },
             },
             adapter_);
  return h;
}

SenetForward senet_weights(std::span<const Vector> vectors, const Matrix& w1, const Matrix& w2) {
  const std::size_t h = vectors.size();
  FEDPEFT_CHECK(h > 0, "SENet needs at least one hash vector");
  FEDPEFT_CHECK(w1.cols() == h && w2.rows() == h && w2.cols() == w1.rows(),
                "SENet weights {}x{} / {}x{} do not fit {} hash vectors", w1.rows(), w1.cols(),
                w2.rows(), w2.cols(), h);
  SenetForward out;
  out.squeeze.resize(h);
  const std::size_t k = vectors.front().size();
  for (std::size_t j = 0; j < h; ++j) {
    FEDPEFT_CHECK(vectors[j].size() == k && k > 0, "hash vectors must share a positive length");
    double s = 0.0;
    for (double v : vectors[j]) s += v;
    out.squeeze[j] = s / static_cast<double>(k);
  }
  out.hidden_pre.resize(w1.rows());
  for (std::size_t r = 0; r < w1.rows(); ++r) out.hidden_pre[r] = dot(w1.row(r), out.squeeze);
  Vector hidden(out.hidden_pre.size());
  for (std::size_t r = 0; r < hidden.size(); ++r) {
    hidden[r] = out.hidden_pre[r] > 0.0 ? out.hidden_pre[r] : 0.0;
  }
  out.weights.resize(h);
  for (std::size_t j = 0; j < h; ++j) out.weights[j] = sigmoid(dot(w2.row(j), hidden));
  return out;
}

Vector compose(const ItemEmbeddings& emb, std::uint32_t item, ComposeCache* cache) {
  FEDPEFT_CHECK(item < emb.num_items(), "item {} out of range [0, {})", item, emb.num_items());
  Vector e = to_vector(emb.base().row(item));
  if (cache != nullptr) {
    *cache = ComposeCache{};
    cache->item = item;
    cache->valid = true;
  }
  std::visit(Overloaded{
                 [](const std::monostate&) {},
                 [&](const LoraAdapter& l) {
                   const auto a = l.a.row(item);
                   for (std::size_t d = 0; d < e.size(); ++d) {
                     double s = 0.0;
                     const auto brow = l.b.row(d);
                     for (std::size_t r = 0; r < a.size(); ++r) {
                       s += static_cast<double>(brow[r]) * static_cast<double>(a[r]);
                     }
                     e[d] += s;
                   }
                 },
                 [&](const HashAdapter& h) {
                   const std::size_t nh = h.functions.size();
                   const std::uint32_t* idx = h.indices.data() + item * nh;
                   if (!h.senet) {
                     Vector sum(e.size(), 0.0);
                     for (std::size_t j = 0; j < nh; ++j) add_scaled(sum, h.table.row(idx[j]), 1.0);
                     for (std::size_t d = 0; d < e.size(); ++d) {
                       e[d] += sum[d] / static_cast<double>(nh);
                     }
                     return;
                   }
                   std::vector<Vector> vectors;
                   for (std::size_t j = 0; j < nh; ++j) {
                     vectors.push_back(to_vector(h.table.row(idx[j])));
                   }
                   SenetForward se = senet_weights(vectors, h.w1, h.w2);
                   for (std::size_t j = 0; j < nh; ++j) {
                     for (std::size_t d = 0; d < e.size(); ++d) e[d] += se.weights[j] * vectors[j][d];
                   }
                   if (cache != nullptr) {
                     cache->squeeze = std::move(se.squeeze);
                     cache->hidden_pre = std::move(se.hidden_pre);
                     cache->weights = std::move(se.weights);
                   }
                 },
                 [&](const RqVaeAdapter& r) {
                   const auto codes = r.codes.item(item);
                   for (std::size_t j = 0; j < codes.size(); ++j) {
                     add_scaled(e, r.codebooks[j].row(codes[j]), 1.0);
                   }
                 },
             },
             emb.adapter());
  return e;
}

EmbeddingGrads EmbeddingGrads::zeros_like(const ItemEmbeddings& emb) {
  EmbeddingGrads g;
  for (const Matrix* m : emb.trainable()) g.tensors.emplace_back(m->cols());
  return g;
}

void EmbeddingGrads::clear() {
  for (RowGrad& t : tensors) t.clear();
}

void accumulate_embedding_grad(const ItemEmbeddings& emb, std::uint32_t item,
                               const ComposeCache& cache, std::span<const double> upstream,
                               EmbeddingGrads& grads) {
  FEDPEFT_CHECK(cache.valid && cache.item == item,
                "embedding gradient for item {} requires its compose() cache", item);
  FEDPEFT_CHECK(upstream.size() == emb.dim(), "upstream gradient has {} values, expected {}",
                upstream.size(), emb.dim());
  const std::size_t expected = emb.trainable().size();
  if (grads.tensors.size() != expected) grads = EmbeddingGrads::zeros_like(emb);
  const std::size_t k = emb.dim();

  std::size_t t = 0;
  if (!emb.base_frozen()) {
    auto row = grads.tensors[t++].row(item);
    for (std::size_t d = 0; d < k; ++d) row[d] += upstream[d];
  }
  std::visit(
      Overloaded{
          [](const std::monostate&) {},
          [&](const LoraAdapter& l) {
            const std::size_t rank = l.a.cols();
            const auto a = l.a.row(item);
            auto ga = grads.tensors[t].row(item);
            for (std::size_t r = 0; r < rank; ++r) {
              double s = 0.0;
              for (std::size_t d = 0; d < k; ++d) s += static_cast<double>(l.b(d, r)) * upstream[d];
              ga[r] += s;
            }
            RowGrad& gb = grads.tensors[t + 1];
            for (std::size_t d = 0; d < k; ++d) {
              if (upstream[d] == 0.0) continue;
              auto row = gb.row(static_cast<std::uint32_t>(d));
              for (std::size_t r = 0; r < rank; ++r) row[r] += upstream[d] * static_cast<double>(a[r]);
            }
          },
          [&](const HashAdapter& h) {
            const std::size_t nh = h.functions.size();
            const std::uint32_t* idx = h.indices.data() + item * nh;
            RowGrad& gt = grads.tensors[t];
            if (!h.senet) {
              const double scale = 1.0 / static_cast<double>(nh);
              for (std::size_t j = 0; j < nh; ++j) {
                auto row = gt.row(idx[j]);
                for (std::size_t d = 0; d < k; ++d) row[d] += scale * upstream[d];
              }
              return;
            }
            FEDPEFT_CHECK(cache.weights.size() == nh, "SENet gradient requires a SENet cache");
            const std::size_t h1 = h.w1.rows();
            // dL/dw_j = g . v_j, then through sigmoid.
            Vector d_out(nh);
            for (std::size_t j = 0; j < nh; ++j) {
              const double dw = dot(h.table.row(idx[j]), upstream);
              const double w = cache.weights[j];
              d_out[j] = dw * w * (1.0 - w);
            }
            Vector hidden(h1);
            for (std::size_t r = 0; r < h1; ++r) {
              hidden[r] = cache.hidden_pre[r] > 0.0 ? cache.hidden_pre[r] : 0.0;
            }
            RowGrad& gw1 = grads.tensors[t + 1];
            RowGrad& gw2 = grads.tensors[t + 2];
            Vector d_hidden(h1, 0.0);
            for (std::size_t j = 0; j < nh; ++j) {
              auto row = gw2.row(static_cast<std::uint32_t>(j));
              const auto w2row = h.w2.row(j);
              for (std::size_t r = 0; r < h1; ++r) {
                row[r] += d_out[j] * hidden[r];
                d_hidden[r] += d_out[j] * static_cast<double>(w2row[r]);
              }
            }
            Vector d_squeeze(nh, 0.0);
            for (std::size_t r = 0; r < h1; ++r) {
              const double d_pre = cache.hidden_pre[r] > 0.0 ? d_hidden[r] : 0.0;
              auto row = gw1.row(static_cast<std::uint32_t>(r));
              const auto w1row = h.w1.row(r);
              for (std::size_t j = 0; j < nh; ++j) {
                row[j] += d_pre * cache.squeeze[j];
                d_squeeze[j] += d_pre * static_cast<double>(w1row[j]);
              }
            }
            for (std::size_t j = 0; j < nh; ++j) {
              auto row = gt.row(idx[j]);
              const double from_squeeze = d_squeeze[j] / static_cast<double>(k);
              for (std::size_t d = 0; d < k; ++d) {
                row[d] += cache.weights[j] * upstream[d] + from_squeeze;
              }
            }
          },
          [&](const RqVaeAdapter& r) {
            const auto codes = r.codes.item(item);
            for (std::size_t j = 0; j < codes.size(); ++j) {
              auto row = grads.tensors[t + j].row(codes[j]);
              for (std::size_t d = 0; d < k; ++d) row[d] += upstream[d];
            }
          },
      },
      emb.adapter());
}

void sgd_step(ItemEmbeddings& emb, const EmbeddingGrads& grads, double lr) {
  auto targets = emb.mutable_trainable();
  FEDPEFT_CHECK(targets.size() == grads.tensors.size(),
                "embedding gradient has {} tensors, model has {}", grads.tensors.size(),
                targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) sgd_step(*targets[t], grads.tensors[t], lr);
}

}  // namespace fedpeft
