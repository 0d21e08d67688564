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

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace fedpeft {

namespace {

template <typename T>
void put_le(std::vector<std::byte>& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(std::span<const std::byte> in) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(std::to_integer<std::uint8_t>(in[i])) << (8 * i);
  }
  return v;
}

std::uint64_t mul_saturating(std::uint64_t a, std::uint64_t b, bool& saturated) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  if (p > std::numeric_limits<std::uint64_t>::max()) {
    saturated = true;
    return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(p);
}

}  // namespace

void ByteWriter::u16(std::uint16_t v) { put_le(bytes_, v); }
void ByteWriter::u32(std::uint32_t v) { put_le(bytes_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(bytes_, v); }
void ByteWriter::f32(float v) { put_le(bytes_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(bytes_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::raw(std::span<const std::byte> data) {
  bytes_.insert(bytes_.end(), data.begin(), data.end());
}

void ByteWriter::floats(std::span<const float> values) {
  bytes_.reserve(bytes_.size() + 4 * values.size());
  if constexpr (std::endian::native == std::endian::little) {
    raw(std::as_bytes(values));
  } else {
    for (float v : values) f32(v);
  }
}

void ByteReader::need(std::size_t n) const {
  FEDPEFT_CHECK(remaining() >= n, "truncated payload: need {} bytes at offset {}, have {}", n,
                pos_, remaining());
}

std::uint8_t ByteReader::u8() {
  need(1);
  return std::to_integer<std::uint8_t>(data_[pos_++]);
}

std::uint16_t ByteReader::u16() {
  need(2);
  const auto v = get_le<std::uint16_t>(data_.subspan(pos_));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4);
  const auto v = get_le<std::uint32_t>(data_.subspan(pos_));
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  const auto v = get_le<std::uint64_t>(data_.subspan(pos_));
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::floats(std::span<float> out) {
  need(4 * out.size());
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), data_.data() + pos_, 4 * out.size());
    pos_ += 4 * out.size();
  } else {
    for (float& v : out) v = f32();
  }
}

std::span<const std::byte> ByteReader::raw(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::vector<std::byte> serialize_tensors(std::span<const Matrix> tensors) {
  ByteWriter w;
  for (const Matrix& t : tensors) w.floats(t.values());
  return w.take();
}

void deserialize_tensors(std::span<const std::byte> payload, std::span<Matrix> tensors) {
  std::size_t expected = 0;
  for (const Matrix& t : tensors) expected += 4 * t.size();
  FEDPEFT_CHECK(payload.size() == expected, "payload has {} bytes, expected {}", payload.size(),
                expected);
  ByteReader r(payload);
  for (Matrix& t : tensors) r.floats(t.values());
}

std::vector<std::byte> serialize_upload(const ItemEmbeddings& emb) {
  ByteWriter w;
  for (const Matrix* t : emb.trainable()) w.floats(t->values());
  return w.take();
}

void deserialize_upload(std::span<const std::byte> payload, ItemEmbeddings& emb) {
  std::vector<Matrix> tensors = emb.trainable_copy();
  deserialize_tensors(payload, tensors);
  emb.assign_trainable(tensors);
}

std::size_t comm_cost(const StrategyConfig& config, std::size_t num_items, std::size_t dim) {
  constexpr std::size_t kBytes = sizeof(float);
  switch (config.strategy) {
    case Strategy::kFull:
      return kBytes * num_items * dim;
    case Strategy::kLora:
      return kBytes * config.lora_rank * (num_items + dim);
    case Strategy::kHashMean:
      return kBytes * config.hash_table * dim;
    case Strategy::kHashSenet: {
      const std::size_t h = config.hash_functions;
      const std::size_t h1 = config.senet_ratio * h;
      return kBytes * (config.hash_table * dim + 2 * h1 * h);
    }
    case Strategy::kRqVae:
      return kBytes * config.rq_levels * config.rq_codebook * dim;
  }
  return 0;
}

Capacity representation_capacity(const StrategyConfig& config, std::size_t num_items) {
  Capacity out;
  switch (config.strategy) {
    case Strategy::kFull:
    case Strategy::kLora:
      out.value = num_items;
      return out;
    case Strategy::kRqVae:
      out.value = 1;
      for (std::size_t j = 0; j < config.rq_levels; ++j) {
        out.value = mul_saturating(out.value, config.rq_codebook, out.saturated);
      }
      return out;
    case Strategy::kHashMean:
    case Strategy::kHashSenet: {
      // Multisets of size h over d_H rows: C(d_H + h - 1, h), built as a
      // running product that stays an exact integer after each division.
      const std::uint64_t n = config.hash_table + config.hash_functions - 1;
      const std::uint64_t k = config.hash_functions;
      unsigned __int128 acc = 1;
      for (std::uint64_t i = 1; i <= k; ++i) {
        acc = acc * (n - k + i) / i;
        if (acc > std::numeric_limits<std::uint64_t>::max()) {
          out.saturated = true;
          out.value = std::numeric_limits<std::uint64_t>::max();
          return out;
        }
      }
      out.value = static_cast<std::uint64_t>(acc);
      return out;
    }
  }
  return out;
}

namespace {

void write_matrix_body(ByteWriter& out, const Matrix& m) { out.floats(m.values()); }

Matrix read_matrix_body(ByteReader& in, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  in.floats(m.values());
  return m;
}

}  // namespace

void write_embeddings(ByteWriter& out, const ItemEmbeddings& emb) {
  out.u8(static_cast<std::uint8_t>(emb.strategy()));
  out.u8(emb.base_frozen() ? 1 : 0);
  out.u32(static_cast<std::uint32_t>(emb.num_items()));
  out.u32(static_cast<std::uint32_t>(emb.dim()));
  write_matrix_body(out, emb.base());
  if (const auto* l = std::get_if<LoraAdapter>(&emb.adapter())) {
    out.u32(static_cast<std::uint32_t>(l->a.cols()));
    write_matrix_body(out, l->a);
    write_matrix_body(out, l->b);
  } else if (const auto* h = std::get_if<HashAdapter>(&emb.adapter())) {
    out.u32(static_cast<std::uint32_t>(h->table.rows()));
    out.u32(static_cast<std::uint32_t>(h->functions.size()));
    out.u64(h->prime);
    out.u32(static_cast<std::uint32_t>(h->w1.rows()));
    for (const HashFunction& f : h->functions) {
      out.u64(f.a);
      out.u64(f.b);
    }
    write_matrix_body(out, h->table);
    if (h->senet) {
      write_matrix_body(out, h->w1);
      write_matrix_body(out, h->w2);
    }
  } else if (const auto* r = std::get_if<RqVaeAdapter>(&emb.adapter())) {
    out.u32(static_cast<std::uint32_t>(r->codes.levels));
    out.u32(static_cast<std::uint32_t>(r->codes.codebook_size));
    for (std::uint32_t c : r->codes.codes) out.u32(c);
    for (const Matrix& c : r->codebooks) write_matrix_body(out, c);
  }
}

ItemEmbeddings read_embeddings(ByteReader& in) {
  const std::uint8_t tag = in.u8();
  FEDPEFT_CHECK(tag <= static_cast<std::uint8_t>(Strategy::kRqVae), "unknown strategy tag {}",
                tag);
  const auto strategy = static_cast<Strategy>(tag);
  const bool frozen = in.u8() != 0;
  const std::size_t n = in.u32();
  const std::size_t k = in.u32();
  ItemEmbeddings emb(read_matrix_body(in, n, k));
  switch (strategy) {
    case Strategy::kFull:
      FEDPEFT_CHECK(!frozen, "a full-embedding checkpoint cannot have a frozen base");
      return emb;
    case Strategy::kLora: {
      const std::size_t rank = in.u32();
      LoraAdapter l;
      l.a = read_matrix_body(in, n, rank);
      l.b = read_matrix_body(in, k, rank);
      emb.attach(std::move(l));
      break;
    }
    case Strategy::kHashMean:
    case Strategy::kHashSenet: {
      HashAdapter h;
      const std::size_t table = in.u32();
      const std::size_t count = in.u32();
      h.prime = in.u64();
      const std::size_t h1 = in.u32();
      h.senet = strategy == Strategy::kHashSenet;
      for (std::size_t j = 0; j < count; ++j) {
        HashFunction f;
        f.a = in.u64();
        f.b = in.u64();
        validate_hash_function(f, h.prime, table);
        h.functions.push_back(f);
      }
      h.table = read_matrix_body(in, table, k);
      if (h.senet) {
        h.w1 = read_matrix_body(in, h1, count);
        h.w2 = read_matrix_body(in, count, h1);
      }
      h.indices.resize(n * count);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < count; ++j) {
          h.indices[i * count + j] =
              static_cast<std::uint32_t>(hash_index(i, h.functions[j], h.prime, table));
        }
      }
      emb.attach(std::move(h));
      break;
    }
    case Strategy::kRqVae: {
      RqVaeAdapter r;
      r.codes.levels = in.u32();
      r.codes.codebook_size = in.u32();
      r.codes.codes.resize(n * r.codes.levels);
      for (std::uint32_t& c : r.codes.codes) {
        c = in.u32();
        FEDPEFT_CHECK(c < r.codes.codebook_size, "semantic code {} out of range", c);
      }
      for (std::size_t j = 0; j < r.codes.levels; ++j) {
        r.codebooks.push_back(read_matrix_body(in, r.codes.codebook_size, k));
      }
      emb.attach(std::move(r));
      break;
    }
  }
  FEDPEFT_CHECK(frozen, "adapter checkpoint must carry a frozen base");
  return emb;
}

void write_codes(const std::filesystem::path& path, const CodeTable& codes,
                 std::span<const std::string> item_ids, std::uint64_t config_hash,
                 std::uint64_t seed) {
  FEDPEFT_CHECK(item_ids.size() == codes.num_items(), "codes cover {} items, id map has {}",
                codes.num_items(), item_ids.size());
  std::ofstream out(path);
  FEDPEFT_CHECK(out.good(), "cannot write codes file {}", path.string());
  out << fmt::format("# fedpeft-codes v1 levels={} codebook={} config_hash={:016x} seed={}\n",
                     codes.levels, codes.codebook_size, config_hash, seed);
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    out << item_ids[i] << '\t';
    const auto c = codes.item(i);
    for (std::size_t j = 0; j < c.size(); ++j) out << (j ? "," : "") << c[j];
    out << '\n';
  }
}

CodeTable read_codes(const std::filesystem::path& path, std::span<const std::string> item_ids) {
  std::ifstream in(path);
  FEDPEFT_CHECK(in.good(), "cannot open codes file {}", path.string());
  std::string header;
  std::getline(in, header);
  CodeTable codes;
  {
    std::istringstream hs(header);
    std::string hash_mark, magic, version, field;
    hs >> hash_mark >> magic >> version;
    FEDPEFT_CHECK(hash_mark == "#" && magic == "fedpeft-codes" && version == "v1",
                  "{} is not a v1 codes file", path.string());
    while (hs >> field) {
      if (field.starts_with("levels=")) codes.levels = std::stoul(field.substr(7));
      if (field.starts_with("codebook=")) codes.codebook_size = std::stoul(field.substr(9));
    }
  }
  FEDPEFT_CHECK(codes.levels > 0 && codes.codebook_size > 0, "codes header lacks shape");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < item_ids.size(); ++i) index.emplace(item_ids[i], i);
  codes.codes.assign(item_ids.size() * codes.levels, 0);
  std::vector<bool> seen(item_ids.size(), false);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    FEDPEFT_CHECK(tab != std::string::npos, "codes line {}: missing tab", line_no);
    const auto it = index.find(line.substr(0, tab));
    if (it == index.end()) continue;
    std::istringstream fields(line.substr(tab + 1));
    std::string f;
    std::size_t j = 0;
    while (std::getline(fields, f, ',')) {
      FEDPEFT_CHECK(j < codes.levels, "codes line {}: too many codes", line_no);
      const unsigned long c = std::stoul(f);
      FEDPEFT_CHECK(c < codes.codebook_size, "codes line {}: code {} out of range", line_no, c);
      codes.codes[it->second * codes.levels + j++] = static_cast<std::uint32_t>(c);
    }
    FEDPEFT_CHECK(j == codes.levels, "codes line {}: expected {} codes", line_no, codes.levels);
    seen[it->second] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    FEDPEFT_CHECK(seen[i], "codes file has no entry for item '{}'", item_ids[i]);
  }
  return codes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary);
  FEDPEFT_CHECK(out.good(), "cannot write {}", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  FEDPEFT_CHECK(in.good(), "cannot open {}", path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(buf.size());
  std::memcpy(out.data(), buf.data(), buf.size());
  return out;
}

}  // namespace fedpeft
