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

#include "fedpeft/dataset.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "fedpeft/kmeans.h"
#include "fedpeft/rng.h"

namespace fedpeft {

namespace {

std::vector<std::string_view> split(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    // std::from_chars for floating point is incomplete in some toolchains.
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size()) return false;
    out = static_cast<T>(v);
    return true;
  } else {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
  }
}

struct RawRecord {
  std::string user;
  std::string item;
  float rating;
  std::int64_t timestamp;
};

// Sorted distinct ids -> dense index.
std::unordered_map<std::string, std::uint32_t> remap(std::vector<std::string>& ids,
                                                     bool numeric) {
  std::sort(ids.begin(), ids.end(), [numeric](const std::string& a, const std::string& b) {
    if (numeric && a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], static_cast<std::uint32_t>(i));
  return index;
}

std::string canonical_integer(std::string_view s) {
  std::int64_t v = 0;
  parse_number(s, v);
  return std::to_string(v);
}

}  // namespace

double InteractionLog::sparsity() const {
  if (num_users == 0 || num_items == 0) return 1.0;
  return 1.0 - static_cast<double>(records.size()) /
                   (static_cast<double>(num_users) * static_cast<double>(num_items));
}

InteractionLog parse_interactions(std::istream& in, LogFormat format) {
  std::vector<RawRecord> raw;
  std::string line;
  std::size_t line_no = 0;
  const std::string_view sep = format == LogFormat::kMl1m ? "::" : ",";
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(view, sep);
    if (format == LogFormat::kAmazonCsv && line_no == 1 && fields.size() == 4 &&
        trim(fields[2]) == "rating") {
      continue;  // header
    }
    FEDPEFT_CHECK(fields.size() == 4, "line {}: expected 4 fields separated by '{}', got {}",
                  line_no, sep, fields.size());
    RawRecord rec;
    std::int64_t user_num = 0;
    std::int64_t item_num = 0;
    if (format == LogFormat::kMl1m) {
      FEDPEFT_CHECK(parse_number(fields[0], user_num) && parse_number(fields[1], item_num),
                    "line {}: user and item ids must be integers", line_no);
      std::int64_t rating = 0;
      FEDPEFT_CHECK(parse_number(fields[2], rating), "line {}: rating must be an integer",
                    line_no);
      rec.user = canonical_integer(fields[0]);
      rec.item = canonical_integer(fields[1]);
      rec.rating = static_cast<float>(rating);
    } else {
      rec.user = std::string(trim(fields[0]));
      rec.item = std::string(trim(fields[1]));
      FEDPEFT_CHECK(!rec.user.empty() && !rec.item.empty(), "line {}: empty user or item id",
                    line_no);
      FEDPEFT_CHECK(parse_number(fields[2], rec.rating), "line {}: rating is not a number",
                    line_no);
    }
    FEDPEFT_CHECK(parse_number(fields[3], rec.timestamp), "line {}: timestamp must be an integer",
                  line_no);
    raw.push_back(std::move(rec));
  }

  InteractionLog log;
  const bool numeric = format == LogFormat::kMl1m;
  for (const RawRecord& r : raw) {
    log.user_ids.push_back(r.user);
    log.item_ids.push_back(r.item);
  }
  const auto user_index = remap(log.user_ids, numeric);
  const auto item_index = remap(log.item_ids, numeric);
  log.num_users = log.user_ids.size();
  log.num_items = log.item_ids.size();

  // Later lines win timestamp ties.
  std::map<std::pair<std::uint32_t, std::uint32_t>, Interaction> latest;
  for (const RawRecord& r : raw) {
    Interaction rec{user_index.at(r.user), item_index.at(r.item), r.rating, r.timestamp};
    auto [it, inserted] = latest.try_emplace({rec.user, rec.item}, rec);
    if (!inserted && rec.timestamp >= it->second.timestamp) it->second = rec;
  }
  log.records.reserve(latest.size());
  for (const auto& [key, rec] : latest) log.records.push_back(rec);
  std::sort(log.records.begin(), log.records.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user, a.timestamp, a.item) < std::tie(b.user, b.timestamp, b.item);
  });
  return log;
}

InteractionLog load_interactions(const std::filesystem::path& path, LogFormat format) {
  std::ifstream in(path);
  FEDPEFT_CHECK(in.good(), "cannot open interaction file {}", path.string());
  return parse_interactions(in, format);
}

void write_id_map(const InteractionLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  FEDPEFT_CHECK(out.good(), "cannot write id map {}", path.string());
  for (std::size_t u = 0; u < log.user_ids.size(); ++u) {
    out << "user\t" << u << '\t' << log.user_ids[u] << '\n';
  }
  for (std::size_t i = 0; i < log.item_ids.size(); ++i) {
    out << "item\t" << i << '\t' << log.item_ids[i] << '\n';
  }
}

std::vector<std::uint32_t> EvalSplit::positives(std::uint32_t user) const {
  const UserSplit& u = users.at(user);
  std::vector<std::uint32_t> out = u.train;
  if (u.test) out.insert(std::upper_bound(out.begin(), out.end(), *u.test), *u.test);
  return out;
}

std::vector<std::uint32_t> sample_negatives(std::span<const std::uint32_t> positives,
                                            std::size_t num_items, std::size_t count,
                                            RngStream& rng) {
  const std::size_t available = num_items - positives.size();
  FEDPEFT_CHECK(positives.size() <= num_items && count <= available,
                "cannot draw {} negatives: only {} non-interacted items", count, available);
  std::vector<std::uint32_t> out;
  if (count == 0) return out;
  out.reserve(count);
  // Index into the complement of `positives` without materializing it.
  auto nth_free = [&](std::size_t k) {
    std::size_t lo = 0;
    std::size_t hi = positives.size();
    // Smallest j such that positives[j] - j > k.
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (positives[mid] - mid <= k) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return static_cast<std::uint32_t>(k + lo);
  };
  for (std::size_t idx : rng.sample_without_replacement(available, count)) {
    out.push_back(nth_free(idx));
  }
  return out;
}

EvalSplit leave_one_out_split(const InteractionLog& log, std::size_t eval_negatives,
                              std::uint64_t seed) {
  EvalSplit split;
  split.num_items = log.num_items;
  split.users.resize(log.num_users);

  std::vector<std::vector<Interaction>> by_user(log.num_users);
  for (const Interaction& r : log.records) by_user[r.user].push_back(r);

  for (std::uint32_t u = 0; u < log.num_users; ++u) {
    auto& recs = by_user[u];
    std::sort(recs.begin(), recs.end(), [](const Interaction& a, const Interaction& b) {
      return std::tie(a.timestamp, a.item) < std::tie(b.timestamp, b.item);
    });
    UserSplit& us = split.users[u];
    for (const Interaction& r : recs) us.train.push_back(r.item);
    if (recs.size() >= 2) {
      us.test = recs.back().item;
      us.train.pop_back();
      split.test_users.push_back(u);
    }
    std::sort(us.train.begin(), us.train.end());
    if (us.test) {
      const auto positives = split.positives(u);
      const std::size_t count = std::min(eval_negatives, log.num_items - positives.size());
      RngStream rng(seed, {Purpose::kEvalNegatives, u, 0, 0});
      us.negatives = sample_negatives(positives, log.num_items, count, rng);
    }
  }
  return split;
}

ItemFeatureMatrix parse_item_features(std::istream& in, const InteractionLog& log) {
  std::unordered_map<std::string, std::uint32_t> index;
  for (std::size_t i = 0; i < log.item_ids.size(); ++i) {
    index.emplace(log.item_ids[i], static_cast<std::uint32_t>(i));
  }
  std::vector<Vector> rows(log.num_items);
  std::vector<bool> seen(log.num_items, false);
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    const std::size_t tab = view.find('\t');
    FEDPEFT_CHECK(tab != std::string_view::npos, "feature line {}: missing tab separator",
                  line_no);
    const auto it = index.find(std::string(trim(view.substr(0, tab))));
    if (it == index.end()) continue;
    Vector values;
    for (std::string_view field : split(view.substr(tab + 1), ",")) {
      double v = 0.0;
      FEDPEFT_CHECK(parse_number(field, v), "feature line {}: '{}' is not a number", line_no,
                    field);
      values.push_back(v);
    }
    if (dim == 0) dim = values.size();
    FEDPEFT_CHECK(values.size() == dim, "feature line {}: {} values, expected {}", line_no,
                  values.size(), dim);
    rows[it->second] = std::move(values);
    seen[it->second] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    FEDPEFT_CHECK(seen[i], "no feature vector for item '{}'", log.item_ids[i]);
  }
  ItemFeatureMatrix out;
  out.source = FeatureSource::kFile;
  out.values = Matrix(log.num_items, dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) out.values(i, d) = static_cast<float>(rows[i][d]);
  }
  return out;
}

ItemFeatureMatrix load_item_features(const std::filesystem::path& path,
                                     const InteractionLog& log) {
  std::ifstream in(path);
  FEDPEFT_CHECK(in.good(), "cannot open feature file {}", path.string());
  return parse_item_features(in, log);
}

ItemFeatureMatrix synthetic_item_features(const InteractionLog& log, std::size_t dim,
                                          std::uint64_t seed, std::size_t clusters) {
  FEDPEFT_CHECK(dim > 0, "feature dimension must be positive");
  FEDPEFT_CHECK(log.num_items > 0, "cannot build features for an empty catalogue");
  constexpr std::size_t kSketchDim = 64;

  // Two-hop co-occurrence sketch: each item sums random codes of every item
  // its users interacted with, so items sharing an audience point the same way.
  std::vector<Vector> item_codes(log.num_items);
  for (std::uint32_t i = 0; i < log.num_items; ++i) {
    RngStream rng(seed, {Purpose::kFeatures, i, 0, 1});
    item_codes[i].resize(kSketchDim);
    for (double& v : item_codes[i]) v = rng.normal();
  }
  std::vector<Vector> user_sum(log.num_users, Vector(kSketchDim, 0.0));
  for (const Interaction& r : log.records) {
    for (std::size_t d = 0; d < kSketchDim; ++d) user_sum[r.user][d] += item_codes[r.item][d];
  }
  std::vector<Vector> sketch(log.num_items, Vector(kSketchDim, 0.0));
  for (const Interaction& r : log.records) {
    for (std::size_t d = 0; d < kSketchDim; ++d) sketch[r.item][d] += user_sum[r.user][d];
  }
  for (Vector& s : sketch) {
    const double norm = std::sqrt(dot(s, s));
    if (norm > 0.0) {
      for (double& v : s) v /= norm;
    }
  }

  RngStream kmeans_rng(seed, {Purpose::kKMeans, 0, 0, 1});
  const KMeansResult clustering =
      kmeans(sketch, std::min(clusters, log.num_items), 10, kmeans_rng);

  std::vector<std::uint32_t> category(log.num_items);
  for (std::uint32_t i = 0; i < log.num_items; ++i) {
    category[i] = static_cast<std::uint32_t>(clustering.assignments[i]);
  }
  return category_features(category, dim, seed);
}

ItemFeatureMatrix category_features(std::span<const std::uint32_t> category, std::size_t dim,
                                    std::uint64_t seed, double noise) {
  FEDPEFT_CHECK(dim > 0, "feature dimension must be positive");
  FEDPEFT_CHECK(noise >= 0.0, "feature noise must be >= 0");
  std::uint32_t num_categories = 0;
  for (std::uint32_t c : category) num_categories = std::max(num_categories, c + 1);
  std::vector<Vector> directions(num_categories, Vector(dim));
  for (std::size_t c = 0; c < num_categories; ++c) {
    RngStream rng(seed, {Purpose::kFeatures, c, 0, 2});
    for (double& v : directions[c]) v = rng.normal();
  }

  ItemFeatureMatrix out;
  out.source = FeatureSource::kSynthetic;
  out.values = Matrix(category.size(), dim);
  out.category.assign(category.begin(), category.end());
  for (std::uint32_t i = 0; i < category.size(); ++i) {
    RngStream rng(seed, {Purpose::kFeatures, i, 0, 3});
    for (std::size_t d = 0; d < dim; ++d) {
      out.values(i, d) = static_cast<float>(directions[category[i]][d] + noise * rng.normal());
    }
  }
  return out;
}

std::vector<std::uint32_t> synthetic_item_clusters(const SyntheticLogSpec& spec) {
  FEDPEFT_CHECK(spec.items > 0 && spec.clusters > 0, "synthetic log needs items and clusters");
  RngStream layout(spec.seed, {Purpose::kSynthetic, 0, 0, 0});
  std::vector<std::uint32_t> perm(spec.items);
  for (std::uint32_t i = 0; i < spec.items; ++i) perm[i] = i;
  layout.shuffle(std::span(perm));
  std::vector<std::uint32_t> cluster(spec.items);
  for (std::uint32_t i = 0; i < spec.items; ++i) {
    cluster[i] = static_cast<std::uint32_t>(perm[i] % spec.clusters);
  }
  return cluster;
}

InteractionLog synthetic_interactions(const SyntheticLogSpec& spec) {
  FEDPEFT_CHECK(spec.users > 0 && spec.items > 0 && spec.clusters > 0,
                "synthetic log needs users, items and clusters");
  FEDPEFT_CHECK(spec.min_interactions >= 1 && spec.min_interactions <= spec.max_interactions &&
                    spec.max_interactions <= spec.items,
                "synthetic interaction counts must satisfy 1 <= min <= max <= items");
  const std::vector<std::uint32_t> cluster = synthetic_item_clusters(spec);
  std::vector<std::vector<std::uint32_t>> members(spec.clusters);
  for (std::uint32_t i = 0; i < spec.items; ++i) members[cluster[i]].push_back(i);

  InteractionLog log;
  log.num_users = spec.users;
  log.num_items = spec.items;
  for (std::size_t u = 0; u < spec.users; ++u) log.user_ids.push_back(std::to_string(u));
  for (std::size_t i = 0; i < spec.items; ++i) log.item_ids.push_back(std::to_string(i));

  for (std::uint32_t u = 0; u < spec.users; ++u) {
    RngStream rng(spec.seed, {Purpose::kSynthetic, u, 0, 1});
    const auto& home = members[rng.below(spec.clusters)];
    const std::size_t count =
        spec.min_interactions + rng.below(spec.max_interactions - spec.min_interactions + 1);
    std::vector<std::uint32_t> chosen;
    std::size_t from_home = 0;
    while (chosen.size() < count) {
      std::uint32_t item = 0;
      // Once the home cluster is exhausted only the uniform branch can add items.
      const bool home_open = from_home < home.size();
      if (home_open && rng.bernoulli(spec.affinity)) {
        item = home[rng.below(home.size())];
      } else {
        item = static_cast<std::uint32_t>(rng.below(spec.items));
      }
      if (std::find(chosen.begin(), chosen.end(), item) == chosen.end()) {
        chosen.push_back(item);
        if (std::find(home.begin(), home.end(), item) != home.end()) ++from_home;
      }
    }
    for (std::size_t t = 0; t < chosen.size(); ++t) {
      log.records.push_back({u, chosen[t], 1.0f, static_cast<std::int64_t>(t + 1)});
    }
  }
  return log;
}

}  // namespace fedpeft
