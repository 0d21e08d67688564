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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "fedpeft/tensor.h"

namespace fedpeft {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view what) {
  throw ConfigError(fmt::format("{}: expected {}, got '{}'", key, what, value));
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty() ||
      !std::isfinite(out)) {
    bad_value(key, value, "a finite number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    out.push_back(parse_u64(key, trim(value.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_list(const std::vector<std::size_t>& values) {
  return fmt::format("{}", fmt::join(values, ","));
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename E>
E parse_enum(std::string_view key, std::string_view value,
             std::initializer_list<std::pair<std::string_view, E>> names) {
  std::string expected;
  for (const auto& [name, e] : names) {
    if (name == value) return e;
    if (!expected.empty()) expected += ", ";
    expected += name;
  }
  bad_value(key, value, fmt::format("one of {}", expected));
}

template <typename E>
std::string_view enum_name(E value, std::initializer_list<std::pair<std::string_view, E>> names) {
  for (const auto& [name, e] : names) {
    if (e == value) return name;
  }
  return "unknown";
}

const std::initializer_list<std::pair<std::string_view, DataSource>> kSources = {
    {"synthetic", DataSource::kSynthetic},
    {"ml1m", DataSource::kMl1m},
    {"amazon", DataSource::kAmazonCsv}};
const std::initializer_list<std::pair<std::string_view, AdapterInit>> kInits = {
    {"zero", AdapterInit::kZero}, {"base", AdapterInit::kBaseDistribution}};
const std::initializer_list<std::pair<std::string_view, Aggregation>> kAggregations = {
    {"params", Aggregation::kParams}, {"deltas", Aggregation::kDeltas}};
const std::initializer_list<std::pair<std::string_view, Weighting>> kWeightings = {
    {"uniform", Weighting::kUniform}, {"interactions", Weighting::kInteractions}};

struct Field {
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = static_cast<std::size_t>(parse_u64(k, v));
          },
          [member](const ExperimentConfig& c) {
            return std::to_string(member(c));
          }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_double(k, v);
          },
          [member](const ExperimentConfig& c) {
            return format_double(member(c));
          }};
}

template <typename Member>
Field bool_field(Member member) {
  return {[member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_bool(k, v);
          },
          [member](const ExperimentConfig& c) {
            return std::string(member(c) ? "true" : "false");
          }};
}

template <typename Member>
Field string_field(Member member) {
  return {[member](ExperimentConfig& c, std::string_view, std::string_view v) {
            member(c) = std::string(v);
          },
          [member](const ExperimentConfig& c) { return member(c); }};
}

template <typename Member>
Field list_field(Member member) {
  return {[member](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_list(k, v);
          },
          [member](const ExperimentConfig& c) {
            return format_list(member(c));
          }};
}

template <typename E, typename Member>
Field enum_field(Member member, std::initializer_list<std::pair<std::string_view, E>> names) {
  return {[member, names](ExperimentConfig& c, std::string_view k, std::string_view v) {
            member(c) = parse_enum(k, v, names);
          },
          [member, names](const ExperimentConfig& c) {
            return std::string(enum_name(member(c), names));
          }};
}

#define FIELD(expr) [](auto& c) -> decltype(auto) { return (c.expr); }

const std::map<std::string, Field, std::less<>>& fields() {
  static const auto* table = new std::map<std::string, Field, std::less<>>{
      {"data.source", enum_field(FIELD(data.source), kSources)},
      {"data.path", string_field(FIELD(data.path))},
      {"data.features", string_field(FIELD(data.features_path))},
      {"data.feature_dim", size_field(FIELD(data.feature_dim))},
      {"data.synthetic.users", size_field(FIELD(data.synthetic.users))},
      {"data.synthetic.items", size_field(FIELD(data.synthetic.items))},
      {"data.synthetic.clusters", size_field(FIELD(data.synthetic.clusters))},
      {"data.synthetic.min_interactions", size_field(FIELD(data.synthetic.min_interactions))},
      {"data.synthetic.max_interactions", size_field(FIELD(data.synthetic.max_interactions))},
      {"data.synthetic.affinity", double_field(FIELD(data.synthetic.affinity))},
      {"data.synthetic.seed",
       {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.data.synthetic.seed = parse_u64(k, v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.data.synthetic.seed); }}},
      {"model.backbone",
       {[](ExperimentConfig& c, std::string_view, std::string_view v) {
          c.backbone.kind = parse_backbone(v);
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.backbone.kind)); }}},
      {"model.dim", size_field(FIELD(backbone.dim))},
      {"model.dropout", double_field(FIELD(backbone.dropout))},
      {"model.ncf_hidden", list_field(FIELD(backbone.ncf_hidden))},
      {"model.pfedrec_hidden", list_field(FIELD(backbone.pfedrec_hidden))},
      {"strategy.name",
       {[](ExperimentConfig& c, std::string_view, std::string_view v) {
          c.strategy.strategy = parse_strategy(v);
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.strategy.strategy)); }}},
      {"strategy.lora_rank", size_field(FIELD(strategy.lora_rank))},
      {"strategy.hash_table", size_field(FIELD(strategy.hash_table))},
      {"strategy.hash_functions", size_field(FIELD(strategy.hash_functions))},
      {"strategy.hash_prime",
       {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.strategy.hash_prime = parse_u64(k, v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.strategy.hash_prime); }}},
      {"strategy.senet_ratio", size_field(FIELD(strategy.senet_ratio))},
      {"strategy.rq_levels", size_field(FIELD(strategy.rq_levels))},
      {"strategy.rq_codebook", size_field(FIELD(strategy.rq_codebook))},
      {"strategy.init", enum_field(FIELD(strategy.init), kInits)},
      {"pretrain.enabled", bool_field(FIELD(pretrain.enabled))},
      {"pretrain.hidden", list_field(FIELD(pretrain.hidden))},
      {"pretrain.steps", size_field(FIELD(pretrain.steps))},
      {"pretrain.batch", size_field(FIELD(pretrain.batch))},
      {"pretrain.lr", double_field(FIELD(pretrain.lr))},
      {"pretrain.rq_steps", size_field(FIELD(pretrain.rq_steps))},
      {"pretrain.kmeans_iters", size_field(FIELD(pretrain.kmeans_iters))},
      {"pretrain.rq_beta", double_field(FIELD(pretrain.rq_beta))},
      {"fed.sample_ratio", double_field(FIELD(fed.sample_ratio))},
      {"fed.local_epochs", size_field(FIELD(fed.local_epochs))},
      {"fed.rounds", size_field(FIELD(fed.rounds))},
      {"fed.warmup_rounds", size_field(FIELD(fed.warmup_rounds))},
      {"fed.lr", double_field(FIELD(fed.lr))},
      {"fed.batch", size_field(FIELD(fed.batch))},
      {"fed.train_negatives", size_field(FIELD(fed.train_negatives))},
      {"fed.aggregation", enum_field(FIELD(fed.aggregation), kAggregations)},
      {"fed.weighting", enum_field(FIELD(fed.weighting), kWeightings)},
      {"fed.server_lr", double_field(FIELD(fed.server_lr))},
      {"dp.mode",
       {[](ExperimentConfig& c, std::string_view, std::string_view v) {
          c.dp.mode = parse_dp_mode(v);
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.dp.mode)); }}},
      {"dp.delta", double_field(FIELD(dp.delta))},
      {"dp.clip",
       {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
          if (v == "off" || v.empty()) {
            c.dp.clip.reset();
          } else {
            c.dp.clip = parse_double(k, v);
          }
        },
        [](const ExperimentConfig& c) {
          return c.dp.clip ? format_double(*c.dp.clip) : std::string("off");
        }}},
      {"eval.ks", list_field(FIELD(eval.ks))},
      {"eval.negatives", size_field(FIELD(eval.negatives))},
      {"eval.every", size_field(FIELD(eval.every))},
      {"eval.full_ranking", bool_field(FIELD(eval.full_ranking))},
      {"run.seed",
       {[](ExperimentConfig& c, std::string_view k, std::string_view v) {
          c.run.seed = parse_u64(k, v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.run.seed); }}},
      {"run.output", string_field(FIELD(run.output))},
      {"run.workers", size_field(FIELD(run.workers))},
      {"run.checkpoint_every", size_field(FIELD(run.checkpoint_every))},
  };
  return *table;
}

#undef FIELD

void require(bool ok, std::string_view key, std::string_view message) {
  if (!ok) throw ConfigError(fmt::format("{}: {}", key, message));
}

template <typename T>
void require_in(T value, std::initializer_list<T> allowed, std::string_view key) {
  if (std::find(allowed.begin(), allowed.end(), value) == allowed.end()) {
    throw ConfigError(fmt::format("{}: {} is outside the tuning grid {{{}}} (use --unsafe to allow)",
                                  key, value, fmt::join(allowed, ",")));
  }
}

}  // namespace

void set_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError(fmt::format("{}: unknown configuration key", key));
  try {
    it->second.set(config, key, trim(value));
  } catch (const ConfigError& e) {
    const std::string_view what = e.what();
    if (what.starts_with(key)) throw;
    throw ConfigError(fmt::format("{}: {}", key, what));
  }
}

void apply_overrides(ExperimentConfig& config, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}: override must have the form key=value", a));
    }
    set_value(config, trim(std::string_view(a).substr(0, eq)),
              std::string_view(a).substr(eq + 1));
  }
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw ConfigError(fmt::format("line {}: unterminated section header", line_no));
      }
      section = std::string(trim(s.substr(1, s.size() - 2)));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    }
    std::string key(trim(s.substr(0, eq)));
    if (!section.empty()) key = section + "." + key;
    set_value(base, key, s.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  return parse_config(in, std::move(base));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) keys.push_back(key);
  return keys;
}

std::string canonical_dump(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) out += fmt::format("{}={}\n", key, field.get(config));
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::string text;
  for (const auto& [key, field] : fields()) {
    if (key == "run.seed" || key == "run.output" || key == "run.workers") continue;
    text += fmt::format("{}={}\n", key, field.get(config));
  }
  return fnv1a(std::as_bytes(std::span(text.data(), text.size())));
}

std::string hash_hex(std::uint64_t hash) { return fmt::format("{:016x}", hash); }

void validate(const ExperimentConfig& c, bool unsafe) {
  if (c.data.source != DataSource::kSynthetic) {
    require(!c.data.path.empty(), "data.path", "required for file-backed datasets");
  } else {
    const SyntheticLogSpec& s = c.data.synthetic;
    require(s.users > 0, "data.synthetic.users", "must be positive");
    require(s.items > 0, "data.synthetic.items", "must be positive");
    require(s.clusters > 0, "data.synthetic.clusters", "must be positive");
    require(s.min_interactions >= 1 && s.min_interactions <= s.max_interactions,
            "data.synthetic.min_interactions", "must satisfy 1 <= min <= max");
    require(s.max_interactions <= s.items, "data.synthetic.max_interactions",
            "cannot exceed the number of items");
    require(s.affinity >= 0.0 && s.affinity <= 1.0, "data.synthetic.affinity",
            "must be in [0, 1]");
  }
  require(c.data.feature_dim > 0, "data.feature_dim", "must be positive");

  require(c.backbone.dim > 0, "model.dim", "must be positive");
  require(c.backbone.dropout >= 0.0 && c.backbone.dropout < 1.0, "model.dropout",
          "must be in [0, 1)");
  require(std::none_of(c.backbone.ncf_hidden.begin(), c.backbone.ncf_hidden.end(),
                       [](std::size_t v) { return v == 0; }),
          "model.ncf_hidden", "layer widths must be positive");
  require(std::none_of(c.backbone.pfedrec_hidden.begin(), c.backbone.pfedrec_hidden.end(),
                       [](std::size_t v) { return v == 0; }),
          "model.pfedrec_hidden", "layer widths must be positive");

  const StrategyConfig& st = c.strategy;
  require(st.lora_rank >= 1, "strategy.lora_rank", "must be positive");
  require(st.hash_functions >= 1, "strategy.hash_functions", "must be positive");
  require(st.hash_table >= 1, "strategy.hash_table", "must be positive");
  require(st.hash_prime >= st.hash_table, "strategy.hash_prime",
          "must be at least strategy.hash_table");
  require(st.hash_prime < (std::uint64_t{1} << 32), "strategy.hash_prime", "must be below 2^32");
  require(st.senet_ratio >= 1, "strategy.senet_ratio", "must be positive");
  require(st.rq_levels >= 1, "strategy.rq_levels", "must be positive");
  require(st.rq_codebook >= 1, "strategy.rq_codebook", "must be positive");
  if (!unsafe) {
    require_in<std::size_t>(st.lora_rank, {2, 3, 4, 5, 6}, "strategy.lora_rank");
    require_in<std::size_t>(st.rq_levels, {2, 3, 4, 5, 6}, "strategy.rq_levels");
    require_in<std::size_t>(st.rq_codebook, {32, 64, 128, 256, 512}, "strategy.rq_codebook");
    require_in<std::size_t>(st.hash_table, {256, 512, 1024}, "strategy.hash_table");
    require_in<std::size_t>(st.hash_functions, {1, 2, 3, 4}, "strategy.hash_functions");
  }

  require(c.pretrain.batch >= 1, "pretrain.batch", "must be positive");
  require(c.pretrain.lr > 0.0, "pretrain.lr", "must be positive");
  require(c.pretrain.rq_beta >= 0.0, "pretrain.rq_beta", "must be >= 0");
  require(std::none_of(c.pretrain.hidden.begin(), c.pretrain.hidden.end(),
                       [](std::size_t v) { return v == 0; }),
          "pretrain.hidden", "layer widths must be positive");

  require(c.fed.sample_ratio > 0.0 && c.fed.sample_ratio <= 1.0, "fed.sample_ratio",
          "must be in (0, 1]");
  require(c.fed.lr > 0.0, "fed.lr", "must be positive");
  require(c.fed.batch >= 1, "fed.batch", "must be positive");
  require(c.fed.server_lr > 0.0, "fed.server_lr", "must be positive");

  require(c.dp.delta >= 0.0, "dp.delta", "Laplace scale must be >= 0");
  require(!c.dp.clip || *c.dp.clip > 0.0, "dp.clip", "must be positive or off");

  require(!c.eval.ks.empty(), "eval.ks", "needs at least one cutoff");
  require(std::none_of(c.eval.ks.begin(), c.eval.ks.end(), [](std::size_t k) { return k == 0; }),
          "eval.ks", "cutoffs must be >= 1");
  require(c.eval.every >= 1, "eval.every", "must be positive");
  require(c.run.workers >= 1, "run.workers", "must be positive");
}

}  // namespace fedpeft
