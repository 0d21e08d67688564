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
#include <chrono>
#include <cmath>
#include <memory>
#include <sstream>

#include "fedpeft/parallel.h"
#include "fedpeft/pretrain.h"
#include "fedpeft/privacy.h"
#include "fedpeft/rng.h"
#include "fedpeft/serialize.h"

namespace fedpeft {

namespace {

// Clients trained concurrently before their updates are folded into the
// running sum. Only bounds memory; the reduction order is always ascending
// client id.
constexpr std::size_t kClientBlock = 64;

constexpr char kMagic[4] = {'F', 'P', 'E', 'B'};
constexpr std::uint16_t kCheckpointVersion = 1;

bool tensors_finite(std::span<const Matrix> tensors) {
  return std::all_of(tensors.begin(), tensors.end(),
                     [](const Matrix& m) { return all_finite(m.values()); });
}

void write_tensor(ByteWriter& out, const Matrix& m) {
  out.u32(static_cast<std::uint32_t>(m.rows()));
  out.u32(static_cast<std::uint32_t>(m.cols()));
  out.floats(m.values());
}

Matrix read_tensor(ByteReader& in) {
  const std::uint32_t rows = in.u32();
  const std::uint32_t cols = in.u32();
  Matrix m(rows, cols);
  in.floats(m.values());
  return m;
}

std::vector<Matrix> user_tensors(const UserState& user) {
  if (user.personal) return to_tensors(*user.personal);
  return {user.embedding};
}

void assign_user_tensors(UserState& user, std::span<const Matrix> tensors) {
  if (user.personal) {
    assign_tensors(*user.personal, tensors);
    return;
  }
  FEDPEFT_CHECK(tensors.size() == 1 && tensors[0].same_shape(user.embedding),
                "checkpoint user state does not match the configured backbone");
  user.embedding = tensors[0];
}

}  // namespace

std::string_view to_string(Phase phase) {
  return phase == Phase::kWarmUp ? "warmup" : "peft";
}

std::vector<Matrix> upload_tensors(const ItemEmbeddings& items, const Backbone& backbone) {
  std::vector<Matrix> out = items.trainable_copy();
  if (backbone.shared) {
    for (Matrix& m : to_tensors(*backbone.shared)) out.push_back(std::move(m));
  }
  return out;
}

void assign_upload(ItemEmbeddings& items, Backbone& backbone, std::span<const Matrix> tensors) {
  const std::size_t n_items = items.trainable().size();
  FEDPEFT_CHECK(tensors.size() >= n_items, "upload has {} tensors, expected at least {}",
                tensors.size(), n_items);
  items.assign_trainable(tensors.subspan(0, n_items));
  const auto rest = tensors.subspan(n_items);
  if (backbone.shared) {
    assign_tensors(*backbone.shared, rest);
  } else {
    FEDPEFT_CHECK(rest.empty(), "upload carries {} backbone tensors but the backbone has none",
                  rest.size());
  }
}

std::size_t shared_weight_bytes(const Backbone& backbone) {
  return backbone.shared ? 4 * backbone.shared->parameter_count() : 0;
}

std::vector<std::uint32_t> select_clients(std::size_t num_clients, double sample_ratio,
                                          std::uint64_t seed, std::size_t round) {
  FEDPEFT_CHECK(sample_ratio > 0.0 && sample_ratio <= 1.0,
                "sampling ratio must be in (0, 1], got {}", sample_ratio);
  // Guard against S*m landing a hair above an integer through rounding.
  const double want = sample_ratio * static_cast<double>(num_clients);
  std::size_t count = static_cast<std::size_t>(std::ceil(want - 1e-9));
  count = std::min(count, num_clients);
  RngStream rng(seed, {Purpose::kClientSelection, 0, round, 0});
  const std::vector<std::size_t> picked = rng.sample_without_replacement(num_clients, count);
  std::vector<std::uint32_t> out(picked.begin(), picked.end());
  std::sort(out.begin(), out.end());
  return out;
}

ClientUpdate client_round(const RoundContext& context, std::uint32_t client, UserState& user,
                          std::span<const std::uint32_t> train_positives) {
  FEDPEFT_CHECK(context.model != nullptr, "client round without a model snapshot");
  const GlobalModel& snapshot = *context.model;
  ClientUpdate out;
  out.client = client;
  out.interactions = train_positives.size();
  if (train_positives.empty()) {
    out.no_data = true;
    out.tensors.assign(context.snapshot.begin(), context.snapshot.end());
    return out;
  }

  ItemEmbeddings items = snapshot.items;
  Backbone backbone = snapshot.backbone;
  const std::size_t num_items = items.num_items();
  const std::size_t available = num_items - train_positives.size();
  const std::size_t negatives = std::min(context.fed.train_negatives, available);

  RngStream dropout(context.seed, {Purpose::kDropout, client, context.round, 0});
  std::vector<LabeledItem> samples;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t epoch = 0; epoch < context.fed.local_epochs; ++epoch) {
    RngStream neg_rng(context.seed, {Purpose::kTrainNegatives, client, context.round, epoch});
    samples.clear();
    for (std::uint32_t item : train_positives) {
      samples.push_back({item, 1});
      for (std::uint32_t j : sample_negatives(train_positives, num_items, negatives, neg_rng)) {
        samples.push_back({j, 0});
      }
    }
    RngStream order(context.seed, {Purpose::kLocalTraining, client, context.round, epoch});
    order.shuffle(std::span(samples));
    for (std::size_t start = 0; start < samples.size(); start += context.fed.batch) {
      const std::size_t len = std::min(context.fed.batch, samples.size() - start);
      const std::span<const LabeledItem> batch(samples.data() + start, len);
      loss_sum += static_cast<double>(len) *
                  local_step(backbone, user, items, batch, context.fed.lr, dropout);
      loss_count += len;
    }
  }
  out.loss = loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
  out.tensors = upload_tensors(items, backbone);

  RngStream noise(context.seed, {Purpose::kClientNoise, client, context.round, 0});
  apply_ldp(out.tensors, context.snapshot, context.dp, noise);
  out.bytes = serialize_tensors(out.tensors).size();
  return out;
}

Aggregator::Aggregator(std::span<const Matrix> snapshot, AggregateOptions options)
    : snapshot_(snapshot.begin(), snapshot.end()), options_(options) {
  FEDPEFT_CHECK(options.server_lr > 0.0, "server learning rate must be positive");
}

void Aggregator::add(const ClientUpdate& update) {
  FEDPEFT_CHECK(!update.no_data, "client {} has no update to aggregate", update.client);
  if (count_ == 0) {
    sums_.clear();
    for (const Matrix& m : update.tensors) sums_.emplace_back(m.size(), 0.0);
    if (options_.mode == Aggregation::kDeltas) {
      FEDPEFT_CHECK(snapshot_.size() == update.tensors.size(),
                    "delta aggregation needs a snapshot of every uploaded tensor");
    }
  }
  FEDPEFT_CHECK(update.tensors.size() == sums_.size(),
                "client {} uploaded {} tensors, expected {}", update.client,
                update.tensors.size(), sums_.size());
  const double w = options_.weighting == Weighting::kInteractions
                       ? static_cast<double>(update.interactions)
                       : 1.0;
  for (std::size_t t = 0; t < sums_.size(); ++t) {
    const auto v = update.tensors[t].values();
    FEDPEFT_CHECK(v.size() == sums_[t].size(), "client {} tensor {} has {} values, expected {}",
                  update.client, t, v.size(), sums_[t].size());
    std::vector<double>& sum = sums_[t];
    if (options_.mode == Aggregation::kDeltas) {
      FEDPEFT_CHECK(snapshot_[t].size() == v.size(), "snapshot tensor {} shape mismatch", t);
      const auto s = snapshot_[t].values();
      for (std::size_t i = 0; i < v.size(); ++i) {
        sum[i] += w * (static_cast<double>(v[i]) - static_cast<double>(s[i]));
      }
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) sum[i] += w * static_cast<double>(v[i]);
    }
  }
  weight_ += w;
  ++count_;
}

std::vector<Matrix> Aggregator::finish() const {
  FEDPEFT_CHECK(count_ > 0, "cannot aggregate an empty set of updates");
  FEDPEFT_CHECK(weight_ > 0.0, "aggregation weights sum to zero");
  std::vector<Matrix> out;
  out.reserve(sums_.size());
  for (std::size_t t = 0; t < sums_.size(); ++t) {
    // Shapes come from the snapshot when there is one, else from the sums.
    Matrix m = t < snapshot_.size() ? snapshot_[t] : Matrix(1, sums_[t].size());
    auto values = m.values();
    FEDPEFT_CHECK(values.size() == sums_[t].size(), "aggregate tensor {} shape mismatch", t);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double mean = sums_[t][i] / weight_;
      if (options_.mode == Aggregation::kDeltas) {
        values[i] = static_cast<float>(static_cast<double>(values[i]) + options_.server_lr * mean);
      } else {
        values[i] = static_cast<float>(mean);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Matrix> aggregate(std::span<const ClientUpdate> updates,
                              const AggregateOptions& options, std::span<const Matrix> snapshot) {
  std::vector<const ClientUpdate*> order;
  for (const ClientUpdate& u : updates) {
    if (!u.no_data) order.push_back(&u);
  }
  FEDPEFT_CHECK(!order.empty(), "cannot aggregate an empty set of updates");
  // Ties on client id are broken by content so that any permutation of the
  // input sums in the same order.
  auto content_key = [](const ClientUpdate& u) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Matrix& m : u.tensors) h = fingerprint(m, h);
    return h;
  };
  std::stable_sort(order.begin(), order.end(), [&](const ClientUpdate* a, const ClientUpdate* b) {
    if (a->client != b->client) return a->client < b->client;
    return content_key(*a) < content_key(*b);
  });

  std::vector<Matrix> shapes;
  if (snapshot.empty()) {
    shapes = order.front()->tensors;
  } else {
    shapes.assign(snapshot.begin(), snapshot.end());
  }
  Aggregator agg(shapes, options);
  for (const ClientUpdate* u : order) agg.add(*u);
  return agg.finish();
}

InteractionLog load_log(const ExperimentConfig& config) {
  switch (config.data.source) {
    case DataSource::kSynthetic:
      return synthetic_interactions(config.data.synthetic);
    case DataSource::kMl1m:
      return load_interactions(config.data.path, LogFormat::kMl1m);
    case DataSource::kAmazonCsv:
      return load_interactions(config.data.path, LogFormat::kAmazonCsv);
  }
  fail("unhandled data source");
}

InteractionLog training_log(const InteractionLog& log, const EvalSplit& split) {
  InteractionLog out = log;
  out.records.clear();
  for (const Interaction& r : log.records) {
    const auto& test = split.users[r.user].test;
    if (test && *test == r.item) continue;
    out.records.push_back(r);
  }
  return out;
}

ExperimentData prepare_split(const ExperimentConfig& config) {
  ExperimentData data;
  data.log = load_log(config);
  data.split = leave_one_out_split(data.log, config.eval.negatives, config.run.seed);
  return data;
}

ExperimentData prepare_data(const ExperimentConfig& config) {
  return prepare_data(config, load_log(config));
}

ExperimentData prepare_data(const ExperimentConfig& config, InteractionLog log,
                            std::optional<ItemFeatureMatrix> features) {
  ExperimentData data;
  data.log = std::move(log);
  data.split = leave_one_out_split(data.log, config.eval.negatives, config.run.seed);
  const std::size_t n = data.log.num_items;
  const std::size_t k = config.backbone.dim;

  const bool need_features =
      config.pretrain.enabled || config.strategy.strategy == Strategy::kRqVae;
  if (need_features && !features) {
    if (!config.data.features_path.empty()) {
      features = load_item_features(config.data.features_path, data.log);
    } else {
      // Built from training interactions only so held-out items stay unseen.
      features = synthetic_item_features(training_log(data.log, data.split),
                                         config.data.feature_dim, config.run.seed,
                                         config.data.synthetic.clusters);
    }
  }

  AutoencoderConfig net;
  net.hidden = config.pretrain.hidden;
  net.latent = k;
  net.steps = config.pretrain.steps;
  net.batch = config.pretrain.batch;
  net.lr = config.pretrain.lr;
  net.seed = config.run.seed;

  if (config.pretrain.enabled) {
    AutoencoderResult ae = train_autoencoder(features->values, net);
    data.initial_embeddings = std::move(ae.embeddings);
    data.pretrain_loss = std::move(ae.epoch_loss);
  } else {
    RngStream rng(config.run.seed, {Purpose::kInit, 0, 0, 0x45});
    data.initial_embeddings = random_uniform(n, k, 0.01, rng);
  }

  if (config.strategy.strategy == Strategy::kRqVae) {
    RqVaeConfig rq;
    rq.net = net;
    rq.net.steps = config.pretrain.rq_steps;
    rq.levels = config.strategy.rq_levels;
    rq.codebook_size = config.strategy.rq_codebook;
    rq.beta = config.pretrain.rq_beta;
    rq.kmeans_iters = config.pretrain.kmeans_iters;
    RqVaeResult result = train_rqvae(features->values, rq);
    data.codes = std::move(result.codes);
    data.rq_loss = std::move(result.step_loss);
  }
  return data;
}

Experiment::Experiment(ExperimentConfig config, ExperimentData data)
    : config_(std::move(config)), data_(std::move(data)) {
  validate(config_, /*unsafe=*/true);
  const std::size_t n = data_.log.num_items;
  if (data_.initial_embeddings.empty()) {
    data_.initial_embeddings = Matrix(n, config_.backbone.dim);
  }
  FEDPEFT_CHECK(data_.initial_embeddings.rows() == n &&
                    data_.initial_embeddings.cols() == config_.backbone.dim,
                "initial embeddings are {}x{}, expected {}x{}", data_.initial_embeddings.rows(),
                data_.initial_embeddings.cols(), n, config_.backbone.dim);
  model_.items = ItemEmbeddings(data_.initial_embeddings);
  model_.backbone = make_backbone(config_.backbone, config_.run.seed);
  users_.resize(data_.log.num_users);
}

bool Experiment::peft_due() const {
  return config_.strategy.strategy != Strategy::kFull && !model_.items.has_adapter() &&
         model_.round >= config_.fed.warmup_rounds && model_.round < config_.fed.rounds;
}

void Experiment::begin_peft() {
  FEDPEFT_CHECK(config_.strategy.strategy != Strategy::kFull,
                "the full-embedding strategy has no adapter");
  FEDPEFT_CHECK(!model_.items.has_adapter(), "adapter already attached");
  const CodeTable* codes = data_.codes ? &*data_.codes : nullptr;
  RngStream rng(config_.run.seed, {Purpose::kInit, 0, model_.round, 0xada});
  model_.items.attach(make_adapter(config_.strategy, model_.items.base(), codes, rng));
  model_.phase = Phase::kPeft;
}

UserState& Experiment::materialize(std::uint32_t user) {
  FEDPEFT_CHECK(user < users_.size(), "user {} out of range", user);
  if (!users_[user]) users_[user] = make_user_state(config_.backbone, user, config_.run.seed);
  return *users_[user];
}

UserState Experiment::user_state(std::uint32_t user) const {
  FEDPEFT_CHECK(user < users_.size(), "user {} out of range", user);
  if (users_[user]) return *users_[user];
  return make_user_state(config_.backbone, user, config_.run.seed);
}

RoundReport Experiment::step() {
  FEDPEFT_CHECK(!done(), "all {} rounds have run", config_.fed.rounds);
  if (peft_due()) begin_peft();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t t = model_.round;

  RoundReport report;
  report.round = t;
  report.phase = model_.phase;
  report.clients =
      select_clients(data_.log.num_users, config_.fed.sample_ratio, config_.run.seed, t);
  for (std::uint32_t c : report.clients) materialize(c);

  const std::vector<Matrix> snapshot = upload_tensors(model_.items, model_.backbone);
  RoundContext context;
  context.model = &model_;
  context.snapshot = snapshot;
  context.fed = config_.fed;
  context.dp = config_.dp;
  context.seed = config_.run.seed;
  context.round = t;

  AggregateOptions options;
  options.mode = config_.fed.aggregation;
  options.weighting = config_.fed.weighting;
  options.server_lr = config_.fed.server_lr;
  Aggregator agg(snapshot, options);

  double loss_sum = 0.0;
  std::vector<ClientUpdate> block;
  for (std::size_t b = 0; b < report.clients.size(); b += kClientBlock) {
    const std::size_t len = std::min(kClientBlock, report.clients.size() - b);
    block.assign(len, ClientUpdate{});
    try {
      parallel_for(len, config_.run.workers, [&](std::size_t i) {
        const std::uint32_t c = report.clients[b + i];
        block[i] = client_round(context, c, *users_[c], data_.split.users[c].train);
      });
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      fail("client training failed in round {}: {}", t, e.what());
    }
    for (const ClientUpdate& u : block) {
      if (u.no_data) continue;
      agg.add(u);
      loss_sum += u.loss;
      report.bytes_per_client = u.bytes;
      report.aggregate_bytes += u.bytes;
      ++report.trained_clients;
    }
  }

  if (agg.count() > 0) {
    std::vector<Matrix> next = agg.finish();
    RngStream noise(config_.run.seed, {Purpose::kServerNoise, 0, t, 0});
    apply_cdp(next, config_.dp, noise);
    if (!tensors_finite(next)) fail("non-finite parameter after round {}", t);
    assign_upload(model_.items, model_.backbone, next);
  }
  for (std::uint32_t c : report.clients) {
    const UserState& u = *users_[c];
    const bool ok = u.personal ? tensors_finite(to_tensors(*u.personal))
                               : all_finite(u.embedding.values());
    if (!ok) fail("non-finite parameter in client {} after round {}", c, t);
  }

  report.loss =
      report.trained_clients == 0 ? 0.0 : loss_sum / static_cast<double>(report.trained_clients);
  ++model_.round;
  report.base_hash = fingerprint(model_.items.base());
  report.frozen_hash = model_.items.frozen_fingerprint();
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - start)
                       .count();
  return report;
}

Scorer Experiment::scorer() const {
  const std::size_t n = model_.items.num_items();
  auto table = std::make_shared<std::vector<Vector>>(n);
  for (std::uint32_t i = 0; i < n; ++i) (*table)[i] = compose(model_.items, i);
  return [this, table](std::uint32_t user, std::span<const std::uint32_t> items,
                       std::span<double> out) {
    FEDPEFT_CHECK(items.size() == out.size(), "score buffer size mismatch");
    const UserState local = user_state(user);
    for (std::size_t j = 0; j < items.size(); ++j) {
      FEDPEFT_CHECK(items[j] < table->size(), "item {} out of range", items[j]);
      out[j] = score(model_.backbone, local, (*table)[items[j]], Mode::kEval);
    }
  };
}

MetricTable Experiment::evaluate() const {
  EvalOptions options;
  options.ks = config_.eval.ks;
  options.full_ranking = config_.eval.full_ranking;
  options.workers = config_.run.workers;
  return fedpeft::evaluate(scorer(), data_.split, options);
}

std::vector<double> Experiment::item_scores(std::uint32_t user) const {
  const std::size_t n = model_.items.num_items();
  std::vector<std::uint32_t> items(n);
  for (std::uint32_t i = 0; i < n; ++i) items[i] = i;
  std::vector<double> out(n);
  scorer()(user, items, out);
  return out;
}

std::vector<std::uint32_t> Experiment::top_items(std::uint32_t user, std::size_t k) const {
  return top_k(item_scores(user), k);
}

void Experiment::save_checkpoint(const std::filesystem::path& path) const {
  ByteWriter out;
  out.raw(std::as_bytes(std::span(kMagic)));
  out.u16(kCheckpointVersion);
  out.u8(static_cast<std::uint8_t>(model_.items.strategy()));
  out.u8(static_cast<std::uint8_t>(model_.backbone.kind));
  out.u64(config_hash(config_));
  out.u64(config_.run.seed);
  out.u64(model_.round);
  out.u8(static_cast<std::uint8_t>(model_.phase));
  const std::string dump = canonical_dump(config_);
  out.u32(static_cast<std::uint32_t>(dump.size()));
  out.raw(std::as_bytes(std::span(dump.data(), dump.size())));
  write_embeddings(out, model_.items);
  const std::vector<Matrix> shared =
      model_.backbone.shared ? to_tensors(*model_.backbone.shared) : std::vector<Matrix>{};
  out.u32(static_cast<std::uint32_t>(shared.size()));
  for (const Matrix& m : shared) write_tensor(out, m);
  std::uint32_t count = 0;
  for (const auto& u : users_) count += u.has_value() ? 1 : 0;
  out.u32(count);
  for (std::uint32_t u = 0; u < users_.size(); ++u) {
    if (!users_[u]) continue;
    const std::vector<Matrix> tensors = user_tensors(*users_[u]);
    out.u32(u);
    out.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const Matrix& m : tensors) write_tensor(out, m);
  }
  write_file(path, out.bytes());
}

Experiment Experiment::load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = read_file(path);
  ByteReader in(bytes);
  const auto magic = in.raw(4);
  if (!std::equal(magic.begin(), magic.end(), std::as_bytes(std::span(kMagic)).begin())) {
    fail("{} is not a checkpoint (bad magic)", path.string());
  }
  const std::uint16_t version = in.u16();
  FEDPEFT_CHECK(version == kCheckpointVersion, "unsupported checkpoint version {}", version);
  const auto strategy = static_cast<Strategy>(in.u8());
  const auto backbone = static_cast<BackboneKind>(in.u8());
  const std::uint64_t hash = in.u64();
  const std::uint64_t seed = in.u64();
  const std::uint64_t round = in.u64();
  const std::uint8_t phase = in.u8();
  FEDPEFT_CHECK(phase <= 1, "checkpoint has invalid phase {}", phase);
  const std::uint32_t dump_len = in.u32();
  const auto dump_bytes = in.raw(dump_len);
  const std::string dump(reinterpret_cast<const char*>(dump_bytes.data()), dump_bytes.size());
  std::istringstream dump_in(dump);
  ExperimentConfig config = parse_config(dump_in);
  FEDPEFT_CHECK(config_hash(config) == hash && config.run.seed == seed,
                "checkpoint header does not match its embedded configuration");
  FEDPEFT_CHECK(config.backbone.kind == backbone, "checkpoint backbone tag mismatch");

  Experiment exp(config, prepare_split(config));
  exp.model_.items = read_embeddings(in);
  FEDPEFT_CHECK(exp.model_.items.strategy() == strategy ||
                    (!exp.model_.items.has_adapter() && strategy == Strategy::kFull),
                "checkpoint strategy tag mismatch");
  FEDPEFT_CHECK(exp.model_.items.num_items() == exp.data_.log.num_items,
                "checkpoint has {} items, dataset has {}", exp.model_.items.num_items(),
                exp.data_.log.num_items);
  exp.data_.initial_embeddings = exp.model_.items.base();
  exp.model_.round = round;
  exp.model_.phase = static_cast<Phase>(phase);
  const std::uint32_t n_shared = in.u32();
  std::vector<Matrix> shared;
  for (std::uint32_t i = 0; i < n_shared; ++i) shared.push_back(read_tensor(in));
  if (exp.model_.backbone.shared) {
    assign_tensors(*exp.model_.backbone.shared, shared);
  } else {
    FEDPEFT_CHECK(shared.empty(), "checkpoint carries backbone weights the backbone lacks");
  }
  const std::uint32_t n_users = in.u32();
  for (std::uint32_t i = 0; i < n_users; ++i) {
    const std::uint32_t u = in.u32();
    const std::uint32_t count = in.u32();
    std::vector<Matrix> tensors;
    for (std::uint32_t j = 0; j < count; ++j) tensors.push_back(read_tensor(in));
    assign_user_tensors(exp.materialize(u), tensors);
  }
  FEDPEFT_CHECK(in.done(), "checkpoint has {} trailing bytes", in.remaining());
  return exp;
}

RunResult run_experiment(Experiment& experiment, const RunSinks& sinks) {
  RunResult result;
  const ExperimentConfig& config = experiment.config();
  auto record_eval = [&] {
    EvalRecord r;
    r.round = experiment.round();
    r.phase = experiment.model().phase;
    r.metrics = experiment.evaluate();
    if (sinks.on_eval) sinks.on_eval(r);
    result.evals.push_back(std::move(r));
  };

  record_eval();
  while (!experiment.done()) {
    if (experiment.peft_due()) {
      experiment.begin_peft();
      record_eval();
    }
    RoundReport report = experiment.step();
    if (sinks.on_round) sinks.on_round(report);
    result.rounds.push_back(std::move(report));
    const std::size_t r = experiment.round();
    if (r % config.eval.every == 0 || experiment.done()) record_eval();
    if (sinks.on_checkpoint && config.run.checkpoint_every > 0 &&
        r % config.run.checkpoint_every == 0) {
      sinks.on_checkpoint(experiment);
    }
  }
  return result;
}

}  // namespace fedpeft
