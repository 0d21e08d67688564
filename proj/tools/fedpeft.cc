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

// Command-line front end: pretrain, train, eval, comm and sweep.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fedpeft/config.h"
#include "fedpeft/federation.h"
#include "fedpeft/report.h"
#include "fedpeft/serialize.h"

namespace fs = std::filesystem;
using namespace fedpeft;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> rounds;
  std::string output;
  bool unsafe = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "key=value configuration file");
  cmd->add_option("-s,--set", o.overrides, "override one key, e.g. --set fed.lr=0.001");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--workers", o.workers, "threads for client training and evaluation");
  cmd->add_option("-o,--output", o.output, "output directory");
  cmd->add_flag("--unsafe", o.unsafe, "allow hyperparameters outside the tuning grids");
}

ExperimentConfig build_config(const CommonOptions& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) c = load_config(o.config_path);
  apply_overrides(c, o.overrides);
  if (o.seed) c.run.seed = *o.seed;
  if (o.workers) c.run.workers = *o.workers;
  if (o.rounds) c.fed.rounds = *o.rounds;
  if (const char* env = std::getenv("FEDPEFT_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    c.run.output = env;
  }
  if (!o.output.empty()) c.run.output = o.output;
  validate(c, o.unsafe);
  return c;
}

void write_codes_if_any(const ExperimentData& data, const ExperimentConfig& config,
                        const fs::path& dir) {
  if (data.codes) {
    write_codes(dir / "codes.tsv", *data.codes, data.log.item_ids, config_hash(config),
                config.run.seed);
  }
}

int cmd_pretrain(const CommonOptions& o) {
  const ExperimentConfig config = build_config(o);
  const fs::path dir = config.run.output;
  fs::create_directories(dir);
  ExperimentData data = prepare_data(config);
  const std::string prefix = fmt::format("{},{}", hash_hex(config_hash(config)), config.run.seed);
  {
    std::ofstream out(dir / "pretrain_loss.csv", std::ios::binary | std::ios::trunc);
    out << "config_hash,seed,model,step,loss\n";
    for (std::size_t i = 0; i < data.pretrain_loss.size(); ++i) {
      out << fmt::format("{},autoencoder,{},{:.6f}\n", prefix, i, data.pretrain_loss[i]);
    }
    for (std::size_t i = 0; i < data.rq_loss.size(); ++i) {
      out << fmt::format("{},rqvae,{},{:.6f}\n", prefix, i, data.rq_loss[i]);
    }
  }
  write_codes_if_any(data, config, dir);
  write_id_map(data.log, dir / "items.tsv");
  Experiment exp(config, std::move(data));
  exp.save_checkpoint(dir / "pretrained.fpeb");
  fmt::print("wrote {}\n", (dir / "pretrained.fpeb").string());
  return kExitOk;
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig config = build_config(o);
  const fs::path dir = config.run.output;
  RunWriter writer(dir, config);
  ExperimentData data = prepare_data(config);
  write_codes_if_any(data, config, dir);
  Experiment exp(config, std::move(data));

  RunSinks sinks;
  sinks.on_eval = [&](const EvalRecord& r) {
    writer.eval(r);
    fmt::print("round {:>5} {:<6} {}\n", r.round, to_string(r.phase), r.metrics.csv_row());
  };
  sinks.on_round = [&](const RoundReport& r) { writer.round(r); };
  sinks.on_checkpoint = [&](const Experiment& e) {
    e.save_checkpoint(dir / fmt::format("checkpoint-{:06}.fpeb", e.round()));
  };
  run_experiment(exp, sinks);
  exp.save_checkpoint(dir / "final.fpeb");
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, bool full_ranking, std::optional<std::size_t> workers) {
  Experiment exp = Experiment::load_checkpoint(checkpoint);
  ExperimentConfig config = exp.config();
  config.eval.full_ranking = config.eval.full_ranking || full_ranking;
  if (workers) config.run.workers = *workers;
  EvalOptions options;
  options.ks = config.eval.ks;
  options.full_ranking = config.eval.full_ranking;
  options.workers = config.run.workers;
  const MetricTable table = evaluate(exp.scorer(), exp.data().split, options);
  EvalRecord record{exp.round(), exp.model().phase, table};
  fmt::print("config_hash,seed,round,phase,users,{}\n", table.csv_header());
  fmt::print("{}", metrics_csv_row(
                       fmt::format("{},{}", hash_hex(config_hash(config)), config.run.seed),
                       record));
  return kExitOk;
}

std::size_t catalogue_size(const ExperimentConfig& config) {
  if (config.data.source == DataSource::kSynthetic) return config.data.synthetic.items;
  return load_log(config).num_items;
}

void print_comm_row(const std::string& prefix, const StrategyConfig& s, std::size_t n,
                    std::size_t k) {
  const std::size_t bytes = comm_cost(s, n, k);
  const Capacity cap = representation_capacity(s, n);
  fmt::print("{},{},{},{},{},{},{},{},{},{},{:.1f},{},{}\n", prefix, to_string(s.strategy), n, k,
             s.lora_rank, s.hash_table, s.hash_functions, s.rq_levels, s.rq_codebook, bytes,
             bytes / 1000.0, cap.value, cap.saturated ? "true" : "false");
}

int cmd_comm(const CommonOptions& o, std::optional<std::size_t> items) {
  const ExperimentConfig config = build_config(o);
  const std::size_t n = items ? *items : catalogue_size(config);
  const std::size_t k = config.backbone.dim;
  const std::string prefix = fmt::format("{},{}", hash_hex(config_hash(config)), config.run.seed);
  fmt::print(
      "config_hash,seed,strategy,n,k,k_L,d_H,h,l,d_R,bytes,kb,capacity,capacity_saturated\n");
  StrategyConfig s = config.strategy;
  s.strategy = Strategy::kFull;
  print_comm_row(prefix, s, n, k);
  s = config.strategy;
  s.strategy = Strategy::kLora;
  for (std::size_t r : {2, 3, 4, 5, 6}) {
    s.lora_rank = r;
    print_comm_row(prefix, s, n, k);
  }
  for (Strategy st : {Strategy::kHashMean, Strategy::kHashSenet}) {
    s = config.strategy;
    s.strategy = st;
    for (std::size_t d : {256, 512, 1024}) {
      for (std::size_t h : {1, 2, 3, 4}) {
        s.hash_table = d;
        s.hash_functions = h;
        print_comm_row(prefix, s, n, k);
      }
    }
  }
  s = config.strategy;
  s.strategy = Strategy::kRqVae;
  for (std::size_t l : {2, 3, 4, 5, 6}) {
    for (std::size_t d : {32, 64, 128, 256, 512}) {
      s.rq_levels = l;
      s.rq_codebook = d;
      print_comm_row(prefix, s, n, k);
    }
  }
  return kExitOk;
}

int cmd_sweep(const CommonOptions& o, const std::string& param,
              const std::vector<std::string>& values, bool train, std::optional<std::size_t> items) {
  const ExperimentConfig base = build_config(o);
  if (values.empty()) throw ConfigError("--values: at least one value is required");
  const fs::path root = base.run.output;
  bool header = false;
  for (const std::string& v : values) {
    CommonOptions point = o;
    point.overrides.push_back(fmt::format("{}={}", param, v));
    point.output = (root / fmt::format("sweep-{}-{}", param, v)).string();
    const ExperimentConfig config = build_config(point);
    const std::size_t n = items ? *items : catalogue_size(config);
    const std::size_t bytes = comm_cost(config.strategy, n, config.backbone.dim);
    std::string metrics_header;
    std::string metrics_row;
    if (train) {
      RunWriter writer(config.run.output, config);
      Experiment exp(config, prepare_data(config));
      RunSinks sinks;
      sinks.on_eval = [&](const EvalRecord& r) { writer.eval(r); };
      sinks.on_round = [&](const RoundReport& r) { writer.round(r); };
      const RunResult result = run_experiment(exp, sinks);
      metrics_header = "," + result.evals.back().metrics.csv_header();
      metrics_row = "," + result.evals.back().metrics.csv_row();
    }
    if (!header) {
      fmt::print("config_hash,seed,param,value,strategy,bytes,kb{}\n", metrics_header);
      header = true;
    }
    fmt::print("{},{},{},{},{},{},{:.1f}{}\n", hash_hex(config_hash(config)), config.run.seed,
               param, v, to_string(config.strategy.strategy), bytes, bytes / 1000.0,
               metrics_row);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated recommendation with parameter-efficient item embeddings"};
  app.require_subcommand(1);

  CommonOptions pre_opts;
  auto* pretrain = app.add_subcommand("pretrain", "train the autoencoder (and RQ-VAE codes)");
  add_common(pretrain, pre_opts);

  CommonOptions train_opts;
  auto* train = app.add_subcommand("train", "run a federated experiment");
  add_common(train, train_opts);
  train->add_option("--rounds", train_opts.rounds, "total rounds (overrides fed.rounds)");

  std::string checkpoint;
  bool full_ranking = false;
  std::optional<std::size_t> eval_workers;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("checkpoint", checkpoint, "FPEB checkpoint")->required();
  eval->add_flag("--full-ranking", full_ranking, "rank against all unseen items");
  eval->add_option("--workers", eval_workers, "evaluation threads");

  CommonOptions comm_opts;
  std::optional<std::size_t> comm_items;
  auto* comm = app.add_subcommand("comm", "per-client upload cost for each strategy");
  add_common(comm, comm_opts);
  comm->add_option("--items", comm_items, "catalogue size n (default: from the dataset)");

  CommonOptions sweep_opts;
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  bool sweep_train = false;
  std::optional<std::size_t> sweep_items;
  auto* sweep = app.add_subcommand("sweep", "vary one key over a list of values");
  add_common(sweep, sweep_opts);
  sweep->add_option("--param", sweep_param, "configuration key to vary")->required();
  sweep->add_option("--values", sweep_values, "values to try")->delimiter(',')->required();
  sweep->add_flag("--train", sweep_train, "also run training for every value");
  sweep->add_option("--items", sweep_items, "catalogue size n (default: from the dataset)");
  sweep->add_option("--rounds", sweep_opts.rounds, "total rounds (overrides fed.rounds)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*pretrain) return cmd_pretrain(pre_opts);
    if (*train) return cmd_train(train_opts);
    if (*eval) return cmd_eval(checkpoint, full_ranking, eval_workers);
    if (*comm) return cmd_comm(comm_opts, comm_items);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_param, sweep_values, sweep_train, sweep_items);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
