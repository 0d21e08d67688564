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

#include "fedpeft/report.h"

#include <fmt/format.h>

namespace fedpeft {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write {}", path.string());
  return out;
}

}  // namespace

std::string metrics_csv_row(const std::string& prefix, const EvalRecord& record) {
  return fmt::format("{},{},{},{},{}\n", prefix, record.round, to_string(record.phase),
                     record.metrics.users, record.metrics.csv_row());
}

RunWriter::RunWriter(const std::filesystem::path& dir, const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  const std::string hash = hash_hex(config_hash(config));
  prefix_ = fmt::format("{},{}", hash, config.run.seed);
  {
    std::ofstream cfg = open_output(dir / "config.txt");
    cfg << "# config_hash=" << hash << " seed=" << config.run.seed << "\n"
        << canonical_dump(config);
  }
  metrics_ = open_output(dir / "metrics.csv");
  rounds_ = open_output(dir / "rounds.csv");
  rounds_ << "config_hash,seed,round,phase,clients,trained,bytes_per_client,aggregate_bytes,"
             "loss,base_hash,frozen_hash,wall_ms\n";
  rounds_.flush();
}

void RunWriter::eval(const EvalRecord& record) {
  if (!metrics_header_) {
    metrics_ << "config_hash,seed,round,phase,users," << record.metrics.csv_header() << "\n";
    metrics_header_ = true;
  }
  metrics_ << metrics_csv_row(prefix_, record);
  metrics_.flush();
}

void RunWriter::round(const RoundReport& r) {
  rounds_ << fmt::format("{},{},{},{},{},{},{},{:.6f},{},{},{:.3f}\n", prefix_, r.round,
                         to_string(r.phase), r.clients.size(), r.trained_clients,
                         r.bytes_per_client, r.aggregate_bytes, r.loss, hash_hex(r.base_hash),
                         hash_hex(r.frozen_hash), r.wall_ms);
  rounds_.flush();
}

}  // namespace fedpeft
