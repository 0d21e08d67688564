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

#include <filesystem>
#include <fstream>

#include "fedpeft/federation.h"

namespace fedpeft {

// Writes config.txt, metrics.csv and rounds.csv for one run. Every row
// carries the config hash and seed. Only rounds.csv has wall-clock time, so
// metrics.csv is reproducible byte for byte.
class RunWriter {
 public:
  RunWriter(const std::filesystem::path& dir, const ExperimentConfig& config);

  void eval(const EvalRecord& record);
  void round(const RoundReport& report);

 private:
  std::string prefix_;
  std::ofstream metrics_;
  std::ofstream rounds_;
  bool metrics_header_ = false;
};

std::string metrics_csv_row(const std::string& prefix, const EvalRecord& record);

}  // namespace fedpeft
