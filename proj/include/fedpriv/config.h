// Copyright 2026 The fedpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment configuration files: YAML with one mapping per section
// (dataset, model, protocol, optimizer, privacy, wire, run). Unknown sections
// and keys are errors reported with their line and column. Every field is
// optional; omitted ones keep the defaults below.

#ifndef FEDPRIV_CONFIG_H_
#define FEDPRIV_CONFIG_H_

#include <optional>
#include <string>
#include <vector>

#include "fedpriv/fedsim.h"
#include "fedpriv/protocols.h"
#include "fedpriv/wire.h"

namespace fedpriv {

struct DatasetSpec {
  // Empty: generate from `synthetic`. Otherwise a JSONL file (relative paths
  // resolve against the config file's directory).
  std::string path;
  SyntheticConfig synthetic;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct ModelSpec {
  std::vector<int> hidden = {32};  // widths between input and output
  double init_gain = 1.0;
  std::vector<std::string> frozen;  // layer names
  int lora_rank = 0;                // 0 disables adapters
  std::vector<std::string> lora_targets;  // empty: every non-frozen layer
  std::optional<double> lora_scaling;     // default 1 / rank

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  ProtocolConfig protocol;  // includes optimizer, privacy, encoding, jobs, seed
  GbUnit gb_unit = GbUnit::kDecimal;
  std::string output_dir;  // empty: runs/<config name>

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// `source` names the text in diagnostics ("<file>:<line>:<col>: ...").
// Throws ConfigError.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

// Full serialisation (every field); parse_config(dump_config(c)) == c.
std::string dump_config(const ExperimentConfig& config);

}  // namespace fedpriv

#endif  // FEDPRIV_CONFIG_H_
