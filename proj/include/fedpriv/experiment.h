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

// One experiment end to end: dataset and model from a config, a protocol
// run, and the four output artifacts (history.csv, ledger.csv,
// summary.json, model.ckpt).

#ifndef FEDPRIV_EXPERIMENT_H_
#define FEDPRIV_EXPERIMENT_H_

#include <filesystem>
#include <string>

#include "fedpriv/config.h"

namespace fedpriv {

inline constexpr const char* kOutputRootEnv = "FEDPRIV_OUTPUT_ROOT";

// Relative dataset paths resolve against `base_dir`. The synthetic
// generator is seeded with the run seed.
FederatedDataset build_dataset(const ExperimentConfig& config,
                               const std::filesystem::path& base_dir = {});
// MLP feature_dim -> hidden... -> n_classes, then frozen layers and LoRA.
LayeredModel build_model(const ExperimentConfig& config, const FederatedDataset& ds);

struct ExperimentArtifacts {
  RunResult result;
  std::string history_csv;
  std::string ledger_csv;
  std::string summary_json;
  std::string checkpoint;  // binary
};

ExperimentArtifacts run_experiment(const ExperimentConfig& config,
                                   const std::filesystem::path& base_dir = {});

// Summary of a finished run; stable key order and no timestamps, so equal
// runs give equal bytes.
std::string summary_json(const ExperimentConfig& config, const FederatedDataset& ds,
                         const LayeredModel& initial, const RunResult& result);

// The per-round message plan of a config, as text or JSON.
std::string dry_run_report(const ExperimentConfig& config, const FederatedDataset& ds,
                           const LayeredModel& model, bool json);

// Where outputs go: output_dir (or runs/<name>), placed under $FEDPRIV_OUTPUT_ROOT
// when that is set and the directory is relative.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const std::string& name);

// Writes all four files or none: they are staged in a sibling temporary
// directory and moved into place; on failure everything written is removed.
void write_artifacts(const ExperimentArtifacts& artifacts, const std::filesystem::path& dir);

}  // namespace fedpriv

#endif  // FEDPRIV_EXPERIMENT_H_
