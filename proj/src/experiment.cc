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

#include "fedpriv/experiment.h"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "fedpriv/errors.h"
#include "json.hpp"

namespace fedpriv {
namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

FederatedDataset build_dataset(const ExperimentConfig& config, const fs::path& base_dir) {
  if (config.dataset.path.empty()) {
    SyntheticConfig s = config.dataset.synthetic;
    s.seed = config.protocol.seed;
    return generate_synthetic(s);
  }
  fs::path path(config.dataset.path);
  if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read dataset '" + path.string() + "'");
  FederatedDataset ds = read_jsonl(in);
  ds.validate();
  return ds;
}

LayeredModel build_model(const ExperimentConfig& config, const FederatedDataset& ds) {
  const ModelSpec& spec = config.model;
  if (ds.n_classes() < 2) throw ConfigError("dataset needs at least two classes");
  std::vector<int> widths = {ds.feature_dim};
  for (int h : spec.hidden) {
    if (h < 1) throw ConfigError("hidden widths must be positive");
    widths.push_back(h);
  }
  widths.push_back(static_cast<int>(ds.n_classes()));
  const RngStream root(config.protocol.seed);
  LayeredModel model =
      LayeredModel::mlp(widths, root.derive(StreamTag::kModelInit), spec.init_gain);
  for (const auto& name : spec.frozen) model.layer(name).frozen = true;
  if (spec.lora_rank > 0) {
    const RngStream rng = root.derive(StreamTag::kLora);
    if (spec.lora_targets.empty()) {
      lora_attach(
          model, [&](const std::string& name) { return !model.layer(name).frozen; },
          spec.lora_rank, rng, spec.lora_scaling);
    } else {
      lora_attach(model, spec.lora_targets, spec.lora_rank, rng, spec.lora_scaling);
    }
  }
  if (model.trainable_count() == 0) throw ConfigError("model has no trainable parameters");
  return model;
}

std::string summary_json(const ExperimentConfig& config, const FederatedDataset& ds,
                         const LayeredModel& initial, const RunResult& result) {
  const ProtocolConfig& p = config.protocol;
  Json j;
  j["protocol"] = to_string(p.protocol);
  j["seed"] = p.seed;
  j["rounds"] = p.rounds;
  j["clients"] = ds.clients.size();
  j["encoding"] = to_string(p.encoding);
  j["trainable_params"] = initial.trainable_count();
  j["total_params"] = initial.base_parameter_count();
  const RoundMetrics last = result.history.empty() ? RoundMetrics{} : result.history.back();
  j["final"] = {{"val_loss", last.val_loss}, {"accuracy", last.accuracy}, {"anls", last.anls}};
  const CommLedger& ledger = result.ledger;
  j["communication"] = {
      {"messages", ledger.entries().size()},
      {"total_bytes", ledger.total_bytes()},
      {"total_gb", ledger.total_gigabytes(config.gb_unit)},
      {"gb_unit", config.gb_unit == GbUnit::kDecimal ? "decimal" : "binary"},
      {"human", human_bytes(ledger.total_bytes(), 3, config.gb_unit)}};
  if (result.privacy) {
    const PrivacyReport& r = *result.privacy;
    j["privacy"] = {{"epsilon", r.spend.epsilon}, {"delta", r.spend.delta},
                    {"best_alpha", r.spend.best_alpha}, {"sigma", r.sigma},
                    {"q", r.q}, {"steps", r.steps}};
  } else {
    j["privacy"] = nullptr;
  }
  return j.dump(2) + "\n";
}

ExperimentArtifacts run_experiment(const ExperimentConfig& config, const fs::path& base_dir) {
  const FederatedDataset ds = build_dataset(config, base_dir);
  const LayeredModel model = build_model(config, ds);
  ExperimentArtifacts out;
  out.result = run_protocol(ds, model, config.protocol);

  std::ostringstream history;
  write_history_csv(out.result.history, history);
  out.history_csv = history.str();
  std::ostringstream ledger;
  out.result.ledger.write_csv(ledger);
  out.ledger_csv = ledger.str();
  out.summary_json = summary_json(config, ds, model, out.result);
  std::ostringstream ckpt(std::ios::binary);
  save_checkpoint(out.result.model, ckpt);
  out.checkpoint = ckpt.str();
  return out;
}

std::string dry_run_report(const ExperimentConfig& config, const FederatedDataset& ds,
                           const LayeredModel& model, bool json) {
  const CommLedger ledger = project_ledger(ds, model, config.protocol);
  struct Row {
    std::size_t messages = 0;
    std::uint64_t down = 0;
    std::uint64_t up = 0;
  };
  std::map<std::uint32_t, Row> rows;
  for (std::uint32_t r = 1; r <= static_cast<std::uint32_t>(config.protocol.rounds); ++r) rows[r];
  for (const auto& e : ledger.entries()) {
    Row& row = rows[e.round];
    ++row.messages;
    (e.direction == Direction::kDown ? row.down : row.up) += e.bytes;
  }
  const std::uint64_t per_message =
      message_bytes(model.trainable_count(), 0, bits_for(config.protocol.encoding));
  if (json) {
    Json j;
    j["trainable_params"] = model.trainable_count();
    j["bytes_per_message"] = per_message;
    Json plan = Json::array();
    for (const auto& [round, row] : rows) {
      plan.push_back({{"round", round},
                      {"clients", row.messages / 2},
                      {"down_bytes", row.down},
                      {"up_bytes", row.up},
                      {"round_bytes", row.down + row.up}});
    }
    j["rounds"] = plan;
    j["total_bytes"] = ledger.total_bytes();
    j["total_gb"] = ledger.total_gigabytes(config.gb_unit);
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "trainable parameters: " << model.trainable_count() << "\n"
      << "bytes per message:    " << per_message << " ("
      << human_bytes(per_message, 3, config.gb_unit) << ")\n"
      << "round,clients,down_bytes,up_bytes,round_bytes\n";
  for (const auto& [round, row] : rows) {
    out << round << ',' << row.messages / 2 << ',' << row.down << ',' << row.up << ','
        << row.down + row.up << '\n';
  }
  out << "total: " << ledger.total_bytes() << " bytes ("
      << human_bytes(ledger.total_bytes(), 3, config.gb_unit) << ")\n";
  return out.str();
}

fs::path resolve_output_dir(const ExperimentConfig& config, const std::string& name) {
  fs::path dir = config.output_dir.empty() ? fs::path("runs") / name : fs::path(config.output_dir);
  const char* root = std::getenv(kOutputRootEnv);
  if (root != nullptr && *root != '\0' && dir.is_relative()) dir = fs::path(root) / dir;
  return dir;
}

void write_artifacts(const ExperimentArtifacts& a, const fs::path& dir) {
  const std::vector<std::pair<std::string, const std::string*>> files = {
      {"history.csv", &a.history_csv},
      {"ledger.csv", &a.ledger_csv},
      {"summary.json", &a.summary_json},
      {"model.ckpt", &a.checkpoint}};
  const fs::path target = fs::absolute(dir);
  const fs::path staging = target.parent_path() / (target.filename().string() + ".partial");
  std::vector<fs::path> placed;
  std::error_code ignored;
  try {
    fs::remove_all(staging, ignored);
    fs::create_directories(staging);
    for (const auto& [name, content] : files) {
      std::ofstream out(staging / name, std::ios::binary);
      out.write(content->data(), static_cast<std::streamsize>(content->size()));
      out.close();
      if (!out) throw Error("cannot write " + (staging / name).string());
    }
    fs::create_directories(target);
    for (const auto& [name, content] : files) {
      fs::rename(staging / name, target / name);
      placed.push_back(target / name);
    }
    fs::remove_all(staging, ignored);
  } catch (const fs::filesystem_error& e) {
    for (const auto& p : placed) fs::remove(p, ignored);
    fs::remove_all(staging, ignored);
    throw Error(std::string("cannot write outputs: ") + e.what());
  } catch (...) {
    for (const auto& p : placed) fs::remove(p, ignored);
    fs::remove_all(staging, ignored);
    throw;
  }
}

}  // namespace fedpriv
