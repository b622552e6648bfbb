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

#include "fedpriv/fedsim.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>

#include "fedpriv/errors.h"
#include "fedpriv/rng.h"
#include "json.hpp"

namespace fedpriv {
namespace {

using nlohmann::json;

struct ProviderProfile {
  std::vector<double> offset;
  std::array<int, 2> preferred_classes{};
  int record_count = 0;
};

void check_config(const SyntheticConfig& c) {
  if (c.n_clients < 1) throw ConfigError("dataset: n_clients must be >= 1");
  if (c.providers_per_client.size() != 1 &&
      c.providers_per_client.size() != static_cast<std::size_t>(c.n_clients)) {
    throw ConfigError("dataset: providers_per_client needs 1 or n_clients entries");
  }
  for (int p : c.providers_per_client) {
    if (p < 1) throw ConfigError("dataset: every client needs at least one provider");
  }
  if (c.records_per_provider_min < 1 ||
      c.records_per_provider_max < c.records_per_provider_min) {
    throw ConfigError("dataset: need 1 <= records_per_provider_min <= max");
  }
  if (c.feature_dim < 1) throw ConfigError("dataset: feature_dim must be >= 1");
  if (c.n_classes < 2) throw ConfigError("dataset: n_classes must be >= 2");
  if (!(c.heterogeneity >= 0.0 && c.heterogeneity <= 1.0)) {
    throw ConfigError("dataset: heterogeneity must lie in [0, 1]");
  }
  if (!(c.feature_scale_ratio > 0.0)) {
    throw ConfigError("dataset: feature_scale_ratio must be positive");
  }
  if (c.validation_seen_providers < 0 || c.validation_unseen_providers < 0 ||
      c.validation_records_per_provider < 0) {
    throw ConfigError("dataset: validation sizes must be >= 0");
  }
}

std::vector<std::string> make_vocabulary(RngStream rng, int n_classes) {
  std::set<std::string> used;
  std::vector<std::string> vocab;
  while (static_cast<int>(vocab.size()) < n_classes) {
    const int len = 3 + static_cast<int>(rng.below(6));
    std::string word(len, 'a');
    for (char& ch : word) ch = static_cast<char>('a' + rng.below(26));
    if (used.insert(word).second) vocab.push_back(word);
  }
  return vocab;
}

ProviderProfile make_profile(RngStream rng, const SyntheticConfig& c) {
  ProviderProfile p;
  p.offset.resize(c.feature_dim);
  const double offset_std = c.heterogeneity * c.provider_offset_scale;
  for (double& v : p.offset) v = offset_std * rng.normal();
  p.preferred_classes = {static_cast<int>(rng.below(c.n_classes)),
                         static_cast<int>(rng.below(c.n_classes))};
  const auto span = static_cast<std::uint64_t>(c.records_per_provider_max -
                                               c.records_per_provider_min + 1);
  p.record_count = c.records_per_provider_min + static_cast<int>(rng.below(span));
  return p;
}

class Generator {
 public:
  explicit Generator(const SyntheticConfig& c) : config_(c), root_(c.seed) {
    vocabulary_ = make_vocabulary(root_.derive(StreamTag::kVocabulary), c.n_classes);
    RngStream means = root_.derive(StreamTag::kClassMeans);
    class_means_.assign(c.n_classes, std::vector<double>(c.feature_dim));
    for (auto& mean : class_means_) {
      for (double& v : mean) v = c.class_separation * means.normal();
    }
    scales_.resize(c.feature_dim);
    for (int j = 0; j < c.feature_dim; ++j) {
      const double t = c.feature_dim == 1 ? 0.0 : double(j) / (c.feature_dim - 1);
      scales_[j] = std::pow(c.feature_scale_ratio, -t);
    }
  }

  RngStream provider_stream(std::int64_t id) const {
    return root_.derive(StreamTag::kProvider, static_cast<std::uint64_t>(id));
  }

  ProviderProfile profile(std::int64_t id) const {
    return make_profile(provider_stream(id), config_);
  }

  std::vector<Record> records(const ProviderProfile& profile, RngStream rng,
                              int count) const {
    std::vector<Record> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      int label;
      if (rng.uniform() < config_.heterogeneity) {
        label = profile.preferred_classes[rng.below(2)];
      } else {
        label = static_cast<int>(rng.below(config_.n_classes));
      }
      Record r;
      r.answer_id = label;
      r.answer = vocabulary_[label];
      r.features.resize(config_.feature_dim);
      for (int j = 0; j < config_.feature_dim; ++j) {
        const double raw = class_means_[label][j] + profile.offset[j] +
                           config_.noise_std * rng.normal();
        r.features[j] = raw * scales_[j];
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const RngStream& root() const { return root_; }

 private:
  const SyntheticConfig& config_;
  RngStream root_;
  std::vector<std::string> vocabulary_;
  std::vector<std::vector<double>> class_means_;
  std::vector<double> scales_;
};

}  // namespace

std::size_t ClientDataset::record_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.records.size();
  return n;
}

std::vector<const Record*> FederatedDataset::validation_records() const {
  std::vector<const Record*> out;
  for (const auto& g : validation) {
    for (const auto& r : g.records) out.push_back(&r);
  }
  return out;
}

void FederatedDataset::validate() const {
  if (clients.empty()) throw ConfigError("dataset has no clients");
  std::set<std::int64_t> providers;
  for (const auto& client : clients) {
    if (client.groups.empty()) {
      throw ConfigError("client " + std::to_string(client.client_id) + " has no providers");
    }
    for (const auto& g : client.groups) {
      if (g.records.empty()) {
        throw ConfigError("provider " + std::to_string(g.provider_id) + " has no records");
      }
      if (!providers.insert(g.provider_id).second) {
        throw ConfigError("provider " + std::to_string(g.provider_id) +
                          " appears more than once");
      }
      for (const auto& r : g.records) {
        if (static_cast<int>(r.features.size()) != feature_dim) {
          throw ConfigError("record feature dimension mismatch");
        }
        if (r.answer.empty()) throw ConfigError("record with empty answer");
        if (r.answer_id < 0 || static_cast<std::size_t>(r.answer_id) >= vocabulary.size()) {
          throw ConfigError("record answer_id out of range");
        }
      }
    }
  }
}

FederatedDataset generate_synthetic(const SyntheticConfig& config) {
  check_config(config);
  const Generator gen(config);
  FederatedDataset ds;
  ds.seed = config.seed;
  ds.feature_dim = config.feature_dim;
  ds.vocabulary = gen.vocabulary();

  std::int64_t next_id = 0;
  for (int k = 0; k < config.n_clients; ++k) {
    const int n_providers = config.providers_per_client.size() == 1
                                ? config.providers_per_client[0]
                                : config.providers_per_client[k];
    ClientDataset client;
    client.client_id = k;
    for (int p = 0; p < n_providers; ++p) {
      const std::int64_t id = next_id++;
      const ProviderProfile profile = gen.profile(id);
      ProviderGroup group;
      group.provider_id = id;
      group.records = gen.records(profile, gen.provider_stream(id).derive(StreamTag::kDataset),
                                  profile.record_count);
      client.groups.push_back(std::move(group));
    }
    ds.clients.push_back(std::move(client));
  }

  // Validation: providers seen in training (fresh records, same provider
  // profile) followed by providers never seen in training.
  const std::int64_t n_train_providers = next_id;
  RngStream pick = gen.root().derive(StreamTag::kValidation);
  const std::size_t n_seen = std::min<std::size_t>(
      static_cast<std::size_t>(config.validation_seen_providers),
      static_cast<std::size_t>(n_train_providers));
  const auto seen = pick.sample_without_replacement(
      static_cast<std::size_t>(n_train_providers), n_seen);
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const auto id = static_cast<std::int64_t>(seen[i]);
    ProviderGroup group;
    group.provider_id = id;
    group.records = gen.records(gen.profile(id),
                                gen.provider_stream(id).derive(StreamTag::kValidation, 1),
                                config.validation_records_per_provider);
    if (!group.records.empty()) ds.validation.push_back(std::move(group));
  }
  for (int i = 0; i < config.validation_unseen_providers; ++i) {
    const std::int64_t id = n_train_providers + i;
    ProviderGroup group;
    group.provider_id = id;
    group.records = gen.records(gen.profile(id),
                                gen.provider_stream(id).derive(StreamTag::kValidation),
                                config.validation_records_per_provider);
    if (!group.records.empty()) ds.validation.push_back(std::move(group));
  }
  return ds;
}

std::size_t min_group_count(const FederatedDataset& ds) {
  if (ds.clients.empty()) return 0;
  std::size_t best = ds.clients.front().groups.size();
  for (const auto& c : ds.clients) best = std::min(best, c.groups.size());
  return best;
}

void write_jsonl(const FederatedDataset& ds, std::ostream& out) {
  auto emit = [&](const char* split, const json& client_id, const ProviderGroup& g) {
    for (const Record& r : g.records) {
      json line;
      line["split"] = split;
      line["client_id"] = client_id;
      line["provider_id"] = g.provider_id;
      line["answer_id"] = r.answer_id;
      line["answer"] = r.answer;
      line["features"] = r.features;
      out << line.dump() << '\n';
    }
  };
  json header;
  header["split"] = "meta";
  header["feature_dim"] = ds.feature_dim;
  header["seed"] = ds.seed;
  header["vocabulary"] = ds.vocabulary;
  out << header.dump() << '\n';
  for (const auto& c : ds.clients) {
    for (const auto& g : c.groups) emit("train", c.client_id, g);
  }
  for (const auto& g : ds.validation) emit("valid", nullptr, g);
}

FederatedDataset read_jsonl(std::istream& in) {
  FederatedDataset ds;
  std::map<int, ClientDataset> clients;
  std::map<int, std::string> vocab;
  std::string line;
  int line_no = 0;
  auto append = [](std::vector<ProviderGroup>& groups, std::int64_t provider, Record r) {
    if (groups.empty() || groups.back().provider_id != provider) {
      groups.push_back(ProviderGroup{provider, {}});
    }
    groups.back().records.push_back(std::move(r));
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("split") == "meta") {
        ds.feature_dim = j.at("feature_dim").get<int>();
        ds.seed = j.at("seed").get<std::uint64_t>();
        ds.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < ds.vocabulary.size(); ++i) {
          vocab.emplace(static_cast<int>(i), ds.vocabulary[i]);
        }
        continue;
      }
      Record r;
      r.features = j.at("features").get<std::vector<double>>();
      r.answer = j.at("answer").get<std::string>();
      r.answer_id = j.at("answer_id").get<int>();
      const auto provider = j.at("provider_id").get<std::int64_t>();
      if (ds.feature_dim == 0) ds.feature_dim = static_cast<int>(r.features.size());
      if (auto [it, inserted] = vocab.emplace(r.answer_id, r.answer);
          !inserted && it->second != r.answer) {
        throw ConfigError("answer_id " + std::to_string(r.answer_id) +
                          " maps to two answers");
      }
      const std::string split = j.at("split").get<std::string>();
      if (split == "train") {
        const int client_id = j.at("client_id").get<int>();
        ClientDataset& client = clients[client_id];
        client.client_id = client_id;
        append(client.groups, provider, std::move(r));
      } else if (split == "valid") {
        append(ds.validation, provider, std::move(r));
      } else {
        throw ConfigError("unknown split '" + split + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (auto& [id, client] : clients) ds.clients.push_back(std::move(client));
  ds.vocabulary.clear();
  int expected = 0;
  for (const auto& [id, answer] : vocab) {
    if (id != expected++) throw ConfigError("dataset answer ids are not contiguous");
    ds.vocabulary.push_back(answer);
  }
  ds.validate();
  return ds;
}

}  // namespace fedpriv
