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

// Data model of the federation: N clients, each owning disjoint provider
// groups of labelled records, plus a validation split that mixes providers
// seen in training with unseen ones.

#ifndef FEDPRIV_FEDSIM_H_
#define FEDPRIV_FEDSIM_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fedpriv {

struct Record {
  std::vector<double> features;
  std::string answer;
  int answer_id = 0;

  friend bool operator==(const Record&, const Record&) = default;
};

struct ProviderGroup {
  std::int64_t provider_id = 0;
  std::vector<Record> records;

  friend bool operator==(const ProviderGroup&, const ProviderGroup&) = default;
};

struct ClientDataset {
  int client_id = 0;
  std::vector<ProviderGroup> groups;

  std::size_t record_count() const;
  friend bool operator==(const ClientDataset&, const ClientDataset&) = default;
};

struct FederatedDataset {
  std::vector<ClientDataset> clients;
  // Validation records grouped by provider; unseen providers have ids that
  // never occur in `clients`.
  std::vector<ProviderGroup> validation;
  // Answer string of every class id.
  std::vector<std::string> vocabulary;
  int feature_dim = 0;
  std::uint64_t seed = 0;

  std::size_t n_classes() const { return vocabulary.size(); }
  std::vector<const Record*> validation_records() const;
  // Checks the partition and id-uniqueness invariants; throws ConfigError.
  void validate() const;

  friend bool operator==(const FederatedDataset&, const FederatedDataset&) = default;
};

// Provider counts of the ten training clients of the PFL-DocVQA split.
inline constexpr std::array<int, 10> kDocVqaProviderCounts = {400, 418, 404, 414, 429,
                                                              423, 423, 416, 401, 421};

struct SyntheticConfig {
  int n_clients = 10;
  // One entry per client, or a single entry applied to every client.
  std::vector<int> providers_per_client = {20};
  int records_per_provider_min = 30;
  int records_per_provider_max = 30;
  int feature_dim = 16;
  int n_classes = 10;
  // 0 makes every provider statistically identical; 1 gives each provider a
  // full-size mean offset and a strongly skewed label distribution.
  double heterogeneity = 0.5;
  double class_separation = 1.5;
  double provider_offset_scale = 1.5;
  double noise_std = 1.0;
  // Feature j is scaled by ratio^(-j / (d - 1)); values > 1 make the
  // classification problem ill-conditioned.
  double feature_scale_ratio = 1.0;
  int validation_seen_providers = 20;
  int validation_unseen_providers = 20;
  int validation_records_per_provider = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

// Deterministic for a fixed config: every random draw comes from a Philox
// stream addressed by (seed, purpose, provider id, ...).
FederatedDataset generate_synthetic(const SyntheticConfig& config);

// Minimum over clients of the number of provider groups.
std::size_t min_group_count(const FederatedDataset& ds);

// JSON-lines interchange. An optional first line
//   {"split":"meta","feature_dim":<int>,"seed":<int>,"vocabulary":[<string>...]}
// is followed by one object per record,
//   {"split":"train"|"valid","client_id":<int or null>,"provider_id":<int>,
//    "answer_id":<int>,"answer":<string>,"features":[<double>...]}
// Doubles are written in shortest round-trip form, so export/import is exact.
void write_jsonl(const FederatedDataset& ds, std::ostream& out);
FederatedDataset read_jsonl(std::istream& in);

}  // namespace fedpriv

#endif  // FEDPRIV_FEDSIM_H_
