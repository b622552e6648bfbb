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

// Round-based federated training: FedAvg, FedShampoo, the provider-level DP
// baseline (FL-GROUP-DP) and DP-CLGECL. Every random choice is drawn from a
// stream addressed by (seed, round, client or provider, purpose), so results
// do not depend on thread scheduling or on the --jobs setting.

#ifndef FEDPRIV_PROTOCOLS_H_
#define FEDPRIV_PROTOCOLS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedpriv/accountant.h"
#include "fedpriv/fedsim.h"
#include "fedpriv/metrics.h"
#include "fedpriv/model.h"
#include "fedpriv/optim.h"
#include "fedpriv/wire.h"

namespace fedpriv {

enum class Protocol { kFedAvg, kFedShampoo, kFlGroupDp, kDpClgecl };
enum class ClientSampling { kFixed, kBernoulli };

Protocol parse_protocol(const std::string& name);
std::string to_string(Protocol p);
ClientSampling parse_client_sampling(const std::string& name);
std::string to_string(ClientSampling s);
bool is_dp(Protocol p);

struct DpConfig {
  double clip_norm = 0.5;                  // S
  std::optional<double> noise_multiplier;  // sigma, relative to S
  std::optional<double> target_epsilon;    // used when sigma is absent
  double delta = 1e-5;
  int providers_per_round = 50;  // M: expected providers sampled per client
  // Local optimisation per sampled provider group (T_gd steps).
  int group_steps = 1;
  int group_batch_size = 0;  // 0: whole group per step
  // DP-CLGECL duals.
  bool duals = true;
  double dual_init_std = 1e-3;
  // Debug only: skip the Gaussian noise (no privacy is reported).
  bool disable_noise = false;

  friend bool operator==(const DpConfig&, const DpConfig&) = default;
};

struct ProtocolConfig {
  Protocol protocol = Protocol::kFedAvg;
  int rounds = 10;  // R
  ClientSampling sampling = ClientSampling::kFixed;
  int clients_per_round = 2;  // K (fixed-size sampling)
  double client_rate = 0.2;   // C (Bernoulli sampling)
  // FedAvg/FedShampoo local work: `local_steps` minibatch steps when > 0,
  // otherwise `local_epochs` passes over the client's records.
  int local_epochs = 1;
  int local_steps = 0;
  int batch_size = 32;
  OptimizerConfig optimizer;
  DpConfig dp;
  Encoding encoding = Encoding::kFp32;
  int jobs = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const ProtocolConfig&, const ProtocolConfig&) = default;
};

// Throws ConfigError on inconsistent settings for the dataset.
void validate(const ProtocolConfig& config, const FederatedDataset& ds);

struct RoundPlan {
  std::uint32_t round = 0;
  std::vector<int> clients;  // ascending client indices
};

// Deterministic in (seed, round).
RoundPlan plan_round(const ProtocolConfig& config, int n_clients, std::uint32_t round);

struct RoundMetrics {
  std::uint32_t round = 0;
  std::size_t clients = 0;
  double val_loss = 0.0;
  double accuracy = 0.0;
  double anls = 0.0;
  std::uint64_t round_bytes = 0;
  std::uint64_t total_bytes = 0;
};

struct PrivacyReport {
  double q = 0.0;
  double sigma = 0.0;
  int steps = 0;
  PrivacySpend spend;
};

struct RunResult {
  LayeredModel model;
  std::vector<RoundMetrics> history;
  CommLedger ledger;
  std::optional<PrivacyReport> privacy;
};

// One clipped provider contribution, reported before it enters the sum.
struct ContributionEvent {
  std::uint32_t round = 0;
  int client = 0;
  std::int64_t provider_id = 0;
  double norm_before_clip = 0.0;
  double norm_after_clip = 0.0;
};

struct Hooks {
  std::function<void(const ContributionEvent&)> on_contribution;
  // Global model at the start of each round, before any client work.
  std::function<void(std::uint32_t round, const LayeredModel& global)> on_round_start;
};

RunResult run_protocol(const FederatedDataset& ds, LayeredModel model,
                       const ProtocolConfig& config, const Hooks& hooks = {});

// Message plan without training; equals the ledger of a real run.
CommLedger project_ledger(const FederatedDataset& ds, const LayeredModel& model,
                          const ProtocolConfig& config);

// Accounting inputs and result for a DP config: q = C * M / min_k |G_k| with
// C = K / N (fixed) or the Bernoulli rate, T = rounds, sigma given or
// calibrated. Throws ConfigError when neither sigma nor a target is set.
PrivacyReport privacy_for(const ProtocolConfig& config, const FederatedDataset& ds);

// --- client procedures, exposed for testing -------------------------------

struct DualState {
  bool initialized = false;
  Params lambda;
  Params last_local;  // w' the client produced at its previous participation
};

struct DpClientResult {
  Params clipped_sum;  // sum of clipped provider updates
  Params upload;       // (clipped_sum + noise) / M
  std::vector<std::int64_t> sampled_providers;
};

// The DP client step from global parameters `global` (trainable tensors of
// `model`). `provider_rate` is the Poisson inclusion probability of each
// provider; every provider's inclusion draw and local training use a stream
// keyed by its id, so removing one provider leaves the others untouched.
// `duals` (DP-CLGECL) is updated in place; pass nullptr for FL-GROUP-DP.
DpClientResult dp_client_update(const LayeredModel& model, const Params& global,
                                const ClientDataset& client, const ProtocolConfig& config,
                                double provider_rate, double sigma, std::uint32_t round,
                                DualState* duals, const Hooks& hooks = {});

// Per-provider inclusion probability used by the DP protocols.
double provider_sampling_rate(const ProtocolConfig& config, const FederatedDataset& ds);

// Validation loss, accuracy and ANLS of `model`.
RoundMetrics evaluate(const LayeredModel& model, const FederatedDataset& ds);

void write_history_csv(const std::vector<RoundMetrics>& history, std::ostream& out);

}  // namespace fedpriv

#endif  // FEDPRIV_PROTOCOLS_H_
