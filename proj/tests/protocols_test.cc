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

#include "fedpriv/protocols.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "fedpriv/errors.h"
#include "gtest/gtest.h"

namespace fedpriv {
namespace {

FederatedDataset small_dataset(std::uint64_t seed, int clients = 3, int providers = 6) {
  SyntheticConfig c;
  c.n_clients = clients;
  c.providers_per_client = {providers};
  c.records_per_provider_min = 6;
  c.records_per_provider_max = 12;
  c.feature_dim = 8;
  c.n_classes = 4;
  c.validation_seen_providers = 4;
  c.validation_unseen_providers = 4;
  c.validation_records_per_provider = 5;
  c.seed = seed;
  return generate_synthetic(c);
}

LayeredModel small_model(std::uint64_t seed) {
  const std::vector<int> widths = {8, 16, 4};
  return LayeredModel::mlp(widths, RngStream(seed).derive(StreamTag::kModelInit));
}

ProtocolConfig fedavg_config() {
  ProtocolConfig c;
  c.protocol = Protocol::kFedAvg;
  c.rounds = 3;
  c.clients_per_round = 2;
  c.batch_size = 8;
  c.optimizer.kind = OptimizerKind::kSgd;
  c.optimizer.lr = 0.1;
  c.seed = 5;
  return c;
}

ProtocolConfig dp_config(Protocol p) {
  ProtocolConfig c;
  c.protocol = p;
  c.rounds = 3;
  c.clients_per_round = 2;
  c.optimizer.kind = OptimizerKind::kSgd;
  c.optimizer.lr = 0.2;
  c.dp.clip_norm = 0.5;
  c.dp.noise_multiplier = 1.0;
  c.dp.providers_per_round = 3;
  c.dp.group_steps = 2;
  c.seed = 9;
  return c;
}

double max_diff(const Params& a, const Params& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).max_abs());
  return m;
}

std::vector<const Record*> all_records(const FederatedDataset& ds) {
  std::vector<const Record*> out;
  for (const auto& c : ds.clients) {
    for (const auto& g : c.groups) {
      for (const auto& r : g.records) out.push_back(&r);
    }
  }
  return out;
}

TEST(Protocols, ParseNames) {
  for (Protocol p : {Protocol::kFedAvg, Protocol::kFedShampoo, Protocol::kFlGroupDp,
                     Protocol::kDpClgecl}) {
    EXPECT_EQ(parse_protocol(to_string(p)), p);
  }
  EXPECT_THROW(parse_protocol("fedprox"), ConfigError);
  EXPECT_EQ(parse_client_sampling("bernoulli"), ClientSampling::kBernoulli);
  EXPECT_THROW(parse_client_sampling("poisson"), ConfigError);
}

TEST(Protocols, ValidateRejectsInconsistentConfigs) {
  const auto ds = small_dataset(1);
  ProtocolConfig c = fedavg_config();
  c.clients_per_round = 4;
  EXPECT_THROW(validate(c, ds), ConfigError);
  c = fedavg_config();
  c.protocol = Protocol::kFedShampoo;
  EXPECT_THROW(validate(c, ds), ConfigError);
  c = dp_config(Protocol::kFlGroupDp);
  c.dp.noise_multiplier.reset();
  EXPECT_THROW(validate(c, ds), ConfigError);
  c.dp.target_epsilon = 4.0;
  EXPECT_NO_THROW(validate(c, ds));
}

TEST(Protocols, PlanIsDeterministicAndSorted) {
  ProtocolConfig c = fedavg_config();
  c.clients_per_round = 4;
  for (std::uint32_t r = 1; r <= 20; ++r) {
    const RoundPlan a = plan_round(c, 10, r);
    EXPECT_EQ(a.clients, plan_round(c, 10, r).clients);
    ASSERT_EQ(a.clients.size(), 4u);
    EXPECT_TRUE(std::is_sorted(a.clients.begin(), a.clients.end()));
  }
  c.sampling = ClientSampling::kBernoulli;
  c.client_rate = 0.3;
  std::size_t total = 0;
  for (std::uint32_t r = 1; r <= 400; ++r) total += plan_round(c, 10, r).clients.size();
  EXPECT_NEAR(static_cast<double>(total) / 4000.0, 0.3, 0.03);
}

TEST(Protocols, RunIsDeterministic) {
  const auto ds = small_dataset(2);
  const auto a = run_protocol(ds, small_model(1), fedavg_config());
  const auto b = run_protocol(ds, small_model(1), fedavg_config());
  EXPECT_EQ(a.model.trainable_params(), b.model.trainable_params());
  ASSERT_EQ(a.history.size(), 3u);
  EXPECT_EQ(a.history.back().val_loss, b.history.back().val_loss);
}

TEST(Protocols, JobsDoNotChangeResults) {
  const auto ds = small_dataset(3);
  for (Protocol p : {Protocol::kFedAvg, Protocol::kDpClgecl}) {
    ProtocolConfig c = p == Protocol::kFedAvg ? fedavg_config() : dp_config(p);
    c.clients_per_round = 3;
    const auto serial = run_protocol(ds, small_model(2), c);
    c.jobs = 3;
    const auto parallel = run_protocol(ds, small_model(2), c);
    EXPECT_EQ(serial.model.trainable_params(), parallel.model.trainable_params());
    EXPECT_EQ(serial.ledger, parallel.ledger);
  }
}

// One client holding everything, full-batch steps: identical to gradient
// descent on the pooled data.
TEST(Protocols, SingleClientMatchesCentralisedTraining) {
  const auto ds = small_dataset(4, 1, 5);
  ProtocolConfig c = fedavg_config();
  c.clients_per_round = 1;
  c.rounds = 2;
  c.local_epochs = 3;
  c.batch_size = 10000;
  const auto fed = run_protocol(ds, small_model(3), c);

  LayeredModel central = small_model(3);
  const auto records = all_records(ds);
  Params w = central.trainable_params();
  for (int s = 0; s < 6; ++s) {
    central.set_trainable_params(w);
    const Gradient g = central.gradient(records);
    params_add_scaled(w, g.grads, -c.optimizer.lr);
  }
  EXPECT_LT(max_diff(fed.model.trainable_params(), w), 1e-12);
}

TEST(Protocols, IdenticalClientsAggregateToOneClient) {
  auto ds = small_dataset(5, 3, 4);
  for (auto& client : ds.clients) client.groups = ds.clients[0].groups;
  ProtocolConfig c = fedavg_config();
  c.clients_per_round = 3;
  c.rounds = 1;
  c.batch_size = 10000;
  const auto all = run_protocol(ds, small_model(4), c);

  FederatedDataset one = ds;
  one.clients.resize(1);
  c.clients_per_round = 1;
  const auto single = run_protocol(one, small_model(4), c);
  EXPECT_LT(max_diff(all.model.trainable_params(), single.model.trainable_params()), 1e-14);
}

TEST(Protocols, AggregationIgnoresClientOrder) {
  const auto ds = small_dataset(6, 3, 4);
  FederatedDataset permuted = ds;
  std::rotate(permuted.clients.begin(), permuted.clients.begin() + 1, permuted.clients.end());
  ProtocolConfig c = fedavg_config();
  c.clients_per_round = 3;
  c.batch_size = 10000;
  const auto a = run_protocol(ds, small_model(5), c);
  const auto b = run_protocol(permuted, small_model(5), c);
  EXPECT_LT(max_diff(a.model.trainable_params(), b.model.trainable_params()), 1e-12);
}

TEST(Protocols, FrozenLayersStayBitIdentical) {
  const auto ds = small_dataset(7);
  LayeredModel m = small_model(6);
  m.layer("fc0").frozen = true;
  const Matrix before = m.layer("fc0").weight;
  for (Protocol p : {Protocol::kFedAvg, Protocol::kFlGroupDp}) {
    ProtocolConfig c = p == Protocol::kFedAvg ? fedavg_config() : dp_config(p);
    c.encoding = Encoding::kNf4;
    const auto out = run_protocol(ds, m, c);
    EXPECT_EQ(out.model.layer("fc0").weight, before);
    EXPECT_NE(out.model.layer("fc1").weight, m.layer("fc1").weight);
    EXPECT_EQ(out.ledger.entries().front().params, m.layer("fc1").weight.size());
  }
}

// With the preconditioner cache still at the identity and no clipping, a
// round of FedShampoo is a round of FedAvg with plain SGD.
TEST(Protocols, FreshFedShampooRoundIsFedAvgSgd) {
  const auto ds = small_dataset(8);
  ProtocolConfig avg = fedavg_config();
  avg.rounds = 1;
  ProtocolConfig sh = avg;
  sh.protocol = Protocol::kFedShampoo;
  sh.optimizer.kind = OptimizerKind::kShampoo;
  sh.optimizer.precond_interval = 1000;
  const auto a = run_protocol(ds, small_model(7), avg);
  const auto b = run_protocol(ds, small_model(7), sh);
  EXPECT_EQ(a.model.trainable_params(), b.model.trainable_params());
}

TEST(Protocols, FedShampooStateChangesLaterRounds) {
  const auto ds = small_dataset(8);
  ProtocolConfig avg = fedavg_config();
  avg.clients_per_round = 3;
  ProtocolConfig sh = avg;
  sh.protocol = Protocol::kFedShampoo;
  sh.optimizer.kind = OptimizerKind::kShampoo;
  sh.optimizer.stat_interval = 1;
  sh.optimizer.precond_interval = 2;
  const auto a = run_protocol(ds, small_model(7), avg);
  const auto b = run_protocol(ds, small_model(7), sh);
  EXPECT_GT(max_diff(a.model.trainable_params(), b.model.trainable_params()), 1e-6);
  for (const auto& m : b.history) EXPECT_TRUE(std::isfinite(m.val_loss));
}

TEST(Protocols, ClgeclWithoutDualsIsGroupDp) {
  const auto ds = small_dataset(9);
  ProtocolConfig c = dp_config(Protocol::kDpClgecl);
  c.dp.duals = false;
  const auto a = run_protocol(ds, small_model(8), c);
  c.protocol = Protocol::kFlGroupDp;
  const auto b = run_protocol(ds, small_model(8), c);
  EXPECT_EQ(a.model.trainable_params(), b.model.trainable_params());
  c.protocol = Protocol::kDpClgecl;
  c.dp.duals = true;
  const auto d = run_protocol(ds, small_model(8), c);
  EXPECT_NE(d.model.trainable_params(), b.model.trainable_params());
}

TEST(Protocols, ContributionsRespectClipNorm) {
  const auto ds = small_dataset(10);
  ProtocolConfig c = dp_config(Protocol::kDpClgecl);
  c.dp.clip_norm = 0.05;
  c.optimizer.lr = 2.0;
  std::size_t events = 0;
  std::size_t clipped = 0;
  Hooks hooks;
  hooks.on_contribution = [&](const ContributionEvent& e) {
    ++events;
    if (e.norm_before_clip > c.dp.clip_norm) ++clipped;
    EXPECT_LE(e.norm_after_clip, c.dp.clip_norm * (1 + 1e-12));
  };
  run_protocol(ds, small_model(9), c, hooks);
  EXPECT_GT(events, 0u);
  EXPECT_GT(clipped, 0u);
}

TEST(Protocols, DualUpdateFollowsRecursion) {
  const auto ds = small_dataset(11);
  const LayeredModel m = small_model(10);
  ProtocolConfig c = dp_config(Protocol::kDpClgecl);
  c.dp.dual_init_std = 0.01;
  const Params g1 = m.trainable_params();
  DualState state;
  const auto first = dp_client_update(m, g1, ds.clients[0], c, 1.0, 1.0, 1, &state);
  ASSERT_TRUE(state.initialized);
  const Params lambda1 = state.lambda;
  double ss = 0.0;
  std::size_t n = 0;
  for (const Matrix& t : lambda1) {
    for (double v : t.data()) ss += v * v, ++n;
  }
  EXPECT_NEAR(std::sqrt(ss / n), 0.01, 0.002);
  Params expected_last = g1;
  params_add_scaled(expected_last, first.upload, 1.0);
  EXPECT_EQ(state.last_local, expected_last);

  Params g2 = g1;
  for (Matrix& t : g2) t *= 0.9;
  dp_client_update(m, g2, ds.clients[0], c, 1.0, 1.0, 2, &state);
  Params expected = lambda1;
  params_add_scaled(expected, g2, 1.0);
  params_add_scaled(expected, expected_last, -1.0);
  EXPECT_LT(max_diff(state.lambda, expected), 1e-15);
}

// Removing one provider from a client moves its clipped sum by at most S,
// for every round's incoming model and with or without noise.
TEST(Protocols, ProviderSensitivityBoundedByClipNorm) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = small_dataset(100 + seed);
    ProtocolConfig c = dp_config(seed % 2 ? Protocol::kDpClgecl : Protocol::kFlGroupDp);
    c.seed = seed;
    c.dp.clip_norm = 0.1 + 0.05 * static_cast<double>(seed % 4);
    c.dp.providers_per_round = 4;
    c.optimizer.lr = 1.0;
    c.dp.disable_noise = true;
    const double rate = provider_sampling_rate(c, ds);

    FederatedDataset adjacent = ds;
    auto& groups = adjacent.clients[0].groups;
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(seed % groups.size()));

    std::vector<std::pair<std::uint32_t, Params>> starts;
    Hooks hooks;
    hooks.on_round_start = [&](std::uint32_t r, const LayeredModel& g) {
      starts.emplace_back(r, g.trainable_params());
    };
    const LayeredModel model = small_model(seed);
    run_protocol(ds, model, c, hooks);
    ASSERT_EQ(starts.size(), 3u);

    for (const auto& [round, w] : starts) {
      for (bool noisy : {false, true}) {
        ProtocolConfig cc = c;
        cc.dp.disable_noise = !noisy;
        DualState da, db;
        DualState* pa = cc.protocol == Protocol::kDpClgecl ? &da : nullptr;
        DualState* pb = cc.protocol == Protocol::kDpClgecl ? &db : nullptr;
        const auto a = dp_client_update(model, w, ds.clients[0], cc, rate, 1.5, round, pa);
        const auto b = dp_client_update(model, w, adjacent.clients[0], cc, rate, 1.5, round, pb);
        const double d_sum = params_norm(params_sub(a.clipped_sum, b.clipped_sum));
        const double d_up = params_norm(params_sub(a.upload, b.upload));
        EXPECT_LE(d_sum, cc.dp.clip_norm + 1e-12) << "seed " << seed << " round " << round;
        EXPECT_LE(d_up, cc.dp.clip_norm / cc.dp.providers_per_round + 1e-12);
        EXPECT_LE(b.sampled_providers.size(), a.sampled_providers.size());
      }
    }
  }
}

TEST(Protocols, EmptyRoundsAddServerNoiseOnly) {
  const auto ds = small_dataset(12);
  ProtocolConfig c = dp_config(Protocol::kFlGroupDp);
  c.sampling = ClientSampling::kBernoulli;
  c.client_rate = 0.0;
  const LayeredModel m = small_model(11);
  const auto noisy = run_protocol(ds, m, c);
  EXPECT_TRUE(noisy.ledger.entries().empty());
  const double moved = max_diff(noisy.model.trainable_params(), m.trainable_params());
  EXPECT_GT(moved, 0.0);
  EXPECT_LT(moved, 10 * c.dp.clip_norm / c.dp.providers_per_round);
  c.dp.disable_noise = true;
  const auto silent = run_protocol(ds, m, c);
  EXPECT_EQ(silent.model.trainable_params(), m.trainable_params());
  EXPECT_FALSE(silent.privacy.has_value());
}

TEST(Protocols, ProjectionMatchesRunLedger) {
  const auto ds = small_dataset(13);
  for (Encoding e : {Encoding::kFp32, Encoding::kNf4}) {
    ProtocolConfig c = fedavg_config();
    c.sampling = ClientSampling::kBernoulli;
    c.client_rate = 0.5;
    c.rounds = 6;
    c.encoding = e;
    const LayeredModel m = small_model(12);
    const auto run = run_protocol(ds, m, c);
    EXPECT_EQ(project_ledger(ds, m, c), run.ledger);
    for (const auto& entry : run.ledger.entries()) {
      EXPECT_EQ(entry.bytes, message_bytes(m.trainable_count(), 0, bits_for(e)));
    }
    EXPECT_EQ(run.history.back().total_bytes, run.ledger.total_bytes());
  }
}

TEST(Protocols, PrivacyReportMatchesAccountant) {
  const auto ds = small_dataset(14);
  ProtocolConfig c = dp_config(Protocol::kDpClgecl);
  c.rounds = 20;
  c.dp.noise_multiplier = 1.3;
  const PrivacyReport r = privacy_for(c, ds);
  const double q = group_sampling_rate(2.0 / 3.0, 3, static_cast<std::int64_t>(min_group_count(ds)));
  EXPECT_DOUBLE_EQ(r.q, q);
  const auto spend = compose_and_convert({q, 1.3, 20}, c.dp.delta, AlphaGrid::standard());
  EXPECT_DOUBLE_EQ(r.spend.epsilon, spend.epsilon);

  c.dp.noise_multiplier.reset();
  c.dp.target_epsilon = 2.0;
  const PrivacyReport cal = privacy_for(c, ds);
  EXPECT_NEAR(cal.spend.epsilon, 2.0, 2.0 * 1e-3);
  EXPECT_LE(cal.spend.epsilon, 2.0 * (1 + 1e-3));
}

TEST(Protocols, HistoryCsvHasOneRowPerRound) {
  const auto ds = small_dataset(15);
  const auto run = run_protocol(ds, small_model(13), fedavg_config());
  std::ostringstream out;
  write_history_csv(run.history, out);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(text.rfind("round,clients,val_loss,accuracy,anls,round_bytes,total_bytes\n", 0), 0u);
}

}  // namespace
}  // namespace fedpriv
