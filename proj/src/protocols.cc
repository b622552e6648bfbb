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
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "fedpriv/errors.h"
#include "fedpriv/rng.h"

namespace fedpriv {
namespace {

// Tolerance of the in-loop clip assertion: x * (S / |x|) can overshoot S by
// a few ulps.
constexpr double kClipSlack = 1e-12;
constexpr std::uint64_t kServerNoiseIndex = std::numeric_limits<std::uint64_t>::max();

RngStream round_stream(const ProtocolConfig& c, std::uint32_t round) {
  return RngStream(c.seed).derive(StreamTag::kRound, round);
}

// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<const Record*> client_records(const ClientDataset& client) {
  std::vector<const Record*> out;
  for (const auto& g : client.groups) {
    for (const auto& r : g.records) out.push_back(&r);
  }
  return out;
}

// Minibatch training from `start`; the data order is reshuffled every pass
// from `rng`.
Params local_train(const LayeredModel& model, const Params& start,
                   std::span<const Record* const> records, Optimizer& opt, int steps,
                   std::size_t batch_size, RngStream rng) {
  LayeredModel m = model;
  Params w = start;
  m.set_trainable_params(w);
  std::vector<const Record*> order(records.begin(), records.end());
  const std::size_t n = order.size();
  const std::size_t bs = batch_size == 0 ? n : std::min(batch_size, n);
  std::size_t pos = n;
  std::uint64_t pass = 0;
  for (int s = 0; s < steps; ++s) {
    if (pos >= n) {
      RngStream shuffle = rng.derive(StreamTag::kShuffle, pass++);
      shuffle.shuffle(std::span<const Record*>(order));
      pos = 0;
    }
    const std::size_t take = std::min(bs, n - pos);
    const std::span<const Record* const> batch(order.data() + pos, take);
    pos += take;
    opt.step(w, m.gradient(batch).grads);
    m.set_trainable_params(w);
  }
  return w;
}

int local_step_count(const ProtocolConfig& c, std::size_t n_records) {
  if (c.local_steps > 0) return c.local_steps;
  const std::size_t bs = static_cast<std::size_t>(c.batch_size);
  return c.local_epochs * static_cast<int>((n_records + bs - 1) / bs);
}

Params mean_of(const std::vector<Params>& items) {
  Params out = zeros_like(items.front());
  for (const Params& p : items) params_add_scaled(out, p, 1.0);
  for (Matrix& m : out) m *= 1.0 / static_cast<double>(items.size());
  return out;
}

void add_noise(Params& p, double stddev, RngStream rng) {
  for (Matrix& m : p) {
    for (double& v : m.data()) v += stddev * rng.normal();
  }
}

void log_round_messages(CommLedger& ledger, const RoundPlan& plan, std::uint64_t params,
                        Encoding enc, Direction dir) {
  for (int k : plan.clients) {
    if (dir == Direction::kDown) {
      ledger.record(plan.round, dir, kServer, k, params, enc);
    } else {
      ledger.record(plan.round, dir, k, kServer, params, enc);
    }
  }
}

}  // namespace

Protocol parse_protocol(const std::string& name) {
  if (name == "fedavg") return Protocol::kFedAvg;
  if (name == "fedshampoo") return Protocol::kFedShampoo;
  if (name == "fl-group-dp") return Protocol::kFlGroupDp;
  if (name == "dp-clgecl") return Protocol::kDpClgecl;
  throw ConfigError("unknown protocol '" + name +
                    "' (expected fedavg, fedshampoo, fl-group-dp, dp-clgecl)");
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::kFedAvg: return "fedavg";
    case Protocol::kFedShampoo: return "fedshampoo";
    case Protocol::kFlGroupDp: return "fl-group-dp";
    case Protocol::kDpClgecl: return "dp-clgecl";
  }
  return "unknown";
}

ClientSampling parse_client_sampling(const std::string& name) {
  if (name == "fixed") return ClientSampling::kFixed;
  if (name == "bernoulli") return ClientSampling::kBernoulli;
  throw ConfigError("unknown client sampling '" + name + "' (expected fixed or bernoulli)");
}

std::string to_string(ClientSampling s) {
  return s == ClientSampling::kFixed ? "fixed" : "bernoulli";
}

bool is_dp(Protocol p) { return p == Protocol::kFlGroupDp || p == Protocol::kDpClgecl; }

void validate(const ProtocolConfig& c, const FederatedDataset& ds) {
  const int n = static_cast<int>(ds.clients.size());
  if (n < 1) throw ConfigError("dataset has no clients");
  if (c.rounds < 1) throw ConfigError("rounds must be >= 1");
  if (c.sampling == ClientSampling::kFixed &&
      (c.clients_per_round < 1 || c.clients_per_round > n)) {
    throw ConfigError("clients_per_round must lie in [1, " + std::to_string(n) + "]");
  }
  if (c.sampling == ClientSampling::kBernoulli && !(c.client_rate >= 0 && c.client_rate <= 1)) {
    throw ConfigError("client_rate must lie in [0, 1]");
  }
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.local_epochs < 0 || c.local_steps < 0) throw ConfigError("local work must be >= 0");
  if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
  if (c.protocol == Protocol::kFedShampoo && c.optimizer.kind != OptimizerKind::kShampoo) {
    throw ConfigError("fedshampoo requires optimizer = shampoo");
  }
  if (is_dp(c.protocol)) {
    if (!(c.dp.clip_norm > 0)) throw ConfigError("clip_norm must be positive");
    if (c.dp.providers_per_round < 1) throw ConfigError("providers_per_round must be >= 1");
    if (c.dp.group_steps < 1) throw ConfigError("group_steps must be >= 1");
    if (c.dp.group_batch_size < 0) throw ConfigError("group_batch_size must be >= 0");
    if (!c.dp.disable_noise && !c.dp.noise_multiplier && !c.dp.target_epsilon) {
      throw ConfigError("DP protocols need noise_multiplier or target_epsilon");
    }
    if (c.dp.noise_multiplier && !(*c.dp.noise_multiplier > 0)) {
      throw ConfigError("noise_multiplier must be positive");
    }
    if (c.dp.target_epsilon && !(*c.dp.target_epsilon > 0)) {
      throw ConfigError("target_epsilon must be positive");
    }
    if (!(c.dp.delta > 0 && c.dp.delta < 1)) throw ConfigError("delta must lie in (0, 1)");
    if (!(c.dp.dual_init_std >= 0)) throw ConfigError("dual_init_std must be >= 0");
  }
}

RoundPlan plan_round(const ProtocolConfig& c, int n_clients, std::uint32_t round) {
  RoundPlan plan;
  plan.round = round;
  RngStream rng = round_stream(c, round).derive(StreamTag::kSampling);
  if (c.sampling == ClientSampling::kFixed) {
    for (std::size_t k : rng.sample_without_replacement(static_cast<std::size_t>(n_clients),
                                                        static_cast<std::size_t>(c.clients_per_round))) {
      plan.clients.push_back(static_cast<int>(k));
    }
  } else {
    for (int k = 0; k < n_clients; ++k) {
      if (rng.derive(StreamTag::kClient, static_cast<std::uint64_t>(k)).uniform() < c.client_rate) {
        plan.clients.push_back(k);
      }
    }
  }
  return plan;
}

double provider_sampling_rate(const ProtocolConfig& c, const FederatedDataset& ds) {
  const std::size_t min_groups = min_group_count(ds);
  if (min_groups == 0) throw ConfigError("a client has no providers");
  return std::min(1.0, static_cast<double>(c.dp.providers_per_round) / static_cast<double>(min_groups));
}

PrivacyReport privacy_for(const ProtocolConfig& c, const FederatedDataset& ds) {
  PrivacyReport report;
  const double client_prob =
      c.sampling == ClientSampling::kFixed
          ? static_cast<double>(c.clients_per_round) / static_cast<double>(ds.clients.size())
          : c.client_rate;
  report.q = group_sampling_rate(client_prob, c.dp.providers_per_round,
                                 static_cast<std::int64_t>(min_group_count(ds)));
  report.steps = c.rounds;
  const AlphaGrid grid = AlphaGrid::standard();
  if (c.dp.noise_multiplier) {
    report.sigma = *c.dp.noise_multiplier;
  } else if (c.dp.target_epsilon) {
    report.sigma = calibrate_sigma(*c.dp.target_epsilon, c.dp.delta, report.q, c.rounds, grid);
  } else {
    throw ConfigError("DP protocols need noise_multiplier or target_epsilon");
  }
  report.spend = compose_and_convert({report.q, report.sigma, c.rounds}, c.dp.delta, grid);
  return report;
}

DpClientResult dp_client_update(const LayeredModel& model, const Params& global,
                                const ClientDataset& client, const ProtocolConfig& config,
                                double provider_rate, double sigma, std::uint32_t round,
                                DualState* duals, const Hooks& hooks) {
  const DpConfig& dp = config.dp;
  const RngStream rs = round_stream(config, round);
  if (duals != nullptr) {
    if (!dp.duals) {
      duals->lambda = zeros_like(global);
    } else if (!duals->initialized) {
      duals->lambda = zeros_like(global);
      RngStream init = RngStream(config.seed).derive(StreamTag::kDual,
                                                     static_cast<std::uint64_t>(client.client_id));
      add_noise(duals->lambda, dp.dual_init_std, init);
    } else {
      params_add_scaled(duals->lambda, global, 1.0);
      params_add_scaled(duals->lambda, duals->last_local, -1.0);
    }
    duals->initialized = true;
  }

  DpClientResult out;
  out.clipped_sum = zeros_like(global);
  const GradClip clip_rule = GradClip::l2(dp.clip_norm);
  for (const ProviderGroup& g : client.groups) {
    RngStream provider = rs.derive(StreamTag::kGroup, static_cast<std::uint64_t>(g.provider_id));
    if (!(provider.uniform() < provider_rate)) continue;
    out.sampled_providers.push_back(g.provider_id);
    std::vector<const Record*> records;
    for (const Record& r : g.records) records.push_back(&r);
    auto opt = make_optimizer(config.optimizer);
    const Params local = local_train(model, global, records, *opt, dp.group_steps,
                                     static_cast<std::size_t>(dp.group_batch_size),
                                     provider.derive(StreamTag::kShuffle));
    Params delta = params_sub(local, global);
    if (duals != nullptr) params_add_scaled(delta, duals->lambda, 1.0);
    const double before = params_norm(delta);
    const Params clipped = clip(delta, clip_rule);
    const double after = params_norm(clipped);
    if (after > dp.clip_norm * (1.0 + kClipSlack)) {
      throw NumericalError("clipped contribution of provider " + std::to_string(g.provider_id) +
                           " has norm " + std::to_string(after));
    }
    if (hooks.on_contribution) {
      hooks.on_contribution({round, client.client_id, g.provider_id, before, after});
    }
    params_add_scaled(out.clipped_sum, clipped, 1.0);
  }

  out.upload = out.clipped_sum;
  if (!dp.disable_noise) {
    add_noise(out.upload, dp.clip_norm * sigma,
              rs.derive(StreamTag::kNoise, static_cast<std::uint64_t>(client.client_id)));
  }
  for (Matrix& m : out.upload) m *= 1.0 / static_cast<double>(dp.providers_per_round);

  if (duals != nullptr) {
    duals->last_local = global;
    params_add_scaled(duals->last_local, out.upload, 1.0);
  }
  return out;
}

RoundMetrics evaluate(const LayeredModel& model, const FederatedDataset& ds) {
  RoundMetrics m;
  const auto records = ds.validation_records();
  if (records.empty()) return m;
  m.val_loss = model.loss(std::span<const Record* const>(records));
  std::vector<std::string> predictions;
  std::vector<std::vector<std::string>> golds;
  for (const Record* r : records) {
    const int c = model.predict(r->features);
    predictions.push_back(static_cast<std::size_t>(c) < ds.vocabulary.size() ? ds.vocabulary[c] : "");
    golds.push_back({r->answer});
  }
  const EvalResult e = evaluate_answers(predictions, golds);
  m.accuracy = e.accuracy;
  m.anls = e.anls;
  return m;
}

CommLedger project_ledger(const FederatedDataset& ds, const LayeredModel& model,
                          const ProtocolConfig& config) {
  validate(config, ds);
  CommLedger ledger;
  const std::uint64_t params = model.trainable_count();
  const int n = static_cast<int>(ds.clients.size());
  for (int r = 1; r <= config.rounds; ++r) {
    const RoundPlan plan = plan_round(config, n, static_cast<std::uint32_t>(r));
    log_round_messages(ledger, plan, params, config.encoding, Direction::kDown);
    log_round_messages(ledger, plan, params, config.encoding, Direction::kUp);
  }
  return ledger;
}

RunResult run_protocol(const FederatedDataset& ds, LayeredModel model,
                       const ProtocolConfig& config, const Hooks& hooks) {
  validate(config, ds);
  const int n = static_cast<int>(ds.clients.size());
  const std::uint64_t params = model.trainable_count();
  const bool dp = is_dp(config.protocol);

  RunResult result;
  double sigma = 0.0;
  double provider_rate = 0.0;
  if (dp) {
    provider_rate = provider_sampling_rate(config, ds);
    if (!config.dp.disable_noise) {
      result.privacy = privacy_for(config, ds);
      sigma = result.privacy->sigma;
    }
  }

  Params global = model.trainable_params();
  std::vector<std::unique_ptr<Optimizer>> persistent(n);
  std::vector<DualState> duals(n);

  for (int r = 1; r <= config.rounds; ++r) {
    const auto round = static_cast<std::uint32_t>(r);
    model.set_trainable_params(global);
    if (hooks.on_round_start) hooks.on_round_start(round, model);
    const RoundPlan plan = plan_round(config, n, round);
    log_round_messages(result.ledger, plan, params, config.encoding, Direction::kDown);

    const Params received =
        config.encoding == Encoding::kFp32 ? global : wire_roundtrip(global, config.encoding);
    std::vector<Params> uploads(plan.clients.size());
    parallel_for(plan.clients.size(), config.jobs, [&](std::size_t i) {
      const int k = plan.clients[i];
      const ClientDataset& client = ds.clients[k];
      Params up;
      if (dp) {
        DualState* state = config.protocol == Protocol::kDpClgecl ? &duals[k] : nullptr;
        up = dp_client_update(model, received, client, config, provider_rate, sigma, round,
                              state, hooks)
                 .upload;
      } else {
        const auto records = client_records(client);
        std::unique_ptr<Optimizer> fresh;
        Optimizer* opt;
        if (config.protocol == Protocol::kFedShampoo) {
          if (!persistent[k]) persistent[k] = make_optimizer(config.optimizer);
          opt = persistent[k].get();
        } else {
          fresh = make_optimizer(config.optimizer);
          opt = fresh.get();
        }
        up = local_train(model, received, records, *opt, local_step_count(config, records.size()),
                         static_cast<std::size_t>(config.batch_size),
                         round_stream(config, round).derive(StreamTag::kClient,
                                                            static_cast<std::uint64_t>(k)));
      }
      uploads[i] = config.encoding == Encoding::kFp32 ? std::move(up)
                                                      : wire_roundtrip(up, config.encoding);
    });
    log_round_messages(result.ledger, plan, params, config.encoding, Direction::kUp);

    if (dp) {
      if (!uploads.empty()) {
        params_add_scaled(global, mean_of(uploads), 1.0);
      } else if (!config.dp.disable_noise) {
        // Nobody was sampled: the server still perturbs the model.
        Params noise = zeros_like(global);
        add_noise(noise, config.dp.clip_norm * sigma,
                  round_stream(config, round).derive(StreamTag::kNoise, kServerNoiseIndex));
        for (Matrix& m : noise) m *= 1.0 / static_cast<double>(config.dp.providers_per_round);
        params_add_scaled(global, noise, 1.0);
      }
    } else if (!uploads.empty()) {
      global = mean_of(uploads);
    }
    for (const Matrix& m : global) {
      if (!m.all_finite()) throw NumericalError("global model diverged in round " + std::to_string(r));
    }

    model.set_trainable_params(global);
    RoundMetrics metrics = evaluate(model, ds);
    metrics.round = round;
    metrics.clients = plan.clients.size();
    metrics.round_bytes = result.ledger.bytes_in_round(round);
    metrics.total_bytes = result.ledger.total_bytes();
    result.history.push_back(metrics);
  }
  model.set_trainable_params(global);
  result.model = std::move(model);
  return result;
}

void write_history_csv(const std::vector<RoundMetrics>& history, std::ostream& out) {
  out << "round,clients,val_loss,accuracy,anls,round_bytes,total_bytes\n";
  out.precision(17);
  for (const auto& m : history) {
    out << m.round << ',' << m.clients << ',' << m.val_loss << ',' << m.accuracy << ',' << m.anls
        << ',' << m.round_bytes << ',' << m.total_bytes << '\n';
  }
}

}  // namespace fedpriv
