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

// fedpriv: experiment runner and privacy calculator.
//
//   fedpriv run <config.yaml> [--jobs N] [--seed S] [--dry-run] [--json]
//   fedpriv account --q Q --sigma S --steps T [--delta D] [--json]
//   fedpriv calibrate --epsilon E --q Q --steps T [--delta D] [--json]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "fedpriv/accountant.h"
#include "fedpriv/errors.h"
#include "fedpriv/experiment.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using fedpriv::AlphaGrid;
using Json = nlohmann::ordered_json;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct RunArgs {
  std::string config;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  std::string output;
  bool dry_run = false;
  bool print_config = false;
};

struct AccountArgs {
  double q = 0.0;
  double sigma = 0.0;
  double epsilon = 0.0;
  std::int64_t steps = 1;
  double delta = 1e-5;
};

int run(const RunArgs& args, bool json) {
  fedpriv::ExperimentConfig config = fedpriv::load_config(args.config);
  if (args.jobs) config.protocol.jobs = *args.jobs;
  if (args.seed) config.protocol.seed = *args.seed;
  if (!args.output.empty()) config.output_dir = args.output;
  if (args.print_config) {
    std::cout << fedpriv::dump_config(config);
    return 0;
  }
  const fs::path base_dir = fs::path(args.config).parent_path();

  if (args.dry_run) {
    const auto ds = fedpriv::build_dataset(config, base_dir);
    const auto model = fedpriv::build_model(config, ds);
    std::cout << fedpriv::dry_run_report(config, ds, model, json);
    return 0;
  }

  const fs::path out_dir = fedpriv::resolve_output_dir(config, fs::path(args.config).stem().string());
  const auto artifacts = fedpriv::run_experiment(config, base_dir);
  fedpriv::write_artifacts(artifacts, out_dir);
  if (json) {
    std::cout << artifacts.summary_json;
    return 0;
  }
  const auto& r = artifacts.result;
  const auto& last = r.history.back();
  std::printf("protocol   %s, %d rounds\n", fedpriv::to_string(config.protocol.protocol).c_str(),
              config.protocol.rounds);
  std::printf("final      val_loss %.4f  accuracy %.4f  anls %.4f\n", last.val_loss,
              last.accuracy, last.anls);
  std::printf("traffic    %zu messages, %llu bytes (%s)\n", r.ledger.entries().size(),
              static_cast<unsigned long long>(r.ledger.total_bytes()),
              fedpriv::human_bytes(r.ledger.total_bytes(), 3, config.gb_unit).c_str());
  if (r.privacy) {
    std::printf("privacy    epsilon %.4f at delta %g (sigma %.4f, q %.5g, T %d)\n",
                r.privacy->spend.epsilon, r.privacy->spend.delta, r.privacy->sigma, r.privacy->q,
                r.privacy->steps);
  }
  std::printf("outputs    %s\n", out_dir.string().c_str());
  return 0;
}

int account(const AccountArgs& a, bool json) {
  const auto spend =
      fedpriv::compose_and_convert({a.q, a.sigma, a.steps}, a.delta, AlphaGrid::standard());
  if (json) {
    Json j = {{"q", a.q},          {"sigma", a.sigma},         {"steps", a.steps},
              {"delta", a.delta},  {"epsilon", spend.epsilon}, {"best_alpha", spend.best_alpha}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("epsilon %.6g at delta %g (q %g, sigma %g, steps %lld, alpha %g)\n",
                spend.epsilon, a.delta, a.q, a.sigma, static_cast<long long>(a.steps),
                spend.best_alpha);
  }
  return 0;
}

int calibrate(const AccountArgs& a, bool json) {
  const AlphaGrid grid = AlphaGrid::standard();
  const double sigma = fedpriv::calibrate_sigma(a.epsilon, a.delta, a.q, a.steps, grid);
  const auto spend = fedpriv::compose_and_convert({a.q, sigma, a.steps}, a.delta, grid);
  if (json) {
    Json j = {{"target_epsilon", a.epsilon}, {"delta", a.delta}, {"q", a.q},
              {"steps", a.steps},            {"sigma", sigma},   {"epsilon", spend.epsilon}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("sigma %.17g (epsilon %.6g at delta %g, q %g, steps %lld)\n", sigma,
                spend.epsilon, a.delta, a.q, static_cast<long long>(a.steps));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training with provider-level differential privacy"};
  app.require_subcommand(1);
  app.fallthrough();
  bool json = false;
  app.add_flag("--json", json, "Machine-readable output");

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment from a config file");
  run_cmd->add_option("config", run_args.config, "Experiment config (YAML)")->required();
  run_cmd->add_option("--jobs", run_args.jobs, "Client tasks run in parallel")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", run_args.seed, "Override run.seed");
  run_cmd->add_option("--output", run_args.output, "Override run.output_dir");
  run_cmd->add_flag("--dry-run", run_args.dry_run, "Print the message plan without training");
  run_cmd->add_flag("--print-config", run_args.print_config,
                    "Print the effective config with every field");

  AccountArgs acc;
  auto* acc_cmd = app.add_subcommand("account", "Epsilon of T sampled Gaussian steps");
  acc_cmd->add_option("--q", acc.q, "Sampling rate")->required();
  acc_cmd->add_option("--sigma", acc.sigma, "Noise multiplier")->required();
  acc_cmd->add_option("--steps", acc.steps, "Number of compositions")->required();
  acc_cmd->add_option("--delta", acc.delta, "Target delta")->capture_default_str();

  AccountArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Smallest sigma meeting a target epsilon");
  cal_cmd->add_option("--epsilon", cal.epsilon, "Target epsilon")->required();
  cal_cmd->add_option("--q", cal.q, "Sampling rate")->required();
  cal_cmd->add_option("--steps", cal.steps, "Number of compositions")->required();
  cal_cmd->add_option("--delta", cal.delta, "Target delta")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return run(run_args, json);
    if (*acc_cmd) return account(acc, json);
    return calibrate(cal, json);
  } catch (const fedpriv::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fedpriv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}
