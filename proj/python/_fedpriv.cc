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

// Python bindings. Structured results cross the boundary as JSON text or
// plain Python containers; the pure-Python package wraps them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "fedpriv/accountant.h"
#include "fedpriv/config.h"
#include "fedpriv/errors.h"
#include "fedpriv/experiment.h"
#include "fedpriv/metrics.h"
#include "fedpriv/model.h"
#include "fedpriv/wire.h"

namespace py = pybind11;

namespace {

using namespace fedpriv;

py::dict spend_dict(const PrivacySpend& s) {
  py::dict d;
  d["epsilon"] = s.epsilon;
  d["delta"] = s.delta;
  d["best_alpha"] = s.best_alpha;
  return d;
}

py::dict run(const std::string& config_text, const std::string& base_dir) {
  const ExperimentConfig config = parse_config(config_text);
  ExperimentArtifacts a;
  {
    py::gil_scoped_release release;
    a = run_experiment(config, base_dir);
  }
  py::dict d;
  d["summary_json"] = a.summary_json;
  d["history_csv"] = a.history_csv;
  d["ledger_csv"] = a.ledger_csv;
  d["checkpoint"] = py::bytes(a.checkpoint);
  return d;
}

std::string dry_run(const std::string& config_text, const std::string& base_dir) {
  const ExperimentConfig config = parse_config(config_text);
  const FederatedDataset ds = build_dataset(config, base_dir);
  return dry_run_report(config, ds, build_model(config, ds), true);
}

std::string synthetic_jsonl(const std::string& config_text) {
  const ExperimentConfig config = parse_config(config_text);
  std::ostringstream out;
  write_jsonl(build_dataset(config), out);
  return out.str();
}

}  // namespace

PYBIND11_MODULE(_fedpriv, m) {
  m.doc() = "Native core of fedpriv";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
  static py::exception<NumericalError> numerical_error(m, "NumericalError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  // Accountant.
  m.def("xi", &xi, py::arg("alpha"), py::arg("q"), py::arg("sigma"),
        "Per-step RDP of the sampled Gaussian mechanism at order alpha.");
  m.def(
      "compose",
      [](double q, double sigma, std::int64_t steps, double delta) {
        return spend_dict(compose_and_convert({q, sigma, steps}, delta, AlphaGrid::standard()));
      },
      py::arg("q"), py::arg("sigma"), py::arg("steps"), py::arg("delta"),
      "(epsilon, delta) after `steps` compositions, as a dict.");
  m.def(
      "calibrate_sigma",
      [](double epsilon, double delta, double q, std::int64_t steps) {
        return calibrate_sigma(epsilon, delta, q, steps, AlphaGrid::standard());
      },
      py::arg("epsilon"), py::arg("delta"), py::arg("q"), py::arg("steps"));
  m.def("group_sampling_rate", &group_sampling_rate, py::arg("client_prob"),
        py::arg("providers_per_round"), py::arg("min_group_count"));

  // Wire.
  m.def(
      "message_bytes",
      [](std::uint64_t lora, std::uint64_t base, const std::string& encoding) {
        return message_bytes(lora, base, bits_for(parse_encoding(encoding)));
      },
      py::arg("lora_params"), py::arg("base_params"), py::arg("encoding") = "fp32");
  m.def(
      "human_bytes",
      [](std::uint64_t bytes, int sig_figs, bool binary) {
        return human_bytes(bytes, sig_figs, binary ? GbUnit::kBinary : GbUnit::kDecimal);
      },
      py::arg("bytes"), py::arg("sig_figs") = 3, py::arg("binary") = false);
  m.def("nf4_codebook", [] {
    const auto& book = nf4_codebook();
    return std::vector<float>(book.begin(), book.end());
  });
  m.def(
      "nf4_roundtrip",
      [](const std::vector<double>& values, std::size_t block) {
        return nf4_dequantize(nf4_quantize(values, block));
      },
      py::arg("values"), py::arg("block") = kNf4BlockSize,
      "Values after blockwise NF4 quantisation and dequantisation.");
  m.def(
      "lora_trainable_count",
      [](const std::vector<std::pair<std::size_t, std::size_t>>& shapes, int rank) {
        std::vector<LayerShape> s;
        for (const auto& [rows, cols] : shapes) s.push_back({"", rows, cols, false});
        return lora_trainable_count(s, [](const std::string&) { return true; }, rank);
      },
      py::arg("shapes"), py::arg("rank"));

  // Metrics.
  m.def("levenshtein", [](const std::string& a, const std::string& b) { return levenshtein(a, b); });
  m.def(
      "anls",
      [](const std::string& prediction, const std::vector<std::string>& golds, double threshold) {
        return anls(prediction, golds, {threshold, true});
      },
      py::arg("prediction"), py::arg("golds"), py::arg("threshold") = 0.5);

  // Experiments.
  m.def("normalize_config", [](const std::string& text) { return dump_config(parse_config(text)); },
        py::arg("text"), "Canonical form of a config with every field spelled out.");
  m.def("run", &run, py::arg("config_text"), py::arg("base_dir") = "");
  m.def("dry_run", &dry_run, py::arg("config_text"), py::arg("base_dir") = "");
  m.def("synthetic_jsonl", &synthetic_jsonl, py::arg("config_text"));
}
