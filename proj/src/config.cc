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

#include "fedpriv/config.h"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "fedpriv/errors.h"

namespace fedpriv {
namespace {

using Reader = std::function<void(const YAML::Node&)>;
using Writer = std::function<void(YAML::Emitter&)>;

struct Field {
  std::string key;
  Reader read;
  Writer write;
};

struct Section {
  std::string name;
  std::vector<Field> fields;
};

std::string where(const std::string& source, const YAML::Mark& mark) {
  if (mark.is_null()) return source;
  return source + ":" + std::to_string(mark.line + 1) + ":" + std::to_string(mark.column + 1);
}

// Shortest text that reads back as the same double.
std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  if (std::isnan(v)) return ".nan";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  // Keep it recognisably a float for human readers.
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

template <typename T>
T scalar(const YAML::Node& node) {
  if (!node.IsScalar()) throw YAML::RepresentationException(node.Mark(), "expected a scalar");
  return node.as<T>();
}

template <typename T>
Field plain(std::string key, T& target) {
  return {key, [&target](const YAML::Node& n) { target = scalar<T>(n); },
          [&target](YAML::Emitter& e) {
            if constexpr (std::is_same_v<T, double>) {
              e << format_double(target);
            } else {
              e << target;
            }
          }};
}

Field optional_double(std::string key, std::optional<double>& target) {
  return {key,
          [&target](const YAML::Node& n) {
            if (n.IsNull()) {
              target.reset();
            } else {
              target = scalar<double>(n);
            }
          },
          [&target](YAML::Emitter& e) {
            if (target) {
              e << format_double(*target);
            } else {
              e << YAML::Null;
            }
          }};
}

template <typename T>
Field sequence(std::string key, std::vector<T>& target) {
  return {key,
          [&target](const YAML::Node& n) {
            if (!n.IsSequence()) throw YAML::RepresentationException(n.Mark(), "expected a list");
            target.clear();
            for (const auto& item : n) target.push_back(scalar<T>(item));
          },
          [&target](YAML::Emitter& e) {
            e << YAML::Flow << YAML::BeginSeq;
            for (const auto& v : target) e << v;
            e << YAML::EndSeq;
          }};
}

// A string-valued field backed by an enum with parse/print functions.
template <typename E, typename Parse, typename Print>
Field named(std::string key, E& target, Parse parse, Print print) {
  return {key, [&target, parse](const YAML::Node& n) { target = parse(scalar<std::string>(n)); },
          [&target, print](YAML::Emitter& e) { e << print(target); }};
}

GbUnit parse_gb_unit(const std::string& s) {
  if (s == "decimal") return GbUnit::kDecimal;
  if (s == "binary") return GbUnit::kBinary;
  throw ConfigError("unknown gb_unit '" + s + "' (expected decimal or binary)");
}

std::string gb_unit_name(GbUnit u) { return u == GbUnit::kDecimal ? "decimal" : "binary"; }

std::vector<Section> schema(ExperimentConfig& c) {
  SyntheticConfig& s = c.dataset.synthetic;
  ModelSpec& m = c.model;
  ProtocolConfig& p = c.protocol;
  OptimizerConfig& o = p.optimizer;
  DpConfig& dp = p.dp;
  return {
      {"dataset",
       {plain("path", c.dataset.path), plain("n_clients", s.n_clients),
        sequence("providers_per_client", s.providers_per_client),
        plain("records_per_provider_min", s.records_per_provider_min),
        plain("records_per_provider_max", s.records_per_provider_max),
        plain("feature_dim", s.feature_dim), plain("n_classes", s.n_classes),
        plain("heterogeneity", s.heterogeneity), plain("class_separation", s.class_separation),
        plain("provider_offset_scale", s.provider_offset_scale), plain("noise_std", s.noise_std),
        plain("feature_scale_ratio", s.feature_scale_ratio),
        plain("validation_seen_providers", s.validation_seen_providers),
        plain("validation_unseen_providers", s.validation_unseen_providers),
        plain("validation_records_per_provider", s.validation_records_per_provider)}},
      {"model",
       {sequence("hidden", m.hidden), plain("init_gain", m.init_gain), sequence("frozen", m.frozen),
        plain("lora_rank", m.lora_rank), sequence("lora_targets", m.lora_targets),
        optional_double("lora_scaling", m.lora_scaling)}},
      {"protocol",
       {named("name", p.protocol, parse_protocol,
              [](Protocol v) { return to_string(v); }),
        plain("rounds", p.rounds),
        named("sampling", p.sampling, parse_client_sampling,
              [](ClientSampling v) { return to_string(v); }),
        plain("clients_per_round", p.clients_per_round), plain("client_rate", p.client_rate),
        plain("local_epochs", p.local_epochs), plain("local_steps", p.local_steps),
        plain("batch_size", p.batch_size), plain("jobs", p.jobs)}},
      {"optimizer",
       {named("kind", o.kind, parse_optimizer_kind,
              [](OptimizerKind v) { return to_string(v); }),
        plain("lr", o.lr), plain("momentum", o.momentum), plain("beta1", o.beta1),
        plain("beta2", o.beta2), plain("eps", o.eps), plain("weight_decay", o.weight_decay),
        plain("clip", o.clip), plain("stat_interval", o.stat_interval),
        plain("precond_interval", o.precond_interval), plain("ridge", o.ridge)}},
      {"privacy",
       {plain("clip_norm", dp.clip_norm), optional_double("noise_multiplier", dp.noise_multiplier),
        optional_double("target_epsilon", dp.target_epsilon), plain("delta", dp.delta),
        plain("providers_per_round", dp.providers_per_round), plain("group_steps", dp.group_steps),
        plain("group_batch_size", dp.group_batch_size), plain("duals", dp.duals),
        plain("dual_init_std", dp.dual_init_std), plain("disable_noise", dp.disable_noise)}},
      {"wire",
       {named("encoding", p.encoding, parse_encoding, [](Encoding v) { return to_string(v); }),
        named("gb_unit", c.gb_unit, parse_gb_unit, gb_unit_name)}},
      {"run", {plain("seed", p.seed), plain("output_dir", c.output_dir)}},
  };
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig config;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(where(source, e.mark) + ": " + e.msg);
  }
  if (root.IsNull()) return config;
  if (!root.IsMap()) throw ConfigError(where(source, root.Mark()) + ": expected sections");

  auto sections = schema(config);
  for (const auto& entry : root) {
    const auto section_name = entry.first.as<std::string>();
    auto sec = std::find_if(sections.begin(), sections.end(),
                            [&](const Section& s) { return s.name == section_name; });
    if (sec == sections.end()) {
      throw ConfigError(where(source, entry.first.Mark()) + ": unknown section '" + section_name +
                        "'");
    }
    if (entry.second.IsNull()) continue;
    if (!entry.second.IsMap()) {
      throw ConfigError(where(source, entry.second.Mark()) + ": section '" + section_name +
                        "' must be a mapping");
    }
    for (const auto& kv : entry.second) {
      const auto key = kv.first.as<std::string>();
      auto field = std::find_if(sec->fields.begin(), sec->fields.end(),
                                [&](const Field& f) { return f.key == key; });
      if (field == sec->fields.end()) {
        throw ConfigError(where(source, kv.first.Mark()) + ": unknown key '" + key +
                          "' in section '" + section_name + "'");
      }
      try {
        field->read(kv.second);
      } catch (const YAML::Exception& e) {
        throw ConfigError(where(source, kv.second.Mark()) + ": bad value for " + section_name +
                          "." + key + ": " + e.msg);
      } catch (const ConfigError& e) {
        throw ConfigError(where(source, kv.second.Mark()) + ": " + section_name + "." + key +
                          ": " + e.what());
      }
    }
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

std::string dump_config(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  YAML::Emitter out;
  out << YAML::BeginMap;
  for (const Section& s : schema(copy)) {
    out << YAML::Key << s.name << YAML::Value << YAML::BeginMap;
    for (const Field& f : s.fields) {
      out << YAML::Key << f.key << YAML::Value;
      f.write(out);
    }
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace fedpriv
