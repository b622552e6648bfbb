# Copyright 2026 The fedpriv Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Federated training with provider-level differential privacy."""

import json
import os

from fedpriv._fedpriv import (
    ConfigError,
    Error,
    NumericalError,
    anls,
    calibrate_sigma,
    compose,
    group_sampling_rate,
    human_bytes,
    levenshtein,
    lora_trainable_count,
    message_bytes,
    nf4_codebook,
    nf4_roundtrip,
    normalize_config,
    synthetic_jsonl,
    xi,
)
from fedpriv import _fedpriv

__all__ = [
    "ConfigError",
    "Error",
    "NumericalError",
    "anls",
    "calibrate_sigma",
    "compose",
    "dry_run",
    "group_sampling_rate",
    "human_bytes",
    "levenshtein",
    "lora_trainable_count",
    "message_bytes",
    "nf4_codebook",
    "nf4_roundtrip",
    "normalize_config",
    "run",
    "synthetic_jsonl",
    "xi",
]


def _read(config):
    """Config text plus the directory relative dataset paths resolve against."""
    if os.path.isfile(config):
        with open(config, encoding="utf-8") as f:
            return f.read(), os.path.dirname(os.path.abspath(config))
    return config, ""


def run(config):
    """Runs an experiment from a config path or YAML text.

    Returns the parsed summary plus the raw history, ledger and checkpoint.
    """
    text, base = _read(config)
    out = _fedpriv.run(text, base)
    out["summary"] = json.loads(out["summary_json"])
    return out


def dry_run(config):
    """Per-round message plan of a config, without training."""
    text, base = _read(config)
    return json.loads(_fedpriv.dry_run(text, base))
