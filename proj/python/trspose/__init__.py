# Copyright 2026 The trspose Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Dual-network semi-supervised keypoint heatmap training."""

import json

from trspose._core import (
    ConfigError,
    InsufficientKeypoints,
    Network,
    ShapeError,
    config_keys,
    decode_heatmaps,
    encode_heatmaps,
    generate_split,
    keypoint_mix,
    version,
)
from trspose import _core

__version__ = version()


def _stringify(overrides):
    out = {}
    for key, value in (overrides or {}).items():
        if isinstance(value, bool):
            value = "on" if value else "off"
        elif isinstance(value, (list, tuple)):
            value = "[" + ",".join(str(v) for v in value) + "]"
        out[key] = str(value)
    return out


def config(overrides=None):
    """Validated configuration as a dict keyed by section.key."""
    return json.loads(_core.config_json(_stringify(overrides)))


def train(overrides=None):
    """Trains on a synthetic split; `overrides` maps section.key to values."""
    return _core.train(_stringify(overrides))


__all__ = [
    "ConfigError",
    "InsufficientKeypoints",
    "Network",
    "ShapeError",
    "config",
    "config_keys",
    "decode_heatmaps",
    "encode_heatmaps",
    "generate_split",
    "keypoint_mix",
    "train",
    "version",
]
