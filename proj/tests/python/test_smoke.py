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

import numpy as np
import pytest

import trspose


def test_version_and_config_keys():
    assert trspose.__version__.startswith("0.1.0")
    keys = {name: default for name, default, _ in trspose.config_keys()}
    assert keys["train.lambda"] == "0.5"
    assert keys["train.max_iterations"] == "1000"


def test_config_overrides_and_errors():
    cfg = trspose.config({"train.lambda": 0.25, "train.km": False})
    assert cfg["train.lambda"] == 0.25
    assert cfg["train.km"] is False
    with pytest.raises(ValueError):
        trspose.config({"train.nonexistent": 1})


def test_generate_split_is_deterministic():
    a = trspose.generate_split(seed=5, labeled=3, unlabeled=4, width=32, height=32)
    b = trspose.generate_split(seed=5, labeled=3, unlabeled=4, width=32, height=32)
    assert len(a["labeled"]["images"]) == 3
    assert len(a["unlabeled"]["images"]) == 4
    assert a["unlabeled"]["keypoints"] == [None] * 4
    assert a["labeled"]["images"][0].shape == (32, 32)
    assert a["labeled"]["keypoints"][0].shape == (len(a["joint_names"]), 3)
    for x, y in zip(a["labeled"]["images"], b["labeled"]["images"]):
        np.testing.assert_array_equal(x, y)


def test_heatmap_round_trip():
    kp = np.array([[10.0, 12.0, 1.0], [40.0, 30.0, 1.0], [0.0, 0.0, 0.0]])
    hm = trspose.encode_heatmaps(kp, sigma=2.0, height=32, width=32, stride=2)
    assert hm.shape == (3, 32, 32)
    assert hm[0, 6, 5] == pytest.approx(1.0)
    assert np.all(hm[2] == 0)
    back = trspose.decode_heatmaps(hm, stride=2)
    np.testing.assert_allclose(back[:2, :2], kp[:2, :2], atol=1.0)
    assert back[2, 2] == 0.0


def test_keypoint_mix_single_keypoint_is_identity():
    rng = np.random.default_rng(0)
    img = rng.random((32, 32), dtype=np.float32)
    kp = np.array([[8.0, 8.0, 1.0], [20.0, 20.0, 1.0]])
    mixed, joints = trspose.keypoint_mix(img, kp, k=1, patch_half=3, seed=1)
    np.testing.assert_array_equal(mixed, img)
    assert len(joints) == 1
    with pytest.raises(ValueError):
        trspose.keypoint_mix(img, kp, k=3, patch_half=3)


def test_network_forward_shapes():
    net = trspose.Network()
    params = net.init(0)
    assert params.shape == (net.parameter_count,)
    z, p = net.forward(params, np.zeros((64, 64), dtype=np.float32))
    assert z.shape == (7, 32, 32)
    assert p.shape == (7, 32, 32)
    assert np.all((z >= 0) & (z <= 1))
    with pytest.raises(ValueError):
        net.forward(params[:-1], np.zeros((64, 64), dtype=np.float32))


def test_short_training_run_is_reproducible():
    overrides = {
        "train.max_iterations": 4,
        "train.log_interval": 2,
        "data.labeled": 8,
        "data.unlabeled": 8,
        "data.validation": 8,
    }
    a = trspose.train(overrides)
    b = trspose.train(overrides)
    assert a["iteration"] == 4
    assert [r["iteration"] for r in a["history"]] == [2, 4]
    assert set(a["pck"]) == {"g", "f", "r1", "r2", "mean_gf"}
    assert a["value_hash"] == b["value_hash"]
    assert a["history"] == b["history"]
