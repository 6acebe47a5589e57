# Copyright 2026 The fedembed Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke tests for the Python module and the command-line tool."""

import json
import math
import os
import shutil
import subprocess

import numpy as np
import pytest

import fedembed


def _tiny_config(tmp_path, method="cvae", dp=True):
    return {
        "config_version": 1,
        "method": method,
        "dataset": {"blobs": {"classes": 3, "dim": 6, "per_class": 40,
                              "separation": 6.0, "seed": 0}},
        "partition": {"kind": "dirichlet", "alpha": 1.0, "clients": 3},
        "cvae": {"latent_dim": 3, "hidden1": 8, "hidden2": 6},
        "cgan": {"noise_dim": 4, "gen_hidden1": 8, "gen_hidden2": 8,
                 "disc_hidden1": 8, "disc_hidden2": 6},
        "dp": {"enabled": dp},
        "rounds": {"rounds": 2, "local_epochs": 1, "batch_size": 16,
                   "learning_rate": 0.01},
        "downstream": {"epochs": 3},
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "run"),
    }


def test_rdp_matches_closed_form_at_full_sampling():
    sigma = 1.3
    for order in (2, 5, 32):
        assert fedembed.rdp_subsampled_gaussian(1.0, sigma, order) == (
            pytest.approx(order / (2 * sigma**2), rel=1e-12))


def test_calibration_meets_target():
    sigma = fedembed.calibrate_noise(1.0, 1e-5, 0.05, 500)
    eps, order = fedembed.compute_epsilon(0.05, sigma, 500, 1e-5)
    assert eps <= 1.0 + 1e-6
    assert order >= 2
    with pytest.raises(fedembed.CalibrationError):
        fedembed.calibrate_noise(1e-6, 1e-5, 1.0, 10000)


def test_clipping_and_noiseless_aggregate():
    g = np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]])
    clipped = fedembed.clip_per_sample(g, 1.0)
    np.testing.assert_allclose(np.linalg.norm(clipped, axis=1), [1, 0.5, 0])
    mean = fedembed.noisy_aggregate(g, 1.0, 0.0)
    np.testing.assert_allclose(mean, clipped.sum(axis=0) / 3, atol=1e-12)


def test_aggregate_shared_weights():
    a = (np.ones((2, 3)), np.zeros(2))
    b = (np.zeros((2, 3)), np.ones(2))
    w, bias, weights = fedembed.aggregate_shared([a, b], [1, 3])
    np.testing.assert_allclose(w, 0.25)
    np.testing.assert_allclose(bias, 0.75)
    np.testing.assert_allclose(weights, [0.25, 0.75])


def test_dataset_round_trip(tmp_path):
    x, y = fedembed.synth_blobs(3, 4, 10, 5.0, seed=7)
    assert x.shape == (30, 4)
    for name in ("d.femb", "d.csv"):
        fedembed.save_dataset(tmp_path / name, x, y, extractor_id="blobs")
        x2, y2, meta = fedembed.load_dataset(tmp_path / name)
        np.testing.assert_allclose(x2, x, rtol=1e-6, atol=1e-6)
        assert list(y2) == list(y)
        assert meta["num_classes"] == 3
    (tmp_path / "bad.femb").write_bytes(b"XEMB")
    with pytest.raises(fedembed.FormatError):
        fedembed.load_dataset(tmp_path / "bad.femb")


def test_partition_and_split():
    _, y = fedembed.synth_blobs(4, 4, 50, 3.0)
    iid = fedembed.partition_iid(y, 4)
    assert sorted(np.bincount(iid)) == [50, 50, 50, 50]
    dirichlet = fedembed.partition_dirichlet(y, 4, 0.1, seed=3)
    assert len(dirichlet) == len(y)
    train, val, test = fedembed.split_train_val_test(y)
    assert sorted(train + val + test) == list(range(len(y)))
    assert (len(train), len(val), len(test)) == (120, 40, 40)


def test_metrics():
    assert fedembed.accuracy([0, 1, 1], [0, 1, 0]) == pytest.approx(2 / 3)
    assert fedembed.balanced_accuracy([0, 0, 0, 1], [0, 0, 0, 1]) == 1.0
    assert fedembed.wasserstein_1d([0.0, 1.0], [0.0, 1.0]) == 0.0
    assert fedembed.wasserstein_1d([0.0], [2.0]) == pytest.approx(2.0)
    real = np.zeros((5, 3))
    assert fedembed.wasserstein_avg(real, real + 1.5) == pytest.approx(1.5)


def test_linear_probe_and_interpolation():
    x, y = fedembed.synth_blobs(2, 3, 50, 8.0, seed=1)
    w, b = fedembed.train_linear(x, y, epochs=20, learning_rate=0.05)
    p = fedembed.interpolate_proba(w, b, w, b, 0.3, x)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert fedembed.accuracy(list(p.argmax(axis=1)), y) >= 0.99
    lam, score = fedembed.select_lambda(w, b, np.zeros_like(w), np.zeros(2),
                                        x, y)
    assert lam == 1.0 and score >= 0.99


def test_param_counts():
    assert fedembed.param_count("linear", 10, 4) == 44
    assert fedembed.param_count("cgan", 768, 10) > 4 * fedembed.param_count(
        "cvae", 768, 10)
    with pytest.raises(fedembed.ValidationError):
        fedembed.param_count("rnn", 10, 4)


def test_config_errors():
    with pytest.raises(fedembed.ConfigError):
        fedembed.canonical_config(
            '{"config_version": 1, "rounds": {"rounds": -1}}')
    with pytest.raises(fedembed.ConfigError):
        fedembed.canonical_config('{"method": "cgan"}')
    canonical = json.loads(
        fedembed.canonical_config(json.dumps(
            {"config_version": 1, "method": "cgan",
             "dataset": {"blobs": {"classes": 2, "dim": 2}}})))
    assert canonical["method"] == "cgan"


def test_run_experiment(tmp_path):
    summary = fedembed.run_experiment(json.dumps(_tiny_config(tmp_path)))
    assert summary["method"] == "dp-cvae"
    assert summary["clients"] == 3
    bacc = summary["metrics"]["bacc"]
    assert 0.0 <= bacc["mean"] <= 1.0
    assert len(bacc["per_seed_means"]) == 2
    assert (tmp_path / "run" / "metrics.json").exists()


def _cli():
    path = os.environ.get("FEDEMBED_CLI") or shutil.which("fedembed")
    if not path:
        pytest.skip("fedembed executable not found")
    return path


def test_cli_accountant_and_exit_codes(tmp_path):
    cli = _cli()
    out = subprocess.run(
        [cli, "accountant", "epsilon", "--q", "1", "--sigma", "2",
         "--steps", "1", "--delta", "1e-5"],
        capture_output=True, text=True, check=True)
    eps = json.loads(out.stdout)["epsilon"]
    best = min(a / 8 + math.log(1e5) / (a - 1) for a in range(2, 65))
    assert eps == pytest.approx(best, rel=1e-9)

    bad = tmp_path / "bad.json"
    bad.write_text('{"config_version": 1, "method": "transformer"}')
    rc = subprocess.run([cli, "run", "--config", str(bad)],
                        capture_output=True).returncode
    assert rc == 2


def test_cli_run_and_report(tmp_path):
    cli = _cli()
    runs = []
    for method, dp in (("cvae", True), ("fedavg", False)):
        cfg = _tiny_config(tmp_path / method, method, dp)
        (tmp_path / method).mkdir()
        path = tmp_path / method / "config.json"
        path.write_text(json.dumps(cfg))
        subprocess.run([cli, "run", "--config", str(path)], check=True,
                       capture_output=True)
        runs.append(cfg["output_dir"])
    subprocess.run([cli, "report", *runs, "--out", str(tmp_path / "rep")],
                   check=True, capture_output=True)
    tables = list((tmp_path / "rep").iterdir())
    assert tables
    text = "".join(p.read_text() for p in tables if p.is_file())
    assert "dp-cvae" in text and "fedavg" in text
