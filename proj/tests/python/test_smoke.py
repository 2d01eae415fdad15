import json
import struct

import numpy as np
import pytest

import compmap


def write_matrix(path, array):
    array = np.ascontiguousarray(array)
    rows, cols = array.shape
    with open(path, "wb") as f:
        f.write(b"CMAP" + struct.pack("<III", 1, rows, cols))
        f.write(array.astype(array.dtype.newbyteorder("<")).tobytes())


def write_tiny_bundle(directory):
    # 3 primitives, 2 seen composites and 1 unseen, 6 samples.
    gt_composition = [[0, 1], [1, 2], [0, 2]]
    labels = [0, 1, 0, 1, 2, 2]
    splits = ["train", "train", "train", "train", "test", "test"]
    gt = np.zeros((6, 3), dtype=np.uint8)
    for i, c in enumerate(labels):
        gt[i, gt_composition[c]] = 1
    activations = (0.1 + 0.8 * gt).astype(np.float32)
    embeddings = np.zeros((3, 3), dtype=np.float32)
    for c, prims in enumerate(gt_composition):
        embeddings[c, prims] = 1.0
    write_matrix(directory / "activations.bin", activations)
    write_matrix(directory / "ground_truth.bin", gt)
    write_matrix(directory / "composite_embeddings.bin", embeddings)
    manifest = {
        "format": "compmap-bundle",
        "format_version": 1,
        "vocabulary": {
            "primitives": ["red", "round", "small"],
            "composites": ["apple", "ball", "cherry"],
            "gt_composition": gt_composition,
        },
        "samples": {"ids": [f"s{i}" for i in range(6)], "labels": labels, "splits": splits},
        "seen": [0, 1],
        "candidates": [0, 1, 2],
        "normalization": {"kind": "none"},
        "matrices": {
            "activations": {"file": "activations.bin", "dtype": "float32", "rows": 6, "cols": 3},
            "ground_truth": {
                "file": "ground_truth.bin", "dtype": "uint8", "rows": 6, "cols": 3, "level": "per-sample",
            },
            "composite_embeddings": {
                "file": "composite_embeddings.bin", "dtype": "float32", "rows": 3, "cols": 3, "source": "python",
            },
        },
    }
    (directory / "manifest.json").write_text(json.dumps(manifest))
    return activations, gt


def test_python_written_bundle_loads_and_validates(tmp_path):
    activations, gt = write_tiny_bundle(tmp_path)
    b = compmap.load_bundle(tmp_path)
    b.validate()
    assert b.num_samples == 6
    assert b.composites == ["apple", "ball", "cherry"]
    np.testing.assert_array_equal(b.activations, activations)
    np.testing.assert_array_equal(b.ground_truth, gt)
    assert b.rows("test") == [4, 5]
    code, out, _ = compmap.run_cli(["validate", str(tmp_path)])
    assert code == 0
    assert out.startswith("ok: 6 samples")


def test_corrupted_header_is_a_data_error(tmp_path):
    write_tiny_bundle(tmp_path)
    raw = bytearray((tmp_path / "activations.bin").read_bytes())
    raw[0:4] = b"XXXX"
    (tmp_path / "activations.bin").write_bytes(bytes(raw))
    with pytest.raises(compmap.DataError, match="magic mismatch"):
        compmap.load_bundle(tmp_path)
    code, _, err = compmap.run_cli(["validate", str(tmp_path)])
    assert code == 2
    assert "magic mismatch" in err


def test_synthetic_round_trip(tmp_path):
    config = {"n_primitives": 12, "n_composites": 8, "max_primitives_per_composite": 3, "n_samples": 400}
    b = compmap.generate_synth(config, seed=3)
    assert b == compmap.generate_synth(config, seed=3)
    b.save(tmp_path / "b")
    assert compmap.load_bundle(tmp_path / "b") == b
    assert len(b.seen_set) == 6
    with pytest.raises(compmap.UsageError):
        compmap.generate_synth({"noise": 0.1})


def test_oracle_pipeline():
    config = {"n_primitives": 20, "n_composites": 12, "max_primitives_per_composite": 4, "n_samples": 1200}
    b = compmap.generate_synth(config, seed=1)
    rows = b.rows("train")
    x = compmap.model_inputs(b, rows, "gt")
    model = compmap.train_logreg(x, [b.labels[r] for r in rows])
    assert model["weights"].shape == (len(model["composites"]), 20)
    assert compmap.topk_alignment(model["weights"], model["composites"], b) >= 0.95
    acc, excluded = compmap.eval_fullshot(b, train_on="gt", eval_on="gt")
    assert acc >= 0.98
    assert excluded > 0
    fs = compmap.eval_fewshot(b, 5, 1, tasks=50, train_on="gt", eval_on="gt", threads=2)
    assert fs["mean"] >= 0.99
    assert len(fs["per_task"]) == 50


def test_episode_sampler():
    b = compmap.generate_synth({"n_primitives": 20, "n_composites": 12, "n_samples": 1200}, seed=2)
    tasks = compmap.sample_episodes(b, 5, 1, q=15, tasks=100, seed=4)
    assert tasks == compmap.sample_episodes(b, 5, 1, q=15, tasks=100, seed=4)
    for t in tasks:
        assert len(set(t["classes"])) == 5
        support = {r for rows in t["support"] for r in rows}
        query = {r for rows in t["query"] for r in rows}
        assert len(support) == 5 and len(query) == 75
        assert not support & query


def test_sweep_and_delta():
    assert compmap.harmonic_mean(0.5, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert compmap.harmonic_mean(0.0, 0.7) == 0.0
    scores = np.eye(4)
    r = compmap.sweep_calibration(scores, [0, 1, 2, 3], [0, 1, 2, 3], [0, 1])
    assert r["auc"] == {1: 1.0, 2: 1.0, 3: 1.0}
    assert r["best_hm"] == 1.0
    assert r["curves"][1][0][0] == float("-inf")
    assert compmap.interpretability_delta(99.9, 30.0) == 69.9
    metrics = {"auc": {"1": 0.9, "2": 0.95}, "best_hm": 0.8}
    assert compmap.delta_metrics(metrics, metrics) == {"auc": {"1": 0.0, "2": 0.0}, "best_hm": 0.0}
