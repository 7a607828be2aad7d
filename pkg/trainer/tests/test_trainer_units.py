import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from surrtrain.augment import AugmentError, augment, rotate, scale
from surrtrain.model import Adam, BranchTrunk
from surrtrain.records import encode, load_dataset, parse_record
from surrtrain.serialize import save_weights, weights_payload
from surrtrain.training import train, validation_error


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """Small dataset produced through the solver package's CLI."""
    out = tmp_path_factory.mktemp("ds")
    subprocess.run(
        [
            sys.executable, "-m", "schwarzpde.cli", "gen-data",
            "--equation", "laplace_dirichlet", "--shapes", "12", "--per-shape", "3",
            "--resolution", "0.12", "--seed", "5", "--out-dir", str(out),
        ],
        check=True,
        capture_output=True,
    )
    return out


def test_load_dataset_counts(dataset):
    records, manifest = load_dataset(dataset)
    assert len(records) == manifest["count"] == 36
    for r in records[:5]:
        assert r.encoding.shape == (64,)
        assert len(r.solution) == len(r.vertices)


def test_reencoding_matches_solver_encoding(dataset):
    """The trainer's arc-length encoder must agree with the stored one."""
    for path in sorted(Path(dataset).glob("record_*.json"))[:6]:
        payload = json.loads(path.read_text())
        rec = parse_record(payload)
        ours = encode(rec.vertices, rec.boundary_edges, rec.dirichlet)
        stored = np.asarray(payload["boundary_encoding"])
        assert np.max(np.abs(ours - stored)) <= 1e-12


def test_rotation_augment(dataset):
    records, _ = load_dataset(dataset)
    r = records[0]
    same = rotate(r, 0.0)
    assert np.allclose(same.vertices, r.vertices)
    assert np.allclose(same.encoding, r.encoding)

    theta = 1.1
    rot = rotate(r, theta)
    # coordinates rotated, solution untouched
    assert np.allclose(np.hypot(*rot.vertices.T), np.hypot(*r.vertices.T), atol=1e-12)
    assert np.array_equal(rot.solution, r.solution)
    # boundary value multiset survives re-encoding start-point changes
    assert abs(rot.encoding.mean() - r.encoding.mean()) < 0.15


def test_scaling_augment(dataset):
    records, _ = load_dataset(dataset)
    r = records[0]
    sc = scale(r, 0.8)
    assert np.allclose(sc.vertices, 0.8 * r.vertices)
    assert np.array_equal(sc.solution, r.solution)
    assert np.array_equal(sc.encoding, r.encoding)
    with pytest.raises(AugmentError):
        scale(r, -1.0)


def test_augment_rejects_unknown_op(dataset):
    records, _ = load_dataset(dataset)
    with pytest.raises(AugmentError):
        augment(records[0], ("reflection",), np.random.default_rng(0))


def test_augmented_values_stay_in_range(dataset):
    records, _ = load_dataset(dataset)
    rng = np.random.default_rng(3)
    for r in records[:10]:
        out = augment(r, ("rotation", "scaling"), rng)
        assert out.encoding.min() >= -1e-9
        assert out.encoding.max() <= 1.0 + 1e-9


def test_gradients_match_finite_differences():
    model = BranchTrunk(m=5, p=3, width=6, depth=2, seed=0)
    rng = np.random.default_rng(1)
    enc = rng.uniform(size=(2, 5))
    pts = rng.uniform(size=(9, 2))
    owner = rng.integers(0, 2, size=9)
    tgt = rng.uniform(size=9)
    model.loss_and_grads(enc, pts, owner, tgt)
    grads = [g.copy() for g in model.grads()]
    params = model.params()
    eps = 1e-6
    for p, g in zip(params, grads):
        idx = np.unravel_index(0, p.shape)
        old = p[idx]
        p[idx] = old + eps
        lp = model.loss_and_grads(enc, pts, owner, tgt)
        p[idx] = old - eps
        lm = model.loss_and_grads(enc, pts, owner, tgt)
        p[idx] = old
        fd = (lp - lm) / (2 * eps)
        assert abs(fd - g[idx]) <= 1e-6 * max(1.0, abs(fd))


def test_training_loss_decreases_and_is_deterministic(dataset):
    rep1 = train(dataset, epochs=8, lr=2e-3, seed=4, augment_ops=(),
                 arch={"width": 32, "depth": 2, "p": 16}, points_per_record=32)
    rep2 = train(dataset, epochs=8, lr=2e-3, seed=4, augment_ops=(),
                 arch={"width": 32, "depth": 2, "p": 16}, points_per_record=32)
    assert rep1.loss_history == rep2.loss_history
    assert rep1.loss_history[-1] < rep1.loss_history[0]
    assert np.isfinite(rep1.val_l2_rel)


def test_weight_file_roundtrip_with_solver(tmp_path, dataset):
    """Forward pass through the written file must match the live model."""
    from schwarzpde.surrogate import evaluate, load_model

    records, manifest = load_dataset(dataset)
    model = BranchTrunk(64, 16, 24, 2, seed=9)
    path = tmp_path / "weights.json"
    save_weights(path, weights_payload(model, 0.07, manifest["sha256"]))
    loaded = load_model(path)
    assert loaded.training_report["val_l2_rel"] == 0.07
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        b = rng.uniform(size=64)
        pts = rng.uniform(-0.5, 0.5, size=(17, 2))
        ours = model.predict(b[None, :], pts, np.zeros(17, dtype=int))
        theirs = evaluate(loaded, b, pts)
        worst = max(worst, float(np.max(np.abs(ours - theirs))))
    assert worst <= 1e-12


def test_atomic_write_leaves_no_tmp(tmp_path):
    model = BranchTrunk(8, 4, 8, 1, seed=0)
    path = tmp_path / "w.json"
    save_weights(path, weights_payload(model, 0.1, "x"))
    assert path.exists()
    assert list(tmp_path.glob("*.tmp")) == []


def test_train_cli(tmp_path, dataset):
    script = Path(__file__).resolve().parents[1] / "train.py"
    out = tmp_path / "w.json"
    proc = subprocess.run(
        [
            sys.executable, str(script), "--data", str(dataset),
            "--epochs", "3", "--lr", "1e-3", "--out", str(out), "--seed", "1",
            "--width", "16", "--depth", "1", "--latent", "8",
            "--augment", "none", "--points", "16",
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads(out.read_text())
    assert payload["format_version"] == 1
    assert "val_l2_rel" in payload["training_report"]
