import json
import os
import subprocess

import numpy as np
import pytest

import bevmotion as bm


def test_default_config_round_trip():
    cfg = bm.default_config()
    assert cfg["theta_c"] == 3.0
    assert cfg["T_prime"] == 5
    bad = dict(cfg, theta_c=0.0)
    with pytest.raises(bm.ConfigError, match="theta_c"):
        bm.generate(bm.suite("smoke")[0], bad)
    missing = {k: v for k, v in cfg.items() if k != "knn_k"}
    with pytest.raises(bm.ConfigError, match="knn_k"):
        bm.generate(bm.suite("smoke")[0], missing)


def test_transport_primitives():
    c = bm.cost_matrix(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
    assert c[0, 0] == pytest.approx(0.283469, abs=1e-6)

    pts = np.array([[0.0, 0.0], [10.0, 0.0]])
    for eps in (0.03, 0.01, 0.003):
        res = bm.sinkhorn(bm.cost_matrix(pts, pts), eps)
        np.testing.assert_allclose(res["plan"], 0.5 * np.eye(2), atol=1e-4)

    src = np.array([[6.0 * i, 5.0 * j] for i in range(3) for j in range(3)])
    tgt = src + [0.5, 0.0]
    plan = bm.sinkhorn(bm.cost_matrix(src, tgt), 0.01, 500, 1e-9)["plan"]
    np.testing.assert_allclose(plan.sum(axis=1), 1 / 9, atol=1e-6)
    labels = bm.pseudo_labels(plan, src, tgt)
    np.testing.assert_allclose(labels, np.tile([0.5, 0.0], (9, 1)), atol=1e-2)


def test_clusters_and_smooth_l1():
    assert bm.bfs_cluster(np.array([[0, 0], [0, 2], [0, 9]]), 3) == [0, 0, 1]
    value, grad = bm.smooth_l1(np.array([0.5, 0.0]), np.zeros(2))
    assert value == pytest.approx(0.0625)
    assert grad[0] == pytest.approx(0.25)


def test_generate_constant_velocity():
    recipe = {"name": "fast", "seed": 1, "objects": [{"velocity": [8.0, 0.0]}]}
    scene = bm.generate(recipe)
    assert len(scene["frames"]) == 11
    assert scene["current"] == 5
    gt = scene["ground_truth"]["values"]
    moving = np.linalg.norm(gt[-1], axis=-1) > 0
    assert moving.any()
    np.testing.assert_allclose(gt[-1][moving], np.tile([8.0, 0.0], (moving.sum(), 1)))


def test_scene_pipeline(tmp_path):
    cfg = dict(bm.default_config(), outer_rounds=2, opt_steps=30)
    single = next(r for r in bm.suite("smoke") if r["name"] == "smoke_single")
    bm.write_archive(single, str(tmp_path / "single"), cfg)

    labels = bm.scene_labels(str(tmp_path / "single"), "backward", cfg)
    assert labels["direction"] == "backward"
    assert labels["values"].shape == (5, 256, 256, 2)
    assert not labels["values"][:, ~labels["mask"]].any()

    out = bm.optimize_scene(str(tmp_path / "single"), "sup,c,f,b", cfg)
    assert out["state"]["rounds"] == 2
    for h in out["state"]["step_loss"]:
        assert all(b <= a for a, b in zip(h, h[1:]))

    gt_path = str(tmp_path / "single" / "gt.mfld")
    metrics = bm.evaluate(gt_path, str(tmp_path / "single"), cfg)
    for bucket in ("static", "slow"):
        assert metrics[bucket]["mean"] == 0.0

    gt = bm.load_field(gt_path)
    img = bm.render(gt_path, 4, 10.0, 0)
    assert img.shape == (256, 256, 3)
    assert not img[~gt["mask"]].any()


def test_gradcheck():
    terms = bm.gradcheck()
    assert {t["term"] for t in terms} >= {"L_sup", "L_c", "L_f", "L_b", "L_knn"}
    assert all(t["passed"] for t in terms)
    assert not all(t["passed"] for t in bm.gradcheck(tolerance=1e-12))


@pytest.mark.skipif("BEVMOTION_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_round_trip(tmp_path):
    cli = os.environ["BEVMOTION_CLI"]
    out = subprocess.run([cli, "synth", "--suite", "smoke", str(tmp_path)], capture_output=True, text=True, check=True)
    assert len(json.loads(out.stdout)["archives"]) == 3
    scene = bm.generate(next(r for r in bm.suite("smoke") if r["name"] == "smoke_mixed"))
    gt = bm.load_field(str(tmp_path / "smoke_mixed" / "gt.mfld"))
    np.testing.assert_allclose(gt["values"], scene["ground_truth"]["values"], atol=1e-6)
