import csv
import json

import numpy as np
import pytest

from cloudrt.cli import EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main, sub_seeds
from cloudrt.surrogate import tiny_config

SPEC = {"extents": [3.0, 2.5, 2.2], "wall_materials": [0], "ceiling_material": 3,
        "sampling_spacing": 0.15, "columns": [{"center": [1.6, 1.2], "radius": 0.2}],
        "name": "cell"}


def _tiny_section(mech="deterministic"):
    doc = tiny_config(mech, epochs=2, batch_size=16).to_json()
    doc.pop("mechanism")
    return doc


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "spec.json").write_text(json.dumps(SPEC))
    (root / "cfg.json").write_text(json.dumps({
        "trace": {"n_rays": 3000, "max_bounces": 2, "n_scatter": 1, "chunk_rays": 1500},
        "surrogate": _tiny_section()}))
    return root


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(work):
    """gen-scene, trace, dataset, train, rollout; each step must exit 0."""
    cfg = work / "cfg.json"
    assert run("gen-scene", work / "spec.json", "--out", work / "scene") == EXIT_OK
    scene = work / "scene" / "cell.scene.json"
    assert run("trace", scene, "--random-links", 2, "--config", cfg, "--out", work / "truth") == EXIT_OK
    assert run("dataset", scene, "--random-links", 4, "--per-link", 10, "--config", cfg,
               "--out", work / "data") == EXIT_OK
    for mech in ("det", "non"):
        assert run("train", work / "data", "--mechanism", mech, "--config", cfg,
                   "--out", work / "models") == EXIT_OK
    assert run("rollout", scene, "--det", work / "models" / "det.npz",
               "--non", work / "models" / "non.npz", "--links", work / "truth" / "links.json",
               "--config", cfg, "--out", work / "pred") == EXIT_OK
    return work


def test_outputs_written(pipeline):
    w = pipeline
    for d in ("scene", "truth", "data", "models", "pred"):
        snap = json.loads((w / d / "config.json").read_text())
        assert snap["sub_seeds"] == sub_seeds(0)
    assert (w / "truth" / "channel_0001.json").exists()
    assert (w / "data" / "manifest.json").exists()
    assert (w / "models" / "train_log.csv").exists()
    assert sorted(p.name for p in (w / "pred").glob("channel_*")) == \
        sorted(p.name for p in (w / "truth").glob("channel_*"))


def test_eval_self_is_zero(pipeline, tmp_path):
    assert run("eval", pipeline / "truth", pipeline / "truth", "--out", tmp_path) == EXIT_OK
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["n_links"] == 2 and summ["pl_rmse_db"] == 0 and summ["ds_rmse_ns"] == 0
    assert all(v == 0 for v in summ["angular_error_deg"].values())
    rows = list(csv.DictReader(open(tmp_path / "links.csv")))
    assert len(rows) == 2 and rows[0]["pl_pred_db"] == rows[0]["pl_true_db"]


def test_eval_rollout_finite(pipeline, tmp_path):
    assert run("eval", pipeline / "pred", pipeline / "truth", "--out", tmp_path) == EXIT_OK
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert np.isfinite(summ["pl_rmse_db"]) and np.isfinite(summ["ds_rmse_ns"])


def test_trace_is_reproducible(pipeline, tmp_path):
    w = pipeline
    assert run("trace", w / "scene" / "cell.scene.json", "--random-links", 2,
               "--config", w / "cfg.json", "--out", tmp_path) == EXIT_OK
    for name in ("channel_0000.json", "channel_0001.json", "links.json"):
        assert (tmp_path / name).read_bytes() == (w / "truth" / name).read_bytes()


def test_data_env_default(pipeline, tmp_path, monkeypatch):
    monkeypatch.setenv("CLOUDRT_DATA", str(tmp_path))
    assert run("trace", pipeline / "scene" / "cell.scene.json", "--tx", 0.6, 0.6, 1.2,
               "--rx", 2.4, 1.9, 1.5) == EXIT_OK
    assert (tmp_path / "trace" / "channel_0000.json").exists()


# --------------------------------------------------------------------------
# failures


def test_missing_scene_is_input_error(tmp_path, capsys):
    assert run("trace", tmp_path / "nope.json", "--random-links", 1, "--out", tmp_path) == EXIT_INPUT
    assert "not found" in capsys.readouterr().err


def test_bad_spec_reports_line(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text('{\n  "extents": [3, 3, 3],\n  "walls": 2\n}')
    assert run("gen-scene", f, "--out", tmp_path) == EXIT_INPUT
    assert "bad.json:3" in capsys.readouterr().err


def test_unknown_material_rejected(tmp_path, capsys):
    f = tmp_path / "m.json"
    f.write_text(json.dumps({**SPEC, "floor_material": 99}))
    assert run("gen-scene", f, "--out", tmp_path) == EXIT_INPUT
    assert "material" in capsys.readouterr().err


def test_unknown_trace_option(pipeline, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"trace": {"n_rayz": 5}}))
    assert run("trace", pipeline / "scene" / "cell.scene.json", "--random-links", 1,
               "--config", cfg, "--out", tmp_path) == EXIT_INPUT
    assert "n_rayz" in capsys.readouterr().err


def test_terminal_inside_wall(pipeline, tmp_path):
    assert run("trace", pipeline / "scene" / "cell.scene.json", "--tx", 0, 1.0, 1.0,
               "--rx", 2.0, 1.0, 1.0, "--out", tmp_path) == EXIT_INPUT


def test_corrupt_checkpoint_is_input_error(pipeline, tmp_path):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"garbage")
    assert run("rollout", pipeline / "scene" / "cell.scene.json", "--det", bad,
               "--non", pipeline / "models" / "non.npz", "--random-links", 1,
               "--out", tmp_path) == EXIT_INPUT


def test_diverging_training_exits_numeric(pipeline, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"surrogate": {**_tiny_section(), "lr": 1e38, "epochs": 5}}))
    code = run("train", pipeline / "data", "--mechanism", "det", "--config", cfg,
               "--out", tmp_path)
    assert code == EXIT_NUMERIC
    assert "epoch" in capsys.readouterr().err


def test_accept_single_criterion(tmp_path):
    assert run("accept", "fast", "--only", 1, "--out", tmp_path) == EXIT_OK
    rep = json.loads((tmp_path / "report_fast.json").read_text())
    assert rep["passed"] is True and rep["failed"] == []


def test_accept_failure_exit_code(tmp_path, monkeypatch):
    from cloudrt import acceptance

    def broken(suite):
        raise RuntimeError("forced")
    monkeypatch.setitem(acceptance.CHECKS, 1, broken)
    assert run("accept", "fast", "--only", 1, "--out", tmp_path) == EXIT_FAIL
