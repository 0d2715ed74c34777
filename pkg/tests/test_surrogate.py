import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cloudrt import em, scenegen
from cloudrt.acceptance import overfit_samples
from cloudrt.geometry import PointCloud, build_index
from cloudrt.metrics import path_loss
from cloudrt.surrogate import (MECH_DET, MECH_NON, NumericalError, SurrogateConfig,
                               SurrogateModel, amp_to_matrix, build_training_set, crop_points,
                               desk_config, evaluate, loss_att, loss_dir, matrix_to_amp, posenc,
                               prepare_crops, rollout, tiny_config, total_loss, train)
from cloudrt.tracer import Scene, TraceConfig, trace


@pytest.fixture(scope="module")
def samples():
    return overfit_samples(0)


def _crop(seed=0, n=40):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.8, 0.8, (n, 3))
    pts[:, 2] *= 0.05
    return pts


# --------------------------------------------------------------------------
# positional encoding and codec


def test_posenc_zero_direction():
    # rows are octaves, each laid out as three sines then three cosines
    e = posenc([0, 0, 0], 4).reshape(4, 6)
    assert np.all(e[:, :3] == 0) and np.all(e[:, 3:] == 1)


def test_posenc_first_sine():
    # lowest octave is 2 pi d, so d = 0.25 lands on a quarter turn
    assert posenc([0.25, 0, 0], 1)[0] == pytest.approx(math.sin(math.pi / 2))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2 ** 31 - 1))
def test_posenc_dimension(K, seed):
    d = np.random.default_rng(seed).normal(size=(5, 3))
    assert posenc(d, K).shape == (5, 6 * K)
    assert posenc(d[0], K).shape == (6 * K,)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_amp_codec_round_trip(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2))
    assert np.array_equal(amp_to_matrix(matrix_to_amp(m)), m)
    v = matrix_to_amp(np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j]]))
    assert v.tolist() == [1, 2, 3, 4, 5, 6, 7, 8]


# --------------------------------------------------------------------------
# encoder


def test_encoder_permutation_invariant():
    cfg = tiny_config(dtype="float64")
    model = SurrogateModel(cfg)
    pts = _crop()
    perm = np.random.default_rng(1).permutation(len(pts))
    a = model.encode(prepare_crops([pts], cfg))
    b = model.encode(prepare_crops([pts[perm]], cfg))
    assert np.array_equal(a, b)


def test_encoder_translation_invariant():
    cfg = tiny_config(dtype="float64", crop_points=64)
    pts = _crop(n=200) * 3
    center = pts[17]
    shift = np.array([4.0, -2.5, 1.25])
    c1 = crop_points(build_index(PointCloud(pts, point_radius=0.05)), center, cfg, seed=3)
    c2 = crop_points(build_index(PointCloud(pts + shift, point_radius=0.05)), center + shift,
                     cfg, seed=3)
    assert np.allclose(c1, c2, atol=1e-12)
    model = SurrogateModel(cfg)
    f1 = model.encode(prepare_crops([c1], cfg))
    f2 = model.encode(prepare_crops([np.round(c2, 9)], cfg))
    assert np.allclose(f1, f2, atol=1e-9)


# --------------------------------------------------------------------------
# predictors


def test_untrained_outputs_finite():
    for mech in (MECH_DET, MECH_NON):
        model = SurrogateModel(tiny_config(mech))
        f = model.encode(prepare_crops([_crop()], model.cfg))
        d = model.predict_direction(f, [[0, 0, -1.0]])
        assert np.all(np.isfinite(d)) and np.linalg.norm(d) == pytest.approx(1.0)
        a = model.predict_amplitude(f, [[0, 0, -1.0]], d, np.ones((1, 4)))
        assert a.shape == (1, 2, 2) and np.all(np.isfinite(a))
        assert np.array_equal(d, model.predict_direction(f, [[0, 0, -1.0]]))


def test_model_save_load(tmp_path):
    model = SurrogateModel(tiny_config(seed=4))
    model.save(tmp_path / "m.npz")
    back = SurrogateModel.load(tmp_path / "m.npz")
    assert back.cfg == model.cfg and back.store.digest() == model.store.digest()


def test_config_validation_and_json():
    cfg = desk_config(MECH_NON)
    assert SurrogateConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        SurrogateConfig(mechanism="specular")
    with pytest.raises(ValueError):
        SurrogateConfig(width=130, n_heads=4)


# --------------------------------------------------------------------------
# losses


def test_loss_dir_examples():
    x = np.array([[1.0, 0, 0]])
    assert loss_dir(x, x).item() == pytest.approx(0.0, abs=1e-12)
    assert loss_dir(x, [[0, 1.0, 0]]).item() == pytest.approx(1.0)
    assert loss_dir(x, -x).item() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        loss_dir(x, [[0, 0, 0.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 10))
def test_loss_dir_matches_hand(seed, n):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    ref = np.mean([1 - a @ b / np.linalg.norm(a) / np.linalg.norm(b) for a, b in zip(p, t)])
    assert loss_dir(p, t).item() == pytest.approx(ref, abs=1e-12)


def test_loss_att_examples():
    t = np.random.default_rng(0).normal(size=(4, 8))
    for mech in (MECH_DET, MECH_NON):
        assert loss_att(t, t, mech)[0].item() == pytest.approx(0.0, abs=1e-12)
    # doubling the power is a 3.01 dB error, squared
    la, _ = loss_att(t * math.sqrt(2), t, MECH_NON)
    assert la.item() == pytest.approx((10 * math.log10(2)) ** 2, rel=1e-9)
    assert la.item() == pytest.approx(9.06, abs=0.01)
    p = t.copy()
    p[0, 3] += 0.1
    assert loss_att(p[:1], t[:1], MECH_DET)[0].item() == pytest.approx(0.01 / 8)


def test_loss_att_excludes_zero_truth():
    t = np.ones((3, 8))
    t[1] = 0
    la, n_bad = loss_att(t * 2, t, MECH_NON)
    assert n_bad == 1 and la.item() == pytest.approx((10 * math.log10(4)) ** 2)


def test_total_loss_examples():
    assert total_loss(0.1, 0.2, MECH_DET).item() == pytest.approx(1.1)
    assert total_loss(0.1, 100.0, MECH_NON).item() == pytest.approx(0.2)
    assert total_loss(0.0, 0.0, MECH_DET).item() == 0.0


# --------------------------------------------------------------------------
# training


@pytest.mark.parametrize("mech", [MECH_DET, MECH_NON])
def test_overfit_one_sample(samples, mech):
    cfg = tiny_config(mech, lr=1e-3, seed=1)
    ts = build_training_set(samples[mech], cfg, mech)
    assert len(ts) == 1
    res = train(ts, SurrogateModel(cfg), epochs=50)
    tot = np.array([r[3] for r in res.curve])
    assert tot[-1] < 0.2 * tot[0]
    assert np.all(np.diff(tot[5:]) < 0), tot


def test_same_seed_same_curve(samples, tmp_path):
    cfg = tiny_config(MECH_DET, seed=2)
    ts = build_training_set(samples[MECH_DET], cfg, MECH_DET)
    a = train(ts, SurrogateModel(cfg), epochs=8, log_path=tmp_path / "a.csv")
    b = train(ts, SurrogateModel(cfg), epochs=8, log_path=tmp_path / "b.csv")
    assert a.curve == b.curve
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a.model.store.digest() == b.model.store.digest()


def test_keep_best_restores_lowest_loss_epoch(samples):
    cfg = tiny_config(MECH_NON, lr=3e-2, seed=5)
    ts = build_training_set(samples[MECH_NON], cfg, MECH_NON)
    res = train(ts, SurrogateModel(cfg), epochs=12, keep_best=True)
    tot = [r[3] for r in res.curve]
    # this lr overshoots on the last epoch, so the restore is exercised
    assert res.best_epoch == int(np.argmin(tot)) < len(tot) - 1
    ref = train(ts, SurrogateModel(cfg), epochs=res.best_epoch + 1)
    assert res.model.store.digest() == ref.model.store.digest()


def test_nan_loss_raises_with_epoch(samples):
    cfg = tiny_config(MECH_DET)
    ts = build_training_set(samples[MECH_DET], cfg, MECH_DET)
    ts.target[:] = np.nan
    with pytest.raises(NumericalError) as err:
        train(ts, SurrogateModel(cfg), epochs=3)
    assert err.value.epoch == 0


def test_evaluate_shapes(samples):
    cfg = tiny_config(MECH_DET)
    ts = build_training_set(samples[MECH_DET], cfg, MECH_DET)
    out = evaluate(SurrogateModel(cfg), ts)
    assert out["angle_deg"].shape == (1,) and np.isfinite(out["angle_deg"]).all()


# --------------------------------------------------------------------------
# rollout


def test_rollout_empty_scene_matches_tracer():
    sc = Scene(None, None, [], em.load_materials(), (0, 0, 1.5), (6, 1, 1.2))
    det, non = SurrogateModel(tiny_config(MECH_DET)), SurrogateModel(tiny_config(MECH_NON))
    cfg = TraceConfig(n_rays=1000)
    got, ref = rollout(sc, det, non, cfg), trace(sc, cfg)
    assert got.nlos == [] and got.los.tau == ref.los.tau
    assert path_loss(got) == path_loss(ref)


def test_rollout_untrained_on_plane_is_finite():
    plane = scenegen.gen_plane([0, 0, 1.0], 0, size=3.0, seed=0)
    sc = plane.with_link([-0.5, 0, 1.0], [0.7, 0.2, 1.3])
    det = SurrogateModel(tiny_config(MECH_DET))
    non = SurrogateModel(tiny_config(MECH_NON))
    cfg = TraceConfig(n_rays=400, max_bounces=2, n_scatter=1, chunk_rays=200)
    real = rollout(sc, det, non, cfg)
    assert real.los is not None
    assert all(np.isfinite(p.power) and p.tau >= real.los.tau - 1e-15 for p in real.paths)
    again = rollout(sc, det, non, cfg)
    assert [p.tau for p in again.paths] == [p.tau for p in real.paths]
