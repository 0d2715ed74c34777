import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cloudrt import em
from cloudrt.acceptance import friis_db
from cloudrt.metrics import (angle_deg, angular_error, condensed, path_loss, pdp, rms_ds,
                             total_power, write_link_csv)
from cloudrt.tracer import ChannelRealization, Hop, TracedPath


def path(tau, power=1.0, dirs=()):
    hops = [Hop(np.zeros(3), np.array([1.0, 0, 0]), np.asarray(d, float), "reflect",
                None, 1.0, np.eye(2)) for d in dirs]
    return TracedPath(hops, em.PathGain(np.eye(2), tau, math.sqrt(power)), 0.0, (0, 0), (0, 0))


def real(taus, powers):
    return ChannelRealization(None, [path(t, p) for t, p in zip(taus, powers)], 28e9)


taps = st.lists(st.tuples(st.floats(0, 500e-9), st.floats(1e-6, 1.0)), min_size=1, max_size=30)


# --------------------------------------------------------------------------
# PDP


def test_pdp_single_path():
    p = pdp([path(10e-9)], 1e-9)
    assert len(p.bins) == 1
    assert p.bins[0][0] == pytest.approx(10e-9) and p.bins[0][1] == pytest.approx(1.0)


def test_pdp_same_bin_adds():
    p = pdp([path(10.2e-9, 0.5), path(10.7e-9, 0.25)], 1e-9)
    assert len(p.bins) == 1 and p.total == pytest.approx(0.75)


def test_pdp_empty_and_bad_width():
    assert pdp([], 1e-9).bins == []
    with pytest.raises(ValueError):
        pdp([path(0.0)], 0.0)


@settings(max_examples=50, deadline=None)
@given(taps)
def test_pdp_matches_brute_force(tp):
    r = real(*zip(*tp))
    p = pdp(r, 1e-9)
    acc = {}
    for t, pw in tp:
        k = int(math.floor(t / 1e-9 + 1e-9))
        acc[k] = acc.get(k, 0.0) + pw
    assert [b[0] for b in p.bins] == pytest.approx([k * 1e-9 for k in sorted(acc)])
    assert [b[1] for b in p.bins] == pytest.approx([acc[k] for k in sorted(acc)])
    assert np.all(np.diff(p.delays) > 0) and np.all(p.powers >= 0)
    assert p.total == pytest.approx(total_power(r), rel=1e-12)


# --------------------------------------------------------------------------
# path loss


def test_path_loss_examples():
    assert path_loss([path(0.0)]) == pytest.approx(0.0)
    lam = em.C0 / 28e9
    pw = (lam / (4 * math.pi)) ** 2
    # exact value is 61.391 dB; the usual quote of 61.38 is rounded
    assert path_loss([path(0.0, pw)]) == pytest.approx(61.38, abs=0.02)
    assert path_loss([path(0.0, pw)]) == pytest.approx(friis_db(1.0))
    assert path_loss([path(0.0), path(1e-9)]) == pytest.approx(-10 * math.log10(2))
    assert -10 * math.log10(2) == pytest.approx(-3.01, abs=0.005)


def test_path_loss_errors():
    with pytest.raises(ValueError):
        path_loss([])
    with pytest.raises(ValueError):
        path_loss([path(0.0, 0.0)])


@settings(max_examples=50, deadline=None)
@given(taps, st.floats(1e-3, 1e3))
def test_path_loss_scales_with_power(tp, k):
    taus, pw = zip(*tp)
    a = path_loss(real(taus, pw))
    b = path_loss(real(taus, [k * p for p in pw]))
    assert a - b == pytest.approx(10 * math.log10(k), abs=1e-9)


# --------------------------------------------------------------------------
# delay spread


def test_rms_ds_examples():
    assert rms_ds([path(37e-9)]) == 0.0
    assert rms_ds([path(0.0), path(20e-9)]) == pytest.approx(10e-9)
    with pytest.raises(ValueError):
        rms_ds([])
    with pytest.raises(ValueError):
        rms_ds([path(0.0, 0.0)])


@settings(max_examples=50, deadline=None)
@given(taps)
def test_rms_ds_brute_force(tp):
    taus, pw = map(np.array, zip(*tp))
    m1 = (pw * taus).sum() / pw.sum()
    ref = math.sqrt((pw * (taus - m1) ** 2).sum() / pw.sum())
    assert rms_ds(real(taus, pw)) == pytest.approx(ref, rel=1e-6, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(taps, st.floats(0, 1e-6), st.floats(1e-3, 1e3))
def test_rms_ds_shift_and_scale_invariant(tp, shift, k):
    taus, pw = map(np.array, zip(*tp))
    a = rms_ds(real(taus, pw))
    assert rms_ds(real(taus + shift, pw * k)) == pytest.approx(a, rel=1e-6, abs=1e-14)


def test_condensed_units():
    c = condensed([path(0.0, 0.5), path(20e-9, 0.5)])
    assert c.pl_db == pytest.approx(0.0) and c.ds_ns == pytest.approx(10.0)


# --------------------------------------------------------------------------
# angular error


def _rot_z(deg):
    r = math.radians(deg)
    return [math.cos(r), math.sin(r), 0.0]


def test_angular_error_examples():
    a = path(0.0, dirs=[[1, 0, 0]])
    assert angular_error(a, a) == 0.0
    assert angular_error(path(0.0, dirs=[_rot_z(5)]), a) == pytest.approx(5.0)
    two = path(0.0, dirs=[[1, 0, 0], [0, 1, 0]])
    bent = path(0.0, dirs=[[1, 0, 0], _rot_z(95)])
    assert angular_error(bent, two) == pytest.approx(2.5)


def test_angular_error_bounce_mismatch():
    with pytest.raises(ValueError):
        angular_error(path(0.0, dirs=[[1, 0, 0]]), path(0.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 4))
def test_angular_error_matches_oracle(seed, n):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    e = d + 0.3 * rng.normal(size=(n, 3))
    ref = np.mean([math.degrees(math.acos(np.clip(u @ v / np.linalg.norm(u) / np.linalg.norm(v),
                                                   -1, 1))) for u, v in zip(d, e)])
    got = angular_error(path(0.0, dirs=e), path(0.0, dirs=d))
    assert got == pytest.approx(ref, abs=1e-9)


def test_angle_deg_clamps():
    v = np.array([[1.0, 1e-9, 0]])
    assert np.isfinite(angle_deg(v, v)).all()


def test_link_csv(tmp_path):
    write_link_csv(tmp_path / "l.csv", [dict(link=0, pl_db=70.5, ds_ns=3.25, n_paths=4, x=1)])
    rows = list(csv.DictReader(open(tmp_path / "l.csv")))
    assert rows == [dict(link="0", pl_db="70.500000", ds_ns="3.250000", n_paths="4")]
