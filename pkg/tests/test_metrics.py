import math

import numpy as np
import pytest
from hypothesis import assume, given

from evasive.geometry import obb_overlap
from evasive.metrics import (METRIC_IDS, MetricId, MetricParams, act, bbox_distance, compute_metrics, drac2d, mei,
                             risk_orient, ttc2d, ttc_drac)
from evasive.motion import RoadUserState

from conftest import head_on, states


def _overlap_at(a, b, t, d=0.0):
    """A braking at ``d`` along its heading (stopping), B on CV, both evaluated at time ``t``."""
    ts = a.speed / d if d > 0 else math.inf
    tt = min(t, ts)
    s = a.speed * tt - 0.5 * d * tt * tt
    h = np.array([math.cos(a.heading), math.sin(a.heading)])
    pa = np.asarray(a.position) + s * h
    pb = np.asarray(b.position) + b.velocity * t
    return obb_overlap(a.replace(position=tuple(pa)).footprint(), b.replace(position=tuple(pb)).footprint())


def _dense_collides(a, b, d=0.0, horizon=7.0, dt=0.002):
    return any(_overlap_at(a, b, t, d) for t in np.arange(0.0, horizon + dt / 2, dt))


def test_head_on_values():
    a, b = head_on(gap=10.0, speed=5.0)
    assert ttc_drac(a, b) == pytest.approx((2.0, 1.25))
    assert act(a, b) == pytest.approx(2.0)
    assert ttc2d(a, b) == pytest.approx(2.0)
    assert drac2d(a, b) == pytest.approx(1.25, abs=1e-5)
    assert bbox_distance(a, b) == pytest.approx(10.0)
    assert mei(a, b) == pytest.approx(1.8 / 2.9)


def test_separating_and_overlapping():
    a, b = head_on(gap=10.0, speed=5.0)
    away = a.replace(heading=math.pi)
    assert ttc_drac(away, b) == (math.inf, 0.0)
    assert act(away, b) == math.inf and ttc2d(away, b) == math.inf
    assert drac2d(away, b) == 0.0 and mei(away, b) == 0.0
    c = b.replace(position=(1.0, 0.0))
    assert ttc_drac(a, c) == (0.0, math.inf)
    assert act(a, c) == 0.0 and ttc2d(a, c) == 0.0 and drac2d(a, c) == math.inf


def test_act_sees_rotation():
    # parallel boxes side by side: translation alone never closes the gap, rotation does
    a = RoadUserState((0.0, 0.0), 0.0, 0.0, 0.5, 4.5, 1.8)
    b = RoadUserState((0.0, 3.0), 0.0, 0.0, 0.0, 4.5, 1.8)
    assert ttc_drac(a, b).ttc == math.inf
    assert math.isfinite(act(a, b))


@given(states(max_speed=15.0), states(max_speed=15.0))
def test_swap_symmetry(a, b):
    assume(not obb_overlap(a.footprint(), b.footprint()))
    assert ttc_drac(a, b) == pytest.approx(ttc_drac(b, a), rel=1e-9)
    assert act(a, b) == pytest.approx(act(b, a), rel=1e-9)
    assert ttc2d(a, b) == pytest.approx(ttc2d(b, a), rel=1e-9, abs=1e-9)
    assert mei(a, b) == pytest.approx(mei(b, a), rel=1e-9, abs=1e-12)
    assert bbox_distance(a, b) == pytest.approx(bbox_distance(b, a), rel=1e-9)


@given(states(max_speed=15.0), states(max_speed=15.0))
def test_ttc2d_matches_dense_sampling(a, b):
    assume(not obb_overlap(a.footprint(), b.footprint()))
    t = ttc2d(a, b)
    dt = 0.002
    grid = np.arange(0.0, 7.0 + dt / 2, dt)
    hits = [s for s in grid if _overlap_at(a, b, s)]
    if not hits:
        assert t == math.inf or t > 7.0 - 2 * dt
    else:
        assert hits[0] - dt - 1e-9 <= t <= hits[0] + 1e-9


@pytest.mark.parametrize("seed", range(15))
def test_drac2d_is_the_braking_threshold(seed):
    rng = np.random.default_rng(seed)
    a = RoadUserState((0.0, 0.0), rng.uniform(3, 15), 0.0, 0.0, 4.5, 1.8)
    tc = rng.uniform(1.0, 4.0)
    hb = rng.uniform(0.3, math.pi - 0.3)
    vb = rng.uniform(1.0, 8.0)
    pb = np.array([a.speed * tc, 0.0]) - vb * tc * np.array([math.cos(hb), math.sin(hb)])
    b = RoadUserState(tuple(pb), vb, hb, 0.0, 4.5, 1.8)
    if obb_overlap(a.footprint(), b.footprint()):
        return
    d = drac2d(a, b)
    if d == 0.0:
        assert not _dense_collides(a, b)
        return
    if math.isinf(d):
        assert _dense_collides(a, b, 100.0)
        return
    assert not _dense_collides(a, b, d + 1e-3)
    assert _dense_collides(a, b, d - 0.02)


def test_risk_orientation():
    assert risk_orient("TTC", 2.0) == 0.5
    assert risk_orient(MetricId.ACT, math.inf) == 0.0
    assert risk_orient("TTC2D", 0.0) == math.inf
    assert risk_orient("BBOX_DIST", 3.0) == -3.0
    assert risk_orient("EA", 2.5) == 2.5
    assert risk_orient("DRAC2D", math.inf, cap=50.0) == 50.0
    with pytest.raises(ValueError):
        risk_orient("TTC", math.nan)
    with pytest.raises(ValueError):
        risk_orient("NOPE", 1.0)


def test_compute_metrics_frame():
    a, b = head_on(gap=10.0, speed=5.0)
    fm = compute_metrics(a, b)
    assert set(fm.samples) == set(METRIC_IDS)
    assert fm.samples[MetricId.TTC].risk == pytest.approx(0.5)
    assert fm.samples[MetricId.EA].raw == pytest.approx(np.mean([v for v in fm.ea_per_model.values()]))
    assert all(s.defined for s in fm.samples.values())
    c = b.replace(position=(2.0, 0.0))
    fm = compute_metrics(a, c, metrics=("EA", "TTC"))
    assert fm.already_colliding and not fm.samples[MetricId.EA].defined
    assert fm.samples[MetricId.TTC].risk == math.inf and not fm.samples[MetricId.TTC].defined


def test_params_validate():
    with pytest.raises(ValueError):
        MetricParams(horizon=0.0)
