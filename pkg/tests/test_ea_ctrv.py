import math

import numpy as np
import pytest

from evasive.ea_core import _Collider
from evasive.ea_ctrv import AlreadyColliding, NumericEaParams, directional_min, directional_scan, ea_numeric
from evasive.ea_cv import ea_cv_value
from evasive.motion import CTRV, CV, RoadUserState
from evasive.synth import random_conflict

from conftest import head_on

COMBOS = [(CV, CV), (CV, CTRV), (CTRV, CV), (CTRV, CTRV)]


def _dense(a, b, ma, mb):
    return _Collider(a, b, ma, mb, 7.0, 0.005)


@pytest.mark.parametrize("seed", range(12))
def test_zero_yaw_matches_cv(seed):
    a, b = random_conflict(np.random.default_rng(seed))
    ref = ea_cv_value(a, b).ea
    for ma, mb in COMBOS:
        r = ea_numeric(a, b, ma, mb)
        assert abs(r.ea - ref) <= max(0.05 * ref, 0.05)


@pytest.mark.parametrize("seed", range(12))
def test_feasible_and_locally_minimal(seed):
    rng = np.random.default_rng(100 + seed)
    a, b = random_conflict(rng, turning=True)
    ma, mb = COMBOS[seed % 4]
    r = ea_numeric(a, b, ma, mb)
    if r.ea is None or r.ea == 0.0:
        return
    col = _dense(a, b, ma, mb)
    assert not col.collides(np.array([r.vector]))[0]
    # nothing on a polar grid is free more than 0.01 below the result
    phis = np.linspace(0, 2 * math.pi, 360, endpoint=False)
    mags = np.linspace(0.0, r.ea - 0.01, 40)
    if mags[-1] <= 0:
        return
    acc = (mags[:, None, None] * np.stack([np.cos(phis), np.sin(phis)], -1)[None]).reshape(-1, 2)
    assert col.collides(acc).all()


def test_head_on_brakes_to_stop():
    a, b = head_on(gap=10.0, speed=5.0, width_b=1000.0)
    r = ea_numeric(a, b, CTRV, CTRV)
    assert r.ea == pytest.approx(1.25, abs=0.02)
    assert r.vector[0] < 0


def test_no_conflict_is_zero():
    a = RoadUserState((0.0, 0.0), 5.0, 0.0, 0.3)
    b = RoadUserState((-30.0, 20.0), 0.0, 0.0)
    assert ea_numeric(a, b, CTRV, CV).ea == 0.0


def test_already_colliding_raises():
    a = RoadUserState((0.0, 0.0), 5.0, 0.0)
    with pytest.raises(AlreadyColliding):
        ea_numeric(a, a.replace(position=(1.0, 0.5)), CV, CTRV)


def test_bound_exhausted_is_undefined():
    a, b = head_on(gap=10.0, speed=5.0, width_b=1000.0)
    r = ea_numeric(a, b, CV, CV, p=NumericEaParams(a_max=0.5))
    assert r.ea is None and all(math.isnan(x) for x in r.vector)
    assert directional_min(a, b, CV, CV, math.pi, p=NumericEaParams(a_max=0.5)) is None


def test_directional_scan_intervals_are_merged():
    a, b = head_on(gap=10.0, speed=5.0, width_b=1000.0)
    s = directional_scan(a, b, CV, CV, math.pi)
    assert s.magnitude == pytest.approx(1.25, abs=0.02)
    assert s.collision_union and s.collision_union[0][0] <= 0.0 + 1e-9
    for (l0, h0), (l1, h1) in zip(s.collision_union, s.collision_union[1:]):
        assert h0 < l1


def test_levels_do_not_increase(rng):
    a, b = random_conflict(rng, turning=True)
    r = ea_numeric(a, b, CTRV, CTRV)
    assert all(y <= x for x, y in zip(r.level_minima, r.level_minima[1:]))


def test_params_validate():
    with pytest.raises(ValueError):
        NumericEaParams(dt=0.0)
    with pytest.raises(ValueError):
        NumericEaParams(refine_levels=((0.1, 0.2),))
