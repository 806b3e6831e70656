import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evasive.motion import CTRV, CV, RoadUserState, extrapolate, extrapolate_many, relative_trajectory, time_grid

from conftest import states


def _integrate(state, s, n=20000):
    # forward integration of x' = v cos(th), y' = v sin(th), th' = w (midpoint rule)
    x, y = state.position
    th = state.heading
    h = s / n
    for _ in range(n):
        tm = th + 0.5 * h * state.yaw_rate
        x += h * state.speed * math.cos(tm)
        y += h * state.speed * math.sin(tm)
        th += h * state.yaw_rate
    return x, y, th


def test_cv_straight_line():
    st_ = RoadUserState((1.0, 2.0), 3.0, math.pi / 2, 0.4)
    p = extrapolate(st_, CV, 2.0)
    assert p.position == (pytest.approx(1.0), pytest.approx(8.0))
    assert p.heading == pytest.approx(math.pi / 2)


def test_ctrv_closes_full_circle():
    w = 0.5
    st_ = RoadUserState((3.0, -1.0), 4.0, 0.3, w)
    p = extrapolate(st_, CTRV, 2 * math.pi / w)
    assert p.position == (pytest.approx(3.0, abs=1e-9), pytest.approx(-1.0, abs=1e-9))


def test_ctrv_quarter_turn_radius():
    st_ = RoadUserState((0.0, 0.0), 2.0, 0.0, 0.5)  # radius 4
    p = extrapolate(st_, CTRV, math.pi)
    assert p.position == (pytest.approx(4.0), pytest.approx(4.0))
    assert p.heading == pytest.approx(math.pi / 2)


@given(states(yaw=True), st.floats(0.0, 7.0))
def test_ctrv_matches_integration(state, s):
    x, y, th = _integrate(state, s, 2000)
    p = extrapolate(state, CTRV, s)
    assert p.position[0] == pytest.approx(x, abs=1e-4)
    assert p.position[1] == pytest.approx(y, abs=1e-4)
    assert p.heading == pytest.approx(th, abs=1e-9)


def test_ctrv_continuous_at_zero_yaw():
    base = RoadUserState((0.0, 0.0), 10.0, 0.7, 0.0)
    near = base.replace(yaw_rate=2e-6)
    pa, _ = extrapolate_many(base, CTRV, np.array([7.0]))
    pb, _ = extrapolate_many(near, CTRV, np.array([7.0]))
    assert np.allclose(pa, pb, atol=1e-3)


def test_time_grid_includes_horizon():
    s = time_grid(7.0, 0.3)
    assert s[0] == 0.0 and s[-1] == 7.0
    assert np.all(np.diff(s) > 0)
    assert len(time_grid(1.0, 0.25)) == 5
    with pytest.raises(ValueError):
        time_grid(0.0, 0.1)


def test_state_validation():
    with pytest.raises(ValueError):
        RoadUserState((0.0, math.nan), 1.0, 0.0)
    with pytest.raises(ValueError):
        RoadUserState((0.0, 0.0), -1.0, 0.0)
    with pytest.raises(ValueError):
        RoadUserState((0.0, 0.0), 1.0, 0.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        extrapolate(RoadUserState((0.0, 0.0), 1.0, 0.0), CV, -1.0)


def test_relative_trajectory():
    a = RoadUserState((0.0, 0.0), 2.0, 0.0)
    b = RoadUserState((10.0, 0.0), 3.0, math.pi)
    rel = relative_trajectory(a, b, CV, CV, 2.0, 0.5)
    assert len(rel) == 5
    assert rel[-1].relative_position == (pytest.approx(0.0), pytest.approx(0.0, abs=1e-12))
