import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evasive.ea_core import ea_bruteforce
from evasive.ea_cv import (StepBarrier, barrier_boundary, build_step_barriers, directional_exact, ea_cv_value,
                           ea_mode, max_penetration, prune_dominated)
from evasive.geometry import ConvexPolygon, RtFrame, minkowski_collision_set
from evasive.motion import RoadUserState
from evasive.synth import random_conflict

from conftest import head_on

pos = st.floats(0.1, 50.0)


@given(pos, st.floats(0.01, 5.0), st.floats(0.5, 30.0))
def test_boundary_plateau_and_kink(d_r, d_t, v_r):
    b = StepBarrier(d_r, d_t)
    plateau = v_r ** 2 / (2 * d_r)
    assert barrier_boundary(b, v_r, 0.0) == pytest.approx(plateau, rel=1e-12)
    kink = d_t * v_r ** 2 / (2 * d_r ** 2)
    left = barrier_boundary(b, v_r, kink * (1 - 1e-12))
    right = barrier_boundary(b, v_r, kink)
    assert abs(left - right) <= 1e-9 * max(1.0, plateau)


def test_boundary_curve_reaches_zero():
    # the curved branch vanishes at a_t = 2 d_t v_r^2 / d_r^2
    b = StepBarrier(10.0, 2.0)
    assert barrier_boundary(b, 5.0, 2 * 2.0 * 25.0 / 100.0) == pytest.approx(0.0, abs=1e-12)


def test_boundary_finite_horizon_lowers_plateau():
    b = StepBarrier(40.0, 1.0)
    assert barrier_boundary(b, 10.0, 0.0, horizon=2.0) < barrier_boundary(b, 10.0, 0.0)
    # station reached at peak before the horizon: unchanged
    assert barrier_boundary(b, 10.0, 0.0, horizon=100.0) == pytest.approx(1.25)


def test_boundary_rejects_negative_at():
    with pytest.raises(ValueError):
        barrier_boundary(StepBarrier(1.0, 1.0), 1.0, -0.1)
    with pytest.raises(ValueError):
        StepBarrier(0.0, 1.0)
    with pytest.raises(ValueError):
        StepBarrier(1.0, 0.0)


def test_single_barrier_pure_radial():
    # tall barrier: steering around costs more than braking
    sol = ea_mode([StepBarrier(10.0, 500.0)], 8.0)
    assert sol.value == pytest.approx(8.0 ** 2 / 20.0, abs=1e-6)
    assert sol.vector[1] == 0.0


@given(st.lists(st.tuples(pos, st.floats(0.01, 5.0)), min_size=1, max_size=6), st.floats(1.0, 20.0))
def test_ea_mode_matches_grid_minimum(bars, v_r):
    bs = [StepBarrier(r, t) for r, t in bars]
    sol = ea_mode(bs, v_r)
    a_r, a_t = sol.vector
    # the returned point satisfies every barrier and has the reported norm
    for b in bs:
        assert a_r >= barrier_boundary(b, v_r, a_t) - 1e-9 * max(1.0, sol.value)
    assert math.hypot(a_r, a_t) == pytest.approx(sol.value, rel=1e-9, abs=1e-12)
    # no grid point on the envelope is shorter
    xs = np.linspace(0.0, sol.value * 1.5 + 1e-9, 3001)
    env = np.array([max(0.0, max(barrier_boundary(b, v_r, x) for b in bs)) for x in xs])
    assert np.min(np.hypot(xs, env)) >= sol.value - 1e-6 * max(1.0, sol.value)


@given(st.lists(st.tuples(pos, st.floats(0.01, 5.0)), min_size=1, max_size=12))
def test_prune_dominated_oracle(bars):
    d_r = np.array([b[0] for b in bars])
    d_t = np.array([b[1] for b in bars])
    keep = set(prune_dominated(d_r, d_t).tolist())
    for i in range(len(bars)):
        dominated = any((d_r[j] <= d_r[i] and d_t[j] >= d_t[i]) and (d_r[j], -d_t[j], j) < (d_r[i], -d_t[i], i)
                        for j in range(len(bars)) if j != i)
        assert (i not in keep) == dominated
    # pruning never changes the optimum
    assert ea_mode([StepBarrier(*b) for b in bars], 7.0, prune=True).value == pytest.approx(
        ea_mode([StepBarrier(*b) for b in bars], 7.0, prune=False).value, rel=1e-12, abs=1e-12)


def test_max_penetration_matches_sampling(rng):
    for _ in range(20):
        # points on an ellipse at sorted angles form a convex polygon
        ang = np.sort(rng.uniform(0, 2 * np.pi, 8))
        verts = np.stack([3 * np.cos(ang), 1.5 * np.sin(ang)], -1) + np.array([rng.uniform(5, 20), rng.uniform(-2, 2)])
        poly = ConvexPolygon(verts)
        n, c = poly.halfplanes()
        v_r, a_r, a_t = rng.uniform(2, 10), rng.uniform(-1, 3), rng.uniform(-3, 3)
        depth, s_w = max_penetration(n, c, v_r, a_r, a_t, 7.0)
        s = np.linspace(0, 7.0, 20001)
        pts = np.stack([v_r * s - 0.5 * a_r * s * s, 0.5 * a_t * s * s], -1)
        dense = np.max(np.min(c[None] - pts @ n.T, axis=1))
        assert depth >= dense - 1e-12
        assert depth == pytest.approx(dense, abs=1e-3)


def test_barriers_skip_clear_stations():
    poly = ConvexPolygon(np.array([[5, -1], [8, -1], [8, 2], [5, 2]], float))
    f = RtFrame((0.0, 0.0), (1.0, 0.0), 2.0)
    up = build_step_barriers(poly, f, "up", 7.0, stations=8)
    down = build_step_barriers(poly, f, "down", 7.0, stations=8)
    assert all(b.d_t == pytest.approx(2.0) for b in up)
    assert all(b.d_t == pytest.approx(1.0) for b in down)
    assert min(b.d_r for b in up) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        build_step_barriers(poly, f, "sideways", 7.0)


def test_wall_needs_braking_only():
    a, b = head_on(gap=10.0, speed=5.0, width_b=1000.0)
    r = ea_cv_value(a, b)
    assert r.ea == pytest.approx(25.0 / 20.0, abs=1e-6)
    assert r.vector[0] == pytest.approx(-1.25, abs=1e-6) and r.vector[1] == pytest.approx(0.0, abs=1e-6)


def test_trivial_cases():
    a = RoadUserState((0.0, 0.0), 5.0, 0.0)
    assert ea_cv_value(a, RoadUserState((20.0, 10.0), 0.0, 0.0)).ea == 0.0  # path misses
    assert ea_cv_value(a, RoadUserState((-20.0, 0.0), 0.0, 0.0)).ea == 0.0  # moving away
    assert ea_cv_value(a, RoadUserState((100.0, 0.0), 0.0, 0.0)).ea == 0.0  # beyond the horizon
    r = ea_cv_value(a, RoadUserState((1.0, 0.0), 0.0, 0.0))
    assert r.already_colliding and math.isnan(r.ea)
    with pytest.raises(ValueError):
        ea_cv_value(a, a, horizon=0.0)


def test_directional_exact_agrees_with_bruteforce_direction(rng):
    a, b = random_conflict(rng)
    c = minkowski_collision_set(a.footprint(), b.footprint())
    r0 = np.asarray(a.position) - np.asarray(b.position)
    v = a.velocity - b.velocity
    m = directional_exact(c, r0, v, np.linspace(0, 2 * math.pi, 72, endpoint=False), 7.0)
    assert ea_cv_value(a, b).ea <= m.min() + 1e-9


@pytest.mark.parametrize("seed", range(25))
def test_cv_matches_bruteforce(seed):
    a, b = random_conflict(np.random.default_rng(1000 + seed))
    e = ea_cv_value(a, b).ea
    bf = ea_bruteforce(a, b)
    assert abs(e - bf) <= max(0.01 * bf, 0.01)


@pytest.mark.parametrize("seed", range(10))
def test_rigid_motion_and_swap_invariance(seed):
    rng = np.random.default_rng(seed)
    a, b = random_conflict(rng)
    e = ea_cv_value(a, b).ea
    assert ea_cv_value(b, a).ea == pytest.approx(e, rel=1e-6, abs=1e-6)
    th, sh = rng.uniform(-3, 3), rng.uniform(-50, 50, 2)
    rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    a2 = a.replace(position=tuple(rot @ a.position + sh), heading=a.heading + th)
    b2 = b.replace(position=tuple(rot @ b.position + sh), heading=b.heading + th)
    assert ea_cv_value(a2, b2).ea == pytest.approx(e, rel=1e-6, abs=1e-6)
