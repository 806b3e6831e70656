import math

import numpy as np
import pytest

from evasive.ea_core import MODEL_SET, BruteForceGrid, EaConfig, benchmark, ea, ea_bruteforce, model_key
from evasive.ea_ctrv import NumericEaParams
from evasive.motion import CTRV, CV, RoadUserState
from evasive.synth import frame_suite, random_conflict

from conftest import head_on


def test_model_keys():
    assert [model_key(*m) for m in MODEL_SET] == ["CV-CV", "CV-CTRV", "CTRV-CV", "CTRV-CTRV"]


def test_mean_over_models(rng):
    a, b = random_conflict(rng, turning=True)
    r = ea(a, b)
    assert set(r.per_model) == {model_key(*m) for m in MODEL_SET}
    assert r.mean == pytest.approx(np.mean(list(r.per_model.values())))
    assert not r.already_colliding and not r.any_undefined


def test_head_on_all_models_agree():
    a, b = head_on(gap=10.0, speed=5.0, width_b=1000.0)
    r = ea(a, b)
    for v in r.per_model.values():
        assert v == pytest.approx(1.25, abs=0.02)


def test_overlap_is_nan():
    a = RoadUserState((0.0, 0.0), 5.0, 0.0)
    r = ea(a, a.replace(position=(2.0, 0.0)))
    assert r.already_colliding and math.isnan(r.mean)
    assert all(math.isnan(v) for v in r.per_model.values())


def test_undefined_components_are_dropped():
    a = RoadUserState((0.0, 0.0), 10.0, 0.0, 0.2)
    b = RoadUserState((8.0, 0.0), 0.0, 0.0, 0.0, 4.5, 200.0)
    cfg = EaConfig(numeric=NumericEaParams(a_max=5.5))
    r = ea(a, b, cfg)
    undefined = [k for k, v in r.per_model.items() if v is None]
    assert undefined and r.any_undefined
    defined = [v for v in r.per_model.values() if v is not None]
    if defined:
        assert r.mean == pytest.approx(np.mean(defined))
    else:
        assert math.isnan(r.mean)


def test_bruteforce_head_on():
    a, b = head_on(gap=10.0, speed=5.0, width_b=1000.0)
    assert ea_bruteforce(a, b) == pytest.approx(1.25, abs=0.005)
    assert ea_bruteforce(a, b, CTRV, CTRV, grid=BruteForceGrid(n_dirs=180)) == pytest.approx(1.25, abs=0.01)


def test_bruteforce_free_and_hopeless():
    a = RoadUserState((0.0, 0.0), 5.0, 0.0)
    assert ea_bruteforce(a, RoadUserState((0.0, 30.0), 0.0, 0.0)) == 0.0
    a, b = head_on(gap=1.0, speed=20.0, width_b=1000.0)
    assert math.isinf(ea_bruteforce(a, b, grid=BruteForceGrid(n_dirs=36, a_max=5.0)))


def test_benchmark_reports_timings():
    frames = frame_suite(6, seed=0)
    out = benchmark(frames)
    assert out["n"] == 6
    assert 0 < out["mean_ms"] <= out["max_ms"]
