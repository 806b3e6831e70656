import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from evasive.motion import RoadUserState

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

finite = dict(allow_nan=False, allow_infinity=False)
coords = st.floats(-50, 50, **finite)
headings = st.floats(-math.pi, math.pi, **finite)
lengths = st.floats(0.5, 12.0, **finite)
widths = st.floats(0.5, 3.0, **finite)


@st.composite
def states(draw, yaw=False, max_speed=20.0):
    return RoadUserState((draw(coords), draw(coords)), draw(st.floats(0.0, max_speed, **finite)), draw(headings),
                         draw(st.floats(-0.5, 0.5, **finite)) if yaw else 0.0, draw(lengths), draw(widths))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def head_on(gap=10.0, speed=5.0, width_b=1.8, length=4.5):
    """A at the origin heading +x, B stationary ahead with footprint gap ``gap``."""
    a = RoadUserState((0.0, 0.0), speed, 0.0, 0.0, length, 1.8)
    b = RoadUserState((length / 2 + gap + length / 2, 0.0), 0.0, 0.0, 0.0, length, width_b)
    return a, b


_ACCEPTANCE: list = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion, printed at the end of the run."""
    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((n, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
