"""Deterministic synthetic interactions with template-forced outcomes.

Every scenario pairs a subject vehicle A, driving straight along +x towards a
conflict point at the origin, with a second road user B that reaches the same
point at the nominal conflict time ``t_c`` on a constant-turn-rate path.

* ``crash``: both keep their speeds; the first footprint contact is found
  numerically to 1e-9 s and the trajectories end there. Frames are phased so
  the last one falls exactly at impact.
* ``resolved``: A brakes in time to stop short of B's swept path, so B passes.
* ``benign``: B clears the conflict point well before A arrives.

Seeded randomness touches nuisance parameters only (speeds, small offsets,
heading noise, start times), never the outcome.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .data import CrashCase, Track, write_tracks
from .geometry import obb_overlap
from .motion import CTRV, RoadUserState, extrapolate_many

TEMPLATES = ("head_on", "crossing", "merging", "pedestrian", "parallel")
OUTCOMES = ("crash", "resolved", "benign")

_CAR = (4.5, 1.8)
_PED = (0.6, 0.6)


@dataclass(frozen=True)
class ScenarioSpec:
    template: str = "crossing"
    outcome: str = "crash"
    seed: int = 0
    speed_a: float = 10.0
    speed_b: float = 10.0
    angle: float = math.pi / 2       # heading of B at the conflict point
    yaw_rate_b: float = 0.0
    lateral_offset: float = 0.0      # shift of B's path along A's heading at the conflict point
    t_conflict: float = 5.0          # nominal time both centres reach the conflict point
    duration: float = 8.0            # total length of non-crash scenarios
    rate_hz: float = 10.0
    t0: float = 0.0                  # absolute start time
    brake: float = 0.0               # resolved: A's deceleration (0 = chosen automatically)
    gap: Optional[float] = None      # head-on: initial footprint gap along the road
    size_b: tuple = _CAR

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.template == "parallel" and self.outcome != "benign":
            raise ValueError("the parallel template is benign only")
        if self.template == "head_on" and self.outcome == "resolved":
            raise ValueError("braking by A cannot resolve a head-on approach; use crash or benign")
        if not (self.rate_hz > 0 and self.t_conflict > 0 and self.duration > 0):
            raise ValueError("rate, conflict time and duration must be positive")


def random_spec(template: str, outcome: str, seed: int, rate_hz: float = 10.0, t0: float = 0.0) -> ScenarioSpec:
    """A spec with seeded nuisance parameters for one template and outcome."""
    rng = np.random.default_rng(seed)
    kw = dict(template=template, outcome=outcome, seed=seed, rate_hz=rate_hz, t0=t0,
              speed_a=float(rng.uniform(8.0, 15.0)), t_conflict=float(rng.uniform(4.5, 6.0)),
              duration=float(rng.uniform(8.0, 10.0)))
    noise = float(rng.normal(0.0, 0.03))
    if template == "head_on":
        off = rng.uniform(-0.4, 0.4) if outcome == "crash" else rng.uniform(3.3, 4.0) * rng.choice([-1, 1])
        kw.update(speed_b=float(rng.uniform(6.0, 12.0)), angle=math.pi + noise * 0.1, lateral_offset=float(off))
    elif template == "crossing":
        kw.update(speed_b=float(rng.uniform(6.0, 14.0)), angle=math.pi / 2 * float(rng.choice([-1, 1])) + noise,
                  yaw_rate_b=float(rng.uniform(-0.05, 0.05)), lateral_offset=float(rng.uniform(-1.0, 1.0)))
    elif template == "merging":
        kw.update(speed_b=float(rng.uniform(7.0, 13.0)), angle=float(rng.choice([-1, 1])) * float(rng.uniform(0.3, 0.6)),
                  yaw_rate_b=float(rng.uniform(-0.04, 0.04)), lateral_offset=float(rng.uniform(-0.5, 0.5)))
    elif template == "pedestrian":
        kw.update(speed_a=float(rng.uniform(6.0, 11.0)), speed_b=float(rng.uniform(1.0, 1.8)),
                  angle=math.pi / 2 * float(rng.choice([-1, 1])) + noise, lateral_offset=float(rng.uniform(-1.0, 1.0)),
                  size_b=_PED)
    else:
        kw.update(speed_b=float(rng.uniform(8.0, 15.0)), angle=noise * 0.1,
                  lateral_offset=float(rng.uniform(3.3, 4.0)) * float(rng.choice([-1, 1])))
    return ScenarioSpec(**kw)


def _state(x, y, v, h, w, size, cls, t) -> RoadUserState:
    return RoadUserState((float(x), float(y)), float(v), float(h), float(w), size[0], size[1], cls, float(t))


class _Paths:
    """Exact poses of both users as functions of scenario time ``s``."""

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        tc = spec.t_conflict
        self.va = spec.speed_a
        self.brake_t = math.inf
        self.brake_d = 0.0
        if spec.template == "head_on":
            # B starts straight ahead of A; ``gap`` fixes the initial footprint gap
            gap = spec.gap if spec.gap is not None else (spec.speed_a + spec.speed_b) * tc - _CAR[0]
            self.xa0 = 0.0
            xb0 = 0.5 * _CAR[0] + gap + 0.5 * spec.size_b[0]
            self.b0 = _state(xb0, spec.lateral_offset, spec.speed_b, spec.angle, 0.0, spec.size_b, "car", 0.0)
            self.tc = gap / max(spec.speed_a + spec.speed_b, 1e-9)
        elif spec.template == "parallel":
            self.xa0 = -spec.speed_a * tc
            self.b0 = _state(-spec.speed_b * tc, spec.lateral_offset, spec.speed_b, spec.angle, 0.0,
                             spec.size_b, "car", 0.0)
            self.tc = tc
        else:
            self.xa0 = -spec.speed_a * tc
            t_b = tc
            if spec.outcome == "benign":
                # B crosses well before A gets there
                t_b = tc - max(2.5, 4.0 * (sum(spec.size_b) + _CAR[0]) / max(spec.speed_b, 0.5))
            at_c = RoadUserState((spec.lateral_offset, 0.0), spec.speed_b, spec.angle, spec.yaw_rate_b,
                                 spec.size_b[0], spec.size_b[1])
            pos, hd = extrapolate_many(at_c, CTRV, np.array([-t_b]))
            cls = "pedestrian" if spec.template == "pedestrian" else "car"
            self.b0 = _state(pos[0, 0], pos[0, 1], spec.speed_b, hd[0], spec.yaw_rate_b, spec.size_b, cls, 0.0)
            self.tc = tc

    def a(self, s: float) -> RoadUserState:
        v0 = self.va
        if s <= self.brake_t:
            x, v = self.xa0 + v0 * s, v0
        else:
            tb, d = self.brake_t, self.brake_d
            t_stop = v0 / d
            u = min(s - tb, t_stop)
            x = self.xa0 + v0 * tb + v0 * u - 0.5 * d * u * u
            v = v0 - d * u
        return _state(x, 0.0, max(v, 0.0), 0.0, 0.0, _CAR, "car", s)

    def b(self, s: float) -> RoadUserState:
        pos, hd = extrapolate_many(self.b0, CTRV, np.array([s]))
        return self.b0.replace(position=(float(pos[0, 0]), float(pos[0, 1])), heading=float(hd[0]), timestamp=s)

    def overlap(self, s: float) -> bool:
        return obb_overlap(self.a(s).footprint(), self.b(s).footprint(), tol=0.0)


def _first_contact(p: _Paths, t_max: float, step: float = 1e-2) -> Optional[float]:
    s = np.arange(0.0, t_max + step, step)
    prev = 0.0
    for si in s:
        if p.overlap(float(si)):
            lo, hi = prev, float(si)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if p.overlap(mid):
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = float(si)
    return None


def _x_clear(p: _Paths) -> float:
    """Largest x of A's centre that keeps A clear of B over the whole scenario."""
    spec = p.spec
    s = np.arange(0.0, spec.duration + 1e-9, 0.01)
    lo = math.inf
    for si in s:
        b = p.b(float(si))
        c = b.footprint()
        # B's footprint projected onto A's lane axis, only where it reaches the lane
        ax = c.axes
        hx = 0.5 * b.length * abs(ax[0, 0]) + 0.5 * b.width * abs(ax[1, 0])
        hy = 0.5 * b.length * abs(ax[0, 1]) + 0.5 * b.width * abs(ax[1, 1])
        if abs(c.center[1]) <= hy + 0.5 * _CAR[1]:
            lo = min(lo, c.center[0] - hx)
    return lo - 0.5 * _CAR[0]


def _plan(spec: ScenarioSpec) -> _Paths:
    p = _Paths(spec)
    if spec.outcome == "resolved":
        # stop A at least 2 m short of the strip B sweeps through A's lane
        x_stop = _x_clear(p) - 2.0
        room = x_stop - p.xa0
        v = spec.speed_a
        d = spec.brake or 4.0
        tb = (room - v * v / (2 * d)) / v
        if tb < 0.5:
            tb = 0.5
            d = v * v / (2 * (room - v * tb))
        p.brake_t, p.brake_d = tb, d
    return p


@dataclass
class Scenario:
    spec: ScenarioSpec
    track_a: Track
    track_b: Track
    impact_time: Optional[float]     # absolute time of first contact for crashes


def generate(spec: ScenarioSpec, prefix: str = "") -> Scenario:
    """Tracks of both users at ``spec.rate_hz`` (and the impact time for crashes)."""
    p = _plan(spec)
    impact = None
    end = spec.duration
    if spec.outcome == "crash":
        impact = _first_contact(p, p.tc + 2.0)
        if impact is None:
            raise RuntimeError(f"crash template produced no contact: {spec}")
        end = impact
    n = int(math.floor(end * spec.rate_hz + 1e-9))
    # crashes are phased so the last frame sits exactly at impact
    phase = end - n / spec.rate_hz if impact is not None else 0.0
    stamps = np.arange(n + 1) / spec.rate_hz
    fa, fb = [], []
    for k, ts in enumerate(stamps):
        si = phase + float(ts) if k < n else end
        a, b = p.a(si), p.b(si)
        fa.append(a.replace(timestamp=spec.t0 + float(ts)))
        fb.append(b.replace(timestamp=spec.t0 + float(ts)))
    if spec.outcome != "crash" and any(p.overlap(float(si)) for si in np.arange(0.0, end, 0.01)):
        raise RuntimeError(f"non-crash template produced contact: {spec}")
    pid = prefix or f"{spec.template}-{spec.outcome}-{spec.seed}"
    ta = Track(f"{pid}-a", "car", fa)
    tb = Track(f"{pid}-b", fb[0].class_label, fb)
    return Scenario(spec, ta, tb, None if impact is None else spec.t0 + n / spec.rate_hz)


@dataclass(frozen=True)
class CorpusSpec:
    n_crash: int = 40
    n_noncrash: int = 120
    seed: int = 0
    rate_hz: float = 10.0
    spacing: float = 20.0           # s between scenario start times, so scenarios never co-occur


def generate_corpus(cs: CorpusSpec = CorpusSpec()):
    """Noncrash tracks (one shared time base) and crash cases, fully determined by ``cs``."""
    rng = np.random.default_rng(cs.seed)
    crash_templates = ("head_on", "crossing", "merging", "pedestrian")
    crashes = []
    for k in range(cs.n_crash):
        tpl = crash_templates[k % len(crash_templates)]
        spec = random_spec(tpl, "crash", int(rng.integers(2**31)), cs.rate_hz)
        sc = generate(spec, prefix=f"crash{k:04d}")
        crashes.append(CrashCase(f"crash{k:04d}", sc.track_a, sc.track_b, sc.impact_time))
    tracks = []
    kinds = [(t, "resolved") for t in crash_templates[1:]] + [(t, "benign") for t in crash_templates] + \
        [("parallel", "benign")]
    for k in range(cs.n_noncrash):
        tpl, outcome = kinds[k % len(kinds)]
        spec = random_spec(tpl, outcome, int(rng.integers(2**31)), cs.rate_hz, t0=k * cs.spacing)
        sc = generate(spec, prefix=f"s{k:04d}")
        tracks += [sc.track_a, sc.track_b]
    return tracks, crashes


def write_corpus(tracks_path, crashes_path, tracks, crashes) -> None:
    write_tracks(tracks_path, tracks)
    ct = []
    case_of, impact_of = {}, {}
    for c in crashes:
        for tr in (c.track_a, c.track_b):
            ct.append(tr)
            case_of[tr.track_id] = c.case_id
            impact_of[tr.track_id] = c.impact_time
    write_tracks(crashes_path, ct, case_of, impact_of)


def frame_suite(n: int = 1000, seed: int = 0, rate_hz: float = 10.0) -> list:
    """``n`` state pairs drawn uniformly from frames of mixed synthetic scenarios."""
    rng = np.random.default_rng(seed)
    kinds = [(t, o) for t in TEMPLATES[:4] for o in OUTCOMES if (t, o) != ("head_on", "resolved")]
    kinds.append(("parallel", "benign"))
    pool = []
    for k, (tpl, outcome) in enumerate(kinds * 3):
        sc = generate(random_spec(tpl, outcome, seed * 1000 + k, rate_hz))
        for fa, fb in zip(sc.track_a.frames, sc.track_b.frames):
            if not obb_overlap(fa.footprint(), fb.footprint()):
                pool.append((fa, fb))
    idx = rng.choice(len(pool), size=n, replace=len(pool) < n)
    return [pool[i] for i in sorted(idx)]


_SIZES = ((4.5, 1.8), (4.8, 1.9), (12.0, 2.5), (0.6, 0.6), (1.8, 0.7))


def random_conflict(rng: np.random.Generator, turning: bool = False, horizon: float = 7.0):
    """A random converging pair with positive constant-velocity EA, in a random world pose.

    B is aimed at a point on A's path that A reaches after 0.5 to 5 s, with a
    normally distributed miss; ``turning`` adds small yaw rates to both.
    """
    from .ea_cv import ea_cv_value  # local: the solver is only needed for rejection

    while True:
        la, wa = _SIZES[rng.integers(0, 3)]
        lb, wb = _SIZES[rng.integers(0, 5)]
        va, vb = rng.uniform(2.0, 20.0), rng.uniform(0.0, 15.0)
        hb = rng.uniform(-math.pi, math.pi)
        tc = rng.uniform(0.5, 5.0)
        pb = np.array([va * tc, 0.0]) - vb * tc * np.array([math.cos(hb), math.sin(hb)]) + rng.normal(0.0, 2.0, 2)
        rot = rng.uniform(-math.pi, math.pi)
        shift = rng.uniform(-100.0, 100.0, 2)
        c, s = math.cos(rot), math.sin(rot)
        pa_w = shift
        pb_w = shift + np.array([c * pb[0] - s * pb[1], s * pb[0] + c * pb[1]])
        wa_ = rng.normal(0.0, 0.2) if turning else 0.0
        wb_ = rng.normal(0.0, 0.2) if turning else 0.0
        a = RoadUserState(tuple(pa_w), va, rot, wa_, la, wa)
        b = RoadUserState(tuple(pb_w), vb, hb + rot, wb_, lb, wb)
        r = ea_cv_value(a, b, horizon)
        if not r.already_colliding and r.ea > 0:
            return a, b
