"""Baseline surrogate safety metrics and their common risk orientation.

Every metric takes two :class:`RoadUserState` snapshots. Time metrics are in
seconds, deceleration metrics in m/s^2, MEI in m/s, BBOX_DIST in metres.
:func:`risk_orient` maps each raw value onto a score where larger means
riskier, so one threshold rule ``risk >= theta`` serves all of them.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .ea_core import EaConfig, _parabola_hits_polygon, ea
from .geometry import closest_points, minkowski_collision_set, obb_distance, obb_overlap, segment_polygon_entry
from .motion import RoadUserState


class MetricId(str, enum.Enum):
    EA = "EA"
    TTC = "TTC"
    DRAC = "DRAC"
    TTC2D = "TTC2D"
    ACT = "ACT"
    DRAC2D = "DRAC2D"
    MEI = "MEI"
    BBOX_DIST = "BBOX_DIST"


METRIC_IDS = tuple(MetricId)
TIME_METRICS = frozenset({MetricId.TTC, MetricId.TTC2D, MetricId.ACT})
ACCEL_METRICS = frozenset({MetricId.EA, MetricId.DRAC, MetricId.DRAC2D, MetricId.MEI})


@dataclass(frozen=True)
class MetricParams:
    horizon: float = 7.0
    drac2d_max: float = 100.0   # search bound; beyond it braking alone cannot avoid the conflict
    drac2d_tol: float = 1e-6
    drac2d_coarse: float = 0.5
    risk_cap: float = 100.0     # oriented score given to unbounded acceleration-type values

    def __post_init__(self):
        if not (self.horizon > 0 and self.drac2d_max > 0 and self.drac2d_tol > 0
                and self.drac2d_coarse > 0 and self.risk_cap > 0):
            raise ValueError("metric parameters must be positive")


@dataclass(frozen=True)
class RiskSample:
    raw: float
    risk: float
    defined: bool = True


class TtcDrac(NamedTuple):
    ttc: float
    drac: float


def _gap_normal(a: RoadUserState, b: RoadUserState):
    """Footprint gap, unit normal from B's nearest point to A's, and both nearest points."""
    fa, fb = a.footprint(), b.footprint()
    if obb_overlap(fa, fb):
        return 0.0, None, None, None
    pa, pb, g = closest_points(fa, fb)
    return g, (pa - pb) / g, pa, pb


def bbox_distance(a: RoadUserState, b: RoadUserState) -> float:
    return obb_distance(a.footprint(), b.footprint())


def ttc_drac(a: RoadUserState, b: RoadUserState) -> TtcDrac:
    """Footprint gap over its CV closing rate, and the deceleration that closes it exactly."""
    g, n, _, _ = _gap_normal(a, b)
    if g == 0.0:
        return TtcDrac(0.0, math.inf)
    c = -float(n @ (a.velocity - b.velocity))
    if c <= 0:
        return TtcDrac(math.inf, 0.0)
    return TtcDrac(g / c, c * c / (2.0 * g))


def _point_velocity(state: RoadUserState, p) -> np.ndarray:
    d = np.asarray(p) - np.asarray(state.position)
    return state.velocity + state.yaw_rate * np.array([-d[1], d[0]])


def act(a: RoadUserState, b: RoadUserState) -> float:
    """Gap over the closing rate of the nearest points, rotation included."""
    g, n, pa, pb = _gap_normal(a, b)
    if g == 0.0:
        return 0.0
    c = -float(n @ (_point_velocity(a, pa) - _point_velocity(b, pb)))
    return g / c if c > 0 else math.inf


def ttc2d(a: RoadUserState, b: RoadUserState, horizon: float = 7.0) -> float:
    """First time in [0, horizon] the CV-extrapolated footprints touch; inf if never.

    Under CV both headings are fixed, so the relative centre moves on a ray
    against a fixed collision polygon and the entry time is exact.
    """
    c = minkowski_collision_set(a.footprint(), b.footprint())
    r0 = np.asarray(a.position) - np.asarray(b.position)
    v = a.velocity - b.velocity
    t = segment_polygon_entry(r0, r0 + v * horizon, c, tol=0.0)
    return math.inf if t is None else t * horizon


class _BrakeCollider:
    """Exact overlap test for A braking along its heading (stopping, not reversing), B on CV."""

    def __init__(self, a: RoadUserState, b: RoadUserState, horizon: float):
        c = minkowski_collision_set(a.footprint(), b.footprint())
        self.normals, self.offsets = c.halfplanes()
        self.verts = c.vertices
        self.poly = c
        self.r0 = np.asarray(a.position) - np.asarray(b.position)
        self.v = a.velocity - b.velocity
        self.vb = b.velocity
        self.speed = a.speed
        self.heading = np.array([math.cos(a.heading), math.sin(a.heading)])
        self.horizon = horizon

    def collides(self, d) -> np.ndarray:
        """Overlap flags for an array of deceleration levels ``d``."""
        d = np.atleast_1d(np.asarray(d, float))
        T = self.horizon
        with np.errstate(divide="ignore", invalid="ignore"):
            t_stop = np.where(d > 0, self.speed / d, math.inf)
        t1 = np.minimum(T, t_stop)
        acc = -d[:, None] * self.heading[None]
        hit = _parabola_hits_polygon(self.r0, self.v, acc, self.normals, self.offsets, self.verts, t1)
        for i in np.flatnonzero(~hit & (t_stop < T)):
            ts = t_stop[i]
            p1 = self.r0 + self.v * ts - 0.5 * d[i] * self.heading * ts ** 2
            hit[i] = segment_polygon_entry(p1, p1 - self.vb * (T - ts), self.poly) is not None
        return hit


def drac2d(a: RoadUserState, b: RoadUserState, horizon: float = 7.0,
           p: MetricParams = MetricParams()) -> float:
    """Smallest constant deceleration of A along its own heading that avoids overlap.

    0 when no overlap is predicted, inf when none up to ``p.drac2d_max`` works
    or the boxes already overlap. A coarse scan brackets the first feasible
    level, repeated multisection narrows it to ``p.drac2d_tol``.
    """
    if obb_overlap(a.footprint(), b.footprint()):
        return math.inf
    col = _BrakeCollider(a, b, horizon)
    if not col.collides(0.0)[0]:
        return 0.0
    if a.speed == 0.0:
        return math.inf
    levels = np.arange(p.drac2d_coarse, p.drac2d_max + p.drac2d_coarse / 2, p.drac2d_coarse)
    free = np.flatnonzero(~col.collides(levels))
    if len(free) == 0:
        return math.inf
    hi = float(levels[free[0]])
    lo = float(levels[free[0] - 1]) if free[0] > 0 else 0.0
    while hi - lo > p.drac2d_tol:
        mids = np.linspace(lo, hi, 34)[1:-1]
        c = col.collides(mids)
        k = int(np.argmin(c)) if not c.all() else len(mids)
        hi = float(mids[k]) if k < len(mids) else hi
        lo = float(mids[k - 1]) if k > 0 else lo
    return hi


def mei(a: RoadUserState, b: RoadUserState, horizon: float = 7.0) -> float:
    """Modified emergency index in m/s: interaction depth over time to minimum distance.

    In the relative frame A moves along ``v_rel``. The interaction depth is
    how far the lateral offset of that line falls inside the footprints'
    combined half-width across ``v_rel``; the index is that depth divided by
    the time until the centres are closest. Zero when the line misses, the
    pair is separating, or closest approach lies beyond ``horizon``.
    """
    r = np.asarray(a.position) - np.asarray(b.position)
    v = a.velocity - b.velocity
    speed = float(np.hypot(*v))
    if speed < 1e-9:
        return 0.0
    e = v / speed
    n = np.array([-e[1], e[0]])
    tdm = -float(r @ e) / speed
    if tdm < 0 or tdm > horizon:
        return 0.0
    lateral = abs(float(r @ n))
    safe = 0.0
    for s in (a, b):
        ax = s.footprint().axes
        safe += 0.5 * s.length * abs(float(n @ ax[0])) + 0.5 * s.width * abs(float(n @ ax[1]))
    depth = safe - lateral
    if depth <= 0:
        return 0.0
    return math.inf if tdm == 0 else depth / tdm


def risk_orient(metric, raw: float, cap: float = 100.0) -> float:
    """Oriented risk score: identity for accelerations, 1/raw for times, -raw for distance.

    Infinite times give 0. Infinite acceleration-type values (contact, or no
    feasible braking within the search bound) give ``cap``.
    """
    m = MetricId(metric)
    if math.isnan(raw):
        raise ValueError(f"undefined {m.value} value")
    if m in TIME_METRICS:
        if raw < 0:
            raise ValueError("time metrics are nonnegative")
        return 0.0 if math.isinf(raw) else (math.inf if raw == 0 else 1.0 / raw)
    if m == MetricId.BBOX_DIST:
        return -raw
    return cap if math.isinf(raw) else raw


def _sample(metric, raw, cap) -> RiskSample:
    if raw is None or math.isnan(raw):
        return RiskSample(math.nan, math.nan, False)
    risk = risk_orient(metric, raw, cap)
    return RiskSample(raw, risk, math.isfinite(risk))


@dataclass
class FrameMetrics:
    samples: dict
    ea_per_model: dict
    already_colliding: bool
    any_undefined: bool
    elapsed: float


def compute_metrics(a: RoadUserState, b: RoadUserState, metrics=METRIC_IDS,
                    p: MetricParams = MetricParams(), ea_config: Optional[EaConfig] = None) -> FrameMetrics:
    """All requested metrics for one frame, raw and oriented."""
    ids = [MetricId(m) for m in metrics]
    cfg = ea_config or EaConfig(horizon=p.horizon)
    out: dict = {}
    per_model: dict = {}
    colliding = obb_overlap(a.footprint(), b.footprint())
    undefined = False
    elapsed = 0.0
    td = None
    for m in ids:
        if m == MetricId.EA:
            r = ea(a, b, cfg)
            per_model, colliding, undefined, elapsed = r.per_model, r.already_colliding, r.any_undefined, r.elapsed
            raw = r.mean
            if not colliding and math.isnan(raw):
                raw = math.inf  # every combination above the bound
        elif m in (MetricId.TTC, MetricId.DRAC):
            td = td or ttc_drac(a, b)
            raw = td.ttc if m == MetricId.TTC else td.drac
        elif m == MetricId.TTC2D:
            raw = ttc2d(a, b, p.horizon)
        elif m == MetricId.ACT:
            raw = act(a, b)
        elif m == MetricId.DRAC2D:
            raw = drac2d(a, b, p.horizon, p)
        elif m == MetricId.MEI:
            raw = mei(a, b, p.horizon)
        else:
            raw = bbox_distance(a, b)
        out[m] = _sample(m, raw, p.risk_cap)
    return FrameMetrics(out, per_model, colliding, undefined, elapsed)
