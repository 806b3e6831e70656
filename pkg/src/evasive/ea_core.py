"""Four-model evasive acceleration, a brute-force oracle, and timing."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ea_ctrv import AlreadyColliding, NumericEaParams, Scene, ea_numeric
from .ea_cv import ea_cv_value
from .geometry import minkowski_collision_set
from .motion import CTRV, CV, MotionModel, RoadUserState, extrapolate_many, time_grid

MODEL_SET = ((CV, CV), (CV, CTRV), (CTRV, CV), (CTRV, CTRV))


def model_key(model_a, model_b) -> str:
    return f"{MotionModel(model_a).value}-{MotionModel(model_b).value}"


@dataclass(frozen=True)
class EaConfig:
    horizon: float = 7.0
    stations: int = 64
    clearance: float = 0.0
    prune: bool = True
    numeric: NumericEaParams = field(default_factory=NumericEaParams)


@dataclass
class EaResult:
    per_model: dict
    mean: float
    already_colliding: bool = False
    any_undefined: bool = False
    elapsed: float = 0.0
    vectors: dict = field(default_factory=dict)


def ea(a: RoadUserState, b: RoadUserState, config: EaConfig = EaConfig()) -> EaResult:
    """EA averaged over the four CV/CTRV motion combinations.

    Undefined components (acceleration bound exhausted) are left out of the
    mean and flagged; an overlapping pair yields NaN with ``already_colliding``.
    """
    t0 = time.perf_counter()
    per_model: dict = {}
    vectors: dict = {}
    cv = ea_cv_value(a, b, config.horizon, config.stations, config.clearance, config.prune)
    if cv.already_colliding:
        nan = {model_key(*m): math.nan for m in MODEL_SET}
        return EaResult(nan, math.nan, True, False, time.perf_counter() - t0)
    per_model[model_key(CV, CV)] = cv.ea
    vectors[model_key(CV, CV)] = cv.vector
    for ma, mb in MODEL_SET[1:]:
        try:
            r = ea_numeric(a, b, ma, mb, config.horizon, config.numeric)
        except AlreadyColliding:  # touching within the numeric tolerance
            nan = {model_key(*m): math.nan for m in MODEL_SET}
            return EaResult(nan, math.nan, True, False, time.perf_counter() - t0)
        per_model[model_key(ma, mb)] = r.ea
        vectors[model_key(ma, mb)] = r.vector
    vals = [v for v in per_model.values() if v is not None]
    mean = float(np.mean(vals)) if vals else math.nan
    return EaResult(per_model, mean, False, len(vals) < len(per_model),
                    time.perf_counter() - t0, vectors)


@dataclass(frozen=True)
class BruteForceGrid:
    n_dirs: int = 720
    dm: float = 0.002
    dt: float = 0.005
    a_max: float = 100.0
    coarse_dm: float = 0.05
    refine_span: float = math.radians(1.0)
    refine_dirs: int = 201


def _parabola_hits_polygon(r0, v, acc, normals, offsets, verts, horizon):
    """Exact test of ``r0 + v s + acc s^2 / 2`` (s in [0, horizon]) against a convex polygon.

    ``acc`` is (M, 2) and ``horizon`` a scalar or (M,); returns (M,) bool.
    Collision iff the start is inside or the curve meets an edge segment.
    """
    inside0 = bool(np.all(normals @ r0 <= offsets + 1e-12))
    if inside0:
        return np.ones(len(acc), bool)
    edge = np.roll(verts, -1, axis=0) - verts
    tang = edge / np.linalg.norm(edge, axis=1, keepdims=True)
    hits = np.zeros(len(acc), bool)
    for k in range(len(offsets)):
        n = normals[k]
        qa = 0.5 * (acc @ n)
        qb = np.float64(n @ v)
        qc = np.float64(n @ r0 - offsets[k])
        with np.errstate(divide="ignore", invalid="ignore"):
            disc = qb * qb - 4.0 * qa * qc
            sq = np.sqrt(np.maximum(disc, 0.0))
            lin = np.abs(qa) < 1e-14
            roots = [np.where(lin, -qc / qb, (-qb + sq) / (2 * qa)),
                     np.where(lin, np.nan, (-qb - sq) / (2 * qa))]
        ok_disc = lin | (disc >= 0)
        t_lo = float(tang[k] @ verts[k])
        t_hi = float(tang[k] @ (verts[k] + edge[k]))
        for s in roots:
            valid = ok_disc & np.isfinite(s) & (s >= 0) & (s <= horizon)
            s_ = np.where(valid, s, 0.0)
            pts = r0 + v * s_[:, None] + 0.5 * acc * (s_ * s_)[:, None]
            t = pts @ tang[k]
            hits |= valid & (t >= t_lo - 1e-12) & (t <= t_hi + 1e-12)
    return hits


class _Collider:
    """Collision predicate for batches of candidate accelerations applied to user A."""

    def __init__(self, a, b, model_a, model_b, horizon, dt, sampled=False):
        self.exact = not sampled and MotionModel(model_a) == CV and MotionModel(model_b) == CV
        self.horizon = horizon
        if self.exact:
            c = minkowski_collision_set(a.footprint(), b.footprint())
            self.normals, self.offsets = c.halfplanes()
            self.verts = c.vertices
            self.r0 = np.asarray(a.position) - np.asarray(b.position)
            self.v = a.velocity - b.velocity
        else:
            s = time_grid(horizon, dt)
            pa, ha = extrapolate_many(a, MotionModel(model_a), s)
            pb, hb = extrapolate_many(b, MotionModel(model_b), s)
            self.s = s
            self.rel = pa - pb
            ca, sa, cb, sb = np.cos(ha), np.sin(ha), np.cos(hb), np.sin(hb)
            self.axes = np.stack([np.stack([ca, sa], -1), np.stack([-sa, ca], -1),
                                  np.stack([cb, sb], -1), np.stack([-sb, cb], -1)], 1)
            ax = self.axes
            self.rad = (0.5 * a.length * np.abs(np.einsum("nkj,nj->nk", ax, ax[:, 0]))
                        + 0.5 * a.width * np.abs(np.einsum("nkj,nj->nk", ax, ax[:, 1]))
                        + 0.5 * b.length * np.abs(np.einsum("nkj,nj->nk", ax, ax[:, 2]))
                        + 0.5 * b.width * np.abs(np.einsum("nkj,nj->nk", ax, ax[:, 3])))

    def collides(self, acc: np.ndarray) -> np.ndarray:
        if self.exact:
            return _parabola_hits_polygon(self.r0, self.v, acc, self.normals, self.offsets,
                                          self.verts, self.horizon)
        out = np.zeros(len(acc), bool)
        for i0 in range(0, len(acc), 256):
            blk = acc[i0:i0 + 256]
            pos = self.rel[None] + 0.5 * blk[:, None, :] * (self.s * self.s)[None, :, None]
            d = np.abs(np.einsum("mnj,nkj->mnk", pos, self.axes))
            out[i0:i0 + 256] = np.any(np.all(d <= self.rad[None] + 1e-9, axis=2), axis=1)
        return out


def ea_bruteforce(a: RoadUserState, b: RoadUserState, model_a=CV, model_b=CV,
                  horizon: float = 7.0, grid: BruteForceGrid = BruteForceGrid()) -> float:
    """Grid search over (direction, magnitude) for the smallest collision-free acceleration.

    Deliberately naive: nothing is shared with the analytic or interval
    solvers beyond the footprint geometry. CV-CV is checked exactly in
    continuous time; other combinations on a time grid of step ``grid.dt``.
    Returns ``inf`` when nothing up to ``grid.a_max`` is collision-free.
    """
    col = _Collider(a, b, model_a, model_b, horizon, grid.dt)
    if not col.collides(np.zeros((1, 2)))[0]:
        return 0.0
    phis = np.linspace(0.0, 2 * math.pi, grid.n_dirs, endpoint=False)
    u = np.stack([np.cos(phis), np.sin(phis)], -1)

    def free_at(dirs, mags):
        acc = (mags[:, None, None] * dirs[None, :, :]).reshape(-1, 2)
        return ~col.collides(acc).reshape(len(mags), len(dirs))

    # coarse march: first magnitude at which any grid direction is free
    m_c = None
    mags = np.arange(grid.coarse_dm, grid.a_max + grid.coarse_dm, grid.coarse_dm)
    for i0 in range(0, len(mags), 16):
        chunk = mags[i0:i0 + 16]
        f = free_at(u, chunk)
        rows = np.flatnonzero(f.any(axis=1))
        if len(rows):
            m_c = float(chunk[rows[0]])
            break
    if m_c is None:
        return math.inf
    # fine magnitudes below the coarse hit
    fine = np.arange(max(m_c - grid.coarse_dm, 0.0), m_c + grid.dm / 2, grid.dm)
    f = free_at(u, fine)
    r, c = np.argwhere(f)[0]
    best_m, best_phi = float(fine[r]), float(phis[c])
    # local angular refinement
    ph = best_phi + np.linspace(-grid.refine_span, grid.refine_span, grid.refine_dirs)
    du = np.stack([np.cos(ph), np.sin(ph)], -1)
    lo = max(best_m * 0.97 - grid.coarse_dm, 0.0)
    fine = np.arange(lo, best_m + grid.dm / 2, grid.dm)
    f = free_at(du, fine)
    rows = np.flatnonzero(f.any(axis=1))
    if len(rows):
        best_m = min(best_m, float(fine[rows[0]]))
    return best_m


def benchmark(frames: Sequence[tuple], config: EaConfig = EaConfig()) -> dict:
    """Wall-clock statistics (ms) of the four-model EA per frame."""
    times = []
    for a, b in frames:
        t0 = time.perf_counter()
        ea(a, b, config)
        times.append((time.perf_counter() - t0) * 1e3)
    t = np.asarray(times)
    return {"n": len(t), "mean_ms": float(t.mean()), "p95_ms": float(np.percentile(t, 95)),
            "max_ms": float(t.max())}
