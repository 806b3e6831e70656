"""Numerical evasive acceleration for motion combinations involving CTRV.

The relative acceleration is restricted to rays ``m * u(phi)``. Applying it
shifts user A's predicted centre by ``m s^2 / 2`` along ``u(phi)`` while both
headings follow their own motion model. For each direction the colliding
magnitudes form a union of closed intervals; the directional minimum is the
upper end of the connected part containing ``m = 0``.

Two interval generators are available. ``sampled`` evaluates the
separating-axis conditions at the grid times only. ``swept`` (default) also
covers the time between samples: within each step the relative path is
replaced by its chord and the collision set frozen at the mid-step headings,
which is exact for straight-line motion (see :mod:`evasive.sweep`). The
winning direction is finally re-checked on a denser grid of exact poses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import TOL, axis_intervals
from .motion import CV, YAW_EPS, MotionModel, RoadUserState, extrapolate_many, time_grid
from . import _kernels
from .sweep import PARALLEL_EPS, StepGeometry, box_sum_vertices

NUDGE = 1e-9
VERIFY_TOL = 1e-9
LOWER_BOUND_STEPS = 6
BATCH = 6
POLISH_MARGIN = 0.01
POLISH_EVALS = 14
POLISH_NUDGE = 1e-6


class AlreadyColliding(Exception):
    """The two footprints overlap at the evaluation instant."""


@dataclass(frozen=True)
class NumericEaParams:
    dt: float = 0.05
    a_max: float = 100.0
    coarse_step: float = math.radians(5.0)
    refine_levels: tuple = ((math.radians(5.0), math.radians(0.5)),
                            (math.radians(0.5), math.radians(0.05)))
    sweep: bool = True
    verify_substeps: int = 20

    def __post_init__(self):
        if not (self.dt > 0 and self.a_max > 0 and self.coarse_step > 0):
            raise ValueError("dt, a_max and coarse_step must be positive")
        steps = [self.coarse_step] + [st for _, st in self.refine_levels]
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise ValueError("refinement steps must decrease")
        if self.verify_substeps < 0:
            raise ValueError("verify_substeps must be >= 0")


@dataclass
class DirectionalScan:
    phi: float
    magnitude: Optional[float]
    collision_union: list = field(default_factory=list)


def _box_axes(headings):
    c, s = np.cos(headings), np.sin(headings)
    return np.stack([c, s], -1), np.stack([-s, c], -1)


class _Poses:
    """Exact poses on a time grid with per-sample SAT axes, centre gaps and radii."""

    def __init__(self, a, b, model_a, model_b, s):
        pa, ha = extrapolate_many(a, model_a, s)
        pb, hb = extrapolate_many(b, model_b, s)
        ua, va = _box_axes(ha)
        ub, vb = _box_axes(hb)
        n = np.stack([ua, va, ub, vb], axis=1)  # (N, 4, 2)
        self.s = s
        self.rel = pa - pb
        self.ha, self.hb = ha, hb
        self.n = n
        self.d = np.einsum("nkj,nj->nk", n, self.rel)
        self.r = (0.5 * a.length * np.abs(np.einsum("nkj,nj->nk", n, ua))
                  + 0.5 * a.width * np.abs(np.einsum("nkj,nj->nk", n, va))
                  + 0.5 * b.length * np.abs(np.einsum("nkj,nj->nk", n, ub))
                  + 0.5 * b.width * np.abs(np.einsum("nkj,nj->nk", n, vb)))

    def translation_intervals(self, u: np.ndarray):
        """Per-sample (D, N) translation intervals ``w`` along unit rows of ``u``."""
        un = np.einsum("nkj,dj->dnk", self.n, u)
        lo, hi = axis_intervals(self.d[None], self.r[None], un)
        lo, hi = lo.max(axis=2), hi.min(axis=2)
        empty = lo > hi
        return np.where(empty, np.inf, lo), np.where(empty, -np.inf, hi)

    def overlaps(self, acc: np.ndarray) -> np.ndarray:
        """Per-sample overlap with user A shifted by ``acc s^2 / 2``."""
        shift = 0.5 * (self.s * self.s)[:, None] * acc[None, :]
        d = np.einsum("nkj,nj->nk", self.n, self.rel + shift)
        return np.all(np.abs(d) <= self.r - VERIFY_TOL, axis=1)


class Scene:
    """One user pair under one motion combination, prepared for directional scans."""

    def __init__(self, a: RoadUserState, b: RoadUserState, model_a, model_b,
                 horizon: float, dt: float, sweep: bool = True, verify_substeps: int = 20):
        self.a, self.b = a, b
        self.model_a, self.model_b = MotionModel(model_a), MotionModel(model_b)
        self.horizon, self.dt = horizon, dt
        self.sweep = sweep
        self.verify_substeps = verify_substeps
        p0a, p0b = np.asarray(a.position), np.asarray(b.position)
        self.colliding_now = self._overlap_at(a, b, p0a, p0b, a.heading, b.heading)
        self._verify: Optional[np.ndarray] = None
        self._grid = time_grid(horizon, dt)
        self._samples: Optional[_Poses] = None
        if sweep:
            self._prepare_steps(self._grid)
            self.baseline_hits = self._baseline_swept()
        else:
            smp = self.samples
            self.baseline_hits = bool(np.all(np.abs(smp.d) <= smp.r + 1e-9, axis=1).any())
            self.hit_steps = np.empty(0, np.int64)

    @property
    def samples(self) -> _Poses:
        """Exact poses at the grid times (the sampled interval generator)."""
        if self._samples is None:
            self._samples = _Poses(self.a, self.b, self.model_a, self.model_b, self._grid[1:])
        return self._samples

    @property
    def scale(self) -> np.ndarray:
        return 2.0 / (self.samples.s ** 2)

    def _turning(self, state, model):
        return model != CV and abs(state.yaw_rate) >= YAW_EPS

    def _prepare_steps(self, s):
        a, b = self.a, self.b
        if not (self._turning(a, self.model_a) or self._turning(b, self.model_b)):
            # straight lines and fixed headings: one exact step over the horizon
            s = np.array([0.0, self.horizon])
        pa, ha = extrapolate_many(a, self.model_a, s)
        pb, hb = extrapolate_many(b, self.model_b, s)
        rel = pa - pb
        h = np.diff(s)
        self.s0, self.s1 = s[:-1], s[1:]
        self.r0 = rel[:-1]
        self.vel = np.diff(rel, axis=0) / h[:, None]
        mha = 0.5 * (ha[:-1] + ha[1:])
        mhb = 0.5 * (hb[:-1] + hb[1:])
        self.verts = box_sum_vertices(mha, mhb, a.length, a.width, b.length, b.width)
        self.geo = StepGeometry(self.verts, self.r0, self.vel, self.s0, self.s1)
        self.all_steps = np.arange(len(self.s0), dtype=np.int64)
        ua, va = _box_axes(mha)
        ub, vb = _box_axes(mhb)
        self._half = [(0.5 * a.length, ua), (0.5 * a.width, va), (0.5 * b.length, ub), (0.5 * b.width, vb)]

    def _support(self, n):
        """Support radius of the frozen collision sets along unit rows ``n`` -> (D, K)."""
        return sum(h * np.abs(n @ ax.T) for h, ax in self._half)

    def _baseline_swept(self) -> bool:
        lo, hi = self._step_hulls(0.0)
        hit = (lo <= 0) & (hi >= 0)
        # steps the unperturbed path crosses; their hulls bound every direction from below
        k = np.flatnonzero(hit)
        if len(k) > LOWER_BOUND_STEPS:
            k = k[np.linspace(0, len(k) - 1, LOWER_BOUND_STEPS).round().astype(int)]
        self.hit_steps = k.astype(np.int64)
        return bool(hit.any())

    def _step_hulls(self, phi: float):
        return _kernels.step_hulls(self.verts, self.r0, self.vel, self.geo.speed, self.s0, self.s1,
                                   math.cos(phi), math.sin(phi), PARALLEL_EPS)

    def uppers(self, phis: np.ndarray) -> np.ndarray:
        """Upper end of the colliding component containing 0, per direction."""
        phis = np.atleast_1d(np.asarray(phis, float))
        if not self.sweep:
            lo, hi = self.intervals(phis)
            return component_upper(lo, hi)
        return _kernels.direction_uppers(self.verts, self.r0, self.vel, self.geo.speed, self.s0,
                                         self.s1, self.all_steps, phis, NUDGE, PARALLEL_EPS, False)

    def lower_bounds(self, phis: np.ndarray) -> np.ndarray:
        """Cheap lower bound of the directional minimum for each direction."""
        phis = np.atleast_1d(np.asarray(phis, float))
        if not self.sweep or len(self.hit_steps) == 0:
            return np.zeros(len(phis))
        return _kernels.direction_uppers(self.verts, self.r0, self.vel, self.geo.speed, self.s0,
                                         self.s1, self.hit_steps, phis, NUDGE, PARALLEL_EPS, True)

    @staticmethod
    def _overlap_at(a, b, pa, pb, ha, hb):
        n = np.vstack(_box_axes(np.array([ha, hb])))  # rows: ua, ub, va, vb
        d = np.abs(n @ (pa - pb))
        ra = 0.5 * a.length * np.abs(n @ n[0]) + 0.5 * a.width * np.abs(n @ n[2])
        rb = 0.5 * b.length * np.abs(n @ n[1]) + 0.5 * b.width * np.abs(n @ n[3])
        return bool(np.all(d <= ra + rb + 1e-9))

    def intervals(self, phis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Colliding magnitude intervals (D, K); empty ones are (inf, -inf)."""
        phis = np.atleast_1d(np.asarray(phis, float))
        u = np.stack([np.cos(phis), np.sin(phis)], -1)
        if not self.sweep:
            lo, hi = self.samples.translation_intervals(u)
            return lo * self.scale, hi * self.scale
        perp = np.stack([-u[:, 1], u[:, 0]], -1)
        eta = perp @ self.r0.T  # (D, K)
        eta1 = eta + (perp @ self.vel.T) * (self.s1 - self.s0)
        tau = u @ self.r0.T
        tau1 = tau + (u @ self.vel.T) * (self.s1 - self.s0)
        rho_p = self._support(perp)
        rho_u = self._support(u)
        rel = ((np.minimum(eta, eta1) <= rho_p) & (np.maximum(eta, eta1) >= -rho_p)
               & (np.minimum(tau, tau1) <= rho_u))
        lo = np.full(rel.shape, np.inf)
        hi = np.full(rel.shape, -np.inf)
        di, ki = np.nonzero(rel)
        if len(di):
            lo[di, ki], hi[di, ki] = self.geo.hull(u[di], ki)
        return lo, hi

    def _params(self, state, model) -> np.ndarray:
        w = state.yaw_rate if self._turning(state, model) else 0.0
        return np.array([*state.position, state.heading, state.speed, w, state.length, state.width])

    def dense_grid(self) -> np.ndarray:
        """Offsets of the final verification pass."""
        if self._verify is None:
            self._verify = time_grid(self.horizon, self.dt / max(self.verify_substeps, 1))[1:]
        return self._verify

    def dense_overlap(self, acc) -> bool:
        return bool(_kernels.dense_overlap(self._params(self.a, self.model_a),
                                           self._params(self.b, self.model_b),
                                           self.dense_grid(), float(acc[0]), float(acc[1]), VERIFY_TOL))

    @property
    def turning(self) -> bool:
        return self._turning(self.a, self.model_a) or self._turning(self.b, self.model_b)

    def dense_min(self, phi: float, cap: float) -> float:
        """Directional minimum from exact poses at the verification offsets.

        Only offsets inside steps whose swept interval reaches below ``cap``
        (and their neighbours) are evaluated; callers confirm the result with
        :meth:`dense_overlap` over the full grid.
        """
        sl, sh = self._step_hulls(phi)
        keep = (sh >= 0) & (sl <= cap)
        keep = np.convolve(keep, np.ones(3), "same") > 0
        g = self.dense_grid()
        k = np.minimum((g / self.dt - 1e-9).astype(np.int64), len(keep) - 1)
        g = g[keep[k]]
        if len(g) == 0:
            return 0.0
        lo, hi = _kernels.dense_intervals(self._params(self.a, self.model_a),
                                          self._params(self.b, self.model_b), g,
                                          math.cos(phi), math.sin(phi), 1e-12, TOL)
        up = float(component_upper(lo[None], hi[None])[0])
        # keep clear of the sampled boundary, which touching would otherwise hit
        return up + POLISH_NUDGE if up > 0 else 0.0

    def dense_intervals(self, phi: float) -> tuple[np.ndarray, np.ndarray]:
        """Colliding magnitude intervals at every verification offset along ``phi``."""
        return _kernels.dense_intervals(self._params(self.a, self.model_a),
                                        self._params(self.b, self.model_b), self.dense_grid(),
                                        math.cos(phi), math.sin(phi), 1e-12, TOL)


def component_upper(lo: np.ndarray, hi: np.ndarray, gap: float = NUDGE) -> np.ndarray:
    """Upper end of the union component containing 0, per row, restricted to m >= 0.

    Intervals closer than ``gap`` count as connected. Rows whose union does
    not contain 0 give 0.
    """
    dead = hi < 0
    lo = np.where(dead, np.inf, np.maximum(lo, 0.0))
    hi = np.where(dead, -np.inf, hi)
    order = np.argsort(lo, axis=1, kind="stable")
    los = np.take_along_axis(lo, order, 1)
    his = np.take_along_axis(hi, order, 1)
    cm = np.maximum.accumulate(his, axis=1)
    covered = los[:, 0] <= 0.0
    gaps = los[:, 1:] > cm[:, :-1] + gap
    if gaps.shape[1] == 0:
        first = np.zeros(len(cm), int)
    else:
        first = np.where(gaps.any(axis=1), gaps.argmax(axis=1), los.shape[1] - 1)
    upper = cm[np.arange(len(cm)), first]
    return np.where(covered, upper, 0.0)


def _to_magnitude(up: np.ndarray, a_max: float) -> np.ndarray:
    m = np.where(up > 0, up + NUDGE, 0.0)
    return np.where(m > a_max, np.inf, m)


def _scan(scene: Scene, phis: np.ndarray, a_max: float) -> np.ndarray:
    return _to_magnitude(scene.uppers(phis), a_max)


def _verified(scene: Scene, phi: float, m: float, a_max: float, rounds: int = 4) -> float:
    """Raise ``m`` along ``phi`` until no dense exact pose overlaps."""
    if scene.verify_substeps == 0 or m == 0.0 or math.isinf(m):
        return m
    u = np.array([math.cos(phi), math.sin(phi)])
    lo = hi = None
    for _ in range(rounds):
        if not scene.dense_overlap(m * u):
            return m
        if lo is None:
            dl, dh = scene.dense_intervals(phi)
            if scene.sweep:
                sl, sh = scene._step_hulls(phi)
            else:
                sl, sh = (x[0] for x in scene.intervals(np.array([phi])))
            lo = np.concatenate([sl, dl])[None]
            hi = np.concatenate([sh, dh])[None]
        m = float(_to_magnitude(component_upper(lo, hi), a_max)[0])
        if math.isinf(m):
            return m
    return m


def _prepare(a, b, model_a, model_b, horizon, p: NumericEaParams) -> Scene:
    scene = Scene(a, b, model_a, model_b, horizon, p.dt, p.sweep, p.verify_substeps)
    if scene.colliding_now:
        raise AlreadyColliding
    return scene


def directional_min(a: RoadUserState, b: RoadUserState, model_a, model_b, phi: float,
                    horizon: float = 7.0, p: NumericEaParams = NumericEaParams()) -> Optional[float]:
    """Smallest collision-free magnitude along direction ``phi``; None if above ``a_max``."""
    scene = _prepare(a, b, model_a, model_b, horizon, p)
    if not scene.baseline_hits:
        return 0.0
    m = float(_scan(scene, np.array([phi]), p.a_max)[0])
    m = _verified(scene, phi, m, p.a_max)
    return None if math.isinf(m) else m


def directional_scan(a, b, model_a, model_b, phi, horizon=7.0,
                     p: NumericEaParams = NumericEaParams()) -> DirectionalScan:
    """Like :func:`directional_min`, also returning the merged colliding intervals."""
    scene = _prepare(a, b, model_a, model_b, horizon, p)
    lo, hi = scene.intervals(np.array([phi]))
    pairs = sorted((l, h) for l, h in zip(lo[0], hi[0]) if l <= h)
    merged: list = []
    for l, h in pairs:
        if merged and l <= merged[-1][1] + NUDGE:
            merged[-1] = (merged[-1][0], max(merged[-1][1], h))
        else:
            merged.append((float(l), float(h)))
    m = directional_min(a, b, model_a, model_b, phi, horizon, p)
    return DirectionalScan(phi, m, merged)


@dataclass(frozen=True)
class NumericEaResult:
    ea: Optional[float]
    phi: float
    vector: tuple
    level_minima: tuple = ()


def _best_first(scene: Scene, phis: np.ndarray, a_max: float, best: float = math.inf):
    """Directional minima for ``phis``, evaluated only where a lower bound can beat ``best``.

    Returns the full array of (possibly bounded-below) values; entries never
    evaluated hold their lower bound and are flagged in the mask.
    """
    lb = scene.lower_bounds(phis)
    m = np.array(lb, float)
    exact = np.zeros(len(phis), bool)
    order = np.argsort(lb, kind="stable")
    for i0 in range(0, len(order), BATCH):
        blk = order[i0:i0 + BATCH]
        if lb[blk[0]] >= best:
            break
        m[blk] = _scan(scene, phis[blk], a_max)
        exact[blk] = True
        best = min(best, float(m[blk].min()))
    return m, exact


def ea_numeric(a: RoadUserState, b: RoadUserState, model_a, model_b, horizon: float = 7.0,
               p: NumericEaParams = NumericEaParams(), scene: Optional[Scene] = None) -> NumericEaResult:
    """Coarse-to-fine directional search for the minimum-norm collision-free acceleration."""
    if scene is None:
        scene = _prepare(a, b, model_a, model_b, horizon, p)
    elif scene.colliding_now:
        raise AlreadyColliding
    if not scene.baseline_hits:
        return NumericEaResult(0.0, 0.0, (0.0, 0.0), (0.0,))
    phis = np.arange(0.0, 2 * math.pi, p.coarse_step)
    m, ex = _best_first(scene, phis, p.a_max)
    i = int(np.argmin(np.where(ex, m, np.inf)))
    best_phi, best_m = float(phis[i]), float(m[i])
    minima = [best_m]
    seen_phi, seen_m = [phis[ex]], [m[ex]]
    for half, step in p.refine_levels:
        k = int(round(half / step))
        cand = best_phi + step * np.arange(-k, k + 1)
        mm, ex = _best_first(scene, cand, p.a_max, best_m)
        if ex.any():
            j = int(np.argmin(np.where(ex, mm, np.inf)))
            if mm[j] < best_m:
                best_phi, best_m = float(cand[j]), float(mm[j])
        minima.append(best_m)
        seen_phi.append(cand[ex])
        seen_m.append(mm[ex])
    if math.isinf(best_m):
        return NumericEaResult(None, best_phi, (math.nan, math.nan), tuple(minima))
    best_phi, best_m = _verified_best(scene, np.concatenate(seen_phi), np.concatenate(seen_m), p.a_max)
    if math.isinf(best_m):
        return NumericEaResult(None, best_phi, (math.nan, math.nan), tuple(minima))
    if scene.sweep and scene.turning and scene.verify_substeps > 0:
        best_phi, best_m = _dense_polish(scene, seen_phi[0], seen_m[0], best_phi, best_m, p)
    best_phi = math.remainder(best_phi, 2 * math.pi) % (2 * math.pi)
    vec = (best_m * math.cos(best_phi), best_m * math.sin(best_phi))
    return NumericEaResult(best_m, best_phi, vec, tuple(minima))


def _verified_best(scene, phis, ms, a_max, tries: int = 5):
    """Dense re-check of the best directions, in order, until the leader survives it."""
    order = np.argsort(ms, kind="stable")
    best_phi, best_m = float(phis[order[0]]), math.inf
    for rank, idx in enumerate(order[:tries]):
        if ms[idx] >= best_m:
            break
        m = _verified(scene, float(phis[idx]), float(ms[idx]), a_max)
        if m < best_m:
            best_phi, best_m = float(phis[idx]), m
    return best_phi, best_m


def _dense_polish(scene, phis, ms, best_phi, best_m, p: NumericEaParams):
    """Re-rank near-best coarse directions on exact poses, then refine the winner.

    Freezing headings over a swept step costs a little accuracy once a
    turning user rotates; at large magnitudes that can reorder basins.
    """
    cap = best_m * (1.0 + POLISH_MARGIN)
    cand = [float(x) for x in phis[ms <= cap]] + [best_phi]
    vals = [scene.dense_min(ph, cap) for ph in cand]
    i = int(np.argmin(vals))
    c, f_c = cand[i], vals[i]
    # golden-section refinement on [c - step, c + step]
    g = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = c - p.coarse_step, c + p.coarse_step
    x1, x2 = hi - g * (hi - lo), lo + g * (hi - lo)
    f1, f2 = scene.dense_min(x1, cap), scene.dense_min(x2, cap)
    for _ in range(POLISH_EVALS - 2):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - g * (hi - lo)
            f1 = scene.dense_min(x1, cap)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + g * (hi - lo)
            f2 = scene.dense_min(x2, cap)
    for ph, m in ((x1, f1), (x2, f2), (c, f_c)):
        if m < best_m and m <= p.a_max and not scene.dense_overlap(m * np.array([math.cos(ph), math.sin(ph)])):
            best_phi, best_m = ph, m
    return best_phi, best_m
