"""Exact evasive acceleration under constant-velocity extrapolation of both users.

Works in the radial-tangential (R-T) frame of the relative motion. ``a_r`` is
the radial *braking* component (positive slows the approach) and ``a_t`` the
tangential component towards the evasion side, so a relative trajectory
reads ``R(s) = v_r s - a_r s^2 / 2`` and ``T(s) = +-a_t s^2 / 2``.

A Step Barrier ``(d_r, d_t)`` says: the station ``R = d_r`` may only be
crossed once the trajectory is at least ``d_t`` out to the evasion side.
Each barrier bounds ``a_r`` from below as a function of ``a_t``; the mode
optimum is the minimum-norm point on or above the pointwise maximum of those
bounds, found from a finite candidate set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .geometry import (ConvexPolygon, RtFrame, minkowski_collision_set,
                       segment_polygon_entry, silhouette_many)
from .motion import RoadUserState
from .sweep import swept_hull

V_R_MIN = 1e-6
PENETRATION_TOL = 1e-9
NUDGE = 1e-9
MAX_CUTS = 4
CUT_GRID = 257
CUT_KEEP = 3
SCAN_DIRECTIONS = 360
POLISH_WINDOW_DEG = 4.0
POLISH_POINTS = 41
POLISH_LEVELS = 6


@dataclass(frozen=True)
class StepBarrier:
    d_r: float
    d_t: float

    def __post_init__(self):
        if not (math.isfinite(self.d_r) and math.isfinite(self.d_t)):
            raise ValueError("barrier coordinates must be finite")
        if self.d_r <= 0 or self.d_t <= 0:
            raise ValueError(f"invalid barrier ({self.d_r}, {self.d_t})")


@dataclass(frozen=True)
class EvasionSolution:
    value: float
    vector: tuple  # (a_r, a_t) in the mode frame
    mode: str


def _effective_horizon(d_r, v_r, horizon):
    return np.minimum(horizon, 2.0 * np.asarray(d_r, float) / v_r)


def barrier_boundary(barrier: StepBarrier, v_r: float, a_t: float, horizon: float = math.inf) -> float:
    """Smallest admissible radial braking for tangential acceleration ``a_t``.

    With an infinite horizon this is the plateau ``v_r^2 / (2 d_r)`` up to the
    kink ``a_t* = d_t v_r^2 / (2 d_r^2)`` and the curved branch
    ``v_r sqrt(2 a_t / d_t) - (d_r / d_t) a_t`` beyond it. A finite horizon
    lowers the plateau for stations that cannot be reached at peak before
    the horizon ends and moves the kink accordingly.
    """
    if a_t < 0:
        raise ValueError("a_t must be >= 0")
    d_r, d_t = barrier.d_r, barrier.d_t
    h = float(_effective_horizon(d_r, v_r, horizon))
    plateau = 2.0 * (v_r * h - d_r) / (h * h)
    if a_t < 2.0 * d_t / (h * h):
        return plateau
    return v_r * math.sqrt(2.0 * a_t / d_t) - (d_r / d_t) * a_t


def prune_dominated(d_r: np.ndarray, d_t: np.ndarray) -> np.ndarray:
    """Indices of barriers not dominated by a nearer barrier with at least as much clearance."""
    order = np.lexsort((-d_t, d_r))
    dts = d_t[order]
    prev = np.maximum.accumulate(np.concatenate([[-np.inf], dts[:-1]]))
    return order[dts > prev]


class _Envelope:
    """Vectorised per-barrier constants: plateau ``p``, kink ``A``, curve ``c sqrt(x) - k x``."""

    def __init__(self, d_r, d_t, v_r, horizon):
        d_r = np.asarray(d_r, float)
        d_t = np.asarray(d_t, float)
        h = _effective_horizon(d_r, v_r, horizon)
        self.p = 2.0 * (v_r * h - d_r) / (h * h)
        flat = d_t <= 0.0
        safe_dt = np.where(flat, 1.0, d_t)
        self.A = np.where(flat, np.inf, 2.0 * d_t / (h * h))
        self.c = np.where(flat, 0.0, v_r * np.sqrt(2.0 / safe_dt))
        self.k = np.where(flat, 0.0, d_r / safe_dt)
        self.flat = flat

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, float))[:, None]
        with np.errstate(invalid="ignore"):
            curve = self.c * np.sqrt(x) - self.k * x
        return np.where(x < self.A, self.p, curve).max(axis=1)

    def zero_crossing(self) -> float:
        pos = self.p > 0
        if np.any(pos & self.flat):
            return math.inf
        z = np.where(pos, (self.c / np.where(self.k > 0, self.k, 1.0)) ** 2, 0.0)
        return float(z.max()) if len(z) else 0.0

    def curve(self, x, idx):
        return self.c[idx] * np.sqrt(x) - self.k[idx] * x

    def plateau_floor(self, x):
        """``max{p_k : A_k > x}``, a lower bound of the envelope from plateaus alone."""
        order = np.argsort(self.A, kind="stable")
        a_sorted = self.A[order]
        suffix = np.maximum.accumulate(self.p[order][::-1])[::-1]
        suffix = np.append(suffix, -np.inf)
        return suffix[np.searchsorted(a_sorted, x, side="right")]

    def candidates(self) -> tuple[np.ndarray, np.ndarray]:
        """Candidate ``a_t`` values with the value of the barrier that generated each.

        A candidate on barrier ``i``'s curve needs ``x >= A_i``, one on its
        plateau ``x < A_i``; both must reach the plateau floor to lie on the
        envelope.
        """
        p, A, c, k = self.p, self.A, self.c, self.k
        pmax = float(p.max()) if len(p) else 0.0
        xs = [np.zeros(1)]
        vals = [np.array([pmax])]
        fin = np.isfinite(A)
        xs.append(A[fin])
        vals.append(p[fin])
        x0 = self.zero_crossing()
        if math.isfinite(x0):
            xs.append(np.array([x0]))
            vals.append(np.zeros(1))
        idx = np.flatnonzero(~self.flat)
        if len(idx):
            # stationary points of |(f(x), x)|^2 on each curve, quadratic in y = sqrt(x)
            kc, cc = k[idx], c[idx]
            disc = kc * kc / 4.0 - 2.0
            ok = disc >= 0
            if np.any(ok):
                root = cc[ok] * np.sqrt(disc[ok])
                den = 2.0 * (1.0 + kc[ok] ** 2)
                for y in ((1.5 * cc[ok] * kc[ok] + root) / den, (1.5 * cc[ok] * kc[ok] - root) / den):
                    x = y * y
                    on = x >= A[idx[ok]]
                    xs.append(x[on])
                    vals.append(self.curve(x[on], idx[ok][on]))
        if len(idx) >= 2:
            i, j = np.triu_indices(len(idx), 1)
            i, j = idx[i], idx[j]
            with np.errstate(divide="ignore", invalid="ignore"):
                y = (c[i] - c[j]) / (k[i] - k[j])
            x = y * y
            good = np.isfinite(y) & (y > 0) & (x >= A[i]) & (x >= A[j])
            xs.append(x[good])
            vals.append(self.curve(x[good], i[good]))
        if len(idx):
            # plateau of i meeting curve of j: k_j y^2 - c_j y + p_i = 0
            pi, ai = p[:, None], A[:, None]
            cj, kj, aj = c[idx][None, :], k[idx][None, :], A[idx][None, :]
            disc = cj * cj - 4.0 * kj * pi
            good = disc >= 0
            sq = np.sqrt(np.where(good, disc, 0.0))
            pb = np.broadcast_to(pi, disc.shape)
            for y in ((cj + sq) / (2.0 * kj), (cj - sq) / (2.0 * kj)):
                x = y * y
                sel = good & (y > 0) & (x < ai) & (x >= aj)
                xs.append(x[sel])
                vals.append(pb[sel])
        x = np.concatenate(xs)
        val = np.concatenate(vals)
        ok = np.isfinite(x) & (x >= 0)
        x, val = x[ok], val[ok]
        on_env = val >= self.plateau_floor(x) - 1e-12 * max(1.0, abs(pmax))
        return x[on_env], val[on_env]


def ea_mode(barriers: Iterable[StepBarrier], v_r: float, horizon: float = math.inf,
            mode: str = "up", prune: bool = True) -> EvasionSolution:
    """Minimum-norm ``(a_r, a_t)`` with ``a_t >= 0`` on or above the barrier envelope."""
    bs = list(barriers)
    if not bs:
        return EvasionSolution(0.0, (0.0, 0.0), mode)
    d_r = np.array([b.d_r for b in bs])
    d_t = np.array([b.d_t for b in bs])
    return _solve_mode(d_r, d_t, v_r, horizon, mode, prune)


def _solve_mode(d_r, d_t, v_r, horizon, mode, prune=True) -> EvasionSolution:
    if prune:
        keep = prune_dominated(d_r, d_t)
        d_r, d_t = d_r[keep], d_t[keep]
    env = _Envelope(d_r, d_t, v_r, horizon)
    x, _ = env.candidates()
    # the optimum has a_t <= its own norm <= the pure-radial norm
    bound = max(float(env.p.max()), 0.0)
    x = x[x <= bound * (1 + 1e-12) + 1e-15]
    bc = np.maximum(env(x), 0.0)
    g = x * x + bc * bc
    i = int(np.argmin(g))
    return EvasionSolution(float(math.sqrt(g[i])), (float(bc[i]), float(x[i])), mode)


def build_step_barriers(c: ConvexPolygon, frame: RtFrame, mode: str, horizon: float,
                        stations: int = 64, clearance: float = 0.0,
                        extra_stations: Iterable[float] = ()) -> list[StepBarrier]:
    """Step Barriers on the evasion side of ``c`` (given in world coordinates).

    Stations: ``stations`` uniform samples across the radial extent of ``c``
    clipped to ``(0, v_r * horizon]``, plus every vertex station. Stations where
    the evasion side is already clear impose nothing and are left out.
    """
    d_r, d_t = _barrier_arrays(frame.to_frame(c.vertices), frame.v_r, mode, horizon,
                               stations, clearance, extra_stations)
    return [StepBarrier(float(r), float(t)) for r, t in zip(d_r, d_t)]


def _barrier_arrays(fv, v_r, mode, horizon, stations, clearance, extra=(), check=True):
    if mode not in ("up", "down"):
        raise ValueError(f"mode must be 'up' or 'down', got {mode!r}")
    if stations < 2:
        raise ValueError("need at least 2 stations")
    reach = v_r * horizon
    if check and segment_polygon_entry((0.0, 0.0), (reach, 0.0), ConvexPolygon(fv)) is None:
        return np.empty(0), np.empty(0)
    lo = max(float(fv[:, 0].min()), 0.0)
    hi = min(float(fv[:, 0].max()), reach)
    vert = fv[:, 0][(fv[:, 0] >= lo) & (fv[:, 0] <= hi)]
    st = np.concatenate([np.linspace(lo, hi, stations), vert, np.asarray(list(extra), float)])
    st = np.unique(np.clip(st, max(1e-9, 1e-9 * hi), hi))
    if mode == "up":
        sil = silhouette_many(fv, st, "up")
    else:
        sil = -silhouette_many(fv, st, "down")
    d_t = sil + clearance
    keep = np.isfinite(d_t) & (d_t > 0)
    return st[keep], d_t[keep]


def max_penetration(normals: np.ndarray, offsets: np.ndarray, v_r: float, a_r: float,
                    a_t_signed: float, horizon: float) -> tuple[float, float]:
    """Deepest penetration of the R-T trajectory into a polygon given by half-planes.

    Returns ``(depth, s)``; depth <= 0 means the trajectory stays outside (or
    touches at depth 0). Exact: the inner min of quadratics is maximised over
    endpoints, per-edge stationary points and pairwise crossings.
    """
    nr, nt = normals[:, 0], normals[:, 1]
    al = offsets
    be = -nr * v_r
    ga = 0.5 * (nr * a_r - nt * a_t_signed)
    cand = [np.array([0.0, horizon])]
    with np.errstate(divide="ignore", invalid="ignore"):
        cand.append(-be / (2.0 * ga))
        i, j = np.triu_indices(len(al), 1)
        qa, qb, qc = ga[i] - ga[j], be[i] - be[j], al[i] - al[j]
        disc = qb * qb - 4.0 * qa * qc
        sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
        cand += [(-qb + sq) / (2 * qa), (-qb - sq) / (2 * qa), -qc / qb]
    s = np.concatenate(cand)
    s = s[np.isfinite(s) & (s >= 0) & (s <= horizon)]
    sig = al[None, :] + be[None, :] * s[:, None] + ga[None, :] * (s * s)[:, None]
    depth = sig.min(axis=1)
    m = int(np.argmax(depth))
    return float(depth[m]), float(s[m])


def _refined_mode(fv, normals, offsets, v_r, horizon, mode, stations, clearance,
                  prune, bound=math.inf, max_iter=MAX_CUTS) -> tuple[Optional[EvasionSolution], int, bool]:
    """Barrier solution with cutting-plane stations; the flag says whether it is verified.

    Every intermediate solution is a relaxation, so the search stops with
    ``None`` once its value reaches ``bound``.
    """
    sign = 1.0 if mode == "up" else -1.0
    extra: list[float] = []
    scale = max(1.0, float(np.abs(fv).max()))
    sol = None
    for it in range(max_iter):
        d_r, d_t = _barrier_arrays(fv, v_r, mode, horizon, stations, clearance, extra, check=False)
        if len(d_r) == 0:
            return EvasionSolution(0.0, (0.0, 0.0), mode), it, True
        sol = _solve_mode(d_r, d_t, v_r, horizon, mode, prune)
        if sol.value >= bound - 1e-12:
            return None, it, False
        a_r, a_t = sol.vector
        depth, s_w = max_penetration(normals, offsets, v_r, a_r, sign * a_t, horizon)
        if depth <= PENETRATION_TOL * scale:
            return sol, it, True
        r_w = v_r * s_w - 0.5 * a_r * s_w * s_w
        if r_w <= 0:
            # contact behind the start that no radial station can express
            return sol, it, False
        # T grows monotonically, so a station at r_w also cuts a contact on the way back
        extra.append(r_w)
        extra.extend(_violated_stations(fv, v_r, a_r, a_t, horizon, mode, clearance))
    return sol, max_iter, False


def _violated_stations(fv, v_r, a_r, a_t, horizon, mode, clearance, n=CUT_GRID, keep=CUT_KEEP) -> list:
    """Stations whose barrier the trajectory ``(a_r, a_t)`` violates most, on a fine radial grid.

    The trajectory first reaches ``r`` at ``s = 2 r / (v_r + sqrt(v_r^2 - 2 a_r r))``
    with ``T = a_t s^2 / 2``; a barrier is violated where the silhouette
    (plus clearance) lies above that ``T``.
    """
    s_end = horizon if a_r <= 0 else min(horizon, v_r / a_r)
    r_end = v_r * s_end - 0.5 * a_r * s_end * s_end
    lo = max(float(fv[:, 0].min()), 0.0)
    hi = min(float(fv[:, 0].max()), r_end)
    if hi <= lo:
        return []
    r = np.linspace(lo, hi, n)[1:]
    sil = silhouette_many(fv, r, "up") if mode == "up" else -silhouette_many(fv, r, "down")
    s = 2.0 * r / (v_r + np.sqrt(np.maximum(v_r * v_r - 2.0 * a_r * r, 0.0)))
    gap = sil + clearance - 0.5 * a_t * s * s
    gap = np.where(np.isfinite(gap), gap, -np.inf)
    top = np.argsort(-gap, kind="stable")[:keep]
    return [float(r[i]) for i in top if gap[i] > 0]


def directional_exact(c: ConvexPolygon, r0, v, phis, horizon: float, clearance: float = 0.0) -> np.ndarray:
    """Smallest collision-free magnitude along each direction, exactly (``inf`` if none).

    Under CV the relative path is one straight segment, so each direction's
    colliding magnitudes form a single interval (see :mod:`evasive.sweep`).
    """
    phis = np.atleast_1d(np.asarray(phis, float))
    u = np.stack([np.cos(phis), np.sin(phis)], -1)
    verts = c.vertices if clearance == 0 else _inflate(c, clearance)
    lo, hi = swept_hull(verts, np.asarray(r0, float), np.asarray(v, float), u, 0.0, horizon)
    return np.where((lo <= 0) & (hi >= 0), hi + NUDGE, 0.0)


def _inflate(c: ConvexPolygon, margin: float) -> np.ndarray:
    # offset every edge outward; a convex polygon stays convex with the same edge set
    n, off = c.halfplanes()
    k = len(off)
    out = []
    for i in range(k):
        j = (i + 1) % k
        m = np.array([n[i], n[j]])
        out.append(np.linalg.solve(m, np.array([off[i] + margin, off[j] + margin])))
    return np.asarray(out)


def _polish(c, r0, v, horizon, phi0, clearance):
    """Local angular minimisation of the exact directional magnitude around ``phi0``."""
    best_phi = phi0
    best = float(directional_exact(c, r0, v, [phi0], horizon, clearance)[0])
    half = math.radians(POLISH_WINDOW_DEG)
    for _ in range(POLISH_LEVELS):
        ph = best_phi + np.linspace(-half, half, POLISH_POINTS)
        m = directional_exact(c, r0, v, ph, horizon, clearance)
        i = int(np.argmin(m))
        if m[i] < best:
            best, best_phi = float(m[i]), float(ph[i])
        half *= 4.0 / (POLISH_POINTS - 1)
    return best, best_phi


@dataclass(frozen=True)
class CvEaResult:
    ea: float
    vector: tuple  # relative acceleration in world coordinates
    frame_vector: tuple  # (a_r, a_t)
    mode: str
    already_colliding: bool = False
    refinements: int = 0
    polished: bool = False


def ea_cv_value(a: RoadUserState, b: RoadUserState, horizon: float = 7.0, stations: int = 64,
                clearance: float = 0.0, prune: bool = True) -> CvEaResult:
    """Evasive acceleration of the pair under CV extrapolation of both users."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    c = minkowski_collision_set(a.footprint(), b.footprint())
    r0 = np.asarray(a.position) - np.asarray(b.position)
    if c.contains(r0):
        return CvEaResult(math.nan, (math.nan, math.nan), (math.nan, math.nan), "none", True)
    v = a.velocity - b.velocity
    v_r = float(np.hypot(*v))
    zero = CvEaResult(0.0, (0.0, 0.0), (0.0, 0.0), "none")
    if v_r <= V_R_MIN:
        return zero
    reach = v_r * horizon
    entry = segment_polygon_entry(r0, r0 + v * horizon, c)
    if entry is None:
        return zero
    frame = RtFrame(tuple(r0), tuple(v), v_r)
    fv = frame.to_frame(c.vertices)
    fpoly = ConvexPolygon(fv)
    normals, offsets = fpoly.halfplanes()

    # stopping short of the first contact along the unperturbed path
    r_e = max(entry * reach, 1e-12)
    h = min(horizon, 2.0 * r_e / v_r)
    best = EvasionSolution(max(2.0 * (v_r * h - r_e) / (h * h), 0.0), (0.0, 0.0), "up")
    best = EvasionSolution(best.value, (best.value, 0.0), "up")
    n_ref = 0
    polished = False
    scan_phi = None
    for mode in ("up", "down"):
        sol, it, ok = _refined_mode(fpoly.vertices, normals, offsets, v_r, horizon, mode,
                                    stations, clearance, prune, best.value)
        n_ref += it
        if sol is None:
            continue
        if not ok:
            sign = 1.0 if mode == "up" else -1.0
            w = frame.to_world_vector(np.array([-sol.vector[0], sign * sol.vector[1]]))
            m, phi = _polish(c, r0, v, horizon, math.atan2(w[1], w[0]), clearance)
            # the relaxation can point into the wrong basin; also start from a global scan
            if scan_phi is None:
                phis = np.linspace(0.0, 2 * math.pi, SCAN_DIRECTIONS, endpoint=False)
                scan_phi = float(phis[np.argmin(directional_exact(c, r0, v, phis, horizon, clearance))])
            m2, phi2 = _polish(c, r0, v, horizon, scan_phi, clearance)
            if m2 < m:
                m, phi = m2, phi2
            if not math.isfinite(m):
                continue
            wv = m * np.array([math.cos(phi), math.sin(phi)])
            fr = frame.to_frame_vector(wv)
            sol = EvasionSolution(m, (float(-fr[0]), float(sign * fr[1])), mode)
            polished_mode = True
        else:
            polished_mode = False
        if sol.value < best.value - 1e-12:
            best = sol
            polished = polished_mode
    a_r, a_t = best.vector
    sign = 1.0 if best.mode == "up" else -1.0
    world = frame.to_world_vector(np.array([-a_r, sign * a_t]))
    return CvEaResult(best.value, (float(world[0]), float(world[1])), (a_r, a_t), best.mode,
                      False, n_ref, polished)
