"""Colliding acceleration magnitudes along a direction, in continuous time.

Over a window ``s in [s0, s1]`` the relative position is taken as linear,
``r(s) = r0 + (s - s0) v``, and the collision set ``C`` as fixed. Adding
``w u`` (``w = m s^2 / 2``) hits ``C`` exactly on the preimage of ``C`` under
the affine map ``(s, w) -> r(s) + w u``, a convex polygon in the
``(s, w)`` plane. The colliding magnitudes ``m = 2 w / s^2`` over that
polygon form one closed interval whose ends are attained at polygon
vertices, at crossings with ``s = s0`` or ``s = s1``, or at the stationary
point of ``2 (alpha + beta s) / s^2`` along an edge.

Everything broadcasts over a leading batch shape.
"""
from __future__ import annotations

import numpy as np

PARALLEL_EPS = 1e-10


def box_sum_vertices(ha, hb, la, wa, lb, wb) -> np.ndarray:
    """Vertices (..., 8, 2), counter-clockwise, of the Minkowski sum of two centred boxes."""
    ha = np.asarray(ha, float)
    hb = np.broadcast_to(np.asarray(hb, float), ha.shape)
    k = np.arange(4) * (np.pi / 2)
    ang = np.concatenate([ha[..., None] + k, hb[..., None] + k], axis=-1)
    length = np.array([la, wa, la, wa, lb, wb, lb, wb], float)
    ang = np.mod(ang, 2 * np.pi)
    order = np.argsort(ang, axis=-1, kind="stable")
    ang = np.take_along_axis(ang, order, -1)
    length = np.broadcast_to(length, ang.shape)
    length = np.take_along_axis(length, order, -1)
    edges = np.stack([np.cos(ang), np.sin(ang)], -1) * length[..., None]
    v = np.cumsum(edges, axis=-2)
    return v - v.mean(axis=-2, keepdims=True)


def _parallel_hull(verts, r0, vel, u, s0, s1):
    """Hull when the path runs parallel to ``u``: the chord of ``C`` is fixed."""
    perp = np.stack([-u[..., 1], u[..., 0]], -1)
    eta_v = np.einsum("...kj,...j->...k", verts, perp)
    tau_v = np.einsum("...kj,...j->...k", verts, u)
    eta0 = np.einsum("...j,...j->...", r0, perp)[..., None]
    e1, e2 = eta_v, np.roll(eta_v, -1, axis=-1)
    t1, t2 = tau_v, np.roll(tau_v, -1, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (eta0 - e1) / (e2 - e1)
    hit = (np.minimum(e1, e2) <= eta0) & (eta0 <= np.maximum(e1, e2)) & np.isfinite(lam)
    tau = np.where(hit, t1 + np.clip(lam, 0, 1) * (t2 - t1), np.nan)
    # vertices lying exactly on the line (edges parallel to u) count too
    on = np.abs(e1 - eta0) <= 1e-12
    tau = np.where(on & ~hit, t1, tau)
    any_hit = (hit | on).any(axis=-1)
    tau_lo = np.where(any_hit, np.nanmin(np.where(any_hit[..., None], tau, 0.0), axis=-1), np.nan)
    tau_hi = np.where(any_hit, np.nanmax(np.where(any_hit[..., None], tau, 0.0), axis=-1), np.nan)
    sig = np.einsum("...j,...j->...", vel, u)
    tr0 = np.einsum("...j,...j->...", r0, u)
    out = []
    for tau_e, pick in ((tau_lo, np.minimum), (tau_hi, np.maximum)):
        alpha = tau_e - tr0 + s0 * sig
        beta = -sig
        cand = [s0, s1]
        with np.errstate(divide="ignore", invalid="ignore"):
            st = -2.0 * alpha / beta
        cand.append(np.where((st > s0) & (st < s1), st, s1))
        vals = [_ratio(alpha + beta * c, c) for c in cand]
        res = vals[0]
        for v in vals[1:]:
            res = pick(res, v)
        out.append(res)
    lo = np.where(any_hit, out[0], np.inf)
    hi = np.where(any_hit, out[1], -np.inf)
    return lo, hi


def _ratio(w, s):
    with np.errstate(divide="ignore", invalid="ignore"):
        f = 2.0 * w / (s * s)
    return np.where(s > 0, f, np.where(w > 0, np.inf, np.where(w < 0, -np.inf, 0.0)))


class StepGeometry:
    """Direction-independent part of :func:`swept_hull` for a batch of windows."""

    def __init__(self, verts, r0, vel, s0, s1):
        verts = np.asarray(verts, float)
        self.r0 = np.asarray(r0, float)
        self.vel = np.asarray(vel, float)
        self.verts = verts
        self.ex = verts[..., 0] - self.r0[..., None, 0]
        self.ey = verts[..., 1] - self.r0[..., None, 1]
        self.wnum = self.vel[..., None, 0] * self.ey - self.vel[..., None, 1] * self.ex
        self.speed = np.hypot(self.vel[..., 0], self.vel[..., 1])
        self.s0 = np.asarray(s0, float)
        self.s1 = np.asarray(s1, float)

    def hull(self, u, idx=None):
        """Hulls for unit directions ``u`` (P, 2) on windows ``idx`` (P,) (all if None)."""
        sel = slice(None) if idx is None else idx
        ex, ey, wnum = self.ex[sel], self.ey[sel], self.wnum[sel]
        vel, s0, s1 = self.vel[sel], self.s0[sel], self.s1[sel]
        ux, uy = u[..., 0], u[..., 1]
        det = vel[..., 0] * uy - vel[..., 1] * ux
        par = np.abs(det) <= PARALLEL_EPS * np.maximum(self.speed[sel], 1.0)
        inv = (1.0 / np.where(par, 1.0, det))[..., None]
        S = s0[..., None] + (ex * uy[..., None] - ey * ux[..., None]) * inv
        W = wnum * inv
        lo, hi = _hull_core(S, W, s0[..., None], s1[..., None])
        if np.any(par):
            lo, hi = np.array(lo), np.array(hi)
            r0 = self.r0[sel]
            lo[par], hi[par] = _parallel_hull(self.verts[sel][par], r0[par], vel[par], u[par],
                                              s0[par], s1[par])
        return lo, hi


def _hull_core(S, W, s0, s1):
    k = S.shape[-1]
    nxt = np.r_[1:k, 0]
    S2, W2 = S[..., nxt], W[..., nxt]
    dS = S2 - S
    dW = W2 - W
    tiny = 1e-12
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Sc = np.maximum(S, tiny)
        f = 2.0 * W / (Sc * Sc)
        ok = (S >= s0) & (S <= s1)
        lo = np.where(ok, f, np.inf)
        hi = np.where(ok, f, -np.inf)
        smin = np.minimum(S, S2)
        smax = np.maximum(S, S2)
        for t in (s0, s1):
            tc = np.maximum(t, tiny)
            f = 2.0 * (W + (t - S) / dS * dW) / (tc * tc)
            ok = (smin <= t) & (t <= smax) & (dS != 0)
            lo = np.where(ok, np.minimum(lo, f), lo)
            hi = np.where(ok, np.maximum(hi, f), hi)
        beta = dW / dS
        alpha = W - beta * S
        st = -2.0 * alpha / beta
        f = -beta * beta / (2.0 * alpha)
        ok = (st > 0) & (st >= smin) & (st <= smax) & (st >= s0) & (st <= s1)
        lo = np.where(ok, np.minimum(lo, f), lo)
        hi = np.where(ok, np.maximum(hi, f), hi)
    return lo.min(axis=-1), hi.max(axis=-1)


def swept_hull(verts, r0, vel, u, s0, s1) -> tuple[np.ndarray, np.ndarray]:
    """Closed interval ``(lo, hi)`` of colliding magnitudes; empty as ``(inf, -inf)``.

    ``verts`` (..., K, 2) convex polygon, ``r0``/``vel``/``u`` (..., 2) with
    ``u`` unit, ``s0``/``s1`` (...) the window in absolute time (``s0 >= 0``).
    Contact at ``s = 0`` itself maps to an unbounded magnitude.
    """
    verts = np.asarray(verts, float)
    r0, vel, u = (np.asarray(x, float) for x in (r0, vel, u))
    shape = np.broadcast_shapes(verts.shape[:-2], r0.shape[:-1], vel.shape[:-1], u.shape[:-1],
                                np.shape(s0), np.shape(s1))
    k = verts.shape[-2]
    geo = StepGeometry(np.broadcast_to(verts, shape + (k, 2)).reshape(-1, k, 2),
                       np.broadcast_to(r0, shape + (2,)).reshape(-1, 2),
                       np.broadcast_to(vel, shape + (2,)).reshape(-1, 2),
                       np.broadcast_to(np.asarray(s0, float), shape).reshape(-1),
                       np.broadcast_to(np.asarray(s1, float), shape).reshape(-1))
    lo, hi = geo.hull(np.broadcast_to(u, shape + (2,)).reshape(-1, 2))
    return lo.reshape(shape), hi.reshape(shape)
