"""Compiled inner loops of the numerical solver.

Scalar ports of :func:`evasive.sweep.swept_hull` and
:func:`evasive.ea_ctrv.component_upper`, fused per direction so that no
(direction, step) temporaries are materialised. The NumPy versions remain the
reference implementation and are cross-checked in the tests.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

TINY = 1e-12


@njit(cache=True, inline="always")
def _ratio(w, s):
    if s > 0:
        return 2.0 * w / (s * s)
    if w > 0:
        return math.inf
    if w < 0:
        return -math.inf
    return 0.0


@njit(cache=True)
def _parallel(verts, r0x, r0y, vx, vy, ux, uy, s0, s1):
    px, py = -uy, ux
    eta0 = r0x * px + r0y * py
    n = verts.shape[0]
    tlo, thi = math.inf, -math.inf
    for i in range(n):
        j = (i + 1) % n
        e1 = verts[i, 0] * px + verts[i, 1] * py
        e2 = verts[j, 0] * px + verts[j, 1] * py
        t1 = verts[i, 0] * ux + verts[i, 1] * uy
        t2 = verts[j, 0] * ux + verts[j, 1] * uy
        if e2 != e1 and min(e1, e2) <= eta0 <= max(e1, e2):
            lam = min(max((eta0 - e1) / (e2 - e1), 0.0), 1.0)
            t = t1 + lam * (t2 - t1)
        elif abs(e1 - eta0) <= 1e-12:
            t = t1
        else:
            continue
        tlo = min(tlo, t)
        thi = max(thi, t)
    if tlo > thi:
        return math.inf, -math.inf
    sig = vx * ux + vy * uy
    tr0 = r0x * ux + r0y * uy
    beta = -sig
    out_lo, out_hi = math.inf, -math.inf
    for e in range(2):
        tau = tlo if e == 0 else thi
        alpha = tau - tr0 + s0 * sig
        a = _ratio(alpha + beta * s0, s0)
        b = _ratio(alpha + beta * s1, s1)
        c = b
        if beta != 0:
            st = -2.0 * alpha / beta
            if s0 < st < s1:
                c = _ratio(alpha + beta * st, st)
        if e == 0:
            out_lo = min(a, b, c)
        else:
            out_hi = max(a, b, c)
    return out_lo, out_hi


@njit(cache=True)
def step_hull(verts, r0x, r0y, vx, vy, speed, ux, uy, s0, s1, par_eps, S, W):
    """Colliding magnitude interval of one window along ``u``; (inf, -inf) if empty."""
    det = vx * uy - vy * ux
    if abs(det) <= par_eps * max(speed, 1.0):
        return _parallel(verts, r0x, r0y, vx, vy, ux, uy, s0, s1)
    n = verts.shape[0]
    inv = 1.0 / det
    for i in range(n):
        ex = verts[i, 0] - r0x
        ey = verts[i, 1] - r0y
        S[i] = s0 + (ex * uy - ey * ux) * inv
        W[i] = (vx * ey - vy * ex) * inv
    lo, hi = math.inf, -math.inf
    for i in range(n):
        j = (i + 1) % n
        si, wi, sj, wj = S[i], W[i], S[j], W[j]
        if s0 <= si <= s1:
            sc = max(si, TINY)
            f = 2.0 * wi / (sc * sc)
            lo = min(lo, f)
            hi = max(hi, f)
        ds = sj - si
        if ds == 0.0:
            continue
        dw = wj - wi
        smin, smax = min(si, sj), max(si, sj)
        for t in (s0, s1):
            if smin <= t <= smax:
                tc = max(t, TINY)
                f = 2.0 * (wi + (t - si) / ds * dw) / (tc * tc)
                lo = min(lo, f)
                hi = max(hi, f)
        beta = dw / ds
        alpha = wi - beta * si
        if beta != 0.0 and alpha != 0.0:
            st = -2.0 * alpha / beta
            if st > 0 and smin <= st <= smax and s0 <= st <= s1:
                f = -beta * beta / (2.0 * alpha)
                lo = min(lo, f)
                hi = max(hi, f)
    return lo, hi


@njit(cache=True)
def step_hulls(verts, r0, vel, speed, s0, s1, ux, uy, par_eps):
    """:func:`step_hull` for every window along one direction -> (lo, hi) of shape (K,)."""
    nk = r0.shape[0]
    lo = np.empty(nk)
    hi = np.empty(nk)
    S = np.empty(verts.shape[1])
    W = np.empty(verts.shape[1])
    for k in range(nk):
        lo[k], hi[k] = step_hull(verts[k], r0[k, 0], r0[k, 1], vel[k, 0], vel[k, 1], speed[k],
                                 ux, uy, s0[k], s1[k], par_eps, S, W)
    return lo, hi


@njit(cache=True)
def direction_uppers(verts, r0, vel, speed, s0, s1, steps, phis, gap, par_eps, lower_only):
    """Per direction: upper end of the colliding component containing 0.

    With ``lower_only`` the cheaper bound ``max(hi)`` over ``steps`` is returned
    instead; every step in ``steps`` must then contain the origin.
    """
    nd = phis.shape[0]
    nk = steps.shape[0]
    out = np.zeros(nd)
    lo = np.empty(nk)
    hi = np.empty(nk)
    S = np.empty(verts.shape[1])
    W = np.empty(verts.shape[1])
    for d in range(nd):
        ux, uy = math.cos(phis[d]), math.sin(phis[d])
        cnt = 0
        best = 0.0
        for q in range(nk):
            k = steps[q]
            l, h = step_hull(verts[k], r0[k, 0], r0[k, 1], vel[k, 0], vel[k, 1], speed[k],
                             ux, uy, s0[k], s1[k], par_eps, S, W)
            if lower_only:
                best = max(best, h)
            elif l <= h and h >= 0:
                lo[cnt] = max(l, 0.0)
                hi[cnt] = h
                cnt += 1
        if lower_only:
            out[d] = best
            continue
        if cnt == 0:
            continue
        order = np.argsort(lo[:cnt])
        if lo[order[0]] > 0.0:
            continue
        cm = hi[order[0]]
        for i in range(1, cnt):
            o = order[i]
            if lo[o] > cm + gap:
                break
            cm = max(cm, hi[o])
        out[d] = cm
    return out


@njit(cache=True, inline="always")
def _pose(p, s):
    # p = (x0, y0, heading, speed, yaw_rate, length, width); yaw_rate 0 means straight
    th, v, w = p[2], p[3], p[4]
    if w == 0.0:
        return p[0] + v * math.cos(th) * s, p[1] + v * math.sin(th) * s, th
    ths = th + w * s
    r = v / w
    return p[0] + r * (math.sin(ths) - math.sin(th)), p[1] + r * (math.cos(th) - math.cos(ths)), ths


@njit(cache=True, inline="always")
def _sat(pa, pb, s, n, rad):
    """Fill SAT axes (4, 2) and radii (4,) at offset ``s``; return the centre gap."""
    xa, ya, ha = _pose(pa, s)
    xb, yb, hb = _pose(pb, s)
    ca, sa, cb, sb = math.cos(ha), math.sin(ha), math.cos(hb), math.sin(hb)
    n[0, 0], n[0, 1] = ca, sa
    n[1, 0], n[1, 1] = -sa, ca
    n[2, 0], n[2, 1] = cb, sb
    n[3, 0], n[3, 1] = -sb, cb
    for k in range(4):
        nx, ny = n[k, 0], n[k, 1]
        rad[k] = (0.5 * pa[5] * abs(nx * ca + ny * sa) + 0.5 * pa[6] * abs(-nx * sa + ny * ca)
                  + 0.5 * pb[5] * abs(nx * cb + ny * sb) + 0.5 * pb[6] * abs(-nx * sb + ny * cb))
    return xa - xb, ya - yb


@njit(cache=True)
def dense_overlap(pa, pb, s, ax, ay, tol):
    """True if user A shifted by ``acc s^2 / 2`` overlaps B at any offset in ``s``."""
    n = np.empty((4, 2))
    rad = np.empty(4)
    for i in range(s.shape[0]):
        rx, ry = _sat(pa, pb, s[i], n, rad)
        w = 0.5 * s[i] * s[i]
        px, py = rx + w * ax, ry + w * ay
        inside = True
        for k in range(4):
            if abs(n[k, 0] * px + n[k, 1] * py) > rad[k] - tol:
                inside = False
                break
        if inside:
            return True
    return False


@njit(cache=True)
def dense_intervals(pa, pb, s, ux, uy, flat_eps, tol):
    """Per offset, the colliding magnitude interval along ``u``; (inf, -inf) if empty."""
    m = s.shape[0]
    lo = np.full(m, math.inf)
    hi = np.full(m, -math.inf)
    n = np.empty((4, 2))
    rad = np.empty(4)
    for i in range(m):
        rx, ry = _sat(pa, pb, s[i], n, rad)
        l, h = -math.inf, math.inf
        for k in range(4):
            d = n[k, 0] * rx + n[k, 1] * ry
            un = n[k, 0] * ux + n[k, 1] * uy
            if abs(un) <= flat_eps:
                if abs(d) > rad[k] + tol:
                    l, h = math.inf, -math.inf
                    break
                continue
            w1 = (-rad[k] - d) / un
            w2 = (rad[k] - d) / un
            if un < 0:
                w1, w2 = w2, w1
            l = max(l, w1)
            h = min(h, w2)
        if l <= h:
            sc = 2.0 / (s[i] * s[i])
            lo[i] = l * sc
            hi[i] = h * sc
    return lo, hi


@njit(cache=True)
def irls(X, y, pen, beta, tol, max_iter):
    """L2-penalised logistic IRLS from ``beta``; returns (beta, iterations)."""
    n, k = X.shape
    it = 0
    H = np.empty((k, k))
    g = np.empty(k)
    for it in range(1, max_iter + 1):
        H[:] = 0.0
        g[:] = 0.0
        for i in range(n):
            eta = 0.0
            for a in range(k):
                eta += X[i, a] * beta[a]
            p = 0.5 * (1.0 + math.tanh(0.5 * eta))
            w = max(p * (1.0 - p), 1e-12)
            r = y[i] - p
            for a in range(k):
                g[a] += X[i, a] * r
                xa = X[i, a] * w
                for b in range(a, k):
                    H[a, b] += xa * X[i, b]
        for a in range(k):
            g[a] -= pen[a] * beta[a]
            H[a, a] += pen[a]
            for b in range(a):
                H[a, b] = H[b, a]
        step = np.linalg.solve(H, g)
        worst = 0.0
        for a in range(k):
            beta[a] += step[a]
            worst = max(worst, abs(step[a]))
        if worst < tol:
            break
    return beta, it


@njit(cache=True)
def _design(v, mean, std, active):
    n, d = v.shape
    na = 0
    for j in range(d):
        if active[j]:
            na += 1
    k = 1 + (2 if na == 1 else 5)
    X = np.empty((n, k))
    z = np.empty(2)
    for i in range(n):
        c = 0
        for j in range(d):
            if active[j]:
                z[c] = (v[i, j] - mean[j]) / std[j]
                c += 1
        X[i, 0] = 1.0
        if na == 1:
            X[i, 1] = z[0]
            X[i, 2] = z[0] * z[0]
        else:
            X[i, 1] = z[0]
            X[i, 2] = z[1]
            X[i, 3] = z[0] * z[0]
            X[i, 4] = z[1] * z[1]
            X[i, 5] = z[0] * z[1]
    return X


@njit(cache=True)
def oof_cross_entropy(v, y, folds, k, l2, tol, max_iter, clip):
    """Fused out-of-fold calibration and held-out cross-entropy in bits (see evaluation)."""
    n, d = v.shape
    p = np.empty(n)
    for f in range(k):
        te = folds == f
        if not te.any():
            continue
        tr = ~te
        vt, yt = v[tr], y[tr]
        prev = yt.mean()
        if yt.min() == yt.max():
            p[te] = prev
            continue
        mean = np.empty(d)
        std = np.empty(d)
        active = np.zeros(d, np.bool_)
        for j in range(d):
            mean[j] = vt[:, j].mean()
            std[j] = vt[:, j].std()
            active[j] = std[j] > 1e-12 * max(1.0, abs(mean[j]))
            if not active[j]:
                std[j] = 1.0
        b0 = math.log(prev / (1.0 - prev))
        if not active.any():
            p[te] = 0.5 * (1.0 + math.tanh(0.5 * b0))
            continue
        X = _design(vt, mean, std, active)
        beta = np.zeros(X.shape[1])
        beta[0] = b0
        pen = np.full(X.shape[1], l2)
        pen[0] = 0.0
        beta, _ = irls(X, yt, pen, beta, tol, max_iter)
        Xe = _design(v[te], mean, std, active)
        idx = np.flatnonzero(te)
        for r in range(len(idx)):
            eta = 0.0
            for a in range(X.shape[1]):
                eta += Xe[r, a] * beta[a]
            p[idx[r]] = 0.5 * (1.0 + math.tanh(0.5 * eta))
    tot = 0.0
    for i in range(n):
        q = min(max(p[i], clip), 1.0 - clip)
        tot += y[i] * math.log2(q) + (1.0 - y[i]) * math.log2(1.0 - q)
    return -tot / n
