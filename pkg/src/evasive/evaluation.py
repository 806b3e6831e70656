"""Separability statistics, warning lead time, and crash-outcome information retention."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels

FPR_TARGETS = (0.01, 0.05, 0.10)
PERCENTILES = (90.0, 95.0, 99.0, 99.5)
PROB_CLIP = 1e-6
L2 = 1e-6
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100


# --------------------------------------------------------------------------- separability

@dataclass(frozen=True)
class SeparabilityReport:
    auprc: float
    auroc: float
    ks: float
    tpr_at_fpr: dict
    n_pos: int
    n_neg: int


def _sweep(pos, neg):
    """Cumulative TP/FP counts at each distinct threshold, descending."""
    s = np.concatenate([pos, neg])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]  # end of each tie group
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1 - y)[last]
    return s[last], tp, fp


def auroc(pos, neg) -> float:
    """Mann-Whitney statistic with ties counted half."""
    pos, neg = np.asarray(pos, float), np.asarray(neg, float)
    s = np.concatenate([pos, neg])
    _, inv, cnt = np.unique(s, return_inverse=True, return_counts=True)
    rank_hi = np.cumsum(cnt)
    avg = rank_hi - (cnt - 1) / 2.0
    r = avg[inv][: len(pos)].sum()
    return float((r - len(pos) * (len(pos) + 1) / 2.0) / (len(pos) * len(neg)))


def separability(pos, neg) -> SeparabilityReport:
    pos = np.asarray(pos, float)
    neg = np.asarray(neg, float)
    if len(pos) < 1 or len(neg) < 1:
        raise ValueError("need at least one positive and one negative score")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise ValueError("scores must be finite")
    _, tp, fp = _sweep(pos, neg)
    P, N = len(pos), len(neg)
    recall = tp / P
    precision = tp / (tp + fp)
    auprc = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    fpr = fp / N
    ks = float(np.max(np.abs(recall - fpr)))
    tpr = {}
    for target in FPR_TARGETS:
        ok = fpr <= target + 1e-12
        # threshold with the largest admissible FPR; none admissible means flagging nothing
        tpr[target] = float(recall[ok][fpr[ok] == fpr[ok].max()].max()) if ok.any() else 0.0
    return SeparabilityReport(auprc, auroc(pos, neg), ks, tpr, P, N)


def percentile_threshold(event_maxima, p: float) -> float:
    """Linear-interpolation percentile of the event maxima."""
    x = np.asarray(event_maxima, float)
    if len(x) == 0:
        raise ValueError("no event maxima")
    if not 0 < p < 100:
        raise ValueError("percentile must lie in (0, 100)")
    return float(np.percentile(x, p, method="linear"))


# --------------------------------------------------------------------------- warning lead time

@dataclass(frozen=True)
class WltRecord:
    case_id: str
    threshold_percentile: float
    theta: float
    wlt: float


def warning_lead_time(times, risks, theta: float, t_m: Optional[float] = None, tol: float = 1e-6) -> float:
    """Length of the final unbroken run of ``risk >= theta`` ending at ``t_m``.

    ``t_m`` defaults to the last sample; undefined (NaN) samples break a run.
    """
    times = np.asarray(times, float)
    risks = np.asarray(risks, float)
    if t_m is None:
        m = len(times) - 1
    else:
        hit = np.flatnonzero(np.abs(times - t_m) <= tol)
        if len(hit) == 0:
            raise ValueError(f"t_m = {t_m} is not a sample time")
        m = int(hit[0])
    on = risks[: m + 1] >= theta
    if not on[m]:
        return 0.0
    off = np.flatnonzero(~on)
    start = off[-1] + 1 if len(off) else 0
    return float(times[m] - times[start])


# --------------------------------------------------------------------------- calibration

def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return float(-(p * math.log2(p) + (1 - p) * math.log2(1 - p)))


def _features(z: np.ndarray) -> np.ndarray:
    """[z, z^2] for one column, [z1, z2, z1^2, z2^2, z1 z2] for two."""
    if z.shape[1] == 1:
        return np.column_stack([z[:, 0], z[:, 0] ** 2])
    z1, z2 = z[:, 0], z[:, 1]
    return np.column_stack([z1, z2, z1 * z1, z2 * z2, z1 * z2])


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class Calibrator:
    mean: np.ndarray
    std: np.ndarray
    coef: np.ndarray          # intercept first
    active: np.ndarray        # which standardised inputs vary in training
    iterations: int = 0

    def predict(self, values) -> np.ndarray:
        v = np.asarray(values, float).reshape(len(values), -1)
        z = (v - self.mean) / self.std
        if not self.active.any():
            return np.full(len(v), _sigmoid(self.coef[0]))
        X = np.column_stack([np.ones(len(v)), _features(z[:, self.active])])
        return _sigmoid(X @ self.coef)


def fit_calibrator(values, labels, l2: float = L2, tol: float = IRLS_TOL, max_iter: int = IRLS_MAX_ITER) -> Calibrator:
    """Polynomial logistic calibrator fitted by L2-penalised IRLS.

    ``values`` is (n,) for a single method or (n, 2) for a joint model. Inputs
    are standardised with the training mean and standard deviation; constant
    inputs are dropped, leaving an intercept-only model if none vary.
    """
    v = np.asarray(values, float)
    v = v.reshape(len(v), -1)
    y = np.asarray(labels, float)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("both outcomes must be present in the training data")
    mean = v.mean(axis=0)
    std = v.std(axis=0)
    active = std > 1e-12 * np.maximum(1.0, np.abs(mean))
    std = np.where(active, std, 1.0)
    prev = y.mean()
    b0 = math.log(prev / (1 - prev))
    if not active.any():
        return Calibrator(mean, std, np.array([b0]), active)
    z = (v - mean) / std
    X = np.column_stack([np.ones(len(v)), _features(z[:, active])])
    beta = np.zeros(X.shape[1])
    beta[0] = b0
    pen = np.full(X.shape[1], l2)
    pen[0] = 0.0
    try:
        beta, it = _kernels.irls(np.ascontiguousarray(X), y, pen, beta, tol, max_iter)
    except np.linalg.LinAlgError:  # singular system; the reference loop falls back to least squares
        beta, it = _irls_reference(X, y, pen, np.r_[b0, np.zeros(X.shape[1] - 1)], tol, max_iter)
    return Calibrator(mean, std, beta, active, it)


def _irls_reference(X, y, pen, beta, tol, max_iter):
    it = 0
    for it in range(1, max_iter + 1):
        p = _sigmoid(X @ beta)
        w = np.maximum(p * (1 - p), 1e-12)
        H = (X.T * w) @ X + np.diag(pen)
        g = X.T @ (y - p) - pen * beta
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    return beta, it


def cross_entropy_bits(y, p) -> float:
    p = np.clip(np.asarray(p, float), PROB_CLIP, 1 - PROB_CLIP)
    y = np.asarray(y, float)
    return float(-np.mean(y * np.log2(p) + (1 - y) * np.log2(1 - p)))


def stratified_folds(labels, groups, k: int, seed: int) -> np.ndarray:
    """Fold index per sample; whole groups (cases) stay together, stratified by label."""
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(labels), int)
    for cls in (0, 1):
        g = np.unique(groups[labels == cls])
        g = g[rng.permutation(len(g))]
        assign = {gi: i % k for i, gi in enumerate(g)}
        for i in np.flatnonzero(labels == cls):
            fold[i] = assign[groups[i]]
    return fold


def oof_cross_entropy(values, labels, folds: np.ndarray, k: int) -> float:
    """Held-out cross-entropy (bits) of out-of-fold calibrated probabilities."""
    v = np.asarray(values, float)
    v = np.ascontiguousarray(v.reshape(len(v), -1))
    y = np.asarray(labels, float)
    try:
        return float(_kernels.oof_cross_entropy(v, y, np.asarray(folds, np.int64), k, L2, IRLS_TOL, IRLS_MAX_ITER,
                                                PROB_CLIP))
    except np.linalg.LinAlgError:
        return oof_cross_entropy_reference(v, y, folds, k)


def oof_cross_entropy_reference(values, labels, folds: np.ndarray, k: int) -> float:
    """Same as :func:`oof_cross_entropy`, built from :func:`fit_calibrator`."""
    v = np.asarray(values, float)
    y = np.asarray(labels, float)
    p = np.empty(len(y))
    for f in range(k):
        te = folds == f
        if not te.any():
            continue
        tr = ~te
        if y[tr].min() == y[tr].max():
            p[te] = y[tr].mean()
            continue
        p[te] = fit_calibrator(v[tr], y[tr]).predict(v[te])
    return cross_entropy_bits(y, p)


# --------------------------------------------------------------------------- information retention

@dataclass
class InfoReport:
    taus: list
    methods: list
    entropy: dict                   # tau -> H(Y)
    residual: dict                  # (tau, method) -> bits
    retained: dict
    ratio: dict
    incremental: dict               # (tau, x, y) -> info gained by adding x to y
    n: dict                         # tau -> (n_crash, n_noncrash)
    folds: int
    seed: int
    notes: list = field(default_factory=list)
    ci: dict = field(default_factory=dict)   # quantity key -> (lo, hi)

    def mean_retained(self, method) -> float:
        return float(np.mean([self.retained[(t, method)] for t in self.taus]))

    def mean_incremental(self, x, y) -> float:
        return float(np.mean([self.incremental[(t, x, y)] for t in self.taus]))


@dataclass(frozen=True)
class InfoSlice:
    """One lead-time slice: labels, case groups and a value column per method."""
    tau: float
    labels: np.ndarray
    groups: np.ndarray
    values: dict


def slices_from_episodes(episodes, methods: Sequence[str], complete_only: bool = True) -> list:
    """Per lead time, the episodes defined for every method (identical states across methods)."""
    eps = [e for e in episodes if e.complete or not complete_only]
    taus = sorted({t for e in eps for t in e.samples})
    out = []
    for tau in taus:
        rows = []
        for e in eps:
            s = e.samples.get(tau)
            if s is None:
                continue
            vals = [s.get(m, math.nan) for m in methods]
            if all(math.isfinite(x) for x in vals):
                rows.append((1 if e.outcome == "crash" else 0, e.case_id, vals))
        if not rows:
            continue
        y = np.array([r[0] for r in rows])
        g = np.array([r[1] for r in rows])
        v = np.array([r[2] for r in rows], float)
        out.append(InfoSlice(tau, y, g, {m: v[:, i] for i, m in enumerate(methods)}))
    return out


def retained_information(slices: Sequence[InfoSlice], methods: Sequence[str], folds: int = 5, seed: int = 0,
                         pairs: Optional[Sequence[tuple]] = None) -> InfoReport:
    """Retained and incremental information per lead time, from out-of-fold calibrated probabilities.

    ``pairs`` lists (x, y) method pairs whose joint model is fitted; the
    incremental information in both directions is reported for each.
    """
    pairs = list(pairs or [])
    rep = InfoReport([], list(methods), {}, {}, {}, {}, {}, {}, folds, seed)
    for sl in slices:
        y = sl.labels
        n1, n0 = int(y.sum()), int(len(y) - y.sum())
        if n1 == 0 or n0 == 0:
            rep.notes.append(f"tau={sl.tau:+.1f}: single outcome class, omitted")
            continue
        fold = stratified_folds(y, sl.groups, folds, seed)
        H = binary_entropy(n1 / len(y))
        tau = sl.tau
        rep.taus.append(tau)
        rep.entropy[tau] = H
        rep.n[tau] = (n1, n0)
        for m in methods:
            res = oof_cross_entropy(sl.values[m], y, fold, folds)
            rep.residual[(tau, m)] = res
            # held-out loss of an uninformative value can exceed H by estimation noise
            ret = max(H - res, 0.0)
            rep.retained[(tau, m)] = ret
            rep.ratio[(tau, m)] = ret / H if H > 0 else math.nan
        for x, yy in pairs:
            joint = oof_cross_entropy(np.column_stack([sl.values[x], sl.values[yy]]), y, fold, folds)
            rep.incremental[(tau, x, yy)] = rep.residual[(tau, yy)] - joint
            rep.incremental[(tau, yy, x)] = rep.residual[(tau, x)] - joint
    return rep


def _resample_slices(slices, rng) -> list:
    """Case-level resampling within each outcome group, shared across lead times."""
    cases = {}
    for sl in slices:
        for lab, g in zip(sl.labels, sl.groups):
            cases[g] = int(lab)
    out_groups = {}
    for cls in (0, 1):
        ids = sorted(g for g, l in cases.items() if l == cls)
        if ids:
            pick = rng.integers(0, len(ids), len(ids))
            for k, i in enumerate(pick):
                out_groups.setdefault(ids[i], []).append(k)
    res = []
    for sl in slices:
        idx, newg = [], []
        for i, g in enumerate(sl.groups):
            for k in out_groups.get(g, []):
                idx.append(i)
                newg.append(f"{g}#{k}")
        idx = np.array(idx, int)
        res.append(InfoSlice(sl.tau, sl.labels[idx], np.array(newg), {m: v[idx] for m, v in sl.values.items()}))
    return res


def bootstrap_ci(slices, analysis: Callable[[list], dict], replicates: int = 1000, level: float = 0.95,
                 seed: int = 0) -> dict:
    """Percentile intervals of every quantity returned by ``analysis`` over case resamples.

    ``analysis`` maps a list of slices to a flat {key: value} dict.
    """
    if replicates < 100:
        raise ValueError("at least 100 bootstrap replicates are required")
    rng = np.random.default_rng(seed)
    draws: dict = {}
    for _ in range(replicates):
        for k, v in analysis(_resample_slices(slices, rng)).items():
            draws.setdefault(k, []).append(v)
    a = (1 - level) / 2
    return {k: (float(np.quantile(v, a)), float(np.quantile(v, 1 - a))) for k, v in sorted(draws.items())}


def retained_summary(methods, folds, seed, pairs=()) -> Callable[[list], dict]:
    """Bootstrap analysis: horizon-mean retained and incremental information."""
    def run(slices):
        rep = retained_information(slices, methods, folds, seed, pairs)
        out = {f"retained|{m}": rep.mean_retained(m) for m in methods}
        for x, y in pairs:
            out[f"incremental|{x}|{y}"] = rep.mean_incremental(x, y)
            out[f"incremental|{y}|{x}"] = rep.mean_incremental(y, x)
        return out
    return run


# --------------------------------------------------------------------------- experiment helpers

def positive_samples(crash_events, metric: str, w_lo: float, w_hi: float = -0.1, tol: float = 1e-6) -> np.ndarray:
    """Oriented risk of every crash frame with time in [w_lo, w_hi] relative to impact."""
    vals = []
    for ev in crash_events:
        rel = ev.times - ev.impact_time
        ok = (rel >= w_lo - tol) & (rel <= w_hi + tol) & np.isfinite(ev.series[metric])
        if ev.colliding is not None:
            ok &= ~ev.colliding
        vals.extend(ev.series[metric][ok])
    return np.array(vals, float)


def negative_samples(events, metric: str) -> np.ndarray:
    v = np.array([ev.event_max(metric) for ev in events], float)
    return v[np.isfinite(v)]


def wlt_records(crash_events, metric: str, thetas: dict, tol: float = 1e-6) -> list:
    """WLT per crash case and percentile; ``t_m`` is the last valid precollision frame."""
    out = []
    for ev in crash_events:
        valid = ev.times < ev.impact_time - tol
        if ev.colliding is not None:
            valid &= ~ev.colliding
        if not valid.any():
            continue
        idx = np.flatnonzero(valid)
        t, r = ev.times[idx], ev.series[metric][idx]
        for p, theta in thetas.items():
            out.append(WltRecord(ev.event_id, p, theta, warning_lead_time(t, r, theta)))
    return out
