"""Trajectory ingestion, potential-conflict screening and episode alignment."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .ea_core import EaConfig
from .metrics import METRIC_IDS, MetricId, MetricParams, act, bbox_distance, compute_metrics, ttc2d, ttc_drac
from .motion import RoadUserState

log = logging.getLogger(__name__)

RATE_TOL = 1e-6
LEAD_GRID = tuple(round(-3.0 + 0.1 * i, 1) for i in range(30))  # -3.0 ... -0.1


class InputError(ValueError):
    """Malformed or inconsistent trajectory input."""


@dataclass
class Track:
    track_id: str
    class_label: str
    frames: list
    yaw_source: str = "column"  # or "heading_difference" when the input had no usable yaw rate

    def __post_init__(self):
        if len(self.frames) < 2:
            raise InputError(f"track {self.track_id}: needs at least 2 frames")
        t = self.times
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise InputError(f"track {self.track_id}: timestamps not strictly increasing")
        if np.ptp(dt) > RATE_TOL:
            raise InputError(f"track {self.track_id}: non-uniform frame rate")

    @property
    def times(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames])

    @property
    def rate_hz(self) -> float:
        t = self.times
        return (len(t) - 1) / (t[-1] - t[0])

    @property
    def span(self) -> tuple:
        return self.frames[0].timestamp, self.frames[-1].timestamp


@dataclass(frozen=True)
class SchemaMap:
    """Column names of a delimited trajectory file. Empty string means absent."""
    track_id: str = "track_id"
    time: str = "time"
    frame: str = ""
    frame_rate: float = 0.0        # Hz; needed only when time comes from a frame counter
    x: str = "x"
    y: str = "y"
    vx: str = ""
    vy: str = ""
    speed: str = "speed"
    heading: str = "heading"
    yaw_rate: str = "yaw_rate"
    length: str = "length"
    width: str = "width"
    class_label: str = "class"
    case_id: str = "case_id"
    impact_time: str = "impact_time"
    delimiter: str = ","
    default_length: float = 4.5
    default_width: float = 1.8


def _num(row, col):
    if not col or col not in row or row[col] in ("", None):
        return None
    return float(row[col])


def _require(header, schema: SchemaMap):
    need = [schema.track_id, schema.x, schema.y]
    need.append(schema.time or schema.frame)
    if not (schema.vx and schema.vy and schema.vx in header and schema.vy in header):
        need += [schema.speed, schema.heading]
    missing = [c for c in need if c not in header]
    if not schema.time and schema.frame and schema.frame_rate <= 0:
        raise InputError("frame column given without a positive frame_rate")
    if missing:
        raise InputError(f"missing mandatory column(s): {', '.join(missing)}")


def read_rows(path, schema: SchemaMap = SchemaMap()):
    """Rows grouped by track id as dicts of floats, plus the count of rejected rows."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh, delimiter=schema.delimiter)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        _require(reader.fieldnames, schema)
        use_v = bool(schema.vx and schema.vy and schema.vx in reader.fieldnames)
        groups: dict = {}
        rejected = 0
        for row in reader:
            try:
                t = _num(row, schema.time) if schema.time else _num(row, schema.frame) / schema.frame_rate
                x, y = _num(row, schema.x), _num(row, schema.y)
                if use_v:
                    vx, vy = _num(row, schema.vx), _num(row, schema.vy)
                    speed, heading = math.hypot(vx, vy), math.atan2(vy, vx)
                else:
                    speed, heading = _num(row, schema.speed), _num(row, schema.heading)
                vals = (t, x, y, speed, heading)
            except (TypeError, ValueError):
                rejected += 1
                continue
            if not all(v is not None and math.isfinite(v) for v in vals):
                rejected += 1
                continue
            rec = dict(t=t, x=x, y=y, speed=speed, heading=heading,
                       yaw_rate=_num(row, schema.yaw_rate),
                       length=_num(row, schema.length) or schema.default_length,
                       width=_num(row, schema.width) or schema.default_width,
                       cls=row.get(schema.class_label) or "car",
                       case=row.get(schema.case_id, ""),
                       impact=_num(row, schema.impact_time))
            groups.setdefault(row[schema.track_id], []).append(rec)
    if rejected:
        log.warning("%s: rejected %d row(s) with missing or non-finite values", path, rejected)
    return groups, rejected


def _build_track(tid, recs, resample_hz, still_speed=1e-6) -> Track:
    t = np.array([r["t"] for r in recs])
    if np.any(np.diff(t) <= 0):
        raise InputError(f"track {tid}: non-monotone timestamps")
    x = np.array([r["x"] for r in recs])
    y = np.array([r["y"] for r in recs])
    v = np.array([r["speed"] for r in recs])
    h = np.array([r["heading"] for r in recs])
    # a standing road user has no velocity direction; hold the last one
    for i in range(1, len(h)):
        if v[i] < still_speed:
            h[i] = h[i - 1]
    h = np.unwrap(h)
    w = np.array([np.nan if r["yaw_rate"] is None else r["yaw_rate"] for r in recs])
    yaw_source = "column"
    if np.isnan(w).any():
        w = np.gradient(h, t) if len(t) > 1 else np.zeros_like(t)
        yaw_source = "heading_difference"
    if resample_hz:
        step = 1.0 / resample_hz
        k0 = math.ceil(t[0] / step - 1e-9)
        k1 = math.floor(t[-1] / step + 1e-9)
        tn = np.arange(k0, k1 + 1) * step
        x, y, v, h, w = (np.interp(tn, t, q) for q in (x, y, v, h, w))
        t = tn
    r0 = recs[0]
    frames = [RoadUserState((float(xi), float(yi)), float(vi), float(hi), float(wi), r0["length"], r0["width"],
                            r0["cls"], float(ti))
              for ti, xi, yi, vi, hi, wi in zip(t, x, y, v, h, w)]
    return Track(str(tid), r0["cls"], frames, yaw_source)


def ingest(path, schema_map: SchemaMap = SchemaMap(), resample_hz: Optional[float] = None) -> list:
    """Normalised tracks from a delimited file, optionally resampled to ``resample_hz``."""
    groups, _ = read_rows(path, schema_map)
    return [_build_track(tid, recs, resample_hz) for tid, recs in sorted(groups.items())]


@dataclass
class CrashCase:
    case_id: str
    track_a: Track
    track_b: Track
    impact_time: float


def ingest_crashes(path, schema_map: SchemaMap = SchemaMap(), resample_hz: Optional[float] = None) -> list:
    """Crash cases: the trajectory schema plus ``case_id`` and a per-case ``impact_time``."""
    groups, _ = read_rows(path, schema_map)
    cases: dict = {}
    for tid, recs in sorted(groups.items()):
        cid = recs[0]["case"]
        impacts = {r["impact"] for r in recs}
        if not cid or len(impacts) != 1 or None in impacts:
            raise InputError(f"track {tid}: crash rows need one case_id and one impact_time")
        cases.setdefault(cid, []).append((_build_track(tid, recs, resample_hz), impacts.pop()))
    out = []
    for cid, items in sorted(cases.items()):
        if len(items) != 2 or items[0][1] != items[1][1]:
            raise InputError(f"crash case {cid}: expected two tracks sharing one impact_time")
        out.append(CrashCase(cid, items[0][0], items[1][0], items[0][1]))
    return out


def write_tracks(path, tracks: Sequence[Track], case_of: Optional[dict] = None,
                 impact_of: Optional[dict] = None) -> None:
    """Write tracks in the default schema (the reader's inverse)."""
    cols = ["track_id", "time", "x", "y", "speed", "heading", "yaw_rate", "length", "width", "class"]
    if case_of is not None:
        cols += ["case_id", "impact_time"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for tr in tracks:
            for f in tr.frames:
                row = [tr.track_id, repr(f.timestamp), repr(f.position[0]), repr(f.position[1]),
                       repr(f.speed), repr(f.heading), repr(f.yaw_rate), repr(f.length), repr(f.width),
                       tr.class_label]
                if case_of is not None:
                    row += [case_of[tr.track_id], repr(impact_of[tr.track_id])]
                w.writerow(row)


# --------------------------------------------------------------------------- screening

@dataclass(frozen=True)
class ScreenParams:
    time_threshold: float = 5.0    # s; TTC, ACT or TTC2D at or below it in some frame
    distance_threshold: float = 50.0  # m; bounding-box distance at or below it in some frame
    horizon: float = 7.0
    time_tol: float = 1e-6


@dataclass
class ConflictEvent:
    event_id: str
    track_ids: tuple
    times: np.ndarray
    frame_range: tuple
    distance: np.ndarray
    series: dict = field(default_factory=dict)     # metric id -> (n,) oriented risk, NaN if undefined
    raw: dict = field(default_factory=dict)
    colliding: Optional[np.ndarray] = None
    impact_time: Optional[float] = None
    criteria: dict = field(default_factory=dict)

    def event_max(self, metric) -> float:
        """Maximum defined risk over the event (NaN if none)."""
        r = self.series[MetricId(metric).value]
        ok = np.isfinite(r)
        if self.colliding is not None:
            ok &= ~self.colliding
        return float(np.max(r[ok])) if ok.any() else math.nan


def common_frames(ta: Track, tb: Track, tol: float = 1e-6):
    """Indices into each track of frames sharing a timestamp."""
    t1, t2 = ta.times, tb.times
    j = np.searchsorted(t2, t1 - tol)
    j = np.minimum(j, len(t2) - 1)
    ok = np.abs(t2[j] - t1) <= tol
    return np.flatnonzero(ok), j[ok]


def _centre_gap_bound(ta, tb, ia, ib):
    pa = np.array([ta.frames[i].position for i in ia])
    pb = np.array([tb.frames[i].position for i in ib])
    rad = 0.5 * (math.hypot(ta.frames[0].length, ta.frames[0].width)
                 + math.hypot(tb.frames[0].length, tb.frames[0].width))
    return np.linalg.norm(pa - pb, axis=1) - rad


def screen_pair(ta: Track, tb: Track, params: ScreenParams = ScreenParams()):
    """Screening verdict for one pair: (kept, criteria dict, common frame indices)."""
    ia, ib = common_frames(ta, tb, params.time_tol)
    crit = {"co_present": len(ia) > 0, "time_metric": False, "distance": False}
    if not crit["co_present"]:
        return False, crit, (ia, ib)
    # centre distance minus both circumradii bounds the box distance from below
    if np.min(_centre_gap_bound(ta, tb, ia, ib)) > params.distance_threshold:
        return False, crit, (ia, ib)
    for i, j in zip(ia, ib):
        a, b = ta.frames[i], tb.frames[j]
        if not crit["distance"] and bbox_distance(a, b) <= params.distance_threshold:
            crit["distance"] = True
        if not crit["time_metric"]:
            td = ttc_drac(a, b).ttc
            if (td <= params.time_threshold or act(a, b) <= params.time_threshold
                    or ttc2d(a, b, params.horizon) <= params.time_threshold):
                crit["time_metric"] = True
        if crit["distance"] and crit["time_metric"]:
            break
    return all(crit.values()), crit, (ia, ib)


def build_event(ta: Track, tb: Track, ia, ib, metrics=METRIC_IDS, mparams: MetricParams = MetricParams(),
                ea_config: Optional[EaConfig] = None, impact_time: Optional[float] = None,
                event_id: Optional[str] = None) -> ConflictEvent:
    """Event over the common frames with per-frame metric series."""
    ia, ib = np.asarray(ia), np.asarray(ib)
    if impact_time is not None:
        keep = np.array([ta.frames[i].timestamp <= impact_time + 1e-9 for i in ia], bool)
        ia, ib = ia[keep], ib[keep]
    times = np.array([ta.frames[i].timestamp for i in ia])
    dist = np.array([bbox_distance(ta.frames[i], tb.frames[j]) for i, j in zip(ia, ib)])
    ids = [MetricId(m).value for m in metrics]
    series = {m: np.full(len(ia), np.nan) for m in ids}
    raw = {m: np.full(len(ia), np.nan) for m in ids}
    colliding = np.zeros(len(ia), bool)
    for k, (i, j) in enumerate(zip(ia, ib)):
        fm = compute_metrics(ta.frames[i], tb.frames[j], ids, mparams, ea_config)
        colliding[k] = fm.already_colliding
        for m, s in fm.samples.items():
            series[m.value][k] = s.risk if s.defined else np.nan
            raw[m.value][k] = s.raw
    eid = event_id or f"{ta.track_id}|{tb.track_id}"
    fr = (int(ia[0]), int(ia[-1])) if len(ia) else (0, -1)
    return ConflictEvent(eid, (ta.track_id, tb.track_id), times, fr, dist, series, raw, colliding, impact_time)


def screen_conflicts(tracks: Sequence[Track], params: ScreenParams = ScreenParams(), metrics=(),
                     mparams: MetricParams = MetricParams(), ea_config: Optional[EaConfig] = None,
                     counts: Optional[dict] = None) -> list:
    """Potential conflicts among all co-present pairs, in a canonical (sorted id) order.

    If ``counts`` is given it receives the number of pairs examined and the
    number meeting each criterion.
    """
    ordered = sorted(tracks, key=lambda t: t.track_id)
    tally = {"pairs": 0, "co_present": 0, "time_metric": 0, "distance": 0, "kept": 0}
    out = []
    for ta, tb in combinations(ordered, 2):
        tally["pairs"] += 1
        s1, e1 = ta.span
        s2, e2 = tb.span
        if min(e1, e2) < max(s1, s2) - params.time_tol:
            continue
        kept, crit, (ia, ib) = screen_pair(ta, tb, params)
        for k, v in crit.items():
            tally[k] += bool(v)
        if kept:
            tally["kept"] += 1
            ev = build_event(ta, tb, ia, ib, metrics, mparams, ea_config)
            ev.criteria = crit
            out.append(ev)
    if counts is not None:
        counts.update(tally)
    return out


def crash_event(case: CrashCase, metrics=METRIC_IDS, mparams: MetricParams = MetricParams(),
                ea_config: Optional[EaConfig] = None) -> ConflictEvent:
    ia, ib = common_frames(case.track_a, case.track_b)
    return build_event(case.track_a, case.track_b, ia, ib, metrics, mparams, ea_config,
                       impact_time=case.impact_time, event_id=case.case_id)


# --------------------------------------------------------------------------- episodes

@dataclass(frozen=True)
class Episode:
    case_id: str
    outcome: str                  # "crash" or "noncrash"
    anchor_time: float
    samples: dict                 # lead time -> {metric: risk}
    complete: bool


def nearest_frames(times: np.ndarray, targets: np.ndarray, tol: float = 0.03) -> np.ndarray:
    """Index of the nearest frame to each target, -1 when none lies within ``tol``."""
    times = np.asarray(times, float)
    targets = np.asarray(targets, float)
    if len(times) == 1:
        return np.where(np.abs(times[0] - targets) <= tol + 1e-9, 0, -1)
    j = np.clip(np.searchsorted(times, targets), 1, max(len(times) - 1, 1))
    left = np.maximum(j - 1, 0)
    pick = np.where(np.abs(times[left] - targets) <= np.abs(times[j] - targets), left, j)
    return np.where(np.abs(times[pick] - targets) <= tol + 1e-9, pick, -1)


def align_episode(event: ConflictEvent, outcome: str, grid: Sequence[float] = LEAD_GRID,
                  tol: float = 0.03) -> Episode:
    """Place an event on the common lead-time axis.

    Crashes are anchored at their impact time, everything else at the first
    frame of minimum bounding-box distance.
    """
    if outcome not in ("crash", "noncrash"):
        raise ValueError(f"unknown outcome {outcome!r}")
    if outcome == "crash":
        if event.impact_time is None:
            raise ValueError("crash episodes need an impact time")
        anchor = float(event.impact_time)
    else:
        if event.impact_time is not None:
            raise ValueError("noncrash episodes carry no impact time")
        anchor = float(event.times[int(np.argmin(event.distance))])
    grid = np.asarray(grid, float)
    idx = nearest_frames(event.times, anchor + grid, tol) if len(event.times) else np.full(len(grid), -1)
    samples = {}
    for tau, i in zip(grid, idx):
        if i < 0:
            continue
        samples[float(tau)] = {m: float(v[i]) for m, v in event.series.items()}
    return Episode(event.event_id, outcome, anchor, samples, len(samples) == len(grid))


# --------------------------------------------------------------------------- serialisation

def _enc(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _dec(x):
    return float(x)


def event_to_dict(ev: ConflictEvent) -> dict:
    return {
        "event_id": ev.event_id,
        "track_ids": list(ev.track_ids),
        "frame_range": list(ev.frame_range),
        "impact_time": None if ev.impact_time is None else _enc(ev.impact_time),
        "criteria": dict(sorted(ev.criteria.items())),
        "times": [_enc(t) for t in ev.times],
        "distance": [_enc(d) for d in ev.distance],
        "colliding": [bool(c) for c in (ev.colliding if ev.colliding is not None else [])],
        "risk": {m: [_enc(v) for v in s] for m, s in sorted(ev.series.items())},
        "raw": {m: [_enc(v) for v in s] for m, s in sorted(ev.raw.items())},
    }


def event_from_dict(d: dict) -> ConflictEvent:
    arr = lambda xs: np.array([_dec(x) for x in xs], float)  # noqa: E731
    return ConflictEvent(d["event_id"], tuple(d["track_ids"]), arr(d["times"]), tuple(d["frame_range"]),
                         arr(d["distance"]), {m: arr(v) for m, v in d["risk"].items()},
                         {m: arr(v) for m, v in d.get("raw", {}).items()},
                         np.array(d.get("colliding", []), bool) if d.get("colliding") else
                         np.zeros(len(d["times"]), bool),
                         None if d["impact_time"] is None else _dec(d["impact_time"]), d.get("criteria", {}))


def save_events(path, events: Iterable[ConflictEvent]) -> None:
    with open(path, "w") as fh:
        json.dump([event_to_dict(e) for e in events], fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_events(path) -> list:
    try:
        with open(path) as fh:
            return [event_from_dict(d) for d in json.load(fh)]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot read events from {path}: {exc}") from exc


def episodes_table(episodes: Sequence[Episode], metrics: Sequence[str]) -> list:
    """Flat rows (case_id, outcome, tau, metric values...) for statistics."""
    rows = []
    for ep in episodes:
        for tau in sorted(ep.samples):
            rows.append([ep.case_id, ep.outcome, tau] + [ep.samples[tau].get(m, math.nan) for m in metrics])
    return rows
