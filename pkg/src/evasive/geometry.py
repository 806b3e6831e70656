"""Planar rigid-body footprints: oriented boxes, convex polygons, overlap and distance.

All coordinates are metres in a right-handed frame, headings in radians
counter-clockwise from +x. Boundary contact counts as overlap everywhere in
this module (closed sets).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TOL = 1e-9


def rot90(v: np.ndarray) -> np.ndarray:
    """Rotate 2-vector(s) by +90 degrees."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class Obb:
    center: tuple
    heading: float
    length: float
    width: float

    def __post_init__(self):
        c = tuple(float(x) for x in self.center)
        if len(c) != 2 or not all(math.isfinite(x) for x in c):
            raise ValueError(f"center must be a finite 2-vector, got {self.center!r}")
        object.__setattr__(self, "center", c)
        if not math.isfinite(self.heading):
            raise ValueError("heading must be finite")
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"degenerate box: length={self.length}, width={self.width}")

    @property
    def axes(self) -> np.ndarray:
        """Unit axes as rows: [along heading, left of heading]."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, s], [-s, c]])

    @property
    def half_extents(self) -> np.ndarray:
        return np.array([0.5 * self.length, 0.5 * self.width])

    def moved(self, center=None, heading=None) -> "Obb":
        return Obb(self.center if center is None else center,
                   self.heading if heading is None else heading,
                   self.length, self.width)


def _merge_collinear(pts: np.ndarray) -> np.ndarray:
    keep = []
    n = len(pts)
    for i in range(n):
        p, q, r = pts[i - 1], pts[i], pts[(i + 1) % n]
        cross = (q[0] - p[0]) * (r[1] - q[1]) - (q[1] - p[1]) * (r[0] - q[0])
        scale = max(1.0, np.abs(q - p).max(), np.abs(r - q).max())
        if cross > 1e-12 * scale * scale:
            keep.append(q)
    return np.array(keep)


@dataclass(frozen=True)
class ConvexPolygon:
    """Strictly convex polygon, vertices counter-clockwise."""

    vertices: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(v) >= 3:
            area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
            if area2 < 0:
                v = v[::-1]
            v = _merge_collinear(v)
        if len(v) < 3:
            raise ValueError("polygon needs at least 3 non-collinear vertices")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    def halfplanes(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normals ``n`` and offsets ``c`` with interior ``n @ x <= c``."""
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        return n, np.einsum("ij,ij->i", n, v)

    def contains(self, p, tol: float = TOL) -> bool:
        n, c = self.halfplanes()
        return bool(np.all(n @ np.asarray(p, dtype=float) <= c + tol))

    def contains_many(self, pts, tol: float = TOL) -> np.ndarray:
        n, c = self.halfplanes()
        pts = np.asarray(pts, dtype=float)
        return np.all(pts @ n.T <= c + tol, axis=-1)

    def transformed(self, origin, x_axis) -> "ConvexPolygon":
        """Coordinates of this polygon in the frame (origin, x_axis, rot90(x_axis))."""
        x_axis = np.asarray(x_axis, dtype=float)
        rel = self.vertices - np.asarray(origin, dtype=float)
        return ConvexPolygon(np.stack([rel @ x_axis, rel @ rot90(x_axis)], axis=1))


def obb_corner_array(obb: Obb) -> np.ndarray:
    ax = obb.axes
    hl, hw = obb.half_extents
    c = np.asarray(obb.center)
    signs = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
    return c + signs[:, :1] * hl * ax[0] + signs[:, 1:] * hw * ax[1]


def obb_corners(obb: Obb) -> ConvexPolygon:
    return ConvexPolygon(obb_corner_array(obb))


def _projection_radius(obb: Obb, n: np.ndarray) -> np.ndarray:
    ax = obb.axes
    return 0.5 * obb.length * np.abs(n @ ax[0]) + 0.5 * obb.width * np.abs(n @ ax[1])


def sat_axes(a: Obb, b: Obb) -> np.ndarray:
    return np.vstack([a.axes, b.axes])


def obb_overlap(a: Obb, b: Obb, tol: float = TOL) -> bool:
    """Separating-axis test on the four box axes; touching counts as overlap."""
    n = sat_axes(a, b)
    d = np.abs(n @ (np.asarray(a.center) - np.asarray(b.center)))
    return bool(np.all(d <= _projection_radius(a, n) + _projection_radius(b, n) + tol))


def _point_segment_dist(p: np.ndarray, s0: np.ndarray, s1: np.ndarray) -> np.ndarray:
    # p: (P, 2), segments (S, 2) -> (P, S)
    e = s1 - s0
    ee = np.einsum("ij,ij->i", e, e)
    t = np.clip(np.einsum("pij,ij->pi", p[:, None, :] - s0[None], e) / ee, 0.0, 1.0)
    closest = s0[None] + t[..., None] * e[None]
    return np.linalg.norm(p[:, None, :] - closest, axis=-1)


def polygon_distance(pa: np.ndarray, pb: np.ndarray) -> float:
    """Boundary distance between two disjoint convex polygons given as vertex arrays."""
    d1 = _point_segment_dist(pa, pb, np.roll(pb, -1, axis=0)).min()
    d2 = _point_segment_dist(pb, pa, np.roll(pa, -1, axis=0)).min()
    return float(min(d1, d2))


def obb_distance(a: Obb, b: Obb) -> float:
    if obb_overlap(a, b):
        return 0.0
    return polygon_distance(obb_corner_array(a), obb_corner_array(b))


def closest_points(a: Obb, b: Obb) -> tuple[np.ndarray, np.ndarray, float]:
    """Closest boundary points (on a, on b) and their distance, for disjoint boxes."""
    pa, pb = obb_corner_array(a), obb_corner_array(b)
    best = (None, None, math.inf)
    for src, dst, flip in ((pa, pb, False), (pb, pa, True)):
        s0, s1 = dst, np.roll(dst, -1, axis=0)
        e = s1 - s0
        t = np.clip(np.einsum("pij,ij->pi", src[:, None, :] - s0[None], e)
                    / np.einsum("ij,ij->i", e, e), 0.0, 1.0)
        q = s0[None] + t[..., None] * e[None]
        d = np.linalg.norm(src[:, None, :] - q, axis=-1)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        if d[i, j] < best[2]:
            p_src, p_dst = src[i], q[i, j]
            best = (p_dst, p_src, d[i, j]) if flip else (p_src, p_dst, d[i, j])
    return best[0], best[1], float(best[2])


def minkowski_sum(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Vertices of the Minkowski sum of two ccw convex polygons (edge merge)."""
    def start_lowest(v):
        i = np.lexsort((v[:, 0], v[:, 1]))[0]
        return np.roll(v, -i, axis=0)

    p, q = start_lowest(p), start_lowest(q)
    ep = np.roll(p, -1, axis=0) - p
    eq = np.roll(q, -1, axis=0) - q
    edges = np.vstack([ep, eq])
    ang = np.mod(np.arctan2(edges[:, 1], edges[:, 0]), 2 * math.pi)
    order = np.argsort(ang, kind="stable")
    pts = p[0] + q[0] + np.vstack([[0.0, 0.0], np.cumsum(edges[order], axis=0)[:-1]])
    return pts


def minkowski_collision_set(a: Obb, b: Obb) -> ConvexPolygon:
    """Set of relative positions ``p_a - p_b`` at which the two footprints overlap.

    Built from b's footprint summed with a's footprint reflected through its
    centre, both taken relative to their own centres.
    """
    ca = obb_corner_array(a) - np.asarray(a.center)
    cb = obb_corner_array(b) - np.asarray(b.center)
    return ConvexPolygon(minkowski_sum(cb, -ca))


def translation_overlap_interval(moving: Obb, fixed: Obb, direction) -> Optional[tuple[float, float]]:
    """Closed interval of ``m`` such that ``moving`` shifted by ``m * direction`` overlaps ``fixed``."""
    u = np.asarray(direction, dtype=float)
    n = sat_axes(moving, fixed)
    d = n @ (np.asarray(moving.center) - np.asarray(fixed.center))
    r = _projection_radius(moving, n) + _projection_radius(fixed, n)
    lo, hi = axis_intervals(d, r, n @ u)
    lo, hi = float(np.max(lo)), float(np.min(hi))
    if lo > hi + TOL:
        return None
    return lo, max(lo, hi)


def axis_intervals(d, r, un, eps: float = 1e-12):
    """Per-axis solution sets of ``|d + w * un| <= r`` as (lo, hi) arrays.

    Axes with ``un`` ~ 0 give the whole line or an empty set.
    """
    d, r, un = np.broadcast_arrays(np.asarray(d, float), np.asarray(r, float), np.asarray(un, float))
    with np.errstate(divide="ignore", invalid="ignore"):
        w1 = (-r - d) / un
        w2 = (r - d) / un
    lo = np.where(un > 0, w1, w2)
    hi = np.where(un > 0, w2, w1)
    flat = np.abs(un) <= eps
    inside = np.abs(d) <= r + TOL
    lo = np.where(flat, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(flat, np.where(inside, np.inf, -np.inf), hi)
    return lo, hi


def segment_polygon_entry(p0, p1, poly: ConvexPolygon, tol: float = TOL) -> Optional[float]:
    """Smallest ``t`` in [0, 1] with ``p0 + t (p1 - p0)`` in the polygon, or None (Cyrus-Beck)."""
    p0 = np.asarray(p0, dtype=float)
    dvec = np.asarray(p1, dtype=float) - p0
    n, c = poly.halfplanes()
    num = c + tol - n @ p0
    den = n @ dvec
    t_lo, t_hi = 0.0, 1.0
    for nu, de in zip(num, den):
        if abs(de) < 1e-15:
            if nu < 0:
                return None
        elif de > 0:
            t_hi = min(t_hi, nu / de)
        else:
            t_lo = max(t_lo, nu / de)
        if t_lo > t_hi:
            return None
    return t_lo


@dataclass(frozen=True)
class RtFrame:
    """Radial-tangential frame anchored at the current relative position."""

    origin: tuple
    radial_axis: tuple
    v_r: float

    def __post_init__(self):
        u = np.asarray(self.radial_axis, dtype=float)
        norm = np.linalg.norm(u)
        if not norm > 0:
            raise ValueError("radial axis must be nonzero")
        object.__setattr__(self, "radial_axis", tuple(u / norm))
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        if not self.v_r > 0:
            raise ValueError("relative speed must be positive")

    @property
    def tangential_axis(self) -> tuple:
        r = self.radial_axis
        return (-r[1], r[0])

    @classmethod
    def from_relative(cls, rel_pos, rel_vel) -> "RtFrame":
        v = np.asarray(rel_vel, dtype=float)
        return cls(tuple(rel_pos), tuple(v), float(np.linalg.norm(v)))

    def to_frame(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float) - np.asarray(self.origin)
        r = np.asarray(self.radial_axis)
        return np.stack([pts @ r, pts @ rot90(r)], axis=-1)

    def to_frame_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        r = np.asarray(self.radial_axis)
        return np.stack([v @ r, v @ rot90(r)], axis=-1)

    def to_world_vector(self, v_rt) -> np.ndarray:
        v_rt = np.asarray(v_rt, dtype=float)
        r = np.asarray(self.radial_axis)
        return v_rt[..., :1] * r + v_rt[..., 1:] * rot90(r)


def silhouette_many(frame_vertices: np.ndarray, stations: np.ndarray, side: str) -> np.ndarray:
    """Upper (side='up') or lower ('down') tangential extent of a ccw polygon at radial stations.

    ``frame_vertices`` are already in (R, T) coordinates. NaN where a station
    falls outside the polygon's radial extent.
    """
    v = frame_vertices
    w = np.roll(v, -1, axis=0)
    r0, r1 = v[:, 0], w[:, 0]
    s = np.asarray(stations, dtype=float)[:, None]
    lo, hi = np.minimum(r0, r1), np.maximum(r0, r1)
    span = r1 - r0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(span) > 1e-15, (s - r0) / span, 0.0)
    tv = v[:, 1] + t * (w[:, 1] - v[:, 1])
    # vertical edges contribute both endpoints
    vert = np.abs(span) <= 1e-15
    cover = (s >= lo - TOL) & (s <= hi + TOL)
    if side == "up":
        cand = np.where(cover, np.where(vert, np.maximum(v[:, 1], w[:, 1]), tv), -np.inf)
        out = cand.max(axis=1)
        return np.where(np.isfinite(out), out, np.nan)
    cand = np.where(cover, np.where(vert, np.minimum(v[:, 1], w[:, 1]), tv), np.inf)
    out = cand.min(axis=1)
    return np.where(np.isfinite(out), out, np.nan)


def polygon_silhouette(c: ConvexPolygon, frame: RtFrame, station: float, side: str) -> Optional[float]:
    """Max (up) or min (down) tangential coordinate of ``c`` at a radial station of ``frame``."""
    if side not in ("up", "down"):
        raise ValueError(f"side must be 'up' or 'down', got {side!r}")
    fv = frame.to_frame(c.vertices)
    val = silhouette_many(fv, np.array([station]), side)[0]
    return None if np.isnan(val) else float(val)


def rigid_transform(points, angle: float, shift: Sequence[float]) -> np.ndarray:
    ca, sa = math.cos(angle), math.sin(angle)
    rot = np.array([[ca, -sa], [sa, ca]])
    return np.asarray(points, dtype=float) @ rot.T + np.asarray(shift, dtype=float)
