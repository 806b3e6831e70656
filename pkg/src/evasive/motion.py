"""Short-horizon extrapolation of road users under constant velocity (CV) and
constant turn rate and velocity (CTRV)."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .geometry import Obb

YAW_EPS = 1e-6  # rad/s; below this CTRV falls back to the straight-line form


class MotionModel(str, enum.Enum):
    CV = "CV"
    CTRV = "CTRV"


CV, CTRV = MotionModel.CV, MotionModel.CTRV


@dataclass(frozen=True)
class RoadUserState:
    position: tuple
    speed: float
    heading: float
    yaw_rate: float = 0.0
    length: float = 4.5
    width: float = 1.8
    class_label: str = "car"
    timestamp: float = 0.0

    def __post_init__(self):
        pos = tuple(float(x) for x in self.position)
        object.__setattr__(self, "position", pos)
        vals = (*pos, self.speed, self.heading, self.yaw_rate, self.length, self.width, self.timestamp)
        if len(pos) != 2 or not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite road-user state: {self!r}")
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        if not (self.length > 0 and self.width > 0):
            raise ValueError("length and width must be positive")

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.heading), math.sin(self.heading)])

    def footprint(self, pose: "Pose | None" = None) -> Obb:
        if pose is None:
            return Obb(self.position, self.heading, self.length, self.width)
        return Obb(pose.position, pose.heading, self.length, self.width)

    def replace(self, **kw) -> "RoadUserState":
        return replace(self, **kw)


class Pose(NamedTuple):
    position: tuple
    heading: float


def extrapolate_many(state: RoadUserState, model: MotionModel, s) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised extrapolation: positions (N, 2) and headings (N,) at offsets ``s``."""
    s = np.asarray(s, dtype=float)
    x0, y0 = state.position
    th, v = state.heading, state.speed
    w = state.yaw_rate if model == CTRV else 0.0
    if abs(w) < YAW_EPS:
        pos = np.stack([x0 + v * math.cos(th) * s, y0 + v * math.sin(th) * s], axis=-1)
        return pos, np.full(s.shape, th)
    th_s = th + w * s
    r = v / w
    pos = np.stack([x0 + r * (np.sin(th_s) - math.sin(th)),
                    y0 + r * (math.cos(th) - np.cos(th_s))], axis=-1)
    return pos, th_s


def extrapolate(state: RoadUserState, model: MotionModel, s: float) -> Pose:
    if s < 0:
        raise ValueError("extrapolation offset must be >= 0")
    pos, hd = extrapolate_many(state, MotionModel(model), np.array([s]))
    return Pose((float(pos[0, 0]), float(pos[0, 1])), float(hd[0]))


def time_grid(horizon: float, dt: float, start: float = 0.0) -> np.ndarray:
    """Samples ``start, start+dt, ...`` up to ``horizon``, with ``horizon`` always included."""
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    n = int(math.floor((horizon - start) / dt + 1e-9))
    s = start + dt * np.arange(n + 1)
    if horizon - s[-1] > 1e-9:
        s = np.append(s, horizon)
    return s[s > 0] if start > 0 else s


class RelativeSample(NamedTuple):
    s: float
    relative_position: tuple
    pose_a: Pose
    pose_b: Pose


def relative_trajectory(a: RoadUserState, b: RoadUserState, model_a, model_b,
                        horizon: float, dt: float) -> list[RelativeSample]:
    """Unperturbed relative trajectory ``p_a - p_b`` sampled on ``[0, horizon]``."""
    s = time_grid(horizon, dt)
    pa, ha = extrapolate_many(a, MotionModel(model_a), s)
    pb, hb = extrapolate_many(b, MotionModel(model_b), s)
    rel = pa - pb
    return [RelativeSample(float(si), (float(r[0]), float(r[1])),
                           Pose((float(p[0]), float(p[1])), float(h)),
                           Pose((float(q[0]), float(q[1])), float(g)))
            for si, r, p, h, q, g in zip(s, rel, pa, ha, pb, hb)]
