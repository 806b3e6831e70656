"""Run configuration: a flat, commented ``key = value`` text file.

Every key has a default, so an empty file is a valid configuration. Unknown
keys and unparsable values raise :class:`ConfigError`. A resolved
configuration is written next to every run's outputs and reads back to an
equal object.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .data import LEAD_GRID, SchemaMap, ScreenParams
from .ea_core import EaConfig
from .ea_ctrv import NumericEaParams
from .metrics import METRIC_IDS, MetricId, MetricParams


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class RunConfig:
    # inputs
    tracks: str = ""
    crashes: str = ""
    resample_hz: float = 0.0
    schema_track_id: str = "track_id"
    schema_time: str = "time"
    schema_frame: str = ""
    schema_frame_rate: float = 0.0
    schema_x: str = "x"
    schema_y: str = "y"
    schema_vx: str = ""
    schema_vy: str = ""
    schema_speed: str = "speed"
    schema_heading: str = "heading"
    schema_yaw_rate: str = "yaw_rate"
    schema_length: str = "length"
    schema_width: str = "width"
    schema_class: str = "class"
    schema_case_id: str = "case_id"
    schema_impact_time: str = "impact_time"
    schema_delimiter: str = ","
    schema_default_length: float = 4.5
    schema_default_width: float = 1.8
    # evasive acceleration
    horizon: float = 7.0
    metrics: tuple = tuple(m.value for m in METRIC_IDS)
    ea_stations: int = 64
    ea_clearance: float = 0.0
    ea_dt: float = 0.05
    ea_a_max: float = 100.0
    ea_coarse_deg: float = 5.0
    ea_refine_deg: tuple = (0.5, 0.05)
    drac2d_max: float = 100.0
    risk_cap: float = 100.0
    # screening
    screen_time_threshold: float = 5.0
    screen_distance_threshold: float = 50.0
    # experiments
    percentiles: tuple = (90.0, 95.0, 99.0, 99.5)
    lead_windows: tuple = (-0.5, -1.0, -1.5, -2.0)
    lead_grid: tuple = LEAD_GRID
    align_tol: float = 0.03
    folds: int = 5
    bootstrap_n: int = 1000
    bootstrap_level: float = 0.95
    seed: int = 0
    # synthetic corpus and benchmark
    synth_crashes: int = 40
    synth_noncrashes: int = 120
    synth_rate_hz: float = 10.0
    bench_frames: int = 1000

    def __post_init__(self):
        try:
            for m in self.metrics:
                MetricId(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.metrics:
            raise ConfigError("metrics must not be empty")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not all(0 < p < 100 for p in self.percentiles):
            raise ConfigError("percentiles must lie in (0, 100)")
        if not all(-3.0 - 1e-9 <= w < -0.1 for w in self.lead_windows):
            raise ConfigError("lead windows must start in [-3.0, -0.1)")
        try:
            self.ea_config()
            self.metric_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- views onto the owning modules' parameter objects

    def schema(self) -> SchemaMap:
        kw = {f.name[len("schema_"):]: getattr(self, f.name) for f in fields(self) if f.name.startswith("schema_")}
        kw["class_label"] = kw.pop("class")
        return SchemaMap(**kw)

    def ea_config(self) -> EaConfig:
        steps = [math.radians(self.ea_coarse_deg)] + [math.radians(d) for d in self.ea_refine_deg]
        numeric = NumericEaParams(dt=self.ea_dt, a_max=self.ea_a_max, coarse_step=steps[0],
                                  refine_levels=tuple(zip(steps[:-1], steps[1:])))
        return EaConfig(horizon=self.horizon, stations=self.ea_stations, clearance=self.ea_clearance,
                        numeric=numeric)

    def metric_params(self) -> MetricParams:
        return MetricParams(horizon=self.horizon, drac2d_max=self.drac2d_max, risk_cap=self.risk_cap)

    def screen_params(self) -> ScreenParams:
        return ScreenParams(self.screen_time_threshold, self.screen_distance_threshold, self.horizon)


# one-line annotations written into resolved config files
_NOTES = {
    "tracks": "trajectory CSV of the naturalistic (noncrash) corpus",
    "crashes": "trajectory CSV of crash cases; needs case_id and impact_time columns",
    "resample_hz": "0 keeps the native frame rate",
    "schema_frame": "frame counter column, used with schema_frame_rate when time is absent",
    "schema_vx": "velocity columns; speed and heading are derived from them when given",
    "horizon": "prediction horizon T in seconds",
    "metrics": "metrics to compute; EA first is conventional",
    "ea_stations": "time stations per barrier sweep in the constant-velocity solver",
    "ea_clearance": "extra margin (m) added around the collision set",
    "ea_dt": "window length (s) of the swept-interval evaluation for turning models",
    "ea_a_max": "magnitude bound (m/s^2); directions needing more are infeasible",
    "ea_coarse_deg": "coarse direction spacing of the numerical search",
    "ea_refine_deg": "successively finer direction spacings around the best direction",
    "drac2d_max": "search bound (m/s^2) for DRAC2D",
    "risk_cap": "oriented score assigned to unbounded acceleration-type values",
    "screen_time_threshold": "keep pairs whose TTC, ACT or TTC2D reaches this value (s)",
    "screen_distance_threshold": "keep pairs whose bounding-box distance reaches this value (m)",
    "percentiles": "event-maximum percentiles used as warning thresholds (linear interpolation)",
    "lead_windows": "start of each precrash window of positive frames; windows end at -0.1 s",
    "lead_grid": "lead times (s) of the common episode axis",
    "align_tol": "nearest-frame tolerance (s) when placing frames on the lead grid",
    "folds": "case-level stratified folds for out-of-fold calibration",
    "bootstrap_n": "case-level bootstrap replicates",
    "bootstrap_level": "confidence level of bootstrap intervals",
    "seed": "seed of fold shuffling, bootstrap and synthetic generation",
    "synth_crashes": "crash cases in the synthetic corpus",
    "synth_noncrashes": "noncrash scenarios in the synthetic corpus",
    "bench_frames": "frames in the benchmark suite",
}


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(name: str, default, text: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [t.strip() for t in text.split(",") if t.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(t) for t in items)
            return tuple(items)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def loads(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    defaults = {f.name: getattr(base, f.name) for f in fields(base)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = "\t" if key == "schema_delimiter" and value == "\\t" else _parse(key, defaults[key], value)
    return replace(base, **updates)


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            return loads(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def dumps(cfg: RunConfig) -> str:
    lines = ["# resolved run configuration"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        text = "\\t" if f.name == "schema_delimiter" and v == "\t" else _fmt(v)
        note = _NOTES.get(f.name)
        if note:
            lines.append(f"# {note}")
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def dump(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cfg))
