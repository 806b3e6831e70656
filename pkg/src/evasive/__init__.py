"""Evasive acceleration (EA) and baseline surrogate safety metrics."""
from .ea_core import EaConfig, EaResult, ea, ea_bruteforce
from .ea_cv import ea_cv_value
from .ea_ctrv import NumericEaParams, ea_numeric
from .metrics import MetricId, compute_metrics, risk_orient
from .motion import CTRV, CV, MotionModel, RoadUserState

__version__ = "0.1.0"

__all__ = ["CTRV", "CV", "EaConfig", "EaResult", "MetricId", "MotionModel", "NumericEaParams", "RoadUserState",
           "compute_metrics", "ea", "ea_bruteforce", "ea_cv_value", "ea_numeric", "risk_orient"]
