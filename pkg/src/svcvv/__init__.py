"""Subjective-vertical-conflict motion sickness model with image-derived visual vertical."""

from svcvv.svc_model import CONVENTIONAL, SVC_VV, ModelParams, simulate
from svcvv.vv_estimator import VvEstimate, VvEstimator, estimate_frame

__all__ = [
    "CONVENTIONAL",
    "SVC_VV",
    "ModelParams",
    "simulate",
    "VvEstimate",
    "VvEstimator",
    "estimate_frame",
]

__version__ = "0.1.0"
