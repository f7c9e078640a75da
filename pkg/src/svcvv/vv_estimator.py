"""Per-frame visual-vertical (VV) estimation from a head-mounted camera image.

The frame is reduced to a magnitude-weighted histogram of folded gradient
angles. The three strongest integer-degree bins inside [30, 150] give a raw
angle, which is then blended with the previous frame's estimate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import cv2
import numpy as np

from svcvv import imgproc

G_NORM = 9.81
N_BINS = 180
BAND_LO = 30
BAND_HI = 150
BAND_LEN = BAND_HI - BAND_LO + 1  # 121 bins, inclusive
MAG_CUTOFF = 0.25
SMOOTH_NEW = 0.7
SMOOTH_PREV = 0.3
THETA_INIT = 90.0


class NoEdgeFrame(Exception):
    """No gradient energy inside the [30, 150] degree band."""


@dataclass(frozen=True)
class VvEstimate:
    theta_vv: float
    vv: np.ndarray
    frame_index: int = 0


@dataclass
class VvEstimatorState:
    theta_prev: float = THETA_INIT


def weighted_histogram(theta: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Sum magnitudes into 180 one-degree bins, ``floor(angle)`` picks the bin."""
    theta = np.asarray(theta, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if theta.shape != m.shape:
        raise ValueError(f"angle and magnitude shapes differ: {theta.shape} vs {m.shape}")
    mask = m > 0
    bins = np.floor(theta[mask]).astype(np.intp)
    if bins.size and (bins.min() < 0 or bins.max() >= N_BINS):
        raise ValueError("angles must be folded to [0, 180)")
    return np.bincount(bins, weights=m[mask], minlength=N_BINS).astype(np.float64)


def top3_in_band(hist: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (0..120, relative to 30 deg) of the three largest in-band bins and
    their counts normalized to sum 1. Ties go to the smaller offset."""
    band = np.asarray(hist, dtype=np.float64)[BAND_LO : BAND_HI + 1]
    total_energy = band.sum()
    if not total_energy > 0:
        raise NoEdgeFrame("all in-band histogram counts are zero")
    order = np.argsort(-band, kind="stable")[:3]
    counts = band[order]
    return order.astype(np.int64), counts / counts.sum()


def _edge_pixels(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Folded angles and cleaned magnitudes of the pixels that survive erosion (1-D)."""
    gray = imgproc.to_gray(img)
    gray = imgproc.gaussian_blur(gray)
    gray = imgproc.minmax_normalize(gray)
    gx, gy = imgproc.sobel_gradients(gray)
    m = imgproc.minmax_normalize(cv2.magnitude(gx, gy))
    m = imgproc.threshold_below(m, MAG_CUTOFF)
    m = imgproc.erode3x3(m)
    keep = np.flatnonzero(m)
    theta = imgproc.gradient_angle(gx.ravel()[keep], gy.ravel()[keep])
    return theta, m.ravel()[keep]


def edge_field(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Folded gradient angle field and cleaned, normalized magnitude for one frame.

    Angles are left at 0 wherever the magnitude was discarded.
    """
    gray = imgproc.to_gray(img)
    gray = imgproc.minmax_normalize(imgproc.gaussian_blur(gray))
    gx, gy = imgproc.sobel_gradients(gray)
    mag, ang = imgproc.magnitude_angle(gx, gy)
    m = imgproc.erode3x3(imgproc.threshold_below(imgproc.minmax_normalize(mag), MAG_CUTOFF))
    theta = np.where(m > 0, ang, 0.0)
    return theta, m


def raw_theta(img: np.ndarray) -> float | None:
    """Unsmoothed VV angle of a single frame, or None for a frame with no usable edges."""
    theta, m = _edge_pixels(img)
    try:
        offsets, weights = top3_in_band(weighted_histogram(theta, m))
    except NoEdgeFrame:
        return None
    return float(offsets @ weights) + BAND_LO


def smooth_theta(raw: float, state: VvEstimatorState) -> float:
    theta = SMOOTH_NEW * raw + SMOOTH_PREV * state.theta_prev
    state.theta_prev = theta
    return theta


def vv_vector(theta: float) -> np.ndarray:
    rad = theta * np.pi / 180.0
    return np.array([G_NORM * np.cos(rad), G_NORM * np.sin(rad), 0.0])


def estimate_frame(img: np.ndarray, state: VvEstimatorState, frame_index: int = 0) -> VvEstimate:
    raw = raw_theta(img)
    theta = state.theta_prev if raw is None else smooth_theta(raw, state)
    return VvEstimate(theta, vv_vector(theta), frame_index)


def smooth_sequence(raws: Iterable[float | None], theta0: float = THETA_INIT) -> list[VvEstimate]:
    """Ordered smoothing pass over precomputed raw angles (None holds the previous value)."""
    state = VvEstimatorState(theta0)
    out = []
    for i, raw in enumerate(raws):
        theta = state.theta_prev if raw is None else smooth_theta(raw, state)
        out.append(VvEstimate(theta, vv_vector(theta), i))
    return out


class VvEstimator:
    """Stateful estimator over an ordered frame stream."""

    def __init__(self, theta0: float = THETA_INIT):
        self.state = VvEstimatorState(theta0)
        self._count = 0

    def update(self, img: np.ndarray) -> VvEstimate:
        est = estimate_frame(img, self.state, self._count)
        self._count += 1
        return est

    def run(self, frames: Iterable[np.ndarray]) -> list[VvEstimate]:
        return [self.update(f) for f in frames]
