"""Low-level image operations used by the visual-vertical estimator.

Images are plain numpy arrays: color images are ``(H, W, 3)`` uint8, gray
images are ``(H, W)`` float64. Every filter is a correlation with edge
replication at the borders, so the frame boundary never produces gradients
of its own. OpenCV does the heavy lifting; the arithmetic is float64 throughout.
"""
from __future__ import annotations

import cv2
import numpy as np

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])
GAUSS_SIZE = 11
GAUSS_SIGMA = 2.15

SOBEL_DERIV = np.array([-1.0, 0.0, 1.0])
SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])
ERODE_KERNEL = np.ones((3, 3), np.uint8)

_BORDER = cv2.BORDER_REPLICATE


class ImageSizeError(ValueError):
    """Raised when an image is too small for a filter kernel."""


def _check_size(img: np.ndarray, minimum: int) -> None:
    h, w = img.shape[:2]
    if h < minimum or w < minimum:
        raise ImageSizeError(f"image {h}x{w} is smaller than {minimum}x{minimum}")


def _as_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D gray image, got shape {img.shape}")
    return img


def gaussian_kernel(size: int = GAUSS_SIZE, sigma: float = GAUSS_SIGMA) -> np.ndarray:
    """1-D normalized Gaussian taps; the 2-D kernel is their outer product."""
    x = np.arange(size) - (size - 1) / 2
    k = np.exp(-(x**2) / (2 * sigma**2))
    return k / k.sum()


def to_gray(img: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB image."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) color image, got shape {img.shape}")
    _check_size(img, 3)
    return img.astype(np.float64) @ GRAY_WEIGHTS


def gaussian_blur(img: np.ndarray) -> np.ndarray:
    """Separable 11x11 Gaussian blur (sigma 2.15)."""
    img = _as_gray(img)
    _check_size(img, GAUSS_SIZE)
    k = gaussian_kernel()
    return cv2.sepFilter2D(img, cv2.CV_64F, k, k, borderType=_BORDER)


def minmax_normalize(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def sobel_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(gx, gy)`` with ``gy`` pointing up (image rows run downward)."""
    img = _as_gray(img)
    _check_size(img, 3)
    gx = cv2.sepFilter2D(img, cv2.CV_64F, SOBEL_DERIV, SOBEL_SMOOTH, borderType=_BORDER)
    gy = cv2.sepFilter2D(img, cv2.CV_64F, SOBEL_SMOOTH, SOBEL_DERIV, borderType=_BORDER)
    return gx, -gy


def fold_angle(theta: np.ndarray) -> np.ndarray:
    """Fold angles in [0, 360] degrees onto [0, 180)."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.where(theta >= 180.0, theta - 180.0, theta)
    # 360 folds to 0
    return np.where(out >= 180.0, 0.0, out)


def gradient_angle(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Folded gradient direction in degrees, in [0, 180)."""
    raw = np.degrees(np.arctan2(gy, gx))
    raw = np.where(raw < 0.0, raw + 360.0, raw)
    return fold_angle(raw)


def magnitude_angle(gx: np.ndarray, gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    if gx.shape != gy.shape:
        raise ValueError(f"gradient shapes differ: {gx.shape} vs {gy.shape}")
    return np.hypot(gx, gy), gradient_angle(gx, gy)


def threshold_below(m: np.ndarray, cutoff: float) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return np.where(m < cutoff, 0.0, m)


def erode3x3(m: np.ndarray) -> np.ndarray:
    """Grayscale erosion: minimum over each 3x3 neighborhood."""
    m = _as_gray(m)
    _check_size(m, 3)
    return cv2.erode(m, ERODE_KERNEL, borderType=_BORDER)
