"""Synthetic scenes and slalom trajectories with known ground truth.

Scene geometry is expressed in head coordinates: x to the right, y up, with
angles counter-clockwise from +x. A scene with ``roll_deg = r`` has its
vertical at ``90 - r`` degrees, so a head rolled by ``phi`` (gravity at
``90 + phi``) sees a world-fixed scene rendered with ``roll_deg = -phi``.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, replace

import cv2
import numpy as np

from svcvv.vv_estimator import G_NORM

SCENE_KINDS = ("grid", "horizon", "book_occluder")
MAX_SPEED = 6.0 / 3.6  # m/s
MAX_LAT_ACC = 1.7  # m/s^2
RATE = 60.0

BG_LEVEL = 205.0
INK_LEVEL = 45.0
TINT = np.array([1.0, 0.97, 0.9])


class SpecError(ValueError):
    """Invalid scene or trajectory specification."""


@dataclass(frozen=True)
class SceneSpec:
    kind: str = "grid"
    roll_deg: float = 0.0
    line_spacing: float = 48.0
    line_width: float = 3.0
    noise_std: float = 4.0
    height: int = 360
    width: int = 640
    seed: int = 0
    background_contrast: float = 0.12  # book_occluder only
    book_fraction: tuple[float, float] = (0.8, 0.85)  # book_occluder only, (w, h)

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise SpecError(f"unknown scene kind {self.kind!r}")
        if not -60.0 <= self.roll_deg <= 60.0:
            raise SpecError(f"roll_deg {self.roll_deg} outside [-60, 60]")
        if not self.line_spacing > self.line_width >= 1:
            raise SpecError("need line_spacing > line_width >= 1")
        if self.noise_std < 0:
            raise SpecError("noise_std must be non-negative")
        if self.height < 11 or self.width < 11:
            raise SpecError("scene must be at least 11x11 pixels")


def _head_coords(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.arange(width) - (width - 1) / 2.0
    y = (height - 1) / 2.0 - np.arange(height)
    return x[None, :], y[:, None]


def _line_family(x, y, direction_deg, spacing, width):
    """Anti-aliased coverage in [0, 1] of parallel lines running along ``direction_deg``."""
    a = math.radians(direction_deg)
    # signed distance in units of spacing, folded onto [-0.5, 0.5]
    d = (-math.sin(a) / spacing) * x + (math.cos(a) / spacing) * y
    d -= np.rint(d)
    np.abs(d, out=d)
    d *= -spacing
    d += width / 2.0 + 0.5
    return np.clip(d, 0.0, 1.0, out=d)


def _grid(x, y, roll, spacing, width):
    horiz = _line_family(x, y, -roll, spacing, width)
    vert = _line_family(x, y, 90.0 - roll, spacing, width)
    return np.maximum(horiz, vert)


def _horizon(x, y, roll, width):
    a = math.radians(-roll)
    d = -math.sin(a) * x + math.cos(a) * y
    ground = np.clip(0.5 - d, 0.0, 1.0) * 0.55
    band = np.clip(width + 0.5 - np.abs(d), 0.0, 1.0)
    return np.maximum(ground, band)


def _book(x, y, spec: SceneSpec):
    """Ink coverage of a head-locked page over a faint world-fixed grid."""
    ink = spec.background_contrast * _grid(x, y, spec.roll_deg, spec.line_spacing, spec.line_width)
    half_w = spec.book_fraction[0] * spec.width / 2.0
    half_h = spec.book_fraction[1] * spec.height / 2.0
    border = 6.0
    ax, ay = np.abs(x), np.abs(y)
    inside = (ax <= half_w) & (ay <= half_h)
    page = np.where(inside, 0.0, ink)
    frame = inside & ((ax > half_w - border) | (ay > half_h - border))
    page = np.where(frame, 0.85, page)
    # text rows: short horizontal strokes, locked to the head frame
    rows = (ax < half_w - 3 * border) & (ay < half_h - 3 * border)
    text = rows & (np.mod(y + 0.5, 14.0) < 2.0)
    return np.where(text, 0.5, page)


def scene_coverage(spec: SceneSpec) -> np.ndarray:
    """Noise-free ink coverage in [0, 1], shape (H, W)."""
    x, y = _head_coords(spec.height, spec.width)
    if spec.kind == "grid":
        cov = _grid(x, y, spec.roll_deg, spec.line_spacing, spec.line_width)
    elif spec.kind == "horizon":
        cov = _horizon(x, y, spec.roll_deg, spec.line_width)
    else:
        cov = _book(x, y, spec)
    return np.broadcast_to(cov, (spec.height, spec.width))


def _to_color(coverage: np.ndarray, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    gray = BG_LEVEL - (BG_LEVEL - INK_LEVEL) * coverage
    if noise_std > 0:
        gray += noise_std * rng.standard_normal(gray.shape)
    np.clip(gray, 0.0, 255.0, out=gray)
    # per-channel scale with round-to-nearest and uint8 saturation
    return cv2.merge([cv2.convertScaleAbs(gray, alpha=float(a)) for a in TINT])


def render_scene(spec: SceneSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Render an (H, W, 3) uint8 frame. Noise is drawn from ``rng`` or, if absent, from ``spec.seed``."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    return _to_color(scene_coverage(spec), spec.noise_std, rng)


def render_sequence(spec: SceneSpec, roll_deg, seed: int = 0):
    """Yield one frame per entry of ``roll_deg``; frame ``i`` draws noise from seed ``[seed, i]``."""
    for i, r in enumerate(roll_deg):
        yield render_scene(replace(spec, roll_deg=float(r)), np.random.default_rng([seed, i]))


# -- trajectories ----------------------------------------------------------------


@dataclass(frozen=True)
class TrajectorySpec:
    """Kinematic slalom: out through the pylons, U-turn, and back.

    ``max_lat_acc`` is the peak lateral acceleration used for both the weave
    and the U-turn. The passenger's head rolls by ``head_roll_gain`` degrees
    per m/s^2 of lateral acceleration. Negative gains tilt the head away from
    the turn centre (a passive passenger); about +5.8 would keep the head
    aligned with the gravito-inertial acceleration.
    """

    pylon_spacing: float = 4.0
    speed: float = 1.5
    max_lat_acc: float = 1.5
    n_pylons: int = 5
    head_roll_gain: float = -4.0
    rest_s: float = 0.5
    static_duration_s: float = 37.0  # used when speed == 0

    def __post_init__(self):
        if not 0.0 <= self.speed <= MAX_SPEED + 1e-12:
            raise SpecError(f"speed {self.speed} m/s outside [0, {MAX_SPEED:.4f}] (6 km/h)")
        if not 0.0 < self.max_lat_acc <= MAX_LAT_ACC:
            raise SpecError(f"max_lat_acc {self.max_lat_acc} outside (0, {MAX_LAT_ACC}]")
        if self.pylon_spacing <= 0 or self.n_pylons < 1:
            raise SpecError("need pylon_spacing > 0 and n_pylons >= 1")
        if self.rest_s < 0 or self.static_duration_s <= 0:
            raise SpecError("durations must be positive")
        if abs(self.head_roll_gain) * self.max_lat_acc > 60.0:
            raise SpecError("head roll would exceed 60 degrees")


def _lateral_profile(spec: TrajectorySpec, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lateral acceleration and its time derivative along the slalom."""
    v, A = spec.speed, spec.max_lat_acc
    wavelength = 2.0 * spec.pylon_spacing
    leg = (spec.n_pylons + 1) * spec.pylon_spacing / v
    w_weave = 2.0 * math.pi * v / wavelength
    # half-sine turn whose heading change integrates to pi
    turn = math.pi**2 * v / (2.0 * A)
    w_turn = math.pi / turn

    a = np.zeros_like(t)
    da = np.zeros_like(t)
    s1 = spec.rest_s
    s2 = s1 + leg
    s3 = s2 + turn
    s4 = s3 + leg
    out = (t >= s1) & (t < s2)
    uturn = (t >= s2) & (t < s3)
    back = (t >= s3) & (t < s4)
    a[out] = A * np.sin(w_weave * (t[out] - s1))
    da[out] = A * w_weave * np.cos(w_weave * (t[out] - s1))
    a[uturn] = A * np.sin(w_turn * (t[uturn] - s2))
    da[uturn] = A * w_turn * np.cos(w_turn * (t[uturn] - s2))
    a[back] = -A * np.sin(w_weave * (t[back] - s3))
    da[back] = -A * w_weave * np.cos(w_weave * (t[back] - s3))
    return a, da


def trajectory_duration(spec: TrajectorySpec) -> float:
    if spec.speed == 0:
        return spec.static_duration_s
    leg = (spec.n_pylons + 1) * spec.pylon_spacing / spec.speed
    turn = math.pi**2 * spec.speed / (2.0 * spec.max_lat_acc)
    return spec.rest_s + 2 * leg + turn


def slalom_trajectory(spec: TrajectorySpec, dt: float = 1.0 / RATE):
    """Head IMU signals along the slalom and the head roll (degrees).

    With roll ``phi`` the gravity direction in head coordinates is ``90 + phi``
    degrees; the head's roll rate enters omega_z as ``-dphi/dt`` and the
    vehicle yaw rate acts about the (tilted) world vertical.
    """
    from svcvv.dataio import ImuSeries

    n = int(round(trajectory_duration(spec) / dt))
    t = np.arange(n) * dt
    if spec.speed == 0:
        a_lat = np.zeros(n)
        da_lat = np.zeros(n)
        yaw = np.zeros(n)
    else:
        a_lat, da_lat = _lateral_profile(spec, t)
        yaw = a_lat / spec.speed
    roll = spec.head_roll_gain * a_lat
    phi = np.radians(roll)
    roll_rate = np.radians(spec.head_roll_gain * da_lat)
    up = np.column_stack([-np.sin(phi), np.cos(phi), np.zeros(n)])
    lateral = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(n)])
    f = G_NORM * up + a_lat[:, None] * lateral
    omega = yaw[:, None] * up
    omega[:, 2] -= roll_rate
    return ImuSeries(t, f, omega), roll


# -- static pose suite ---------------------------------------------------------------

DEFAULT_POSES = tuple(float(a) for a in range(-25, 26, 5))


class PoseSuite(Sequence):
    """Lazily rendered frames of a static roll-pose suite.

    Item ``i`` is ``(image, theta_g)``; frames of one pose differ only in noise,
    seeded per frame so any subset renders identically.
    """

    def __init__(self, angles=DEFAULT_POSES, frames_per_pose: int = 180, kind: str = "grid",
                 noise_std: float = 4.0, seed: int = 0):
        for a in angles:
            if not -60.0 <= a <= 60.0:
                raise SpecError(f"head roll {a} outside [-60, 60]")
        self.angles = tuple(float(a) for a in angles)
        self.frames_per_pose = frames_per_pose
        self.kind = kind
        self.noise_std = noise_std
        self.seed = seed
        self._coverage = {}

    def __len__(self) -> int:
        return len(self.angles) * self.frames_per_pose

    def pose_of(self, i: int) -> float:
        return self.angles[i // self.frames_per_pose]

    def theta_g(self, i: int) -> float:
        return 90.0 + self.pose_of(i)

    def _cov(self, angle: float) -> np.ndarray:
        if angle not in self._coverage:
            self._coverage = {angle: scene_coverage(SceneSpec(kind=self.kind, roll_deg=-angle))}
        return self._coverage[angle]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        angle = self.pose_of(i)
        rng = np.random.default_rng([self.seed, i])
        return _to_color(self._cov(angle), self.noise_std, rng), 90.0 + angle


def static_pose_suite(angles=DEFAULT_POSES, frames_per_pose: int = 180, **kwargs) -> PoseSuite:
    return PoseSuite(angles, frames_per_pose, **kwargs)


def static_pose_imu(suite: PoseSuite, rate: float = RATE):
    """IMU record of the suite: f equals gravity tilted by each pose, omega = 0."""
    from svcvv.dataio import ImuSeries

    n = len(suite)
    t = np.arange(n) / rate
    theta = np.radians([suite.theta_g(i) for i in range(n)])
    f = G_NORM * np.column_stack([np.cos(theta), np.sin(theta), np.zeros(n)])
    return ImuSeries(t, f, np.zeros((n, 3)))
