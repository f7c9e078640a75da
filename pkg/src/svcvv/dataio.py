"""Trial bundles: IMU CSV, numbered PNG frames and a ``trial.json`` manifest.

A bundle directory looks like::

    trial.json          {"imu": "imu.csv", "frames_dir": "frames",
                         "frame_times": [...], "width": 640, "height": 360}
    imu.csv             t,ax,ay,az,wx,wy,wz   (specific force in m/s^2, rad/s)
    frames/frame_000000.png ...

All paths in the manifest are relative to the manifest's directory. The
accelerometer columns hold the gravito-inertial acceleration f = a + g with
g pointing up, i.e. what a head-mounted IMU reports.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TextIO

import cv2
import numpy as np

IMU_HEADER = ["t", "ax", "ay", "az", "wx", "wy", "wz"]
FRAME_PATTERN = "frame_{:06d}.png"
MANIFEST_NAME = "trial.json"
PNG_LEVEL = 1  # noisy frames barely compress; favour write speed
SYNC_RATE = 60.0
TIME_TOL = 1e-6


class TrialError(ValueError):
    """Malformed or inconsistent trial data."""


class ParseError(TrialError):
    pass


class OrderError(TrialError):
    pass


class SyncError(TrialError):
    pass


@dataclass(frozen=True)
class ImuSeries:
    t: np.ndarray
    acc: np.ndarray  # (N, 3) specific force
    gyro: np.ndarray  # (N, 3) angular velocity

    def __len__(self) -> int:
        return len(self.t)

    @property
    def period(self) -> float:
        return float(np.median(np.diff(self.t)))

    @property
    def rate(self) -> float:
        return 1.0 / self.period

    @property
    def duration(self) -> float:
        return len(self) * self.period


@dataclass(frozen=True)
class FrameManifest:
    times: np.ndarray
    paths: tuple[Path, ...]
    width: int = 640
    height: int = 360

    def __len__(self) -> int:
        return len(self.times)

    @property
    def period(self) -> float:
        return float(np.median(np.diff(self.times)))

    @property
    def duration(self) -> float:
        return len(self) * self.period


@dataclass(frozen=True)
class Trial:
    imu: ImuSeries
    frames: FrameManifest
    root: Path
    meta: dict = field(default_factory=dict)


# -- IMU CSV ---------------------------------------------------------------------


def _check_monotone(t: np.ndarray) -> None:
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        i = int(bad[0]) + 1
        raise OrderError(f"timestamps must increase strictly: t[{i}]={t[i]!r} after {t[i - 1]!r}")


def parse_imu_csv(source: str | Path | TextIO) -> ImuSeries:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return parse_imu_csv(fh)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        raise ParseError("line 1: empty IMU file")
    header = [h.strip() for h in header]
    missing = [c for c in IMU_HEADER if c not in header]
    if missing:
        raise ParseError(f"line 1: missing column(s) {', '.join(missing)}")
    cols = [header.index(c) for c in IMU_HEADER]
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            rows.append([float(row[c]) for c in cols])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ParseError("no IMU samples")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise ParseError("non-finite value in IMU data")
    _check_monotone(data[:, 0])
    return ImuSeries(data[:, 0].copy(), data[:, 1:4].copy(), data[:, 4:7].copy())


def format_imu_csv(imu: ImuSeries) -> str:
    buf = io.StringIO()
    buf.write(",".join(IMU_HEADER) + "\n")
    for t, a, w in zip(imu.t, imu.acc, imu.gyro):
        buf.write(",".join(f"{v:.9g}" for v in (t, *a, *w)) + "\n")
    return buf.getvalue()


def write_imu_csv(imu: ImuSeries, path: str | Path) -> None:
    Path(path).write_text(format_imu_csv(imu))


# -- manifests -----------------------------------------------------------------


def load_trial(path: str | Path) -> Trial:
    """Load a bundle from its ``trial.json`` or from the directory holding it."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise TrialError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise TrialError(f"{path}: invalid JSON ({exc})") from None
    root = path.parent
    for key in ("imu", "frames_dir", "frame_times"):
        if key not in doc:
            raise TrialError(f"{path}: missing key {key!r}")
    imu_path = root / doc["imu"]
    if not imu_path.is_file():
        raise TrialError(f"IMU file not found: {imu_path}")
    imu = parse_imu_csv(imu_path)
    times = np.asarray(doc["frame_times"], dtype=np.float64)
    if times.size == 0:
        raise TrialError(f"{path}: no frames listed")
    _check_monotone(times)
    frames_dir = root / doc["frames_dir"]
    if not frames_dir.is_dir():
        raise TrialError(f"frames directory not found: {frames_dir}")
    paths = tuple(frames_dir / FRAME_PATTERN.format(i) for i in range(len(times)))
    absent = [p for p in paths if not p.is_file()]
    if absent:
        raise TrialError(f"{len(absent)} frame file(s) missing, first: {absent[0]}")
    manifest = FrameManifest(times, paths, int(doc.get("width", 640)), int(doc.get("height", 360)))
    return Trial(imu, manifest, root, dict(doc.get("meta", {})))


def write_manifest(root: str | Path, frame_times, meta: dict | None = None, width: int = 640, height: int = 360) -> Path:
    root = Path(root)
    doc = {
        "imu": "imu.csv",
        "frames_dir": "frames",
        "frame_times": [float(f"{t:.9g}") for t in frame_times],
        "width": width,
        "height": height,
    }
    if meta:
        doc["meta"] = meta
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def write_frame(path: str | Path, img: np.ndarray) -> None:
    if not cv2.imwrite(str(path), np.ascontiguousarray(img[:, :, ::-1]), [cv2.IMWRITE_PNG_COMPRESSION, PNG_LEVEL]):
        raise OSError(f"could not write {path}")


def read_frame(path: str | Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise TrialError(f"could not decode frame {path}")
    return img[:, :, ::-1]


# -- synchronization ---------------------------------------------------------------


def interp_rows(t_query: np.ndarray, t: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Column-wise linear interpolation, clamped at both ends."""
    t_query = np.asarray(t_query, dtype=np.float64)
    return np.column_stack([np.interp(t_query, t, values[:, i]) for i in range(values.shape[1])])


def _span_end(times: np.ndarray) -> float:
    # a stream covers [t0, t_last + period): each sample stands for one period
    period = float(np.median(np.diff(times))) if len(times) > 1 else 0.0
    return float(times[-1]) + period


def resample_sync(imu: ImuSeries, frames: FrameManifest, rate: float = SYNC_RATE) -> tuple[ImuSeries, FrameManifest]:
    """Put both streams on one uniform grid over their overlap.

    The IMU is linearly interpolated; each tick takes the latest frame at or
    before it.
    """
    start = max(float(imu.t[0]), float(frames.times[0]))
    end = min(_span_end(imu.t), _span_end(frames.times))
    n = int(np.ceil((end - start) * rate - 1e-6))
    if n < 1:
        raise SyncError(f"IMU [{imu.t[0]}, {imu.t[-1]}] and frames [{frames.times[0]}, {frames.times[-1]}] do not overlap")
    grid = start + np.arange(n) / rate
    acc = interp_rows(grid, imu.t, imu.acc)
    gyro = interp_rows(grid, imu.t, imu.gyro)
    idx = np.searchsorted(frames.times, grid + TIME_TOL, side="right") - 1
    paths = tuple(frames.paths[i] for i in idx)
    return ImuSeries(grid, acc, gyro), replace(frames, times=grid.copy(), paths=paths)


def duplicate_trial(series, n: int = 10):
    """Concatenate ``n`` copies back to back, shifting each copy's timestamps by
    the series duration. Works on :class:`ImuSeries` and :class:`FrameManifest`."""
    if not isinstance(series, (ImuSeries, FrameManifest)):
        raise TypeError(f"cannot duplicate {type(series).__name__}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return series
    offsets = np.repeat(np.arange(n) * series.duration, len(series))
    if isinstance(series, ImuSeries):
        return ImuSeries(
            np.tile(series.t, n) + offsets,
            np.tile(series.acc, (n, 1)),
            np.tile(series.gyro, (n, 1)),
        )
    return replace(series, times=np.tile(series.times, n) + offsets, paths=series.paths * n)


def zoh_vv(frame_times: np.ndarray, vv: np.ndarray, t):
    """Zero-order hold: value of the latest frame whose time is <= t.

    ``t`` may be a scalar or an array. A tolerance of 1 microsecond absorbs
    rounding when a query lands on a frame time.
    """
    frame_times = np.asarray(frame_times, dtype=np.float64)
    vv = np.asarray(vv, dtype=np.float64)
    tq = np.asarray(t, dtype=np.float64)
    if np.any(tq < frame_times[0] - TIME_TOL):
        raise ValueError(f"query time before the first frame ({frame_times[0]})")
    idx = np.searchsorted(frame_times, tq + TIME_TOL, side="right") - 1
    return vv[idx]
