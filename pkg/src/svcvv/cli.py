"""``svcvv`` command line: synthetic bundles, VV estimation, MSI runs, static evaluation.

Exit codes: 0 success, 2 invalid input or spec, 3 simulation divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from svcvv import dataio, metrics, synth
from svcvv.dataio import ImuSeries, Trial, TrialError
from svcvv.svc_model import (
    InputError,
    ModelParams,
    MsiTrace,
    SimulationDivergence,
    SvcInputs,
    format_params,
    gravity_track,
    theta_g as direction_deg,
    load_params,
    preset,
    simulate,
)
from svcvv.vv_estimator import VvEstimate, raw_theta, smooth_sequence

log = logging.getLogger("svcvv")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3

VV_COLUMNS = ["frame_index", "timestamp_s", "theta_vv_deg", "vv_x", "vv_y", "vv_z"]


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    model: str = "svc_vv"
    params_file: Path | None = None
    dt: float | None = None
    duplicate_n: int = 10
    out: Path = Path("out")

    def params(self) -> ModelParams:
        base = preset(self.model)
        if self.params_file is None:
            return base
        return load_params(self.params_file, base)

    def __post_init__(self):
        if self.duplicate_n < 1:
            raise ValueError("duplicate_n must be >= 1")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        preset(self.model)


# -- shared steps ---------------------------------------------------------------


def frame_raw_thetas(paths) -> list[float | None]:
    """Raw VV angle per frame path; repeated paths are processed once."""
    cache: dict[Path, float | None] = {}
    out = []
    for p in paths:
        if p not in cache:
            cache[p] = raw_theta(dataio.read_frame(p))
        out.append(cache[p])
    return out


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def format_vv_csv(estimates: list[VvEstimate], times) -> str:
    lines = [",".join(VV_COLUMNS)]
    for e, t in zip(estimates, times):
        lines.append(",".join([str(e.frame_index), _fmt(t), _fmt(e.theta_vv), *map(_fmt, e.vv)]))
    return "\n".join(lines) + "\n"


def format_trace_csv(trace: MsiTrace) -> str:
    cols = trace.columns()
    data = np.column_stack(list(cols.values()))
    lines = [",".join(cols)]
    lines.extend(",".join(map(_fmt, row)) for row in data)
    return "\n".join(lines) + "\n"


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- commands ---------------------------------------------------------------------


def cmd_vv(manifest: Path, out: Path) -> Path:
    trial = dataio.load_trial(manifest)
    estimates = smooth_sequence(frame_raw_thetas(trial.frames.paths))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "vv.csv"
    path.write_text(format_vv_csv(estimates, trial.frames.times))
    log.info("wrote %d VV rows to %s", len(estimates), path)
    return path


@dataclass
class MsiResult:
    trace: MsiTrace
    vv: list[VvEstimate]
    times: np.ndarray
    theta_g: np.ndarray
    metrics: dict
    raws: list = field(default_factory=list, repr=False)


def run_msi(trial: Trial, params: ModelParams, dt: float | None = None, duplicate_n: int = 10,
            raws: list[float | None] | None = None) -> MsiResult:
    """Sync, estimate VV, duplicate, and simulate one trial.

    ``raws`` may carry per-tick raw VV angles from an earlier run on the same
    trial, skipping image processing.
    """
    imu, frames = dataio.resample_sync(trial.imu, trial.frames)
    if raws is None:
        raws = frame_raw_thetas(frames.paths)
    elif len(raws) != len(frames):
        raise ValueError(f"{len(raws)} raw angles for {len(frames)} synchronized ticks")
    single = smooth_sequence(raws)
    theta_vv = np.array([e.theta_vv for e in single])
    _, theta_g = gravity_track(imu.gyro, imu.acc[0], imu.period)

    imu_n = dataio.duplicate_trial(imu, duplicate_n)
    vv_n = np.array([e.vv for e in smooth_sequence(raws * duplicate_n)])
    trace = simulate(SvcInputs(imu_n.t, imu_n.acc, imu_n.gyro, vv_n), params, dt)

    report = {
        "duplicate_n": duplicate_n,
        "dt_s": float(trace.t[1] - trace.t[0]),
        "n_ticks": len(imu),
        "trial_duration_s": imu.duration,
        "sim_duration_s": float(trace.t[-1] - trace.t[0]),
        "final_msi_pct": trace.final_msi,
        "max_msi_pct": float(trace.msi.max()),
        "mean_dv_norm": float(trace.dv_norm.mean()),
        "mean_dvv_norm": float(trace.dvv_norm.mean()),
        "mad_vv_g_deg": metrics.mad(theta_vv, theta_g),
        "sd_vv_deg": metrics.std_dev(theta_vv),
        "sd_g_deg": metrics.std_dev(theta_g),
        "no_edge_frames": sum(r is None for r in raws),
        "gimbal_steps": trace.gimbal_steps,
    }
    report.update({f"param_{k}": v for k, v in asdict(params).items()})
    return MsiResult(trace, single, imu.t, theta_g, report, raws)


def cmd_msi(config: RunConfig) -> MsiResult:
    trial = dataio.load_trial(config.manifest)
    params = config.params()
    started = time.perf_counter()
    result = run_msi(trial, params, config.dt, config.duplicate_n)
    result.metrics["model"] = config.model
    result.metrics["manifest"] = str(config.manifest)
    config.out.mkdir(parents=True, exist_ok=True)
    (config.out / "msi_trace.csv").write_text(format_trace_csv(result.trace))
    (config.out / "vv.csv").write_text(format_vv_csv(result.vv, result.times))
    _write_json(config.out / "metrics.json", result.metrics)
    log.info("final MSI %.4f%% (%s) in %.1f s", result.trace.final_msi, config.model, time.perf_counter() - started)
    return result


def static_eval(theta_vv, theta_g) -> dict:
    fit = metrics.linear_regression(theta_vv, theta_g)
    return {
        "n_frames": len(theta_vv),
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "mad_deg": metrics.mad(theta_vv, theta_g),
    }


def cmd_static_eval(manifest: Path, out: Path) -> dict:
    """Regress gravity direction (from the IMU, head at rest) on estimated VV."""
    trial = dataio.load_trial(manifest)
    imu, frames = dataio.resample_sync(trial.imu, trial.frames)
    estimates = smooth_sequence(frame_raw_thetas(frames.paths))
    theta_vv = np.array([e.theta_vv for e in estimates])
    theta_g = direction_deg(imu.acc)
    report = static_eval(theta_vv, theta_g)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["frame_index,timestamp_s,theta_vv_deg,theta_g_deg"]
    lines += [f"{i},{_fmt(t)},{_fmt(v)},{_fmt(g)}" for i, (t, v, g) in enumerate(zip(imu.t, theta_vv, theta_g))]
    (out / "static_vv.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "static_metrics.json", report)
    return report


# -- synthetic bundles ---------------------------------------------------------------

PRESET_SPECS = {
    "static": {"kind": "static"},
    "slalom-ad": {"kind": "slalom", "scene": {"kind": "grid"}},
    "slalom-rad": {"kind": "slalom", "scene": {"kind": "book_occluder"}},
}


def _build(cls, doc: dict | None, where: str):
    doc = dict(doc or {})
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise synth.SpecError(f"{where}: unknown field(s) {sorted(unknown)}")
    if "book_fraction" in doc:
        doc["book_fraction"] = tuple(doc["book_fraction"])
    return cls(**doc)


def write_bundle(out: Path, imu: ImuSeries, frames, meta: dict) -> Path:
    """Write ``frames`` (an iterable of color images, one per IMU sample)."""
    frame_dir = out / "frames"
    frame_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for i, img in enumerate(frames):
        dataio.write_frame(frame_dir / dataio.FRAME_PATTERN.format(i), img)
        count += 1
    if count != len(imu):
        raise ValueError(f"{count} frames for {len(imu)} IMU samples")
    dataio.write_imu_csv(imu, out / "imu.csv")
    return dataio.write_manifest(out, imu.t, meta)


def cmd_synth(spec: dict, out: Path, seed: int = 0) -> Path:
    kind = spec.get("kind")
    if kind == "static":
        extra = set(spec) - {"kind", "angles", "frames_per_pose", "scene", "noise_std"}
        if extra:
            raise synth.SpecError(f"static spec: unknown field(s) {sorted(extra)}")
        suite = synth.static_pose_suite(
            spec.get("angles", synth.DEFAULT_POSES),
            int(spec.get("frames_per_pose", 180)),
            kind=spec.get("scene", "grid"),
            noise_std=float(spec.get("noise_std", 4.0)),
            seed=seed,
        )
        synth.SceneSpec(kind=suite.kind)  # validates the scene kind
        imu = synth.static_pose_imu(suite)
        meta = {"kind": "static", "angles": list(suite.angles), "frames_per_pose": suite.frames_per_pose,
                "scene": suite.kind, "noise_std": suite.noise_std, "seed": seed}
        return write_bundle(out, imu, (img for img, _ in suite), meta)
    if kind == "slalom":
        extra = set(spec) - {"kind", "scene", "trajectory"}
        if extra:
            raise synth.SpecError(f"slalom spec: unknown field(s) {sorted(extra)}")
        scene = _build(synth.SceneSpec, spec.get("scene"), "scene")
        traj = _build(synth.TrajectorySpec, spec.get("trajectory"), "trajectory")
        imu, roll = synth.slalom_trajectory(traj)
        frames = synth.render_sequence(scene, -roll, seed)
        meta = {"kind": "slalom", "scene": asdict(scene), "trajectory": asdict(traj), "seed": seed}
        path = write_bundle(out, imu, frames, meta)
        lines = ["t_s,head_roll_deg,theta_g_deg"] + [f"{_fmt(t)},{_fmt(r)},{_fmt(90.0 + r)}" for t, r in zip(imu.t, roll)]
        (out / "truth.csv").write_text("\n".join(lines) + "\n")
        return path
    raise synth.SpecError(f"spec kind must be 'static' or 'slalom', got {kind!r}")


# -- argument parsing --------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="svcvv", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, manifest=True):
        if manifest:
            sp.add_argument("--manifest", type=Path, required=True, help="trial.json or its directory")
        sp.add_argument("--out", type=Path, default=Path("out"))

    sp = sub.add_parser("vv", help="per-frame visual vertical CSV")
    common(sp)

    sp = sub.add_parser("msi", help="run the SVC model over a trial")
    common(sp)
    sp.add_argument("--model", choices=["conventional", "svc_vv"], default="svc_vv")
    sp.add_argument("--params", type=Path, help="key=value parameter overrides")
    sp.add_argument("--dt", type=float, help="integration step in seconds (default: input period)")
    sp.add_argument("--dup", type=int, default=10, help="copies of the trial to concatenate")

    sp = sub.add_parser("static-eval", help="regression and MAD of VV against gravity")
    common(sp)

    sp = sub.add_parser("synth", help="write a synthetic trial bundle")
    common(sp, manifest=False)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", type=Path, help="JSON spec file")
    src.add_argument("--preset", choices=sorted(PRESET_SPECS))
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("params", help="print a model's parameters as key=value")
    sp.add_argument("--model", choices=["conventional", "svc_vv"], default="svc_vv")
    sp.add_argument("--params", type=Path)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "vv":
            print(cmd_vv(args.manifest, args.out))
        elif args.command == "msi":
            cfg = RunConfig(args.manifest, args.model, args.params, args.dt, args.dup, args.out)
            result = cmd_msi(cfg)
            print(json.dumps({"final_msi_pct": result.trace.final_msi, "model": args.model}))
        elif args.command == "static-eval":
            print(json.dumps(cmd_static_eval(args.manifest, args.out), sort_keys=True))
        elif args.command == "synth":
            if args.spec is not None:
                try:
                    spec = json.loads(args.spec.read_text())
                except (OSError, json.JSONDecodeError) as exc:
                    raise synth.SpecError(f"{args.spec}: {exc}") from None
            else:
                spec = PRESET_SPECS[args.preset]
            print(cmd_synth(spec, args.out, args.seed))
        elif args.command == "params":
            base = preset(args.model)
            params = load_params(args.params, base) if args.params else base
            sys.stdout.write(format_params(params))
    except SimulationDivergence as exc:
        print(f"svcvv: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (TrialError, InputError, synth.SpecError, metrics.DegenerateInput, ValueError, OSError) as exc:
        print(f"svcvv: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
