"""6-DoF subjective vertical conflict (SVC) model with a visual-vertical input.

State vector layout (17 components)::

    0:3   v_s     sensed vertical
    3:6   x_scc   semicircular-canal low-pass state (omega_s = omega - x_scc)
    6:9   vh_s    internal-model vertical
    9:12  xh_scc  internal-model canal state
    12:15 g_hat   internally estimated gravity
    15    m1      first MSI lag
    16    m2      second MSI lag (= MSI, percent)

The internal model's input depends on its own output (conflict feedback), so
the hatted acceleration and angular velocity are obtained by solving that
linear loop in closed form at every evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from svcvv.dataio import TIME_TOL, zoh_vv

G_NORM = 9.81
N_STATE = 17


class InputError(ValueError):
    """Simulation inputs are malformed (shape, sampling)."""


class SimulationDivergence(RuntimeError):
    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite model state at step {step} (t={t:.6f} s)")
        self.step = step
        self.t = t


@dataclass(frozen=True)
class ModelParams:
    K_a: float = 0.1
    K_w: float = 0.8
    K_wc: float = 10.0
    K_ac: float = 1.0
    K_vc: float = 5.0
    K_vvc: float = 0.0
    tau: float = 5.0
    tau_d: float = 7.0
    b: float = 0.5
    tau_I: float = 12 * 60.0  # seconds
    P: float = 85.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite")
            if f.name == "K_vvc":
                if value < 0:
                    raise ValueError("K_vvc must be >= 0")
            elif value <= 0:
                raise ValueError(f"{f.name} must be > 0")

    @property
    def vision_enabled(self) -> bool:
        return self.K_vvc > 0


CONVENTIONAL = ModelParams()
SVC_VV = ModelParams(K_vvc=5.0)
PRESETS = {"conventional": CONVENTIONAL, "svc_vv": SVC_VV}

# key=value file names; tau_I is written in minutes like the published table
_FILE_KEYS = {
    "K_a": "K_a",
    "K_w": "K_w",
    "K_omega": "K_w",
    "K_wc": "K_wc",
    "K_omegac": "K_wc",
    "K_ac": "K_ac",
    "K_vc": "K_vc",
    "K_vvc": "K_vvc",
    "tau": "tau",
    "tau_d": "tau_d",
    "b": "b",
    "P": "P",
}


def parse_params(text: str, base: ModelParams | str = CONVENTIONAL) -> ModelParams:
    """Apply ``key = value`` overrides (``#`` comments allowed) on top of ``base``.

    ``model = svc_vv`` switches the base preset; ``tau_I_min`` is in minutes and
    ``tau_I_s`` in seconds.
    """
    if isinstance(base, str):
        base = preset(base)
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "model":
            base = preset(value)
            continue
        try:
            number = float(value)
        except ValueError:
            raise ValueError(f"line {lineno}: {key} value {value!r} is not a number") from None
        if key == "tau_I_min":
            overrides["tau_I"] = number * 60.0
        elif key == "tau_I_s":
            overrides["tau_I"] = number
        elif key in _FILE_KEYS:
            overrides[_FILE_KEYS[key]] = number
        else:
            raise ValueError(f"line {lineno}: unknown parameter {key!r}")
    return replace(base, **overrides)


def load_params(path: str | Path, base: ModelParams | str = CONVENTIONAL) -> ModelParams:
    return parse_params(Path(path).read_text(), base)


def format_params(p: ModelParams) -> str:
    lines = [f"{name} = {getattr(p, name)!r}" for name in ("K_a", "K_w", "K_wc", "K_ac", "K_vc", "K_vvc", "tau", "tau_d", "b")]
    lines.append(f"tau_I_min = {p.tau_I / 60.0!r}")
    lines.append(f"P = {p.P!r}")
    return "\n".join(lines) + "\n"


def preset(name: str) -> ModelParams:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(PRESETS)}") from None


# -- blocks -------------------------------------------------------------------


def oto(f: np.ndarray) -> np.ndarray:
    return np.array(f, dtype=np.float64)


def scc_derivative(x: np.ndarray, omega: np.ndarray, tau_d: float) -> tuple[np.ndarray, np.ndarray]:
    """High-pass canal dynamics ``tau_d s / (tau_d s + 1)`` as ``(dx/dt, omega_s)``."""
    x = np.asarray(x, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    return (omega - x) / tau_d, omega - x


def lp_vertical_derivative(v: np.ndarray, f_s: np.ndarray, omega_s: np.ndarray, tau: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return (np.asarray(f_s) - v) / tau - np.cross(omega_s, v)


def sensed_acceleration(f_s: np.ndarray, v_s: np.ndarray) -> np.ndarray:
    return np.asarray(f_s, dtype=np.float64) - v_s


def internal_model_inputs(a_s, ah_s, w_s, wh_s, p: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Internal-model drive: efference-copy stand-in plus conflict feedback."""
    a_s, ah_s, w_s, wh_s = (np.asarray(v, dtype=np.float64) for v in (a_s, ah_s, w_s, wh_s))
    a_in = p.K_a * a_s + p.K_ac * (a_s - ah_s)
    w_in = p.K_w * w_s + p.K_wc * (w_s - wh_s)
    return a_in, w_in


def internal_model_outputs(a_s, w_s, v_hat, x_hat, g_hat, p: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Self-consistent ``(ah_s, wh_s)``.

    Solves ``ah_s = a_in(ah_s) + g_hat - v_hat`` and ``wh_s = w_in(wh_s) - x_hat``.
    """
    a_s, w_s, v_hat, x_hat, g_hat = (np.asarray(v, dtype=np.float64) for v in (a_s, w_s, v_hat, x_hat, g_hat))
    ah_s = ((p.K_a + p.K_ac) * a_s + g_hat - v_hat) / (1.0 + p.K_ac)
    wh_s = ((p.K_w + p.K_wc) * w_s - x_hat) / (1.0 + p.K_wc)
    return ah_s, wh_s


def vis_g(vv: np.ndarray) -> np.ndarray:
    return np.array(vv, dtype=np.float64)


def vis_g_bar(g_hat: np.ndarray) -> tuple[np.ndarray, bool]:
    """Project ``g_hat`` onto the head x-y plane and rescale to 9.81.

    Returns ``(vvh_s, gimbal)``; ``gimbal`` is True when the projection vanishes,
    in which case the upright vertical ``[0, 9.81, 0]`` is returned.
    """
    x, y = float(g_hat[0]), float(g_hat[1])
    n = math.hypot(x, y)
    if n == 0.0:
        return np.array([0.0, G_NORM, 0.0]), True
    return np.array([G_NORM * x / n, G_NORM * y / n, 0.0]), False


def g_hat_derivative(vv_s, vvh_s, v_s, vh_s, p: ModelParams) -> np.ndarray:
    dg = p.K_vc * (np.asarray(v_s, dtype=np.float64) - vh_s)
    if p.vision_enabled:
        dg = dg + p.K_vvc * (np.asarray(vv_s, dtype=np.float64) - vvh_s)
    return dg


def hill(dv_norm: float, b: float) -> float:
    r = (dv_norm / b) ** 2
    if math.isinf(r):
        return 1.0
    return r / (1.0 + r)


def msi_derivative(m1: float, m2: float, h: float, p: ModelParams) -> tuple[float, float]:
    return (p.P * h - m1) / p.tau_I, (m1 - m2) / p.tau_I


def derivative(state: np.ndarray, f, omega, vv, p: ModelParams) -> np.ndarray:
    """Full 17-state right-hand side assembled from the blocks above.

    Reference composition; :func:`simulate` runs an equivalent scalar version.
    """
    state = np.asarray(state, dtype=np.float64)
    v_s, x_scc, vh_s, xh_scc, g_hat = (state[i : i + 3] for i in range(0, 15, 3))
    m1, m2 = state[15], state[16]

    f_s = oto(f)
    dx_scc, w_s = scc_derivative(x_scc, omega, p.tau_d)
    dv_s = lp_vertical_derivative(v_s, f_s, w_s, p.tau)
    a_s = sensed_acceleration(f_s, v_s)

    ah_s, wh_s = internal_model_outputs(a_s, w_s, vh_s, xh_scc, g_hat, p)
    a_in, w_in = internal_model_inputs(a_s, ah_s, w_s, wh_s, p)
    fh_s = oto(a_in + g_hat)
    dxh_scc = (w_in - xh_scc) / p.tau_d
    dvh_s = lp_vertical_derivative(vh_s, fh_s, wh_s, p.tau)

    if p.vision_enabled:
        vvh_s, _ = vis_g_bar(g_hat)
        dg_hat = g_hat_derivative(vis_g(vv), vvh_s, v_s, vh_s, p)
    else:
        dg_hat = g_hat_derivative(None, None, v_s, vh_s, p)

    h = hill(float(np.linalg.norm(v_s - vh_s)), p.b)
    dm1, dm2 = msi_derivative(m1, m2, h, p)
    return np.concatenate([dv_s, dx_scc, dvh_s, dxh_scc, dg_hat, [dm1, dm2]])


def initial_state(f0) -> np.ndarray:
    """Head at rest: all verticals equal the initial GIA, canals and MSI at zero."""
    s = np.zeros(N_STATE)
    f0 = np.asarray(f0, dtype=np.float64)
    s[0:3] = f0
    s[6:9] = f0
    s[12:15] = f0
    return s


# -- fast scalar right-hand side ----------------------------------------------


def _make_rhs(p: ModelParams):
    K_a, K_w, K_wc, K_ac, K_vc, K_vvc = p.K_a, p.K_w, p.K_wc, p.K_ac, p.K_vc, p.K_vvc
    inv_tau, inv_tau_d, inv_tau_I = 1.0 / p.tau, 1.0 / p.tau_d, 1.0 / p.tau_I
    P, b = p.P, p.b
    ka_sum, kw_sum = K_a + K_ac, K_w + K_wc
    inv_1ac, inv_1wc = 1.0 / (1.0 + K_ac), 1.0 / (1.0 + K_wc)
    vision = p.vision_enabled
    hsqrt = math.hypot

    def rhs(s, f, w, vv):
        v0, v1, v2, x0, x1, x2, u0, u1, u2, y0, y1, y2, g0, g1, g2, m1, m2 = s
        f0, f1, f2 = f
        # canals
        ws0, ws1, ws2 = w[0] - x0, w[1] - x1, w[2] - x2
        # sensed vertical
        dv0 = (f0 - v0) * inv_tau - (ws1 * v2 - ws2 * v1)
        dv1 = (f1 - v1) * inv_tau - (ws2 * v0 - ws0 * v2)
        dv2 = (f2 - v2) * inv_tau - (ws0 * v1 - ws1 * v0)
        as0, as1, as2 = f0 - v0, f1 - v1, f2 - v2
        # internal model, conflict loop solved in closed form
        ah0 = (ka_sum * as0 + g0 - u0) * inv_1ac
        ah1 = (ka_sum * as1 + g1 - u1) * inv_1ac
        ah2 = (ka_sum * as2 + g2 - u2) * inv_1ac
        wh0 = (kw_sum * ws0 - y0) * inv_1wc
        wh1 = (kw_sum * ws1 - y1) * inv_1wc
        wh2 = (kw_sum * ws2 - y2) * inv_1wc
        fh0 = K_a * as0 + K_ac * (as0 - ah0) + g0
        fh1 = K_a * as1 + K_ac * (as1 - ah1) + g1
        fh2 = K_a * as2 + K_ac * (as2 - ah2) + g2
        wi0 = K_w * ws0 + K_wc * (ws0 - wh0)
        wi1 = K_w * ws1 + K_wc * (ws1 - wh1)
        wi2 = K_w * ws2 + K_wc * (ws2 - wh2)
        du0 = (fh0 - u0) * inv_tau - (wh1 * u2 - wh2 * u1)
        du1 = (fh1 - u1) * inv_tau - (wh2 * u0 - wh0 * u2)
        du2 = (fh2 - u2) * inv_tau - (wh0 * u1 - wh1 * u0)
        # gravity estimate
        c0, c1, c2 = v0 - u0, v1 - u1, v2 - u2
        dg0, dg1, dg2 = K_vc * c0, K_vc * c1, K_vc * c2
        dvv = 0.0
        gimbal = False
        if vision:
            n = hsqrt(g0, g1)
            if n == 0.0:
                gimbal = True
                p0, p1 = 0.0, G_NORM
            else:
                p0, p1 = G_NORM * g0 / n, G_NORM * g1 / n
            e0, e1, e2 = vv[0] - p0, vv[1] - p1, vv[2]
            dg0 += K_vvc * e0
            dg1 += K_vvc * e1
            dg2 += K_vvc * e2
            dvv = math.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
        dvn = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
        r = (dvn / b) ** 2
        h = r / (1.0 + r) if r != math.inf else 1.0
        d = (
            dv0, dv1, dv2,
            (w[0] - x0) * inv_tau_d, (w[1] - x1) * inv_tau_d, (w[2] - x2) * inv_tau_d,
            du0, du1, du2,
            (wi0 - y0) * inv_tau_d, (wi1 - y1) * inv_tau_d, (wi2 - y2) * inv_tau_d,
            dg0, dg1, dg2,
            (P * h - m1) * inv_tau_I, (m1 - m2) * inv_tau_I,
        )
        return d, dvn, dvv, gimbal

    return rhs


# -- simulation ----------------------------------------------------------------


@dataclass(frozen=True)
class SvcInputs:
    """Uniformly sampled model inputs. ``vv`` may be None when vision is disabled."""

    t: np.ndarray
    f: np.ndarray
    omega: np.ndarray
    vv: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        f = np.asarray(self.f, dtype=np.float64)
        omega = np.asarray(self.omega, dtype=np.float64)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "omega", omega)
        n = t.shape[0] if t.ndim == 1 else -1
        if n < 2:
            raise InputError("need at least two input samples")
        if f.shape != (n, 3) or omega.shape != (n, 3):
            raise InputError(f"f and omega must be ({n}, 3), got {f.shape} and {omega.shape}")
        if self.vv is not None:
            vv = np.asarray(self.vv, dtype=np.float64)
            if vv.shape != (n, 3):
                raise InputError(f"vv must be ({n}, 3), got {vv.shape}")
            object.__setattr__(self, "vv", vv)
        steps = np.diff(t)
        period = float(np.median(steps))
        if period <= 0 or np.max(np.abs(steps - period)) > 1e-6:
            raise InputError("input timestamps are not uniformly spaced (jitter > 1e-6 s)")

    @property
    def period(self) -> float:
        return float(np.median(np.diff(self.t)))

    @property
    def duration(self) -> float:
        return len(self.t) * self.period


@dataclass(frozen=True)
class MsiTrace:
    t: np.ndarray
    msi: np.ndarray
    dv_norm: np.ndarray
    dvv_norm: np.ndarray
    g_hat: np.ndarray
    v_s: np.ndarray
    gimbal_steps: int = 0
    final_state: np.ndarray = field(default=None, repr=False)

    @property
    def final_msi(self) -> float:
        return float(self.msi[-1])

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "t_s": self.t,
            "msi_pct": self.msi,
            "dv_norm": self.dv_norm,
            "dvv_norm": self.dvv_norm,
            "ghat_x": self.g_hat[:, 0],
            "ghat_y": self.g_hat[:, 1],
            "ghat_z": self.g_hat[:, 2],
            "vs_x": self.v_s[:, 0],
            "vs_y": self.v_s[:, 1],
            "vs_z": self.v_s[:, 2],
        }


def _stage_inputs(inputs: SvcInputs, times: np.ndarray, vision: bool):
    """Inputs at arbitrary times: f and omega linearly interpolated (held past the
    last sample), vv zero-order held.

    Also returns vv as a left limit, for the stage at the end of a step: a frame
    arriving at t_k + dt must not leak into the step that ends there.
    """
    t = inputs.t
    f = np.column_stack([np.interp(times, t, inputs.f[:, i]) for i in range(3)])
    w = np.column_stack([np.interp(times, t, inputs.omega[:, i]) for i in range(3)])
    if vision:
        vv = zoh_vv(t, inputs.vv, times)
        vv_left = zoh_vv(t, inputs.vv, np.maximum(times - 2 * TIME_TOL, t[0]))
    else:
        vv = vv_left = np.zeros_like(f)
    return f.tolist(), w.tolist(), vv.tolist(), vv_left.tolist()


def simulate(inputs: SvcInputs, p: ModelParams, dt: float | None = None, state0=None) -> MsiTrace:
    """Fixed-step RK4 over the input span ``[t0, t0 + N * period]``.

    The trace is sampled at every step, including the initial instant.
    """
    if dt is None:
        dt = inputs.period
    if not dt > 0:
        raise InputError("dt must be positive")
    if p.vision_enabled and inputs.vv is None:
        raise InputError("visual-vertical inputs are required when K_vvc > 0")
    n_steps = int(round(inputs.duration / dt))
    if n_steps < 1:
        raise InputError("input span shorter than one integration step")
    t0 = float(inputs.t[0])
    half_times = t0 + 0.5 * dt * np.arange(2 * n_steps + 1)
    F, W, VV, VV_left = _stage_inputs(inputs, half_times, p.vision_enabled)

    rhs = _make_rhs(p)
    s = tuple(initial_state(inputs.f[0]) if state0 is None else np.asarray(state0, dtype=np.float64))
    out_state = np.empty((n_steps + 1, N_STATE))
    dv_norm = np.empty(n_steps + 1)
    dvv_norm = np.empty(n_steps + 1)
    gimbal_steps = 0
    h2, h6 = 0.5 * dt, dt / 6.0

    for k in range(n_steps):
        j = 2 * k
        k1, dvn, dvv, gimbal = rhs(s, F[j], W[j], VV[j])
        out_state[k] = s
        dv_norm[k] = dvn
        dvv_norm[k] = dvv
        gimbal_steps += gimbal
        k2 = rhs([a + h2 * b for a, b in zip(s, k1)], F[j + 1], W[j + 1], VV[j + 1])[0]
        k3 = rhs([a + h2 * b for a, b in zip(s, k2)], F[j + 1], W[j + 1], VV[j + 1])[0]
        k4 = rhs([a + dt * b for a, b in zip(s, k3)], F[j + 2], W[j + 2], VV_left[j + 2])[0]
        s = tuple(a + h6 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(s, k1, k2, k3, k4))
        if not math.isfinite(sum(s)):
            raise SimulationDivergence(k + 1, t0 + (k + 1) * dt)

    _, dvn, dvv, gimbal = rhs(s, F[-1], W[-1], VV[-1])
    out_state[n_steps] = s
    dv_norm[n_steps] = dvn
    dvv_norm[n_steps] = dvv
    gimbal_steps += gimbal

    return MsiTrace(
        t=t0 + dt * np.arange(n_steps + 1),
        msi=out_state[:, 16].copy(),
        dv_norm=dv_norm,
        dvv_norm=dvv_norm,
        g_hat=out_state[:, 12:15].copy(),
        v_s=out_state[:, 0:3].copy(),
        gimbal_steps=gimbal_steps,
        final_state=out_state[-1].copy(),
    )


# -- gravity tracking ------------------------------------------------------------


def theta_g(g: np.ndarray) -> np.ndarray:
    """Direction of the x-y projection of ``g`` in degrees, in [0, 360)."""
    g = np.asarray(g, dtype=np.float64)
    ang = np.degrees(np.arctan2(g[..., 1], g[..., 0]))
    return np.where(ang < 0.0, ang + 360.0, ang)


def gravity_track(omega: np.ndarray, g0, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``dg/dt = -omega x g`` with RK4, omega linearly interpolated
    between samples. Returns ``(g, theta_g)`` at the sample instants."""
    omega = np.asarray(omega, dtype=np.float64)
    n = len(omega)
    g = np.empty((n, 3))
    g[0] = g0
    for k in range(n - 1):
        w0, w1 = omega[k], omega[k + 1]
        wm = 0.5 * (w0 + w1)
        x = g[k]
        k1 = -np.cross(w0, x)
        k2 = -np.cross(wm, x + 0.5 * dt * k1)
        k3 = -np.cross(wm, x + 0.5 * dt * k2)
        k4 = -np.cross(w1, x + dt * k3)
        g[k + 1] = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return g, theta_g(g)
