"""Time integration on a fixed grid with shared-noise coupling semantics.

The scheme is exponential-in-the-diagonal with a two-stage (Heun)
treatment of the remainder: the diagonal linear part is integrated
exactly through ``exp(s dt)``, the nonlinearity and binding drift get
trapezoidal stage weights, and the Gaussian increment enters once per
step with the averaged linear filter weight ``(exp(s dt) - 1)/(s dt)``.

Coupled pairs integrate the difference ``rho = y - x`` pathwise (the
shared noise cancels in ``rho`` identically, and integrating ``rho``
directly avoids cancellation once it is exponentially small); ``y`` is
reconstructed as ``x + rho``.  Because the binding force enters ``rho``
with weight ``W1 = Wn * dt``, re-integrating the second copy alone under
the shifted increments ``dω + G dt`` reproduces ``y`` up to scheme
error.

The log Girsanov weight accumulates the left-point (Ito) sums
``G · Δω - ||G||² dt / 2``; left-point evaluation keeps the exponential
exactly mean-one over fresh noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .binding import BindingSpec
from .models import ModelSpec, apply_noise, lyapunov

LOG_DENSITY_OVERFLOW = 700.0


class EngineError(ValueError):
    pass


class BlowUpError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, time: float):
        super().__init__(f"blow-up at t={time:.6g}")
        self.time = time


@dataclass
class NoisePath:
    """Grid Brownian increments, each row distributed N(0, dt)."""

    dt: float
    increments: np.ndarray  # (steps, n_noise)
    seed: int | None = None
    stream: int | None = None

    @property
    def steps(self) -> int:
        return self.increments.shape[0]


def _rng_for(seed: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(ss))


def sample_noise(model: ModelSpec, steps: int, dt: float, seed: int, stream: int = 0) -> NoisePath:
    """Draw a reproducible noise path; identical (seed, stream) pairs give
    bit-identical increment matrices, distinct streams are independent."""
    if dt <= 0:
        raise EngineError("dt must be positive")
    if steps < 0:
        raise EngineError("steps must be non-negative")
    rng = _rng_for(seed, stream)
    increments = rng.normal(0.0, math.sqrt(dt), size=(steps, model.n_noise))
    return NoisePath(dt=dt, increments=increments, seed=seed, stream=stream)


def save_noise(path, noise: NoisePath) -> None:
    np.savez(
        path,
        increments=noise.increments,
        dt=noise.dt,
        seed=-1 if noise.seed is None else noise.seed,
        stream=-1 if noise.stream is None else noise.stream,
    )


def load_noise(path) -> NoisePath:
    with np.load(path) as data:
        seed = int(data["seed"])
        stream = int(data["stream"])
        return NoisePath(
            dt=float(data["dt"]),
            increments=data["increments"].copy(),
            seed=None if seed < 0 else seed,
            stream=None if stream < 0 else stream,
        )


@dataclass
class GirsanovAccumulator:
    log_density: float
    g_l2: float
    overflow: bool


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray        # (records, dim)
    w_sup: np.ndarray         # (complete unit intervals,)
    dt: float


@dataclass
class CoupledTrajectory:
    times: np.ndarray
    x_path: np.ndarray        # (records, dim)
    rho_path: np.ndarray      # (records, dim)
    zeta_path: np.ndarray | None
    log_density_path: np.ndarray
    w_sup_x: np.ndarray
    w_sup_y: np.ndarray
    girsanov: GirsanovAccumulator
    g_path: np.ndarray | None  # (steps, n_noise) left-point binding force
    dt: float

    @property
    def y_path(self) -> np.ndarray:
        return self.x_path + self.rho_path


@dataclass
class EnsembleResult:
    times: np.ndarray
    states: np.ndarray        # (records, n_traj, dim)
    w_sup: np.ndarray         # (units, n_traj)
    dt: float


@dataclass
class CoupledEnsembleResult:
    times: np.ndarray
    x: np.ndarray             # (records, n_traj, dim)
    rho: np.ndarray
    zeta: np.ndarray | None   # (records, n_traj, n_zeta)
    log_density: np.ndarray   # (records, n_traj)
    w_sup_x: np.ndarray       # (units, n_traj)
    w_sup_y: np.ndarray
    g_l2: np.ndarray          # (n_traj,)
    overflow: np.ndarray      # (n_traj,) bool
    dt: float

    @property
    def y(self) -> np.ndarray:
        return self.x + self.rho


class _Scheme:
    """Per-(model, dt) step weights for the exponential two-stage scheme."""

    def __init__(self, model: ModelSpec, dt: float):
        if dt <= 0:
            raise EngineError("dt must be positive")
        s = model.linear_spectrum
        self.dt = dt
        self.exp_factor = np.exp(s * dt)
        self.w1 = np.where(s != 0.0, np.expm1(s * dt) / np.where(s != 0.0, s, 1.0), dt)
        self.w_noise = self.w1 / dt
        spu = round(1.0 / dt)
        self.steps_per_unit = spu if abs(spu * dt - 1.0) < 1e-9 else None


def _steps_per_unit(scheme: _Scheme) -> int:
    if scheme.steps_per_unit is None:
        raise EngineError("dt must divide the unit interval for W tracking")
    return scheme.steps_per_unit


def _check_record(steps: int, record_every: int):
    if record_every < 1 or steps % record_every:
        raise EngineError(
            f"record_every={record_every} must divide the step count {steps}"
        )


def _integrate_batch(model, scheme, x0, increments, record_every):
    """Shared batch stepper; returns (times, states, w_sup)."""
    steps = increments.shape[0]
    _check_record(steps, record_every)
    spu = _steps_per_unit(scheme)
    e, w1, wn, dt = scheme.exp_factor, scheme.w1, scheme.w_noise, scheme.dt
    x = np.array(x0, dtype=float)
    records = [x.copy()]
    v = lyapunov(model, x)
    w_cur = v.copy()
    w_sup = []
    f = model.nonlinearity
    # blow-ups are detected and reported, not raised by numpy
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(steps):
            forcing = wn * apply_noise(model, increments[step])
            n1 = f(x)
            x_pred = e * x + w1 * n1 + forcing
            x = e * x + 0.5 * w1 * (n1 + f(x_pred)) + forcing
            if not np.all(np.isfinite(x)):
                raise BlowUpError((step + 1) * dt)
            v = lyapunov(model, x)
            np.maximum(w_cur, v, out=w_cur)
            if (step + 1) % spu == 0:
                w_sup.append(w_cur)
                w_cur = v.copy()
            if (step + 1) % record_every == 0:
                records.append(x.copy())
    times = np.arange(len(records)) * (record_every * dt)
    return times, np.array(records), np.array(w_sup)


def integrate(model: ModelSpec, x0: np.ndarray, noise: NoisePath, record_every: int = 1) -> Trajectory:
    """Integrate one path; states are returned at every ``record_every``-th
    grid time (the spacing must divide the step count)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.dim,):
        raise EngineError(f"x0 has shape {x0.shape}, expected ({model.dim},)")
    if not np.all(np.isfinite(noise.increments)):
        raise EngineError("noise path has non-finite increments")
    scheme = _Scheme(model, noise.dt)
    times, states, w_sup = _integrate_batch(
        model, scheme, x0[None, :], noise.increments[:, None, :], record_every
    )
    return Trajectory(times=times, states=states[:, 0, :], w_sup=w_sup[:, 0] if w_sup.size else np.empty(0), dt=noise.dt)


def _integrate_coupled_batch(model, binding, scheme, x0, rho0, increments, record_every, record_force):
    steps = increments.shape[0]
    _check_record(steps, record_every)
    spu = _steps_per_unit(scheme)
    e, w1, wn, dt = scheme.exp_factor, scheme.w1, scheme.w_noise, scheme.dt
    f = model.nonlinearity
    x = np.array(x0, dtype=float)
    rho = np.array(rho0, dtype=float)
    n = x.shape[0]

    log_density = np.zeros(n)
    g_l2 = np.zeros(n)
    overflow = np.zeros(n, dtype=bool)
    zeta_fn = binding.zeta_map

    x_records = [x.copy()]
    rho_records = [rho.copy()]
    zeta_records = [zeta_fn(x, x + rho)] if zeta_fn is not None else None
    logdens_records = [log_density.copy()]
    g_records = [] if record_force else None

    vx = lyapunov(model, x)
    vy = lyapunov(model, x + rho)
    wx_cur, wy_cur = vx.copy(), vy.copy()
    w_sup_x, w_sup_y = [], []

    # blow-ups are detected and reported, not raised by numpy
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(steps):
            dw = increments[step]
            forcing = wn * apply_noise(model, dw)

            y = x + rho
            g1 = binding.force(x, y)
            fx1 = f(x)
            nr1 = f(y) - fx1 + apply_noise(model, g1)
            x_pred = e * x + w1 * fx1 + forcing
            rho_pred = e * rho + w1 * nr1

            y_pred = x_pred + rho_pred
            g2 = binding.force(x_pred, y_pred)
            fx2 = f(x_pred)
            nr2 = f(y_pred) - fx2 + apply_noise(model, g2)
            x = e * x + 0.5 * w1 * (fx1 + fx2) + forcing
            rho = e * rho + 0.5 * w1 * (nr1 + nr2)

            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(rho))):
                raise BlowUpError((step + 1) * dt)

            g_sq = (g1**2).sum(axis=-1)
            log_density += (g1 * dw).sum(axis=-1) - 0.5 * g_sq * dt
            g_l2 += g_sq * dt
            overflow |= np.abs(log_density) > LOG_DENSITY_OVERFLOW
            if g_records is not None:
                g_records.append(g1.copy())

            vx = lyapunov(model, x)
            vy = lyapunov(model, x + rho)
            np.maximum(wx_cur, vx, out=wx_cur)
            np.maximum(wy_cur, vy, out=wy_cur)
            if (step + 1) % spu == 0:
                w_sup_x.append(wx_cur)
                w_sup_y.append(wy_cur)
                wx_cur, wy_cur = vx.copy(), vy.copy()
            if (step + 1) % record_every == 0:
                x_records.append(x.copy())
                rho_records.append(rho.copy())
                logdens_records.append(log_density.copy())
                if zeta_records is not None:
                    zeta_records.append(zeta_fn(x, x + rho))

    times = np.arange(len(x_records)) * (record_every * dt)
    return (
        times,
        np.array(x_records),
        np.array(rho_records),
        np.array(zeta_records) if zeta_records is not None else None,
        np.array(logdens_records),
        np.array(w_sup_x),
        np.array(w_sup_y),
        g_l2,
        overflow,
        np.array(g_records) if g_records is not None else None,
    )


def integrate_coupled(
    model: ModelSpec,
    binding: BindingSpec,
    x0: np.ndarray,
    y0: np.ndarray,
    noise: NoisePath,
    record_every: int = 1,
    record_force: bool = True,
) -> CoupledTrajectory:
    """Integrate the bound pair: ``x`` under the given noise, the
    difference ``rho`` pathwise with the binding drift, ``y = x + rho``.

    For ``y0 = x0`` the difference stays exactly zero, the force is
    exactly zero and the Girsanov weight stays exactly one.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if x0.shape != (model.dim,) or y0.shape != (model.dim,):
        raise EngineError("initial conditions must match the model dimension")
    if not np.all(np.isfinite(noise.increments)):
        raise EngineError("noise path has non-finite increments")
    scheme = _Scheme(model, noise.dt)
    (times, xs, rhos, zetas, logdens, wsx, wsy, g_l2, overflow, g_path) = _integrate_coupled_batch(
        model,
        binding,
        scheme,
        x0[None, :],
        (y0 - x0)[None, :],
        noise.increments[:, None, :],
        record_every,
        record_force,
    )
    return CoupledTrajectory(
        times=times,
        x_path=xs[:, 0, :],
        rho_path=rhos[:, 0, :],
        zeta_path=zetas[:, 0, :] if zetas is not None else None,
        log_density_path=logdens[:, 0],
        w_sup_x=wsx[:, 0] if wsx.size else np.empty(0),
        w_sup_y=wsy[:, 0] if wsy.size else np.empty(0),
        girsanov=GirsanovAccumulator(
            log_density=float(logdens[-1, 0]), g_l2=float(g_l2[0]), overflow=bool(overflow[0])
        ),
        g_path=g_path[:, 0, :] if g_path is not None else None,
        dt=noise.dt,
    )


def girsanov_density(traj: CoupledTrajectory) -> float:
    """The accumulated path density exp(log weight)."""
    if traj.girsanov.overflow:
        raise EngineError("density overflow: |log density| exceeded the exp range")
    return math.exp(traj.girsanov.log_density)


def shift_noise(noise: NoisePath, traj: CoupledTrajectory, inverse: bool = False) -> NoisePath:
    """Binding image of a noise path: increments shifted by the recorded
    force, ``Δω + G dt`` (or ``Δω - G dt`` for the inverse map)."""
    if traj.g_path is None:
        raise EngineError("trajectory was integrated without force recording")
    if traj.g_path.shape[0] != noise.steps:
        raise EngineError("noise path and trajectory have different step counts")
    sign = -1.0 if inverse else 1.0
    shifted = noise.increments + sign * traj.g_path * noise.dt
    return NoisePath(dt=noise.dt, increments=shifted, seed=None, stream=None)


# -- ensembles ----------------------------------------------------------------

_CHUNK_BYTES = 1 << 26


def _chunks(n_traj: int, steps: int, n_noise: int):
    per_traj = max(1, steps * n_noise * 8)
    chunk = max(1, min(n_traj, _CHUNK_BYTES // per_traj))
    start = 0
    while start < n_traj:
        stop = min(n_traj, start + chunk)
        yield start, stop
        start = stop


def _stack_noise(model, steps, dt, seed, streams):
    cols = [sample_noise(model, steps, dt, seed, s).increments for s in streams]
    return np.stack(cols, axis=1)  # (steps, n_chunk, n_noise)


def run_ensemble(
    model: ModelSpec,
    x0: np.ndarray,
    n_traj: int,
    units: int,
    dt: float,
    seed: int,
    stream0: int = 0,
    record_every: int | None = None,
) -> EnsembleResult:
    """Integrate ``n_traj`` independent paths from ``x0`` for ``units``
    time units; trajectory ``i`` uses noise stream ``stream0 + i``."""
    scheme = _Scheme(model, dt)
    spu = _steps_per_unit(scheme)
    steps = units * spu
    if record_every is None:
        record_every = spu
    x0 = np.asarray(x0, dtype=float)
    starts = np.broadcast_to(x0, (n_traj, model.dim))
    all_states, all_wsup, times = [], [], None
    for lo, hi in _chunks(n_traj, steps, model.n_noise):
        incr = _stack_noise(model, steps, dt, seed, range(stream0 + lo, stream0 + hi))
        times, states, w_sup = _integrate_batch(model, scheme, starts[lo:hi], incr, record_every)
        all_states.append(states)
        all_wsup.append(w_sup)
    return EnsembleResult(
        times=times,
        states=np.concatenate(all_states, axis=1),
        w_sup=np.concatenate(all_wsup, axis=1) if units else np.empty((0, n_traj)),
        dt=dt,
    )


def run_coupled_ensemble(
    model: ModelSpec,
    binding: BindingSpec,
    x0: np.ndarray,
    y0: np.ndarray,
    n_traj: int,
    units: int,
    dt: float,
    seed: int,
    stream0: int = 0,
    record_every: int | None = None,
) -> CoupledEnsembleResult:
    scheme = _Scheme(model, dt)
    spu = _steps_per_unit(scheme)
    steps = units * spu
    if record_every is None:
        record_every = spu
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    xs = np.broadcast_to(x0, (n_traj, model.dim))
    rhos = np.broadcast_to(y0 - x0, (n_traj, model.dim))
    parts = {k: [] for k in ("x", "rho", "zeta", "ld", "wx", "wy", "g2", "ov")}
    times = None
    for lo, hi in _chunks(n_traj, steps, model.n_noise):
        incr = _stack_noise(model, steps, dt, seed, range(stream0 + lo, stream0 + hi))
        (times, x_r, rho_r, zeta_r, ld_r, wx, wy, g_l2, overflow, _) = _integrate_coupled_batch(
            model, binding, scheme, xs[lo:hi], rhos[lo:hi], incr, record_every, record_force=False
        )
        parts["x"].append(x_r)
        parts["rho"].append(rho_r)
        if zeta_r is not None:
            parts["zeta"].append(zeta_r)
        parts["ld"].append(ld_r)
        parts["wx"].append(wx)
        parts["wy"].append(wy)
        parts["g2"].append(g_l2)
        parts["ov"].append(overflow)
    return CoupledEnsembleResult(
        times=times,
        x=np.concatenate(parts["x"], axis=1),
        rho=np.concatenate(parts["rho"], axis=1),
        zeta=np.concatenate(parts["zeta"], axis=1) if parts["zeta"] else None,
        log_density=np.concatenate(parts["ld"], axis=1),
        w_sup_x=np.concatenate(parts["wx"], axis=1),
        w_sup_y=np.concatenate(parts["wy"], axis=1),
        g_l2=np.concatenate(parts["g2"]),
        overflow=np.concatenate(parts["ov"]),
        dt=dt,
    )


# -- trajectory CSV -------------------------------------------------------------


def trajectory_csv_lines(model: ModelSpec, traj: CoupledTrajectory, fingerprint: str | None = None):
    """CSV rows for a coupled trajectory; the first line is a '#' header
    naming the fixed columns t, V_x, V_y, rho_norm, zeta_*, log_density."""
    n_zeta = traj.zeta_path.shape[1] if traj.zeta_path is not None else 0
    zeta_names = ",".join(f"zeta_{i + 1}" for i in range(n_zeta))
    header = "# t,V_x,V_y,rho_norm" + ("," + zeta_names if n_zeta else "") + ",log_density"
    if fingerprint:
        header += f"  [config {fingerprint}]"
    yield header
    vx = lyapunov(model, traj.x_path)
    vy = lyapunov(model, traj.y_path)
    rho_norm = np.linalg.norm(traj.rho_path, axis=-1)
    for i, t in enumerate(traj.times):
        row = [t, vx[i], vy[i], rho_norm[i]]
        if n_zeta:
            row.extend(traj.zeta_path[i])
        row.append(traj.log_density_path[i])
        yield ",".join(repr(float(v)) for v in row)
