"""Statistical verification layer: rates, distances, drift coefficients.

Turns trajectory ensembles into the quantities the contraction and
mixing statements are about: log-linear decay fits, the dual-Lipschitz
(bounded-Lipschitz) distance between empirical measures via an exact
linear program, Lyapunov drift coefficients with confidence margins,
excursion-set frequencies, and Girsanov density diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .binding import BindingSpec
from .engine import run_coupled_ensemble, run_ensemble
from .models import ModelSpec, lyapunov


class EstimatorError(ValueError):
    pass


# -- contraction fits -----------------------------------------------------------


@dataclass
class ContractionFit:
    c: float
    gamma: float
    residual: float
    gamma_se: float


def fit_contraction(series: Iterable[tuple[float, float]]) -> ContractionFit:
    """Least-squares fit of ``value = C exp(-gamma t)`` in log space.

    ``residual`` is the RMS of the log-residuals and ``gamma_se`` the
    usual regression standard error of the slope; non-positive values
    are rejected since the fit lives in log space.
    """
    pts = [(float(t), float(v)) for t, v in series]
    if len(pts) < 2:
        raise EstimatorError("need at least two points to fit a rate")
    times = np.array([t for t, _ in pts])
    values = np.array([v for _, v in pts])
    if np.any(values <= 0.0):
        raise EstimatorError("log of non-positive value in contraction fit")
    logs = np.log(values)
    slope, intercept = np.polyfit(times, logs, 1)
    fitted = slope * times + intercept
    rss = float(((logs - fitted) ** 2).sum())
    residual = math.sqrt(rss / len(pts))
    spread = float(((times - times.mean()) ** 2).sum())
    if len(pts) > 2 and spread > 0:
        gamma_se = math.sqrt(rss / (len(pts) - 2) / spread)
    else:
        gamma_se = float("nan")
    return ContractionFit(
        c=float(np.exp(intercept)), gamma=float(-slope), residual=residual, gamma_se=gamma_se
    )


# -- dual-Lipschitz distance ------------------------------------------------------

DL_DEFAULT_CAP = 300
# past this union size the pairwise-constraint LP stops being a desk-scale
# object; callers should subsample instead of raising the cap
DL_HARD_LIMIT = 2000


def _dedupe(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique rows (sorted, hence deterministic) plus empirical weights."""
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    weights = np.bincount(inverse, minlength=len(uniq)) / len(points)
    return uniq, weights


def dual_lipschitz_distance(
    sample_a: Sequence[np.ndarray],
    sample_b: Sequence[np.ndarray],
    cap: int = DL_DEFAULT_CAP,
    subsample_seed: int = 0,
) -> float:
    """Exact bounded-Lipschitz distance between two empirical measures.

    Solves the linear program over test-function values g on the union
    of the supports:

        maximize  mean_a g - mean_b g
        s.t.      |g(p)| <= s,   |g(p) - g(q)| <= l * d(p, q),   s + l <= 1,

    with d the Euclidean distance.  Feasible g on the support extend to
    the whole space with the same bounds, so the optimum is the distance
    itself, not just a lower bound.  Samples larger than ``cap`` are
    subsampled with the recorded seed.
    """
    a = np.atleast_2d(np.asarray(sample_a, dtype=float))
    b = np.atleast_2d(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EstimatorError("empty sample")
    if a.shape[1] != b.shape[1]:
        raise EstimatorError("samples have different dimensions")
    if min(len(a), cap) + min(len(b), cap) > DL_HARD_LIMIT:
        raise EstimatorError(
            f"sample too large: {min(len(a), cap)}+{min(len(b), cap)} points "
            f"exceed the LP limit {DL_HARD_LIMIT}"
        )
    rng = np.random.default_rng(subsample_seed)
    if len(a) > cap:
        a = a[rng.choice(len(a), cap, replace=False)]
    if len(b) > cap:
        b = b[rng.choice(len(b), cap, replace=False)]

    pts_a, w_a = _dedupe(a)
    pts_b, w_b = _dedupe(b)
    union, inv = np.unique(np.vstack([pts_a, pts_b]), axis=0, return_inverse=True)
    u = len(union)
    wa = np.zeros(u)
    wb = np.zeros(u)
    np.add.at(wa, inv[: len(pts_a)], w_a)
    np.add.at(wb, inv[len(pts_a) :], w_b)

    gram = union @ union.T
    sq = np.diag(gram)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0)
    dist = np.sqrt(d2)

    iu, ju = np.triu_indices(u, k=1)
    n_pairs = len(iu)
    pair_d = dist[iu, ju]
    # variables [g_0 .. g_{u-1}, s, l]; constraint rows, all of the form A x <= 0
    # except the last:  g_p - s,  -g_p - s,  ±(g_p - g_q) - l d(p,q),  s + l <= 1
    all_idx = np.arange(u)
    s_col = np.full(u, u)
    l_col = np.full(n_pairs, u + 1)
    ones_u, ones_p = np.ones(u), np.ones(n_pairs)
    row_list = [
        np.repeat(np.arange(0, u), 2),
        np.repeat(np.arange(u, 2 * u), 2),
        np.repeat(np.arange(2 * u, 2 * u + n_pairs), 3),
        np.repeat(np.arange(2 * u + n_pairs, 2 * u + 2 * n_pairs), 3),
        np.array([2 * u + 2 * n_pairs, 2 * u + 2 * n_pairs]),
    ]
    col_list = [
        np.column_stack([all_idx, s_col]).ravel(),
        np.column_stack([all_idx, s_col]).ravel(),
        np.column_stack([iu, ju, l_col]).ravel(),
        np.column_stack([iu, ju, l_col]).ravel(),
        np.array([u, u + 1]),
    ]
    data_list = [
        np.column_stack([ones_u, -ones_u]).ravel(),
        np.column_stack([-ones_u, -ones_u]).ravel(),
        np.column_stack([ones_p, -ones_p, -pair_d]).ravel(),
        np.column_stack([-ones_p, ones_p, -pair_d]).ravel(),
        np.array([1.0, 1.0]),
    ]
    n_rows = 2 * u + 2 * n_pairs + 1
    a_ub = sp.csr_matrix(
        (np.concatenate(data_list), (np.concatenate(row_list), np.concatenate(col_list))),
        shape=(n_rows, u + 2),
    )
    brow = np.zeros(n_rows)
    brow[-1] = 1.0
    c = np.concatenate([-(wa - wb), [0.0, 0.0]])
    bounds = [(None, None)] * u + [(0.0, None), (0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=brow, bounds=bounds, method="highs")
    if not res.success:
        raise EstimatorError(f"dual-Lipschitz LP failed: {res.message}")
    return max(0.0, float(-res.fun))


def dirac_dl_distance(separation: float) -> float:
    """Closed form for two point masses at Euclidean distance d: 2d/(2+d)."""
    return 2.0 * separation / (2.0 + separation)


def bootstrap_null_quantile(
    sample_a: np.ndarray,
    sample_b: np.ndarray,
    n_boot: int = 30,
    cap: int = 100,
    seed: int = 0,
    quantile: float = 0.95,
) -> float:
    """Null distribution of the two-sample distance under 'same law':
    pool the samples, re-split at random, and return the requested
    quantile of the resulting distances."""
    pool = np.vstack([np.atleast_2d(sample_a), np.atleast_2d(sample_b)])
    n_a = min(len(sample_a), cap)
    n_b = min(len(sample_b), cap)
    rng = np.random.default_rng(seed)
    values = []
    for i in range(n_boot):
        perm = rng.permutation(len(pool))
        values.append(
            dual_lipschitz_distance(
                pool[perm[:n_a]], pool[perm[n_a : n_a + n_b]], cap=cap, subsample_seed=i
            )
        )
    return float(np.quantile(values, quantile))


# -- Lyapunov drift fit ------------------------------------------------------------


@dataclass
class LyapunovFit:
    a: float
    b: float
    a_se: float
    b_se: float
    probe_v: list[float]
    estimates: list[float]
    standard_errors: list[float]

    @property
    def k0(self) -> float:
        """Radius of the attracting V-ball implied by the fit: 4b/(1-a)."""
        return 4.0 * self.b / (1.0 - self.a)


def lyapunov_fit(
    model: ModelSpec,
    probes: Sequence[np.ndarray],
    samples_per_probe: int = 100,
    dt: float = 1e-3,
    seed: int = 0,
) -> LyapunovFit:
    """Fit ``E V(time-1 state from x) <= a V(x) + b`` with ``a < 1``.

    Monte-Carlo estimates of the conditional mean are regressed on
    ``V(probe)``; the intercept is then lifted so the line dominates
    every estimate plus two standard errors.  Raises ``EstimatorError``
    ("no dissipative fit") when the regression slope reaches 1.
    """
    v0, means, ses = [], [], []
    for i, probe in enumerate(probes):
        ens = run_ensemble(
            model, np.asarray(probe, dtype=float), samples_per_probe, units=1,
            dt=dt, seed=seed, stream0=i * samples_per_probe,
        )
        values = lyapunov(model, ens.states[-1])
        v0.append(float(lyapunov(model, np.asarray(probe, dtype=float))))
        means.append(float(values.mean()))
        ses.append(float(values.std(ddof=1) / math.sqrt(samples_per_probe)))
    v0 = np.array(v0)
    means = np.array(means)
    ses = np.array(ses)
    slope, intercept = np.polyfit(v0, means, 1)
    if slope >= 1.0:
        raise EstimatorError(f"no dissipative fit: slope {slope:.4f} >= 1")
    if slope < 0.0:
        slope = 0.0
        intercept = float(means.max())
    # lift the intercept until the line dominates all estimates + 2 se
    shift = float(np.max(means + 2.0 * ses - (slope * v0 + intercept)))
    if shift > 0:
        intercept += shift
    resid = means - (slope * v0 + intercept)
    n = len(v0)
    denom = float(((v0 - v0.mean()) ** 2).sum())
    sigma2 = float((resid**2).sum() / max(n - 2, 1))
    a_se = math.sqrt(sigma2 / denom) if denom > 0 else float("nan")
    b_se = math.sqrt(sigma2 * (1.0 / n + v0.mean() ** 2 / denom)) if denom > 0 else float("nan")
    return LyapunovFit(
        a=float(slope), b=float(intercept), a_se=a_se, b_se=b_se,
        probe_v=[float(v) for v in v0],
        estimates=[float(m) for m in means],
        standard_errors=[float(s) for s in ses],
    )


# -- excursion-set frequencies ------------------------------------------------------


def axk_table(
    model: ModelSpec,
    x0: np.ndarray,
    ks: Sequence[float],
    horizon: int,
    n_traj: int,
    dt: float = 1e-3,
    seed: int = 0,
    stream0: int = 0,
) -> list[dict]:
    """Empirical frequency of the event that the per-unit-interval sup of V
    stays below ``k (V(x0) + n²)`` for every interval ``n = 1..horizon``.

    One ensemble is shared across all ``k`` (the events are nested, so
    the frequencies are monotone in ``k`` by construction).  The bound
    column ``1 - C/k`` is calibrated at the smallest ``k`` in the sweep.
    """
    x0 = np.asarray(x0, dtype=float)
    if horizon < 0:
        raise EstimatorError("horizon must be non-negative")
    if horizon == 0:
        return [{"k": float(k), "frequency": 1.0, "bound": 1.0} for k in ks]
    ens = run_ensemble(model, x0, n_traj, units=horizon + 1, dt=dt, seed=seed, stream0=stream0)
    v0 = float(lyapunov(model, x0))
    intervals = np.arange(1, horizon + 1)
    w = ens.w_sup[1 : horizon + 1]  # (horizon, n_traj)
    freqs = {}
    for k in ks:
        thresholds = k * (v0 + intervals.astype(float) ** 2)
        freqs[k] = float(np.all(w <= thresholds[:, None], axis=0).mean())
    k_min = min(ks)
    c_hat = (1.0 - freqs[k_min]) * k_min
    return [
        {"k": float(k), "frequency": freqs[k], "bound": 1.0 - c_hat / float(k)}
        for k in sorted(ks)
    ]


def axk_frequency(
    model: ModelSpec,
    x0: np.ndarray,
    k: float,
    horizon: int,
    n_traj: int,
    dt: float = 1e-3,
    seed: int = 0,
    c_hat: float | None = None,
) -> tuple[float, float | None]:
    """Single-k version of :func:`axk_table`; the bound column needs an
    externally calibrated constant."""
    row = axk_table(model, x0, [k], horizon, n_traj, dt=dt, seed=seed)[0]
    bound = None if c_hat is None else 1.0 - c_hat / k
    return row["frequency"], bound


# -- density diagnostics --------------------------------------------------------------


@dataclass
class DensityDiagnostics:
    horizons: list[int]
    mean_density: list[float]
    mean_density_se: list[float]
    mean_inv_sq_good: list[float]
    mean_step_dev_sq: list[float]
    good_fraction: list[float]
    n_overflow: int
    gamma2_hat: float | None
    k_good: float


def density_diagnostics(
    model: ModelSpec,
    binding: BindingSpec,
    x0: np.ndarray,
    y0: np.ndarray,
    horizons: Sequence[int],
    n_traj: int,
    dt: float = 1e-3,
    seed: int = 0,
    k_good: float = 20.0,
) -> DensityDiagnostics:
    """Girsanov-weight diagnostics along coupled ensembles.

    Per horizon n: the plain mean of the density (a martingale check),
    the mean of density^-2 restricted to the "good" event where the
    summed per-interval sup of V stays below ``k_good (V(x0)+V(y0)+m²)``
    (this should stay bounded in n), and the mean of
    ``(1 - single-step density at time n)²`` on the good event (this
    should decay); a log-linear rate is fitted to the last column after
    the first three horizons are dropped, where the decay regime starts.
    Overflowed trajectories are excluded and counted.
    """
    horizons = sorted(int(n) for n in horizons)
    if not horizons or horizons[0] < 1:
        raise EstimatorError("horizons must be positive integers")
    units = horizons[-1] + 1
    ens = run_coupled_ensemble(
        model, binding, np.asarray(x0, float), np.asarray(y0, float),
        n_traj, units=units, dt=dt, seed=seed,
    )
    ok = ~ens.overflow
    n_overflow = int(ens.overflow.sum())
    if not np.any(ok):
        raise EstimatorError("all trajectories overflowed the density accumulator")
    v_tot = float(lyapunov(model, np.asarray(x0, float)) + lyapunov(model, np.asarray(y0, float)))
    w_joint = ens.w_sup_x + ens.w_sup_y  # (units, n_traj)
    m_idx = np.arange(1, units + 1, dtype=float)
    within = w_joint <= k_good * (v_tot + m_idx[:, None] ** 2)
    good_up_to = np.cumprod(within, axis=0).astype(bool)  # row n-1: good through n units

    rows = {k: [] for k in ("md", "se", "inv", "step", "gf")}
    for n in horizons:
        ld_n = ens.log_density[n][ok]
        dens = np.exp(ld_n)
        rows["md"].append(float(dens.mean()))
        rows["se"].append(float(dens.std(ddof=1) / math.sqrt(len(dens))))
        good = good_up_to[n - 1] & ok
        rows["gf"].append(float(good.mean()))
        if np.any(good):
            rows["inv"].append(float(np.exp(-2.0 * ens.log_density[n][good]).mean()))
            step = np.exp(ens.log_density[n + 1][good] - ens.log_density[n][good])
            rows["step"].append(float(((1.0 - step) ** 2).mean()))
        else:
            rows["inv"].append(float("nan"))
            rows["step"].append(float("nan"))

    gamma2_hat = None
    tail = [(n, v) for n, v in zip(horizons[3:], rows["step"][3:]) if v > 0 and math.isfinite(v)]
    if len(tail) >= 2:
        gamma2_hat = fit_contraction(tail).gamma
    return DensityDiagnostics(
        horizons=horizons,
        mean_density=rows["md"],
        mean_density_se=rows["se"],
        mean_inv_sq_good=rows["inv"],
        mean_step_dev_sq=rows["step"],
        good_fraction=rows["gf"],
        n_overflow=n_overflow,
        gamma2_hat=gamma2_hat,
        k_good=k_good,
    )


# -- binding growth exponents ------------------------------------------------------------


def binding_growth_exponents(
    model: ModelSpec,
    binding: BindingSpec,
    n_pairs: int = 300,
    seed: int = 0,
) -> dict:
    """Fit the force-growth shape ``|G(x,y)|² ≈ C |x-y|^alpha (1+V(x)+V(y))^beta``.

    Random pairs sweep separations across three decades and amplitudes
    across one; the exponents come from least squares in log space.
    Zero-force pairs are skipped (they carry no growth information).
    """
    rng = np.random.default_rng(seed)
    rows, values = [], []
    for _ in range(n_pairs):
        x = rng.normal(size=model.dim) * rng.choice([0.3, 1.0, 3.0])
        direction = rng.normal(size=model.dim)
        direction /= np.linalg.norm(direction)
        sep = 10.0 ** rng.uniform(-2.0, 0.5)
        y = x + sep * direction
        g_sq = float((binding.force(x, y) ** 2).sum())
        if g_sq <= 0.0:
            continue
        v_tot = float(lyapunov(model, x) + lyapunov(model, y))
        rows.append([1.0, math.log(sep), math.log1p(v_tot)])
        values.append(math.log(g_sq))
    if len(rows) < 10:
        raise EstimatorError("not enough informative pairs for a growth fit")
    coef, *_ = np.linalg.lstsq(np.array(rows), np.array(values), rcond=None)
    return {"c": float(np.exp(coef[0])), "alpha": float(coef[1]), "beta": float(coef[2])}


# -- law-distance series ---------------------------------------------------------------


def mixing_distance_series(
    model: ModelSpec,
    x0_a: np.ndarray,
    x0_b: np.ndarray,
    n_side: int,
    times: Sequence[int],
    dt: float = 1e-3,
    seed: int = 0,
    cap: int = DL_DEFAULT_CAP,
) -> list[dict]:
    """Dual-Lipschitz distance between the laws started at two initial
    conditions, estimated from independent ensembles (disjoint noise
    streams) at the requested integer times."""
    times = sorted(int(t) for t in times)
    units = times[-1]
    ens_a = run_ensemble(model, np.asarray(x0_a, float), n_side, units, dt, seed, stream0=0)
    ens_b = run_ensemble(model, np.asarray(x0_b, float), n_side, units, dt, seed, stream0=n_side)
    out = []
    for t in times:
        value = dual_lipschitz_distance(ens_a.states[t], ens_b.states[t], cap=cap, subsample_seed=t)
        out.append({"t": float(t), "distance": value, "n_a": n_side, "n_b": n_side})
    return out


# -- report ------------------------------------------------------------------------------


@dataclass
class EstimatorReport:
    """Container for everything a run measured, JSON-serializable."""

    model_id: str
    config_fingerprint: str
    contraction: dict | None = None
    distances: list = field(default_factory=list)
    lyapunov: dict | None = None
    axk: list = field(default_factory=list)
    density: dict | None = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EstimatorReport":
        return cls(**json.loads(text))
