"""Command-line experiment runner.

Subcommands::

    asymcouple run --config PATH [--seed N] [--out DIR] [--jobs N]
    asymcouple reproduce EXPERIMENT [--seed N] [--out DIR]
    asymcouple dump-cascade A_SQUARED [--truncation M]
    asymcouple list-presets

Exit codes: 0 success / all checks pass, 1 an acceptance check failed,
2 configuration error, 3 runtime blow-up (partial outputs are written).
The environment variable ``ASYMCOUPLE_OUT`` overrides the output
directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import binding as bnd
from . import estimators as est
from . import models
from .config import ConfigError, ExperimentConfig, default_record_every, load_config
from .engine import (
    BlowUpError,
    CoupledEnsembleResult,
    integrate,
    integrate_coupled,
    run_coupled_ensemble,
    run_ensemble,
    sample_noise,
    trajectory_csv_lines,
)
from .estimators import EstimatorReport
from .presets import PRESETS, run_preset


def _ensemble_worker(args):
    """Top-level worker so process pools can pickle the job description."""
    (model_id, params, x0, y0, count, units, dt, seed, stream0, record_every, coupled) = args
    model = models.make_model(model_id, **params)
    if coupled:
        b = bnd.make_binding(model)
        return run_coupled_ensemble(
            model, b, x0, y0, count, units, dt, seed, stream0=stream0, record_every=record_every
        )
    return run_ensemble(
        model, x0, count, units, dt, seed, stream0=stream0, record_every=record_every
    )


def _run_ensemble_jobs(cfg: ExperimentConfig, x0, y0, record_every):
    """Dispatch ensemble members to a worker pool; members are indexed by
    noise stream so the merged result is independent of the schedule."""
    n = cfg.ensemble
    jobs = min(cfg.jobs, n)
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    tasks = [
        (
            cfg.model_id,
            cfg.model_params,
            x0,
            y0,
            int(hi - lo),
            cfg.units,
            cfg.dt,
            cfg.seed,
            int(lo),
            record_every,
            cfg.binding,
        )
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    if jobs == 1:
        results = [_ensemble_worker(tasks[0])]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_ensemble_worker, tasks))
    first = results[0]
    if isinstance(first, CoupledEnsembleResult):
        return CoupledEnsembleResult(
            times=first.times,
            x=np.concatenate([r.x for r in results], axis=1),
            rho=np.concatenate([r.rho for r in results], axis=1),
            zeta=np.concatenate([r.zeta for r in results], axis=1)
            if first.zeta is not None
            else None,
            log_density=np.concatenate([r.log_density for r in results], axis=1),
            w_sup_x=np.concatenate([r.w_sup_x for r in results], axis=1),
            w_sup_y=np.concatenate([r.w_sup_y for r in results], axis=1),
            g_l2=np.concatenate([r.g_l2 for r in results]),
            overflow=np.concatenate([r.overflow for r in results]),
            dt=first.dt,
        )
    times = first.times
    return type(first)(
        times=times,
        states=np.concatenate([r.states for r in results], axis=1),
        w_sup=np.concatenate([r.w_sup for r in results], axis=1),
        dt=first.dt,
    )


def _quantile_rows(times, values):
    qs = np.quantile(values, [0.1, 0.5, 0.9], axis=1)
    mean = values.mean(axis=1)
    for i, t in enumerate(times):
        yield [t, mean[i], qs[0, i], qs[1, i], qs[2, i]]


def _write_plot_data(path: Path, cfg, fingerprint, ens):
    lines = []
    if isinstance(ens, CoupledEnsembleResult):
        header = "# t,rho_norm_mean,rho_norm_q10,rho_norm_q50,rho_norm_q90"
        rho_norm = np.linalg.norm(ens.rho, axis=-1)
        extra_cols = [ens.log_density.mean(axis=1)]
        header += ",log_density_mean"
        if ens.zeta is not None:
            extra_cols.append(np.abs(ens.zeta[:, :, 0]).mean(axis=1))
            header += ",abs_zeta1_mean"
        lines.append(header + f"  [config {fingerprint}]")
        for i, row in enumerate(_quantile_rows(ens.times, rho_norm)):
            row.extend(col[i] for col in extra_cols)
            lines.append(",".join(repr(float(v)) for v in row))
    else:
        lines.append(f"# t,V_mean,V_q10,V_q50,V_q90  [config {fingerprint}]")
        model = cfg.build_model()
        v = models.lyapunov(model, ens.states)
        for row in _quantile_rows(ens.times, v):
            lines.append(",".join(repr(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _run_estimators(cfg, model, ens, x0, y0, fingerprint) -> EstimatorReport:
    report = EstimatorReport(model_id=model.id, config_fingerprint=fingerprint)
    toggles = cfg.estimators
    if isinstance(ens, CoupledEnsembleResult):
        rho_norm = np.linalg.norm(ens.rho, axis=-1).mean(axis=1)
        if toggles.get("contraction", True) and np.all(rho_norm > 0):
            fit = est.fit_contraction(list(zip(ens.times, rho_norm)))
            report.contraction = {"c": fit.c, "gamma": fit.gamma, "gamma_se": fit.gamma_se, "residual": fit.residual}
    if toggles.get("mixing", False):
        alt = toggles.get("mixing_alt_x0")
        if alt is None:
            raise ConfigError("[estimators] mixing requires mixing_alt_x0")
        alt_x0 = np.zeros(model.dim)
        alt_x0[: len(alt)] = alt
        series = est.mixing_distance_series(
            model, x0, alt_x0, n_side=cfg.ensemble,
            times=toggles.get("mixing_times", [1, 2, 3]), dt=cfg.dt, seed=cfg.seed,
        )
        report.distances = series
    if toggles.get("lyapunov", False):
        base = x0 if np.linalg.norm(x0) > 0 else np.ones(model.dim) / np.sqrt(model.dim)
        probes = [base * s for s in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)]
        fit = est.lyapunov_fit(model, probes, samples_per_probe=min(200, cfg.ensemble),
                               dt=cfg.dt, seed=cfg.seed)
        report.lyapunov = {
            "a": fit.a, "b": fit.b, "a_se": fit.a_se, "b_se": fit.b_se,
            "probe_v": fit.probe_v, "estimates": fit.estimates,
            "standard_errors": fit.standard_errors,
        }
    if toggles.get("axk", False):
        report.axk = est.axk_table(
            model, x0, toggles.get("axk_ks", [100.0, 1000.0, 10000.0]),
            toggles.get("axk_horizon", 3), n_traj=cfg.ensemble, dt=cfg.dt, seed=cfg.seed,
        )
    if toggles.get("density", False):
        b = bnd.make_binding(model)
        diag = est.density_diagnostics(
            model, b, x0, y0, toggles.get("density_horizons", [1, 2, 3, 4]),
            n_traj=cfg.ensemble, dt=cfg.dt, seed=cfg.seed,
        )
        report.density = {
            "horizons": diag.horizons,
            "mean_density": diag.mean_density,
            "mean_density_se": diag.mean_density_se,
            "mean_inv_sq_good": diag.mean_inv_sq_good,
            "mean_step_dev_sq": diag.mean_step_dev_sq,
            "good_fraction": diag.good_fraction,
            "n_overflow": diag.n_overflow,
            "gamma2_hat": diag.gamma2_hat,
            "k_good": diag.k_good,
        }
    return report


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.jobs is not None:
            cfg.jobs = args.jobs
        out_dir = Path(os.environ.get("ASYMCOUPLE_OUT") or args.out or cfg.out_dir)
        model = cfg.build_model()
        x0, y0 = cfg.initial_conditions(model)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir.mkdir(parents=True, exist_ok=True)
    fingerprint = cfg.fingerprint()
    spu = round(1.0 / cfg.dt)
    record_every = default_record_every(cfg)
    dense_every = cfg.record_every
    if not dense_every:
        # densest divisor of the unit interval near a tenth of it
        dense_every = next(d for d in range(max(1, spu // 10), 0, -1) if spu % d == 0)

    try:
        noise = sample_noise(model, cfg.units * spu, cfg.dt, cfg.seed, stream=0)
        if cfg.binding:
            b = bnd.make_binding(model)
            traj = integrate_coupled(model, b, x0, y0, noise, record_every=dense_every,
                                     record_force=False)
            csv_lines = trajectory_csv_lines(model, traj, fingerprint)
        else:
            traj = integrate(model, x0, noise, record_every=dense_every)
            v = models.lyapunov(model, traj.states)
            csv_lines = [f"# t,V_x  [config {fingerprint}]"] + [
                f"{t!r},{float(val)!r}" for t, val in zip(traj.times, v)
            ]
        (out_dir / "trajectory.csv").write_text("\n".join(csv_lines) + "\n")

        ens = _run_ensemble_jobs(cfg, x0, y0, record_every)
        _write_plot_data(out_dir / "plot_data.csv", cfg, fingerprint, ens)
        report = _run_estimators(cfg, model, ens, x0, y0, fingerprint)
        report.extras["status"] = "ok"
        report.extras["seed"] = cfg.seed
        (out_dir / "report.json").write_text(report.to_json() + "\n")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        diag = {
            "status": "blow_up",
            "time": exc.time,
            "config_fingerprint": fingerprint,
            "model_id": cfg.model_id,
            "seed": cfg.seed,
        }
        (out_dir / "report.json").write_text(json.dumps(diag, sort_keys=True, indent=2) + "\n")
        print(f"blow-up at t={exc.time:.6g}; partial outputs in {out_dir}", file=sys.stderr)
        return 3
    print(f"run complete; outputs in {out_dir} (config {fingerprint})")
    return 0


def cmd_reproduce(args) -> int:
    if args.experiment not in PRESETS:
        print(
            f"unknown experiment {args.experiment!r}; valid ids: {', '.join(sorted(PRESETS))}",
            file=sys.stderr,
        )
        return 2
    outcome = run_preset(args.experiment, seed=args.seed)
    out_dir = Path(os.environ.get("ASYMCOUPLE_OUT") or args.out or "out") / args.experiment
    out_dir.mkdir(parents=True, exist_ok=True)
    if outcome.report is not None:
        cascade_text = outcome.report.extras.get("cascade_text")
        if cascade_text:
            print(cascade_text)
        (out_dir / "report.json").write_text(outcome.report.to_json() + "\n")
    for line in outcome.lines():
        print(line)
    return 0 if outcome.passed else 1


def cmd_dump_cascade(args) -> int:
    try:
        if args.a_squared < 0:
            raise ConfigError("a_squared must be non-negative")
        model = models.make_chain(a_squared=args.a_squared, truncation=args.truncation)
        cascade = bnd.build_zeta_cascade(model)
    except (ConfigError, models.ModelError, bnd.BindingError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(bnd.dump_cascade_text(cascade), end="")
    return 0


def cmd_list_presets(_args) -> int:
    for name in sorted(PRESETS):
        print(f"{name:22s} {PRESETS[name][1]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asymcouple", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="path to the config file")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--jobs", type=int, default=None, help="worker pool size")
    p_run.set_defaults(fn=cmd_run)

    p_rep = sub.add_parser("reproduce", help="run a pinned experiment and check it")
    p_rep.add_argument("experiment", help="preset id (see list-presets)")
    p_rep.add_argument("--seed", type=int, default=None)
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(fn=cmd_reproduce)

    p_dump = sub.add_parser("dump-cascade", help="print the chain's derived force")
    p_dump.add_argument("a_squared", type=float)
    p_dump.add_argument("--truncation", type=int, default=None)
    p_dump.set_defaults(fn=cmd_dump_cascade)

    p_list = sub.add_parser("list-presets", help="list pinned experiments")
    p_list.set_defaults(fn=cmd_list_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
