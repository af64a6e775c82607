"""Batch experiment runner: ``pomclab <command> --config <path>``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
failure. Errors are reported as one JSON line on standard error.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, dump_config, load_config, resolve
from .errors import PomcError
from .estimate import (
    EquivClassSpec,
    FitConfig,
    argmax_check,
    class_distance,
    consistency_curve,
    fit_mle,
    kl_profile,
    resolve_workers,
    run_tasks,
)
from .ergodicity import moment_estimate, return_times, tail_diagnostic
from .hmm import Hmm1, filter_tv_gap, loglik_grid, parse_initial
from .odm import forgetting_gap
from .rng import RngStream
from .tables import atomic_write_text, emit_table, read_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
DIAGNOSTICS = "_diagnostics"  # non-file entry of a command's output, goes to the manifest


# --------------------------------------------------------------------------
# helpers


def _run(cfg, key, default=None, required=False):
    if key in cfg.run:
        return cfg.run[key]
    if required:
        raise ConfigError(f"[run] {key} is required for command {cfg.command!r}")
    return default


def _int(cfg, key, default=None, minimum=None):
    v = _run(cfg, key, default, required=default is None)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"[run] {key} must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"[run] {key} must be >= {minimum}")
    return v


def _x0(cfg, model):
    x0 = _run(cfg, "x0", None)
    if x0 is None:
        return model.default_state()
    return np.asarray(x0, dtype=float) if isinstance(x0, list) else float(x0)


def _state_columns(model):
    if isinstance(model, Hmm1) or getattr(model, "d", 1) == 1:
        return ["x"]
    return [f"x_{i + 1}" for i in range(model.d)]


def _hat_columns(model):
    return [f"{name}_hat" for name in model.param_names]


# --------------------------------------------------------------------------
# commands; each returns {file name: (rows, schema)}


def cmd_simulate(cfg, model, rng, workers):
    theta = cfg.theta(model)
    n = _int(cfg, "n", minimum=1)
    x0 = _x0(cfg, model)
    xs, ys = model.simulate(theta, x0, n, rng)
    cols = _state_columns(model)
    y_kind = "int" if getattr(model, "kind", "") == "nbin" else "float"
    schema = [("k", "int")] + [(c, "float") for c in cols] + [("y", y_kind)]
    start = 0 if isinstance(model, Hmm1) else 1
    rows = []
    for k in range(n):
        state = np.atleast_1d(xs[k]).tolist()
        y = int(ys[k]) if y_kind == "int" else float(ys[k])
        rows.append([k + start, *state, y])
    return {"simulate.csv": (rows, schema)}


def _load_data(cfg):
    path = _run(cfg, "data")
    if path is None:
        return None
    rows = read_table(path)
    if not rows or "y" not in rows[0]:
        raise ConfigError(f"data file {path} needs a 'y' column")
    return np.array([float(r["y"]) for r in rows])


def _fit_task(task):
    model, theta, box, fit_cfg, x0, y, stream, n = task
    spec = EquivClassSpec.for_model(model)
    if y is None:
        _, y = model.simulate(theta, x0, n, stream)
    fit = fit_mle(model, y, box, fit_cfg, x0=None if isinstance(model, Hmm1) else x0)
    delta = class_distance(fit.theta_hat, theta, spec) if theta is not None else math.nan
    lost = _truncation(model, fit.theta_hat, y) if isinstance(model, Hmm1) else math.nan
    return fit.theta_hat_vector, fit.loglik_at_hat, delta, lost


def _truncation(model, theta, y):
    """Largest one-step probability mass that left the HMM grid along ``y``."""
    _, det = loglik_grid(theta, model.noise, model.grid, model.xi, y, details=True)
    return det["truncation_mass"]


def cmd_fit(cfg, model, rng, workers):
    theta = cfg.theta(model)
    box = cfg.theta_box(model)
    fit_cfg = FitConfig(resolution=_int(cfg, "resolution", 15, minimum=2))
    x0 = _x0(cfg, model)
    data = _load_data(cfg)
    if data is not None and getattr(model, "kind", "") == "nbin":
        data = data.astype(np.int64)
    n = len(data) if data is not None else _int(cfg, "n", minimum=1)
    reps = 1 if data is not None else _int(cfg, "replicates", 1, minimum=1)
    tasks = [(model, theta, box, fit_cfg, x0, data, rng.child(n, j), n) for j in range(reps)]
    results = run_tasks(_fit_task, tasks, workers)
    schema = ([("replicate", "int")] + [(c, "float") for c in _hat_columns(model)]
              + [("loglik", "float"), ("delta_to_class", "float")])
    rows = [[j, *map(float, v), float(ll), float(d)] for j, (v, ll, d, _) in enumerate(results)]
    out = {"fit.csv": (rows, schema)}
    if isinstance(model, Hmm1):
        out[DIAGNOSTICS] = {"grid_truncation_mass": max(r[3] for r in results)}
    return out


def _profile_grid(cfg, model, theta):
    axes = cfg.profile.get("axes")
    if not isinstance(axes, dict) or not axes:
        raise ConfigError("[profile] axes must map coordinate names to value lists")
    base = model.to_vector(theta)
    names = list(model.param_names)
    for k in axes:
        if k not in names:
            raise ConfigError(f"[profile] unknown coordinate {k!r}")
    idx = [names.index(k) for k in axes]
    mesh = np.meshgrid(*[np.asarray(v, dtype=float) for v in axes.values()], indexing="ij")
    grid = []
    for point in zip(*[m.ravel() for m in mesh]):
        v = base.copy()
        v[idx] = point
        grid.append(model.from_vector(v))
    return list(axes), idx, grid


def cmd_kl_profile(cfg, model, rng, workers):
    theta = cfg.theta(model)
    names, idx, grid = _profile_grid(cfg, model, theta)
    n = _int(cfg, "n", minimum=60)
    m = _int(cfg, "truncation", 200, minimum=2)
    prof = kl_profile(model, theta, grid, n, m, rng, x0=_x0(cfg, model),
                      sensitivity=bool(_run(cfg, "sensitivity", True)))
    est = np.array([p.estimate for p in prof])
    steps = [np.min(np.diff(np.unique(np.asarray(v, dtype=float))))
             if len(v) > 1 else 0.0 for v in cfg.profile["axes"].values()]
    spec = EquivClassSpec.for_model(model)
    tol = np.zeros(len(model.param_names))
    tol[idx] = steps
    full_tol = _full_tolerance(model, tol)
    ok = argmax_check(prof, theta, spec, full_tol)
    schema = ([(k, "float") for k in names]
              + [("estimate", "float"), ("stderr", "float"), ("sensitivity", "float"),
                 ("is_min", "bool")])
    rows = [[*map(float, model.to_vector(p.theta)[idx]), p.estimate, p.stderr,
             p.sensitivity, bool(p.estimate == est.min())] for p in prof]
    summary = [[bool(ok), int(np.argmin(est)), n, m]]
    summary_schema = [("argmax_in_class", "bool"), ("argmin_index", "int"), ("n", "int"),
                      ("truncation", "int")]
    out = {"kl_profile.csv": (rows, schema), "kl_summary.csv": (summary, summary_schema)}
    if isinstance(model, Hmm1):
        _, y = model.simulate(theta, _x0(cfg, model), n + m, rng)
        out[DIAGNOSTICS] = {"grid_truncation_mass": _truncation(model, theta, y)}
    return out


def _full_tolerance(model, tol_free):
    """Map a tolerance on free coordinates to full-vector coordinates."""
    if getattr(model, "kind", "") != "nm":
        return tol_free
    d = model.d
    g = np.concatenate([tol_free[: d - 1], [tol_free[: d - 1].sum()]])
    return np.concatenate([g, tol_free[d - 1:]])


def cmd_consistency(cfg, model, rng, workers):
    theta = cfg.theta(model)
    box = cfg.theta_box(model)
    n_list = _run(cfg, "n_list", required=True)
    if not isinstance(n_list, list) or not all(isinstance(v, int) for v in n_list):
        raise ConfigError("[run] n_list must be a list of integers")
    reps = _int(cfg, "replicates", 5, minimum=3)
    fit_cfg = FitConfig(resolution=_int(cfg, "resolution", 15, minimum=2))
    table = consistency_curve(model, theta, n_list, reps, box, EquivClassSpec.for_model(model),
                              rng, fit_cfg, x0=_x0(cfg, model), workers=workers)
    schema = [("n", "int"), ("mean_delta", "float"), ("q10", "float"), ("q50", "float"),
              ("q90", "float"), ("n_failed", "int")]
    rows = [[int(n), float(a), float(b), float(c), float(d), int(f)] for n, a, b, c, d, f in
            zip(table.n, table.mean_delta, table.q10, table.q50, table.q90, table.n_failed)]
    hats = _hat_columns(model)
    rep_schema = ([("n", "int"), ("replicate", "int")] + [(c, "float") for c in hats]
                  + [("loglik", "float"), ("delta", "float"), ("error", "str")])
    rep_rows = []
    for f in table.replicates:
        v = f.theta_hat_vector if f.theta_hat_vector is not None else [math.nan] * len(hats)
        rep_rows.append([f.n, f.replicate, *map(float, v), float(f.loglik), float(f.delta),
                         f.error])
    return {"consistency.csv": (rows, schema),
            "consistency_replicates.csv": (rep_rows, rep_schema)}


def cmd_filter_forget(cfg, model, rng, workers):
    theta = cfg.theta(model)
    n = _int(cfg, "n", minimum=1)
    x0 = _x0(cfg, model)
    _, ys = model.simulate(theta, x0, n, rng)
    if isinstance(model, Hmm1):
        xi1 = parse_initial(_run(cfg, "xi", "dirac:0"))
        xi2 = parse_initial(_run(cfg, "xi2", "uniform"))
        gaps = filter_tv_gap(theta, model.noise, model.grid, xi1, xi2, ys)
        start = 0
        diag = {"grid_truncation_mass": _truncation(model, theta, ys)}
    else:
        x1 = _run(cfg, "x1", None)
        x2 = _run(cfg, "x2", None)
        if x1 is None or x2 is None:
            raise ConfigError("[run] x1 and x2 are required for observation-driven models")
        conv = (lambda v: np.asarray(v, dtype=float)) if model.kind == "nm" else float
        gaps = forgetting_gap(model, theta, ys, conv(x1), conv(x2))
        start = 1
    rows = [[k + start, float(g)] for k, g in enumerate(gaps)]
    out = {"forget.csv": (rows, [("k", "int"), ("gap", "float")])}
    if isinstance(model, Hmm1):
        out[DIAGNOSTICS] = diag
    return out


def cmd_return_tail(cfg, model, rng, workers):
    theta = cfg.theta(model)
    n_samples = _int(cfg, "n_samples", 10_000, minimum=1)
    cap = _int(cfg, "cap", 10**6, minimum=10)
    level = float(_run(cfg, "level", 0.05))
    sample = return_times(theta, model.noise, n_samples, cap, rng)
    rep = tail_diagnostic(sample, level)
    p1 = float(np.sum(sample.times == 1) / sample.n_excursions)
    cdf_m = float(model.noise.transition.cdf(theta.m))
    curve = [[int(t), float(s)] for t, s in zip(rep.t, rep.log_survival)]
    summary = [[sample.n_excursions, sample.censored_count, p1, cdf_m, rep.geometric_fit_slope,
                rep.curvature_stat, rep.curvature_stderr, rep.z, rep.significant, rep.level]]
    summary_schema = [("n_excursions", "int"), ("censored", "int"), ("p_tau_1", "float"),
                      ("cdf_m", "float"), ("geometric_fit_slope", "float"),
                      ("curvature_stat", "float"), ("curvature_stderr", "float"),
                      ("z", "float"), ("significant", "bool"), ("level", "float")]
    return {"return_tail.csv": (curve, [("t", "int"), ("log_survival", "float")]),
            "return_summary.csv": (summary, summary_schema)}


def cmd_moment(cfg, model, rng, workers):
    theta = cfg.theta(model)
    beta = float(_run(cfg, "beta", 1.0))
    n = _int(cfg, "n", minimum=60)
    burn = _int(cfg, "burn", 1000, minimum=1)
    est = moment_estimate(theta, model.noise, beta, n, burn, rng, x0=float(_run(cfg, "x0", 0.0)))
    schema = [("beta", "float"), ("n", "int"), ("burn", "int"), ("value", "float"),
              ("stderr", "float")]
    return {"moment.csv": ([[beta, n, burn, est.value, est.stderr]], schema)}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "kl-profile": cmd_kl_profile,
    "consistency": cmd_consistency,
    "filter-forget": cmd_filter_forget,
    "return-tail": cmd_return_tail,
    "moment": cmd_moment,
}


# --------------------------------------------------------------------------
# entry point


def run(cfg: ExperimentConfig, workers: int | None = None) -> dict:
    """Execute a resolved config and write its outputs; returns the manifest."""
    cfg = resolve(cfg)
    workers = resolve_workers(workers if workers is not None else cfg.workers)
    model = cfg.build_model()
    rng = RngStream(cfg.seed)
    outputs = COMMANDS[cfg.command](cfg, model, rng, workers)
    diagnostics = outputs.pop(DIAGNOSTICS, {})
    out_dir = Path(cfg.output_dir)
    for name, (rows, schema) in outputs.items():
        emit_table(rows, schema, out_dir / name)
    files = sorted(list(outputs) + [Path(f).with_suffix(".jsonl").name for f in outputs])
    manifest = {
        "command": cfg.command,
        "config": dump_config(cfg),
        "config_sha256": cfg.sha256(),
        "library_version": __version__,
        "versions": {"python": sys.version.split()[0], "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "seeds": {"master_seed": cfg.seed},
        "workers": workers,
        "files": files,
        "file_sha256": {f: hashlib.sha256((out_dir / f).read_bytes()).hexdigest() for f in files},
        "diagnostics": diagnostics,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return manifest


def _error(kind: str, exc: BaseException, code: int) -> int:
    rec = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(rec) + "\n")
    return code


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pomclab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment config (INI with JSON values)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--workers", type=int, help="worker processes (default: config, "
                                                 "then POMCLAB_WORKERS, then 1)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _error("usage", exc, EXIT_CONFIG)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config)
        if cfg.command != args.command:
            raise ConfigError(f"config is for command {cfg.command!r}, not {args.command!r}")
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an integer in [0, 2^64)")
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, output_dir=args.out)
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = resolve(cfg)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    try:
        run(cfg, args.workers)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    except OSError as exc:
        return _error("io", exc, EXIT_IO)
    except (PomcError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        return _error("numeric", exc, EXIT_NUMERIC)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
