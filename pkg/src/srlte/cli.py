"""Command-line front-end.

Exit codes: 0 success, 1 input or I/O error, 2 numerical failure
(separation, singular systems, non-convergence), 3 partial simulation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import compare_all
from .estimators import KINDS, RESTRICTED, EstimatorParams, RestrictionSpec, estimate
from .exceptions import InputError, NumericalError, SrlteError
from .model import fit_mle, read_csv
from .simulation import DEFAULT_SEED, CellResult, SimulationConfig, run_simulation
from .tuning import default_params_for, smse_spectral, spectral_context, select_params

log = logging.getLogger("srlte")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3
THREADS_ENV = "SRLTE_THREADS"


def _clean(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _emit(text, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _parse_vector(text, name):
    try:
        if text.strip().startswith("["):
            vals = json.loads(text)
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
        return np.array(vals, dtype=float)
    except (ValueError, TypeError, json.JSONDecodeError):
        raise InputError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def _load_fit(args):
    data = read_csv(args.data, args.response)
    fit = fit_mle(data, tol=args.tol, max_iter=args.max_iter)
    if not fit.converged:
        raise _NonConvergence(fit)
    return data, fit


class _NonConvergence(NumericalError):
    code = "non-convergence"

    def __init__(self, fit):
        super().__init__(f"IRLS did not converge in {fit.iterations} iterations")
        self.fit = fit


def _load_restriction(args, required):
    if args.restriction is None:
        if required:
            raise InputError("--restriction is required for restricted estimators (sre, srle, srlte)")
        return None
    return RestrictionSpec.from_json(args.restriction)


def cmd_fit(args):
    data, fit = _load_fit(args)
    report = {"n": data.n, "p": data.p, "names": list(data.names), **fit.to_dict()}
    if args.format == "text":
        lines = [f"{nm:>16} {b: .10g}" for nm, b in zip(data.names, fit.beta)]
        lines.append(f"iterations {fit.iterations}, condition number {fit.condition_number:.6g}")
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(dumps(report), args.out)
    return EXIT_OK


def _selected(args):
    if args.estimator == "all":
        return list(KINDS)
    return [args.estimator.upper()]


def _params(kind, fit, restriction, args, tuning_out):
    if kind in ("MLE", "SRE"):
        return None
    if kind == "SRLTE":
        if args.k is not None and args.d is not None:
            return EstimatorParams(k=args.k, d=args.d)
        ctx = spectral_context(fit, restriction)
        tuned = select_params(ctx)
        tuning_out["SRLTE"] = {**tuned.to_dict(), "offdiag_ratio": ctx.offdiag_ratio}
        k = args.k if args.k is not None else tuned.k
        d = args.d if args.d is not None else tuned.d
        return EstimatorParams(k=k, d=d)
    return default_params_for(kind, fit, k=args.k, d=args.d)


def cmd_estimate(args):
    kinds = _selected(args)
    restriction = _load_restriction(args, any(k in RESTRICTED for k in kinds))
    data, fit = _load_fit(args)
    tuning = {}
    estimates = []
    for kind in kinds:
        params = _params(kind, fit, restriction, args, tuning)
        estimates.append(estimate(kind, fit, restriction, params).to_dict())
    _emit(dumps({"names": list(data.names), "estimates": estimates, "tuning": tuning}), args.out)
    return EXIT_OK


def cmd_compare(args):
    restriction = _load_restriction(args, True)
    data, fit = _load_fit(args)
    plug_in = args.beta_true is None
    beta = fit.beta if plug_in else _parse_vector(args.beta_true, "--beta-true")
    if beta.shape != fit.beta.shape:
        raise InputError(f"--beta-true needs {fit.beta.shape[0]} values, got {beta.shape[0]}")
    tuning = {}
    ps = _params("SRLTE", fit, restriction, args, tuning)
    pl = default_params_for("LE", fit)
    verdicts = compare_all(fit, restriction, ps, pl, beta)
    out = {
        "plug_in_beta": plug_in,
        "beta_true": beta,
        "params_srlte": ps.to_dict(),
        "params_liu": pl.to_dict(),
        "verdicts": [v.to_dict() for v in verdicts],
    }
    _emit(dumps(out), args.out)
    return EXIT_OK


def cmd_tune(args):
    restriction = _load_restriction(args, False)
    _, fit = _load_fit(args)
    ctx = spectral_context(fit, restriction)
    tuned = select_params(ctx)
    ks = np.geomspace(tuned.k / 100.0, tuned.k * 100.0, 9)
    out = {
        **tuned.to_dict(),
        "spectral": ctx.to_dict(),
        "smse": smse_spectral(ctx, tuned.k, tuned.d),
        "sweep": [{"k": float(k), "smse": smse_spectral(ctx, float(k), tuned.d)} for k in ks],
    }
    if args.format == "text":
        lines = [
            f"k = {tuned.k:.10g}",
            f"d = {tuned.d:.10g}",
            f"offdiag_ratio = {ctx.offdiag_ratio:.6g}",
            f"{'i':>3} {'lambda':>14} {'b_ii':>14} {'alpha':>14} {'d_bound':>14} {'k_i':>14}",
        ]
        for i in range(ctx.lam.shape[0]):
            lines.append(
                f"{i:>3} {ctx.lam[i]:>14.6g} {ctx.b_diag[i]:>14.6g} {ctx.alpha[i]:>14.6g}"
                f" {tuned.d_bounds[i]:>14.6g} {tuned.k_values[i]:>14.6g}"
            )
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(dumps(out), args.out)
    return EXIT_OK


def _load_config_file(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _sim_config(args):
    cfg = _load_config_file(args.config) if args.config else {}
    if args.reps is not None:
        cfg["reps"] = args.reps
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.n:
        cfg["n_values"] = [int(v) for v in args.n]
    if args.rho:
        cfg["rho_values"] = [float(v) for v in args.rho]
    if args.beta_scheme:
        cfg["beta_scheme"] = args.beta_scheme
    if args.fixed_design:
        cfg["fixed_design"] = True
    if args.estimator and args.estimator != "all":
        cfg["estimators"] = [args.estimator.upper()]
    if args.k is not None or args.d is not None:
        ov = dict(cfg.get("overrides", {}))
        ov["SRLTE"] = {"k": args.k, "d": args.d}
        cfg["overrides"] = ov
    cfg.setdefault("seed", DEFAULT_SEED)
    return SimulationConfig.from_dict(cfg)


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def cmd_simulate(args):
    config = _sim_config(args)
    threads = _threads(args)
    outdir = Path(args.out or "simulation-out")
    outdir.mkdir(parents=True, exist_ok=True)
    progress_path = outdir / "progress.json"

    completed = {}
    if args.resume and progress_path.exists():
        saved = json.loads(progress_path.read_text(encoding="utf-8"))
        if saved.get("config") != _clean(config.to_dict()):
            raise InputError(f"{progress_path}: saved configuration differs; cannot resume")
        for c in saved.get("cells", []):
            cell = CellResult.from_dict(c)
            completed[(cell.n, cell.rho)] = cell
        print(f"resuming with {len(completed)} completed cells", file=sys.stderr)

    done = list(completed.values())

    def on_cell(idx, cell):
        done.append(cell)
        progress_path.write_text(
            dumps({"config": config.to_dict(), "cells": [c.to_dict() for c in done]}),
            encoding="utf-8",
        )
        mse = cell.stats
        summary = " ".join(
            f"{k}={v.mse:.5f}" if v.mse is not None else f"{k}=-" for k, v in mse.items()
        )
        print(f"cell n={cell.n} rho={cell.rho}: {summary}", file=sys.stderr, flush=True)

    report = run_simulation(config, threads=threads, completed=completed, on_cell=on_cell)
    (outdir / "mse.csv").write_text(report.table_csv("mse"), encoding="utf-8", newline="")
    (outdir / "pmse.csv").write_text(report.table_csv("pmse"), encoding="utf-8", newline="")
    (outdir / "report.json").write_text(dumps(report.to_dict()), encoding="utf-8")
    if args.format == "text":
        sys.stdout.write(report.table_text("mse") + "\n" + report.table_text("pmse"))
    progress_path.unlink(missing_ok=True)
    return EXIT_PARTIAL if report.partial else EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="srlte",
        description="Liu-type and stochastic restricted estimators for logistic regression",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p, restriction=True):
        p.add_argument("--data", required=True, help="CSV with header row")
        p.add_argument("--response", default="y", help="name of the 0/1 response column")
        if restriction:
            p.add_argument("--restriction", help='JSON file {"H": [[...]], "h": [...], "Psi": [[...]]}')
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iter", type=int, default=100)
        p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("fit", help="maximum likelihood fit by IRLS")
    data_args(p, restriction=False)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_fit)

    estimator_choices = ("mle", "le", "lte", "sre", "srle", "srlte", "all")

    p = sub.add_parser("estimate", help="compute one or all estimators")
    data_args(p)
    p.add_argument("--estimator", choices=estimator_choices, default="srlte")
    p.add_argument("--k", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="MSE-matrix comparisons of SRLTE with SRE, SRLE, LTE, LE")
    data_args(p)
    p.add_argument("--beta-true", help="true coefficients, comma separated (default: MLE plug-in)")
    p.add_argument("--k", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--format", choices=("json",), default="json")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("tune", help="select (k, d) for SRLTE")
    data_args(p)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="Monte Carlo comparison over an (n, rho) grid")
    p.add_argument("--config", help="JSON or TOML config file")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", action="append", type=int, help="sample size (repeatable)")
    p.add_argument("--rho", action="append", type=float, help="collinearity level (repeatable)")
    p.add_argument("--beta-scheme", choices=("uniform", "ones", "user"))
    p.add_argument("--fixed-design", action="store_true", help="hold X fixed within a cell")
    p.add_argument("--estimator", choices=estimator_choices, default="all")
    p.add_argument("--k", type=float, help="fixed SRLTE k instead of tuning")
    p.add_argument("--d", type=float, help="fixed SRLTE d instead of tuning")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--out", help="output directory (default ./simulation-out)")
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    p.add_argument("--resume", action="store_true", help="skip cells saved in progress.json")
    p.set_defaults(func=cmd_simulate)
    return parser


def _record_target(args):
    # simulate's --out is a directory; error records go to stdout there
    return None if args.command == "simulate" else args.out


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _NonConvergence as exc:
        record = {"error": exc.code, "message": str(exc), "partial_fit": exc.fit.to_dict()}
        _emit(dumps(record), _record_target(args))
        return EXIT_NUMERIC
    except NumericalError as exc:
        _emit(dumps({"error": exc.code, "message": str(exc)}), _record_target(args))
        print(f"srlte: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SrlteError, OSError) as exc:
        print(f"srlte: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
