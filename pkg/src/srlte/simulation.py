"""Monte Carlo comparison of the estimator family under collinearity.

Each replication draws a collinear design, a Bernoulli response and a
noisy restriction, fits the MLE and evaluates every configured estimator
against the true coefficients. Random numbers come from Philox streams
keyed by ``(seed, cell, replication)``, and per-cell sums are reduced in
replication order, so a report depends only on the configuration and
seed, never on the thread count.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .estimators import KINDS, EstimatorParams, RestrictionSpec, check_kind, estimate
from .exceptions import InputError, NumericalError
from .model import Dataset, fit_mle, logistic_probs
from .tuning import default_params_for, select_params, spectral_context

log = logging.getLogger(__name__)

DEFAULT_SEED = 20170101
BETA_SCHEMES = ("uniform", "ones", "user")

# spawn-key tags keeping the stream families disjoint
_KEY_BETA = 0
_KEY_REP = 1
_KEY_DESIGN = 2


def stream(seed, *key):
    """Counter-based generator for one ``(seed, key...)`` coordinate."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def first_difference(p):
    """``(p-1) x (p+1)`` differences of adjacent slopes; intercept column zero."""
    H = np.zeros((p - 1, p + 1))
    for i in range(p - 1):
        H[i, i + 1] = 1.0
        H[i, i + 2] = -1.0
    return H


@dataclass(frozen=True)
class SimulationConfig:
    n_values: tuple = (50, 100, 200)
    p: int = 4
    rho_values: tuple = (0.9, 0.99, 0.999)
    reps: int = 5000
    beta_scheme: str = "uniform"
    beta: Optional[tuple] = None
    H: Optional[tuple] = None
    Psi: Optional[tuple] = None
    seed: int = DEFAULT_SEED
    estimators: tuple = KINDS
    fixed_design: bool = False
    overrides: dict = field(default_factory=dict)
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "rho_values", tuple(float(r) for r in self.rho_values))
        object.__setattr__(self, "estimators", tuple(check_kind(k) for k in self.estimators))
        if self.beta is not None:
            object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        for name in ("H", "Psi"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(tuple(float(x) for x in row) for row in val))
        ov = {}
        for kind, vals in dict(self.overrides).items():
            kind = check_kind(kind)
            ov[kind] = {key: float(v) for key, v in dict(vals).items() if v is not None}
            if set(ov[kind]) - {"k", "d"}:
                raise InputError(f"override for {kind} may only set k and d")
        object.__setattr__(self, "overrides", ov)
        if self.reps < 1:
            raise InputError("reps must be at least 1")
        if self.p < 1:
            raise InputError("p must be at least 1")
        if not self.n_values or not self.rho_values:
            raise InputError("n_values and rho_values must be non-empty")
        for n in self.n_values:
            if n <= self.p + 1:
                raise InputError(f"sample size {n} must exceed p+1 = {self.p + 1}")
        for rho in self.rho_values:
            if not 0.0 <= rho < 1.0:
                raise InputError(f"rho must lie in [0, 1), got {rho}")
        if self.beta_scheme not in BETA_SCHEMES:
            raise InputError(f"beta_scheme must be one of {BETA_SCHEMES}")
        if self.beta_scheme == "user" and self.beta is None:
            raise InputError("beta_scheme 'user' needs a beta vector")
        if not any(k in ("SRE", "SRLE", "SRLTE") for k in self.estimators):
            return
        if self.H is None and self.p < 2:
            raise InputError("the default restriction needs p >= 2")

    def template(self):
        """Restriction template ``(H, Psi)``."""
        H = first_difference(self.p) if self.H is None else np.array(self.H)
        Psi = np.eye(H.shape[0]) if self.Psi is None else np.array(self.Psi)
        # validates shape, rank and Psi
        RestrictionSpec(H, np.zeros(H.shape[0]), Psi)
        if H.shape[1] != self.p + 1:
            raise InputError(f"H must have p+1 = {self.p + 1} columns")
        return H, Psi

    def to_dict(self):
        out = asdict(self)
        for key in ("n_values", "rho_values", "estimators"):
            out[key] = list(out[key])
        for key in ("beta",):
            out[key] = None if out[key] is None else list(out[key])
        for key in ("H", "Psi"):
            out[key] = None if out[key] is None else [list(r) for r in out[key]]
        return out

    @classmethod
    def from_dict(cls, obj):
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)


def gen_design(n, p, rho, rng):
    """Collinear design with standardized predictors and an intercept.

    ``x_ij = sqrt(1 - rho^2) w_ij + rho w_i,p+1`` with standard normal
    ``w``, so any two predictors have correlation ``rho^2``. Columns are
    centered and scaled to unit sample standard deviation (divisor n-1).
    """
    w = rng.standard_normal((n, p + 1))
    x = math.sqrt(1.0 - rho * rho) * w[:, :p] + rho * w[:, p:]
    x = x - x.mean(axis=0)
    x = x / x.std(axis=0, ddof=1)
    return np.column_stack([np.ones(n), x])


def gen_beta(p, scheme="uniform", rng=None, beta=None):
    """Unit-norm coefficient vector of length ``p + 1``.

    ``uniform`` normalizes i.i.d. U(0, 1) entries, ``ones`` is the
    constant vector and ``user`` normalizes the supplied ``beta``.
    """
    if scheme == "ones":
        b = np.ones(p + 1)
    elif scheme == "uniform":
        if rng is None:
            raise InputError("scheme 'uniform' needs a random stream")
        b = rng.random(p + 1)
    elif scheme == "user":
        if beta is None:
            raise InputError("scheme 'user' needs a beta vector")
        b = np.asarray(beta, dtype=float)
        if b.shape != (p + 1,):
            raise InputError(f"beta must have length p+1 = {p + 1}, got {b.shape}")
    else:
        raise InputError(f"unknown beta scheme {scheme!r}")
    norm = np.linalg.norm(b)
    if not norm > 0 or not np.isfinite(norm):
        raise InputError("beta must have non-zero finite norm")
    return b / norm


def gen_response(X, beta, rng):
    """Independent Bernoulli draws with logistic success probabilities."""
    pi = logistic_probs(X, beta)
    return (rng.random(pi.shape[0]) < pi).astype(float)


def gen_restriction(beta_true, template, rng, noise=True):
    """``h = H beta + v`` with ``v ~ N(0, Psi)``; ``noise=False`` sets ``v = 0``."""
    H, Psi = template
    H = np.asarray(H, dtype=float)
    Psi = np.asarray(Psi, dtype=float)
    q = H.shape[0]
    if np.linalg.matrix_rank(H) < q:
        raise InputError("restriction template H is rank deficient")
    v = np.zeros(q)
    if noise:
        v = np.linalg.cholesky(Psi) @ rng.standard_normal(q)
    return RestrictionSpec(H, H @ beta_true + v, Psi)


@dataclass
class EstimatorStats:
    mse: Optional[float]
    pmse: Optional[float]
    mean_k: Optional[float]
    mean_d: Optional[float]
    successes: int
    failure_count: int

    def to_dict(self):
        return asdict(self)


@dataclass
class CellResult:
    n: int
    rho: float
    stats: dict
    failed: bool = False

    def to_dict(self):
        return {
            "n": self.n,
            "rho": self.rho,
            "failed": self.failed,
            "stats": {k: v.to_dict() for k, v in self.stats.items()},
        }

    @classmethod
    def from_dict(cls, obj):
        stats = {k: EstimatorStats(**v) for k, v in obj["stats"].items()}
        return cls(int(obj["n"]), float(obj["rho"]), stats, bool(obj["failed"]))


def _params_for(kind, fit, restriction, config):
    ov = config.overrides.get(kind, {})
    if kind in ("MLE", "SRE"):
        return None
    if kind == "SRLTE":
        if "k" in ov and "d" in ov:
            return EstimatorParams(k=ov["k"], d=ov["d"])
        tuned = select_params(spectral_context(fit, restriction)).params
        return EstimatorParams(k=ov.get("k", tuned.k), d=ov.get("d", tuned.d))
    return default_params_for(kind, fit, k=ov.get("k"), d=ov.get("d"))


def replicate(config, n, rho, beta, rng, template, design=None):
    """One replication; returns ``{kind: (sq_err, pred_err, k, d)}`` or None.

    ``None`` marks an MLE failure; a per-estimator failure maps to None.
    """
    X = gen_design(n, config.p, rho, rng) if design is None else design
    y = gen_response(X, beta, rng)
    restriction = gen_restriction(beta, template, rng) if template is not None else None
    try:
        fit = fit_mle(Dataset(X, y), tol=config.tol, max_iter=config.max_iter)
    except NumericalError as exc:
        log.debug("replication failed: %s", exc)
        return None
    if not fit.converged:
        return None
    pi_true = logistic_probs(X, beta)
    out = {}
    for kind in config.estimators:
        try:
            params = _params_for(kind, fit, restriction, config)
            est = estimate(kind, fit, restriction, params)
        except (NumericalError, InputError) as exc:
            log.debug("%s failed: %s", kind, exc)
            out[kind] = None
            continue
        err = est.beta - beta
        perr = logistic_probs(X, est.beta) - pi_true
        k = params.k if params is not None else None
        d = params.d if params is not None else None
        out[kind] = (float(err @ err), float(perr @ perr), k, d)
    return out


def _mean(values):
    return math.fsum(values) / len(values) if values else None


def _reduce(config, n, rho, results):
    stats = {}
    for kind in config.estimators:
        ok = [r[kind] for r in results if r is not None and r.get(kind) is not None]
        ks = [t[2] for t in ok if t[2] is not None]
        ds = [t[3] for t in ok if t[3] is not None]
        stats[kind] = EstimatorStats(
            mse=_mean([t[0] for t in ok]),
            pmse=_mean([t[1] for t in ok]),
            mean_k=_mean(ks),
            mean_d=_mean(ds),
            successes=len(ok),
            failure_count=config.reps - len(ok),
        )
    failed = all(s.successes == 0 for s in stats.values())
    return CellResult(n, rho, stats, failed)


def cell_grid(config):
    """Cells in table order: rho blocks, then sample sizes."""
    return [(n, rho) for rho in config.rho_values for n in config.n_values]


def true_beta(config):
    return gen_beta(config.p, config.beta_scheme, stream(config.seed, _KEY_BETA), config.beta)


def run_cell(config, n, rho, cell_index=0, threads=1, beta=None):
    """All replications of one ``(n, rho)`` cell."""
    beta = true_beta(config) if beta is None else beta
    needs_r = any(k in ("SRE", "SRLE", "SRLTE") for k in config.estimators)
    template = config.template() if needs_r else None
    design = None
    if config.fixed_design:
        design = gen_design(n, config.p, rho, stream(config.seed, _KEY_DESIGN, cell_index))

    def one(r):
        rng = stream(config.seed, _KEY_REP, cell_index, r)
        return replicate(config, n, rho, beta, rng, template, design)

    if threads <= 1:
        results = [one(r) for r in range(config.reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(config.reps), chunksize=1))
    return _reduce(config, n, rho, results)


@dataclass
class SimulationReport:
    config: SimulationConfig
    beta: np.ndarray
    cells: list

    @property
    def metadata(self):
        return {
            "seed": self.config.seed,
            "version": __version__,
            "config": self.config.to_dict(),
            "beta": self.beta.tolist(),
            "divisor": "successful replications",
            "rng": "numpy Philox keyed by (seed, cell, replication)",
        }

    def cell(self, n, rho):
        for c in self.cells:
            if c.n == n and c.rho == rho:
                return c
        raise KeyError((n, rho))

    def value(self, metric, n, rho, kind):
        return getattr(self.cell(n, rho).stats[kind], metric)

    @property
    def partial(self):
        return any(c.failed for c in self.cells)

    def to_dict(self):
        return {"metadata": self.metadata, "cells": [c.to_dict() for c in self.cells]}

    def table_csv(self, metric):
        """Machine CSV: one row per cell, one column per estimator."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["rho", "n", *self.config.estimators])
        for c in self.cells:
            row = [repr(c.rho), str(c.n)]
            for kind in self.config.estimators:
                v = getattr(c.stats[kind], metric)
                row.append("" if v is None else repr(v))
            w.writerow(row)
        return buf.getvalue()

    def table_text(self, metric):
        """Human table at five decimals, grouped in rho blocks."""
        kinds = self.config.estimators
        head = f"{'n':>6}" + "".join(f"{k:>12}" for k in kinds)
        lines = [f"simulated {metric.upper()}", head]
        for rho in self.config.rho_values:
            lines.append(f"rho = {rho}".center(len(head)))
            for n in self.config.n_values:
                c = self.cell(n, rho)
                vals = [getattr(c.stats[k], metric) for k in kinds]
                lines.append(
                    f"{n:>6}" + "".join(f"{'-':>12}" if v is None else f"{v:>12.5f}" for v in vals)
                )
        return "\n".join(lines) + "\n"


def run_simulation(config, threads=1, completed=None, on_cell=None):
    """Run every cell of the grid.

    ``completed`` maps ``(n, rho)`` to already finished cells (resume);
    ``on_cell`` is called after each newly computed cell.
    """
    beta = true_beta(config)
    completed = completed or {}
    cells = []
    for idx, (n, rho) in enumerate(cell_grid(config)):
        if (n, rho) in completed:
            cell = completed[(n, rho)]
        else:
            cell = run_cell(config, n, rho, idx, threads, beta)
            if on_cell is not None:
                on_cell(idx, cell)
        cells.append(cell)
    return SimulationReport(config, beta, cells)
