"""Binary logistic model and its maximum likelihood fit by IRLS.

The fit is the starting point for every other estimator in the package:
the shrinkage and restricted estimators all reuse the converged weight
matrix ``W``, the working response ``z`` and the information matrix
``C = X' W X`` stored on :class:`MleFit`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._linalg import COND_FLOOR, as_matrix, as_vector, spd_solve, symmetrize
from .exceptions import (
    DegenerateWeightError,
    InputError,
    SeparationError,
    SingularMatrixError,
)

# pi * (1 - pi) below this is an error, never a silent clamp.
WEIGHT_FLOOR = 1e-10

_P_LO = np.finfo(float).tiny
_P_HI = np.nextafter(1.0, 0.0)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Design matrix with a leading intercept column and a 0/1 response."""

    X: np.ndarray
    y: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        X = as_matrix(self.X, "X")
        y = as_vector(self.y, "y")
        if X.shape[0] != y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[1] < 1 or not np.all(X[:, 0] == 1.0):
            raise InputError("first column of X must be the all-ones intercept")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise InputError("response must contain only 0 and 1")
        if X.shape[0] <= X.shape[1]:
            raise InputError(
                f"need more observations than coefficients (n={X.shape[0]}, p+1={X.shape[1]})"
            )
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_predictors(cls, predictors, y, names=()):
        """Build a dataset from an intercept-free predictor matrix."""
        P = np.asarray(predictors, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        X = np.column_stack([np.ones(P.shape[0]), P])
        return cls(X, y, names)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1] - 1


def read_csv(path, response):
    """Load a dataset from CSV; ``response`` names the 0/1 column.

    Every other column is a predictor. The intercept is added here.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if response not in header:
            raise InputError(f"{path}: response column {response!r} not in header")
        ridx = header.index(response)
        rows, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            ys.append(vals[ridx])
            rows.append(vals[:ridx] + vals[ridx + 1:])
    names = tuple(h for i, h in enumerate(header) if i != ridx)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return Dataset.from_predictors(np.array(rows), np.array(ys), names=("(intercept)",) + names)


def logistic_probs(X, beta):
    """Fitted probabilities ``exp(x'b) / (1 + exp(x'b))`` for each row.

    Evaluated without overflow; results saturate at the closest floats
    to 0 and 1 so they stay strictly inside the unit interval.
    """
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.ndim != 2 or beta.ndim != 1 or X.shape[1] != beta.shape[0]:
        raise InputError(
            f"dimension mismatch: X is {X.shape}, beta has shape {beta.shape}"
        )
    return np.clip(expit(X @ beta), _P_LO, _P_HI)


def _check_weights(w):
    bad = np.flatnonzero(w < WEIGHT_FLOOR)
    if bad.size:
        i = int(bad[0])
        raise DegenerateWeightError(
            f"fitted probability at row {i} is within {WEIGHT_FLOOR:g} of 0 or 1",
            row=i,
        )


def working_response(X, beta, y):
    """Working response ``z = eta + (y - pi) / (pi (1 - pi))``."""
    pi = logistic_probs(X, beta)
    y = np.asarray(y, dtype=float)
    if y.shape != pi.shape:
        raise InputError(f"y has shape {y.shape}, expected {pi.shape}")
    w = pi * (1.0 - pi)
    _check_weights(w)
    return X @ beta + (y - pi) / w


def loglik(X, y, beta):
    """Bernoulli log-likelihood, evaluated stably through logaddexp."""
    eta = X @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


@dataclass(frozen=True)
class MleFit:
    """Converged IRLS state.

    ``info`` is ``C = X' W X`` evaluated at ``beta``; ``weights`` and
    ``z_hat`` are frozen at the same point and reused downstream.
    """

    beta: np.ndarray
    pi_hat: np.ndarray
    weights: np.ndarray
    z_hat: np.ndarray
    info: np.ndarray
    iterations: int
    converged: bool
    X: np.ndarray = field(repr=False)
    loglik_trace: tuple = field(default=(), repr=False)

    @property
    def xtwz(self):
        """``X' W z``, the right-hand side shared by every estimator."""
        return self.X.T @ (self.weights * self.z_hat)

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.info)[::-1]

    @property
    def condition_number(self):
        ev = self.eigenvalues
        return float(ev[0] / ev[-1])

    def to_dict(self):
        return {
            "coefficients": self.beta.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "condition_number": self.condition_number,
            "eigenvalues": self.eigenvalues.tolist(),
            "loglik": self.loglik_trace[-1] if self.loglik_trace else None,
        }


def _info(X, w):
    C = symmetrize(X.T @ (w[:, None] * X))
    ev = np.linalg.eigvalsh(C)
    if ev[0] <= COND_FLOOR * ev[-1]:
        raise SingularMatrixError(
            f"X'WX is numerically singular (eigenvalue ratio {ev[0] / ev[-1]:.3g})"
        )
    return C


def fit_mle(data, tol=1e-8, max_iter=100, start=None, step_halving=True):
    """Fit the logistic MLE by iteratively reweighted least squares.

    Parameters
    ----------
    data : Dataset
    tol : float
        Stop once the max-norm change of the coefficients drops below this.
    max_iter : int
        Iteration cap. Hitting it returns the last iterate with
        ``converged=False``.
    start : array_like, optional
        Starting coefficients; defaults to zeros.
    step_halving : bool
        Halve the Newton step while the log-likelihood decreases.

    Raises
    ------
    SeparationError
        If the response is constant or fitted probabilities collapse onto
        0/1 (the MLE does not exist).
    SingularMatrixError
        If ``X' W X`` becomes numerically singular.
    """
    X, y = data.X, data.y
    if y.min() == y.max():
        raise SeparationError("response is constant: complete separation, MLE does not exist")
    beta = np.zeros(X.shape[1]) if start is None else as_vector(start, "start").copy()
    if beta.shape[0] != X.shape[1]:
        raise InputError(f"start has length {beta.shape[0]}, expected {X.shape[1]}")

    def state(b):
        pi = logistic_probs(X, b)
        w = pi * (1.0 - pi)
        try:
            _check_weights(w)
        except DegenerateWeightError as exc:
            raise SeparationError(
                f"complete or quasi-complete separation detected ({exc})"
            ) from exc
        return pi, w

    ll = loglik(X, y, beta)
    trace = [ll]
    converged = False
    it = 0
    pi, w = state(beta)
    while it < max_iter:
        it += 1
        step = spd_solve(_info(X, w), X.T @ (y - pi), "X'WX")
        new = beta + step
        new_ll = loglik(X, y, new)
        if step_halving:
            halvings = 0
            while new_ll < ll - 1e-12 * abs(ll) and halvings < 40:
                step = 0.5 * step
                new = beta + step
                new_ll = loglik(X, y, new)
                halvings += 1
        change = float(np.max(np.abs(new - beta)))
        beta, ll = new, new_ll
        trace.append(ll)
        pi, w = state(beta)
        if change < tol:
            converged = True
            break

    C = _info(X, w)
    z = X @ beta + (y - pi) / w
    return MleFit(
        beta=_frozen(beta),
        pi_hat=_frozen(pi),
        weights=_frozen(w),
        z_hat=_frozen(z),
        info=_frozen(C),
        iterations=it,
        converged=converged,
        X=X,
        loglik_trace=tuple(trace),
    )
