"""Liu-type and stochastic-restricted estimators built on an MLE fit.

All estimators here are closed-form post-processing of a converged
:class:`~srlte.model.MleFit`:

======  =============================================
MLE     the IRLS fit itself
LE      ``F_d b_MLE``
LTE     ``F_kd b_MLE``
SRE     mixed estimator with restriction ``h = H b + v``
SRLE    ``F_d b_SRE``
SRLTE   ``F_kd b_SRE``
======  =============================================

with ``F_d = (C + I)^-1 (C + d I)`` and ``F_kd = (C + k I)^-1 (C - d I)``.

The restriction precision ``Psi^-1`` is used everywhere (including the
SRLTE inner term and all MSEM formulas); ``Psi`` is only ever applied
through its Cholesky factor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from ._linalg import as_matrix, is_spd, spd_solve, symmetrize
from .exceptions import InputError, ParameterDomainError

KINDS = ("MLE", "LE", "LTE", "SRE", "SRLE", "SRLTE")
RESTRICTED = frozenset({"SRE", "SRLE", "SRLTE"})
USES_D = frozenset({"LE", "LTE", "SRLE", "SRLTE"})
USES_K = frozenset({"LTE", "SRLTE"})


def check_kind(kind):
    k = str(kind).upper()
    if k not in KINDS:
        raise InputError(f"unknown estimator {kind!r}; expected one of {', '.join(KINDS)}")
    return k


@dataclass(frozen=True)
class RestrictionSpec:
    """Stochastic linear restriction ``h = H beta + v``, ``Cov(v) = Psi``.

    ``q = 0`` (empty ``H``) is the canonical unrestricted case.
    """

    H: np.ndarray
    h: np.ndarray
    Psi: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        h = np.asarray(self.h, dtype=float).reshape(-1)
        Psi = np.asarray(self.Psi, dtype=float)
        if H.ndim != 2:
            raise InputError(f"H must be a matrix, got shape {H.shape}")
        q = H.shape[0]
        if Psi.size == 0:
            Psi = Psi.reshape(q, q) if q == 0 else Psi
        if h.shape != (q,):
            raise InputError(f"h has length {h.shape[0]}, H has {q} rows")
        if Psi.shape != (q, q):
            raise InputError(f"Psi must be {q}x{q}, got {Psi.shape}")
        if q:
            for name, a in (("H", H), ("h", h), ("Psi", Psi)):
                if not np.all(np.isfinite(a)):
                    raise InputError(f"{name} contains non-finite entries")
            if q > H.shape[1]:
                raise InputError(f"H has more rows ({q}) than columns ({H.shape[1]})")
            if np.linalg.matrix_rank(H) < q:
                raise InputError("H must have full row rank (use q=0 for no restriction)")
            if not is_spd(Psi):
                raise InputError("Psi must be symmetric positive definite")
        for name, a in (("H", H), ("h", h), ("Psi", Psi)):
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def empty(cls, ncoef):
        return cls(np.zeros((0, ncoef)), np.zeros(0), np.zeros((0, 0)))

    @property
    def q(self):
        return self.H.shape[0]

    @property
    def ncoef(self):
        return self.H.shape[1]

    def precision_terms(self):
        """``(H' Psi^-1 H, H' Psi^-1 h)`` via the Cholesky factor of ``Psi``."""
        if self.q == 0:
            return np.zeros((self.ncoef, self.ncoef)), np.zeros(self.ncoef)
        L = np.linalg.cholesky(symmetrize(self.Psi))
        A = sla.solve_triangular(L, self.H, lower=True)
        a = sla.solve_triangular(L, self.h, lower=True)
        return symmetrize(A.T @ A), A.T @ a

    def to_dict(self):
        return {"H": self.H.tolist(), "h": self.h.tolist(), "Psi": self.Psi.tolist()}

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise InputError("restriction must be a JSON object with keys H, h, Psi")
        for key in ("H", "h", "Psi"):
            if key not in obj:
                raise InputError(f"restriction is missing key {key!r}")
        try:
            H = np.array(obj["H"], dtype=float)
        except (TypeError, ValueError):
            raise InputError("restriction key 'H' is not a numeric matrix") from None
        try:
            h = np.array(obj["h"], dtype=float)
        except (TypeError, ValueError):
            raise InputError("restriction key 'h' is not a numeric vector") from None
        try:
            Psi = np.array(obj["Psi"], dtype=float)
        except (TypeError, ValueError):
            raise InputError("restriction key 'Psi' is not a numeric matrix") from None
        if H.ndim != 2:
            raise InputError("restriction key 'H' must be a list of rows")
        if h.ndim != 1:
            raise InputError("restriction key 'h' must be a flat list")
        if Psi.ndim != 2 and Psi.size:
            raise InputError("restriction key 'Psi' must be a list of rows")
        return cls(H, h, Psi)

    @classmethod
    def from_json(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(obj)


@dataclass(frozen=True)
class EstimatorParams:
    k: Optional[float] = None
    d: Optional[float] = None

    def to_dict(self):
        return {"k": self.k, "d": self.d}


@dataclass(frozen=True)
class EstimateResult:
    kind: str
    beta: np.ndarray
    params: Optional[EstimatorParams] = None
    restriction: Optional[RestrictionSpec] = None

    def to_dict(self):
        out = {"kind": self.kind, "coefficients": self.beta.tolist()}
        if self.params is not None:
            out["k"] = self.params.k
            out["d"] = self.params.d
        return out


def _check_d_liu(d):
    if not (0.0 < d < 1.0):
        raise ParameterDomainError(f"Liu parameter d must lie in (0, 1), got {d}")


def _check_k(k):
    if not (k > 0.0) or not np.isfinite(k):
        raise ParameterDomainError(f"biasing parameter k must be positive, got {k}")


def _check_restriction(fit, r):
    if r is None:
        raise InputError("a restriction is required for restricted estimators")
    if r.ncoef != fit.beta.shape[0]:
        raise InputError(
            f"restriction has {r.ncoef} columns but the model has {fit.beta.shape[0]} coefficients"
        )


def _apply_filter(C, num, den, v):
    """``(C + den I)^-1 (C + num I) v`` without forming the filter."""
    eye = np.eye(C.shape[0])
    return spd_solve(C + den * eye, C @ v + num * v, "filter denominator")


def filter_fd(C, d):
    """Liu filter ``F_d = (C + I)^-1 (C + d I)``."""
    C = as_matrix(C, "C")
    eye = np.eye(C.shape[0])
    return spd_solve(C + eye, C + d * eye, "C + I")


def filter_fkd(C, k, d):
    """Liu-type filter ``F_kd = (C + k I)^-1 (C - d I)``."""
    _check_k(k)
    C = as_matrix(C, "C")
    eye = np.eye(C.shape[0])
    return spd_solve(C + k * eye, C - d * eye, "C + kI")


def mle(fit):
    return EstimateResult("MLE", fit.beta)


def liu(fit, d):
    d = float(d)
    _check_d_liu(d)
    beta = _apply_filter(fit.info, d, 1.0, fit.beta)
    return EstimateResult("LE", beta, EstimatorParams(d=d))


def liu_type(fit, k, d):
    k, d = float(k), float(d)
    _check_k(k)
    beta = _apply_filter(fit.info, -d, k, fit.beta)
    return EstimateResult("LTE", beta, EstimatorParams(k=k, d=d))


def _sre_beta(fit, r):
    # (C + P)^-1 (X'Wz + H'Psi^-1 h), rewritten with X'Wz = C b + X'(y - pi)
    # so the MLE itself is returned whenever the restriction adds nothing.
    P, ph = r.precision_terms()
    score = fit.X.T @ (fit.weights * (fit.z_hat - fit.X @ fit.beta))
    rhs = score + ph - P @ fit.beta
    return fit.beta + spd_solve(fit.info + P, rhs, "C + H'Psi^-1 H")


def sre(fit, r):
    _check_restriction(fit, r)
    return EstimateResult("SRE", _sre_beta(fit, r), restriction=r)


def srle(fit, r, d):
    d = float(d)
    _check_d_liu(d)
    _check_restriction(fit, r)
    beta = _apply_filter(fit.info, d, 1.0, _sre_beta(fit, r))
    return EstimateResult("SRLE", beta, EstimatorParams(d=d), r)


def srlte(fit, r, k, d):
    k, d = float(k), float(d)
    _check_k(k)
    _check_restriction(fit, r)
    beta = _apply_filter(fit.info, -d, k, _sre_beta(fit, r))
    return EstimateResult("SRLTE", beta, EstimatorParams(k=k, d=d), r)


def estimate(kind, fit, restriction=None, params=None):
    """Dispatch on the estimator tag."""
    kind = check_kind(kind)
    if kind in USES_D and (params is None or params.d is None):
        raise InputError(f"{kind} needs parameter d")
    if kind in USES_K and params.k is None:
        raise InputError(f"{kind} needs parameter k")
    if kind == "MLE":
        return mle(fit)
    if kind == "LE":
        return liu(fit, params.d)
    if kind == "LTE":
        return liu_type(fit, params.k, params.d)
    if kind == "SRE":
        return sre(fit, restriction)
    if kind == "SRLE":
        return srle(fit, restriction, params.d)
    return srlte(fit, restriction, params.k, params.d)


__all__ = [
    "KINDS",
    "EstimateResult",
    "EstimatorParams",
    "RestrictionSpec",
    "estimate",
    "filter_fd",
    "filter_fkd",
    "liu",
    "liu_type",
    "mle",
    "sre",
    "srle",
    "srlte",
]
