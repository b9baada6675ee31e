"""Asymptotic MSE matrices and pairwise superiority checks.

Every estimator is linear in ``b_MLE`` or ``b_SRE`` at the frozen weight
matrix, so its MSE matrix is ``Cov + bias bias'`` with

* MLE    cov ``C^-1``,            bias 0
* SRE    cov ``S = (C + H'Psi^-1 H)^-1``, bias 0
* LE     cov ``F_d C^-1 F_d``,   bias ``(F_d - I) beta``
* SRLE   cov ``F_d S F_d``,      bias ``(F_d - I) beta``
* LTE    cov ``F_kd C^-1 F_kd``, bias ``(F_kd - I) beta``
* SRLTE  cov ``F_kd S F_kd``,    bias ``(F_kd - I) beta``

The comparisons check SRLTE against SRE, SRLE, LTE and LE. Each verdict
carries the sufficient conditions (an eigenvalue ordering of the
covariances plus a quadratic form in the biases) next to a direct
eigenvalue test of the MSE-matrix difference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla

from ._linalg import as_vector, cho, is_spd, spd_inv, spd_solve, symmetrize
from .estimators import (
    EstimatorParams,
    check_kind,
    filter_fd,
    filter_fkd,
)
from .exceptions import InputError

PSD_RTOL = 1e-8
TIE_RTOL = 1e-12
LEMMA_ATOL = 1e-12

THEOREMS = {"T1": "SRE", "T2": "SRLE", "T3": "LTE", "T4": "LE"}
_BY_RIVAL = {v: k for k, v in THEOREMS.items()}


class LemmaResult(NamedTuple):
    holds: bool
    value: float


@dataclass(frozen=True)
class MsemReport:
    kind: str
    bias: np.ndarray
    cov: np.ndarray
    msem: np.ndarray
    smse: float

    def to_dict(self):
        return {
            "kind": self.kind,
            "bias": self.bias.tolist(),
            "cov": self.cov.tolist(),
            "msem": self.msem.tolist(),
            "smse": self.smse,
        }


@dataclass(frozen=True)
class ComparisonVerdict:
    """SRLTE against one rival.

    ``eigencondition_*`` and ``quadform_*`` are ``None`` for the LTE pair,
    where superiority holds without conditions.
    """

    pair: tuple
    theorem: str
    eigencondition_value: Optional[float]
    eigencondition_holds: Optional[bool]
    quadform_value: Optional[float]
    quadform_holds: Optional[bool]
    delta_psd: bool
    delta_min_eig: float
    tie: bool

    @property
    def superior(self):
        """Verdict of the sufficient conditions (always True for T3)."""
        if self.theorem == "T3":
            return True
        return bool(self.eigencondition_holds and self.quadform_holds)

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "pair": list(self.pair),
            "eigencondition_value": self.eigencondition_value,
            "eigencondition_holds": self.eigencondition_holds,
            "quadform_value": self.quadform_value,
            "quadform_holds": self.quadform_holds,
            "delta_psd": self.delta_psd,
            "delta_min_eig": self.delta_min_eig,
            "tie": self.tie,
        }


def _info_of(fit):
    if isinstance(fit, np.ndarray):
        return fit
    return fit.info


def _restricted_inv(C, r):
    if r is None or r.q == 0:
        return spd_inv(C, "C")
    P, _ = r.precision_terms()
    return spd_inv(C + P, "C + H'Psi^-1 H")


def _sandwich(F, A):
    return symmetrize(F @ A @ F.T)


def msem_of(kind, fit, r=None, params=None, beta_true=None):
    """MSE matrix of one estimator at the true coefficient vector.

    ``fit`` is an :class:`~srlte.model.MleFit` or the matrix ``C`` itself.
    """
    kind = check_kind(kind)
    if beta_true is None:
        raise InputError("beta_true is required: the MSE matrix depends on the true coefficients")
    C = _info_of(fit)
    beta = as_vector(beta_true, "beta_true")
    if beta.shape[0] != C.shape[0]:
        raise InputError(f"beta_true has length {beta.shape[0]}, expected {C.shape[0]}")
    if kind in ("SRE", "SRLE", "SRLTE") and r is None:
        raise InputError(f"{kind} needs a restriction")
    if kind in ("LE", "SRLE", "LTE", "SRLTE") and (params is None or params.d is None):
        raise InputError(f"{kind} needs parameter d")
    if kind in ("LTE", "SRLTE") and params.k is None:
        raise InputError(f"{kind} needs parameter k")

    base = _restricted_inv(C, r if kind.startswith("SR") else None)
    eye = np.eye(C.shape[0])
    if kind in ("MLE", "SRE"):
        F = eye
    elif kind in ("LE", "SRLE"):
        F = filter_fd(C, params.d)
    else:
        F = filter_fkd(C, params.k, params.d)
    cov = base if F is eye else _sandwich(F, base)
    # closed forms of (F - I) beta; exactly zero when the filter is I
    if kind in ("MLE", "SRE"):
        bias = np.zeros_like(beta)
    elif kind in ("LE", "SRLE"):
        bias = (params.d - 1.0) * spd_solve(C + eye, beta, "C + I")
    else:
        bias = -(params.d + params.k) * spd_solve(C + params.k * eye, beta, "C + kI")
    msem = cov + np.outer(bias, bias)
    return MsemReport(kind, bias, cov, msem, float(np.trace(msem)))


def lemma_psd_minus_dyad(M, a):
    """``M - a a'`` is PSD exactly when ``a' M^-1 a <= 1`` (``M`` SPD)."""
    M = np.asarray(M, dtype=float)
    if not is_spd(M):
        raise InputError("M must be symmetric positive definite")
    a = as_vector(a, "a")
    value = float(a @ sla.cho_solve(cho(M), a))
    return LemmaResult(value <= 1.0 + LEMMA_ATOL, value)


def _lambda_max_ratio(M, N):
    # Eigenvalues of N M^-1 equal those of the congruent L^-1 N L^-T
    # where M = L L'; the latter is symmetric so they are real.
    L = np.linalg.cholesky(symmetrize(M))
    A = sla.solve_triangular(L, symmetrize(N), lower=True)
    A = sla.solve_triangular(L, A.T, lower=True)
    return float(np.linalg.eigvalsh(symmetrize(A))[-1])


def lemma_ordering(M, N):
    """``M > N`` exactly when ``lambda_max(N M^-1) < 1`` (both SPD).

    The inequality is strict; values within ``1e-12`` of one count as
    equality.
    """
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    if not (is_spd(M) and is_spd(N)):
        raise InputError("both matrices must be symmetric positive definite")
    value = _lambda_max_ratio(M, N)
    return LemmaResult(value < 1.0 - LEMMA_ATOL, value)


def _quadform(A, b):
    if not np.any(b):
        return 0.0
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        x = np.linalg.pinv(A) @ b
    return float(b @ x)


def _psd_check(delta, ref_scale):
    ev = np.linalg.eigvalsh(symmetrize(delta))
    norm = float(np.max(np.abs(ev)))
    tie = norm <= TIE_RTOL * max(ref_scale, 1.0)
    return bool(tie or ev[0] >= -PSD_RTOL * norm), float(ev[0]), bool(tie)


def _resolve_pair(pair):
    p = str(pair).upper()
    if p in THEOREMS:
        return p, THEOREMS[p]
    if p in _BY_RIVAL:
        return _BY_RIVAL[p], p
    raise InputError(f"unknown comparison {pair!r}; expected T1..T4 or SRE/SRLE/LTE/LE")


def compare(pair, fit, r, params_srlte, params_other=None, beta_true=None):
    """Compare SRLTE with ``pair`` (``T1``..``T4`` or the rival's tag).

    ``params_other`` supplies ``d`` for SRLE/LE. The LTE rival always uses
    the SRLTE ``(k, d)`` so the two biases coincide.
    """
    theorem, rival = _resolve_pair(pair)
    if r is None:
        raise InputError("comparisons need a restriction")
    C = _info_of(fit)
    ps = params_srlte
    if rival == "LTE":
        po = EstimatorParams(k=ps.k, d=ps.d)
    elif rival in ("SRLE", "LE"):
        if params_other is None or params_other.d is None:
            raise InputError(f"comparison against {rival} needs its parameter d")
        po = EstimatorParams(d=params_other.d)
    else:
        po = None

    new = msem_of("SRLTE", C, r, ps, beta_true)
    old = msem_of(rival, C, r, po, beta_true)
    delta = old.msem - new.msem
    delta_psd, delta_min, tie = _psd_check(delta, float(np.linalg.norm(old.msem, 2)))

    if theorem == "T3":
        return ComparisonVerdict(
            (rival, "SRLTE"), theorem, None, None, None, None, delta_psd, delta_min, tie
        )

    # Covariance difference D and the dyad that Lemma-style tests add back.
    D = old.cov - new.cov
    if theorem == "T1":
        inner = D
    else:
        inner = D + np.outer(old.bias, old.bias)
    try:
        eig_value = _lambda_max_ratio(old.cov, new.cov)
        eig_holds = eig_value < 1.0 - LEMMA_ATOL
    except np.linalg.LinAlgError:
        eig_value, eig_holds = float("nan"), False
    q_value = _quadform(inner, new.bias)
    q_holds = bool(q_value <= 1.0 + LEMMA_ATOL)
    return ComparisonVerdict(
        (rival, "SRLTE"),
        theorem,
        eig_value,
        bool(eig_holds),
        q_value,
        q_holds,
        delta_psd,
        delta_min,
        tie,
    )


def compare_all(fit, r, params_srlte, params_liu, beta_true):
    return [compare(t, fit, r, params_srlte, params_liu, beta_true) for t in THEOREMS]


__all__ = [
    "ComparisonVerdict",
    "MsemReport",
    "LemmaResult",
    "compare",
    "compare_all",
    "lemma_ordering",
    "lemma_psd_minus_dyad",
    "msem_of",
]
