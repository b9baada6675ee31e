"""Selection of the SRLTE biasing parameters ``(k, d)``.

Works in the eigenbasis of ``C = X' W X = Q diag(lam) Q'``. With
``alpha = Q' b_MLE`` and ``b_ii`` the diagonal of
``Q' (C + H' Psi^-1 H)^-1 Q``, the scalar MSE of SRLTE is

    sum_i ((lam_i - d)^2 b_ii + (d + k)^2 alpha_i^2) / (lam_i + k)^2

The selector first takes ``d`` as the smallest of the bounds
``lam_i b_ii / (b_ii + 1)``, then ``k`` as the smallest positive ``k_i``,
where ``k_i = (lam_i - d) b_ii / alpha_i^2 - d`` is the root of the
derivative of summand ``i`` in ``k``.

When ``H' Psi^-1 H`` does not commute with ``C`` the restricted inverse
is not diagonal in ``Q``; only its diagonal is used and the discarded
off-diagonal share is reported as ``offdiag_ratio``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._linalg import spd_inv, symmetrize
from .estimators import EstimatorParams, check_kind
from .exceptions import InputError, SingularMatrixError

log = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-12
LIU_D_FLOOR = 1e-6


@dataclass(frozen=True)
class SpectralContext:
    lam: np.ndarray
    Q: np.ndarray
    alpha: np.ndarray
    b_diag: np.ndarray
    offdiag_ratio: float = 0.0

    def to_dict(self):
        return {
            "eigenvalues": self.lam.tolist(),
            "alpha": self.alpha.tolist(),
            "b_diag": self.b_diag.tolist(),
            "offdiag_ratio": self.offdiag_ratio,
        }


@dataclass(frozen=True)
class TuningResult:
    """Selected ``(k, d)`` with the per-index quantities behind them."""

    params: EstimatorParams
    d_bounds: np.ndarray
    k_values: np.ndarray
    skipped: tuple = ()
    fallback: bool = False
    notes: tuple = field(default=())

    @property
    def k(self):
        return self.params.k

    @property
    def d(self):
        return self.params.d

    def to_dict(self):
        return {
            "k": self.params.k,
            "d": self.params.d,
            "d_bounds": self.d_bounds.tolist(),
            "k_values": [None if not np.isfinite(v) else float(v) for v in self.k_values],
            "skipped_indices": list(self.skipped),
            "fallback": self.fallback,
            "notes": list(self.notes),
        }


def spectral_context(fit, r=None):
    """Eigen-decompose ``C`` and project the restricted inverse onto it.

    ``fit`` may be an :class:`~srlte.model.MleFit` or a ``(C, beta)`` pair.
    """
    C, beta = _unpack(fit)
    try:
        lam, Q = np.linalg.eigh(symmetrize(C))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("eigendecomposition of X'WX failed") from exc
    order = np.argsort(lam, kind="stable")[::-1]
    lam, Q = lam[order], Q[:, order]
    if lam[-1] <= 0.0:
        raise SingularMatrixError("X'WX is not positive definite")
    alpha = Q.T @ beta
    if r is None or r.q == 0:
        return SpectralContext(lam, Q, alpha, 1.0 / lam, 0.0)
    P, _ = r.precision_terms()
    B = symmetrize(Q.T @ spd_inv(C + P, "C + H'Psi^-1 H") @ Q)
    b = np.diag(B).copy()
    off = B - np.diag(b)
    ratio = float(np.linalg.norm(off) / np.linalg.norm(B))
    return SpectralContext(lam, Q, alpha, b, ratio)


def _unpack(fit):
    if isinstance(fit, tuple):
        C, beta = fit
        return np.asarray(C, dtype=float), np.asarray(beta, dtype=float)
    return fit.info, fit.beta


def smse_spectral(ctx, k, d):
    """Scalar MSE of SRLTE evaluated in the eigenbasis."""
    if not k > 0:
        raise InputError(f"k must be positive, got {k}")
    lam, b, a = ctx.lam, ctx.b_diag, ctx.alpha
    return float(np.sum(((lam - d) ** 2 * b + (d + k) ** 2 * a**2) / (lam + k) ** 2))


def d_bounds(ctx):
    return ctx.lam * ctx.b_diag / (ctx.b_diag + 1.0)


def select_d(ctx):
    """Smallest of the per-index bounds ``lam_i b_ii / (b_ii + 1)``."""
    return float(np.min(d_bounds(ctx)))


def k_values(ctx, d):
    """Per-index stationary points of the SMSE summands in ``k``.

    Indices with ``|alpha_i|`` below the floor get ``+inf``.
    """
    a2 = ctx.alpha**2
    out = np.full(ctx.lam.shape, np.inf)
    ok = np.abs(ctx.alpha) >= ALPHA_FLOOR
    out[ok] = (ctx.lam[ok] - d) * ctx.b_diag[ok] / a2[ok] - d
    return out


def select_k(ctx, d):
    """Smallest positive ``k_i``; ``1 / |alpha|^2`` if none is positive.

    Returns ``(k, k_values, skipped, fallback)``.
    """
    kv = k_values(ctx, d)
    skipped = tuple(int(i) for i in np.flatnonzero(~np.isfinite(kv)))
    if skipped:
        log.info("k selection skips indices %s with |alpha_i| < %g", skipped, ALPHA_FLOOR)
    pos = np.flatnonzero(np.isfinite(kv) & (kv > 0.0))
    if pos.size:
        # argmin returns the first minimum, so ties go to the smallest index
        i = pos[np.argmin(kv[pos])]
        return float(kv[i]), kv, skipped, False
    norm2 = float(ctx.alpha @ ctx.alpha)
    k = 1.0 / norm2 if norm2 > 0 else 1.0
    log.info("no positive k_i; falling back to k = 1/|alpha|^2 = %g", k)
    return k, kv, skipped, True


def select_params(ctx):
    """Two-step selection: ``d`` from the bounds, then ``k`` at that ``d``."""
    d = select_d(ctx)
    k, kv, skipped, fallback = select_k(ctx, d)
    notes = []
    if skipped:
        notes.append(f"indices {list(skipped)} skipped: |alpha_i| below {ALPHA_FLOOR:g}")
    if fallback:
        notes.append("no positive k_i; used k = 1/|alpha|^2")
    return TuningResult(EstimatorParams(k=k, d=d), d_bounds(ctx), kv, skipped, fallback, tuple(notes))


def liu_d(ctx):
    """Plug-in Liu parameter ``min_i (a_i^2 - 1/lam_i) / (1/lam_i + a_i^2)``.

    Clipped into the open unit interval.
    """
    a2 = ctx.alpha**2
    inv = 1.0 / ctx.lam
    d = float(np.min((a2 - inv) / (inv + a2)))
    return float(np.clip(d, LIU_D_FLOOR, 1.0 - LIU_D_FLOOR))


def default_params_for(kind, fit, k=None, d=None):
    """Library defaults for the comparison estimators.

    LE / SRLE get the plug-in Liu ``d``. LTE takes ``k`` from the
    unrestricted ``k_i`` at ``d = 0`` and then ``d`` from the unrestricted
    bound. Explicit ``k`` / ``d`` always win.
    """
    kind = check_kind(kind)
    C, beta = _unpack(fit)
    ctx = spectral_context((C, beta))
    if kind in ("LE", "SRLE"):
        return EstimatorParams(d=float(d) if d is not None else liu_d(ctx))
    if kind == "LTE":
        if k is None:
            k, *_ = select_k(ctx, 0.0)
        if d is None:
            d = select_d(ctx)
        return EstimatorParams(k=float(k), d=float(d))
    raise InputError(f"no default parameters for {kind}")


def tune(fit, r=None):
    """Convenience: spectral context plus SRLTE parameter selection."""
    ctx = spectral_context(fit, r)
    return ctx, select_params(ctx)


def sweep(ctx, d, ks):
    """SMSE along a grid of ``k`` at fixed ``d`` (diagnostic only)."""
    return np.array([smse_spectral(ctx, float(k), d) for k in ks])


__all__ = [
    "SpectralContext",
    "TuningResult",
    "default_params_for",
    "liu_d",
    "select_d",
    "select_k",
    "select_params",
    "smse_spectral",
    "spectral_context",
    "sweep",
    "tune",
]
