"""Small dense linear-algebra helpers shared across modules."""

import numpy as np
import scipy.linalg as sla

from .exceptions import InputError, SingularMatrixError

# Smallest eigenvalue allowed relative to the largest before a matrix is
# treated as numerically singular.
COND_FLOOR = 1e-13


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise InputError(f"{name} must be two-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} contains non-finite entries")
    return m


def as_vector(a, name="vector"):
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise InputError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name} contains non-finite entries")
    return v


def symmetrize(a):
    return 0.5 * (a + a.T)


def is_spd(a, rtol=COND_FLOOR):
    """True when ``a`` is symmetric with eigenvalues above ``rtol * max``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(np.max(np.abs(a)), 1.0)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * scale):
        return False
    ev = np.linalg.eigvalsh(symmetrize(a))
    return bool(ev[0] > rtol * max(ev[-1], 0.0) and ev[0] > 0.0)


def require_spd(a, name="matrix"):
    if not is_spd(a):
        raise InputError(f"{name} must be symmetric positive definite")


def cho(a, name="matrix"):
    """Cholesky factor of an SPD matrix, raising SingularMatrixError."""
    a = symmetrize(np.asarray(a, dtype=float))
    try:
        factor = sla.cho_factor(a, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrixError(f"{name} is not positive definite") from exc
    diag = np.diag(factor[0])
    if diag.min() ** 2 <= COND_FLOOR * diag.max() ** 2:
        raise SingularMatrixError(f"{name} is numerically singular")
    return factor


def spd_solve(a, b, name="matrix"):
    return sla.cho_solve(cho(a, name), b)


def spd_inv(a, name="matrix"):
    """Explicit inverse; only for places where the matrix itself is needed."""
    n = a.shape[0]
    return symmetrize(spd_solve(a, np.eye(n), name))


def inv_sqrt(a):
    """Symmetric inverse square root of an SPD matrix."""
    ev, vec = np.linalg.eigh(symmetrize(a))
    return (vec / np.sqrt(ev)) @ vec.T


def min_eig(a):
    return float(np.linalg.eigvalsh(symmetrize(a))[0])
