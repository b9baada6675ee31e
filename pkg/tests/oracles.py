"""Independent reference computations used only by the tests.

Nothing here imports the package's numerical code: explicit inverses,
plain Newton on the log-likelihood, stacked least squares.
"""

import numpy as np


def sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def bernoulli_loglik(X, y, beta):
    eta = X @ beta
    return float(np.sum(y * eta - np.log1p(np.exp(eta))))


def newton_mle(X, y, tol=1e-13, max_iter=200):
    """Damped Newton ascent on the Bernoulli log-likelihood."""
    beta = np.zeros(X.shape[1])
    ll = bernoulli_loglik(X, y, beta)
    for _ in range(max_iter):
        p = sigmoid(X @ beta)
        grad = X.T @ (y - p)
        hess = (X * (p * (1 - p))[:, None]).T @ X
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            cand = beta + t * step
            cll = bernoulli_loglik(X, y, cand)
            if cll >= ll + 1e-4 * t * grad @ step or t < 1e-10:
                break
            t *= 0.5
        beta, ll = cand, cll
        if np.max(np.abs(t * step)) < tol:
            break
    return beta


def mat_sqrt_inv(A):
    ev, V = np.linalg.eigh(A)
    return V @ np.diag(ev**-0.5) @ V.T


def stacked_sre(X, w, z, H, h, Psi):
    """Mixed estimator as ordinary least squares on the augmented system."""
    Ws = np.sqrt(w)
    Pm = mat_sqrt_inv(Psi)
    A = np.vstack([Ws[:, None] * X, Pm @ H])
    b = np.concatenate([Ws * z, Pm @ h])
    return np.linalg.lstsq(A, b, rcond=None)[0]


def dense_msem(kind, C, beta, H=None, Psi=None, k=None, d=None):
    """MSE matrix from explicit inverses."""
    m = C.shape[0]
    eye = np.eye(m)
    Cinv = np.linalg.inv(C)
    if H is not None and H.shape[0]:
        S = np.linalg.inv(C + H.T @ np.linalg.inv(Psi) @ H)
    else:
        S = Cinv
    if kind == "MLE":
        return Cinv
    if kind == "SRE":
        return S
    if kind in ("LE", "SRLE"):
        F = np.linalg.inv(C + eye) @ (C + d * eye)
        bias = (d - 1) * np.linalg.inv(C + eye) @ beta
    else:
        F = np.linalg.inv(C + k * eye) @ (C - d * eye)
        bias = -(d + k) * np.linalg.inv(C + k * eye) @ beta
    base = S if kind.startswith("SR") else Cinv
    return F @ base @ F.T + np.outer(bias, bias)


def random_spd(rng, m, log_lo=-2.0, log_hi=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    lam = 10.0 ** rng.uniform(log_lo, log_hi, m)
    C = (Q * lam) @ Q.T
    return 0.5 * (C + C.T)


def random_full_row_rank(rng, q, m):
    while True:
        H = rng.standard_normal((q, m))
        if np.linalg.matrix_rank(H) == q:
            return H
