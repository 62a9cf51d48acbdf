"""Pure numpy Riccati kernels (reference implementation and fallback backend).

Mirrors the compiled ``_riccati_ext`` module function for function. Both
backends return a status code from ``dare_iterate`` instead of raising so the
caller decides how to report nonconvergence.
"""

import numpy as np
from scipy.linalg import cho_solve

CONVERGED = 0
DIVERGED = 1
MAX_ITER = 2

COND_LIMIT = 1e14


class KernelError(ArithmeticError):
    pass


def _inner_factor(S):
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise KernelError("R + B'PB is not positive definite") from None
    d = np.diag(L)
    if d.min() <= 0.0 or (d.max() / d.min()) ** 2 > COND_LIMIT:
        raise KernelError("R + B'PB is numerically singular")
    return L


def riccati_step(P, A, B, Q, R):
    """One backward Riccati step, symmetrized."""
    PA = P @ A
    X = Q + A.T @ PA
    if B.shape[1]:
        PB = P @ B
        S = R + B.T @ PB
        G = PB.T @ A
        L = _inner_factor(S)
        Z = cho_solve((L, True), G)
        X = X - G.T @ Z
    return 0.5 * (X + X.T)


def dare_iterate(A, B, Q, R, tol, max_iter, divergence_threshold):
    """Fixed-point iteration from P = Q.

    Returns ``(P, iterations, status)``.
    """
    P = np.array(Q, dtype=float)
    norm_p = np.linalg.norm(P)
    for k in range(1, max_iter + 1):
        Pn = riccati_step(P, A, B, Q, R)
        norm_n = np.linalg.norm(Pn)
        if not np.isfinite(norm_n) or norm_n > divergence_threshold:
            return Pn, k, DIVERGED
        if np.linalg.norm(Pn - P) / max(1.0, norm_p) <= tol:
            return Pn, k, CONVERGED
        P, norm_p = Pn, norm_n
    return P, max_iter, MAX_ITER
