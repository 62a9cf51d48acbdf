"""Dense control linear algebra: Riccati recursion, DARE, LQR gain, diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10_000
DEFAULT_DIVERGENCE = 1e12
RANK_RTOL = 1e-9


@dataclass(frozen=True)
class DareOptions:
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    divergence_threshold: float = DEFAULT_DIVERGENCE

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class RiccatiSolution:
    """Result of :func:`solve_dare`.

    ``status`` is one of ``"converged"``, ``"diverged"`` (iterate norm passed
    the divergence threshold) or ``"max_iter"``. ``residual`` is the Frobenius
    norm of ``P - riccati_step(P)`` for the returned ``P``.
    """

    P: np.ndarray
    iterations: int
    residual: float
    converged: bool
    status: str


def _as2d(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {M.shape}")
    return M


def _check(P, A, B, Q, R):
    A = _as2d(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    B = np.asarray(B, dtype=float)
    if B.ndim <= 1:
        B = B.reshape(n, -1) if B.size else np.zeros((n, 0))
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
    k = B.shape[1]
    Q = _as2d(Q, "Q")
    if Q.shape != (n, n):
        raise DimensionError(f"Q must be {n}x{n}, got {Q.shape}")
    R = np.asarray(R, dtype=float)
    R = R.reshape(k, k) if R.size == k * k else R
    if R.shape != (k, k):
        raise DimensionError(f"R must be {k}x{k}, got {R.shape}")
    if P is not None:
        P = _as2d(P, "P")
        if P.shape != (n, n):
            raise DimensionError(f"P must be {n}x{n}, got {P.shape}")
    return P, A, B, Q, R


def riccati_step(P_next, A, B, Q, R) -> np.ndarray:
    """One backward Riccati step.

    Returns ``Q + A'PA - A'PB (R + B'PB)^-1 B'PA`` symmetrized. With an empty
    ``B`` this is the Lyapunov step ``Q + A'PA``.
    """
    P_next, A, B, Q, R = _check(P_next, A, B, Q, R)
    try:
        return kernels.riccati_step(P_next, A, B, Q, R)
    except kernels.KERNEL_ERRORS as exc:
        raise NumericError(str(exc)) from None


def solve_dare(A, B, Q, R, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
               divergence_threshold=DEFAULT_DIVERGENCE) -> RiccatiSolution:
    """Solve the discrete algebraic Riccati equation by value iteration from ``P = Q``.

    Iteration stops when the relative Frobenius change drops to ``tol``, when
    the iterate norm exceeds ``divergence_threshold``, or after ``max_iter``
    steps. Nonconvergence is reported through the returned flags, never
    raised: a divergent iterate is how an unstabilizable pair shows up.
    """
    opts = DareOptions(tol, max_iter, divergence_threshold)
    _, A, B, Q, R = _check(None, A, B, Q, R)
    try:
        P, iters, code = kernels.dare_iterate(A, B, Q, R, opts.tol, opts.max_iter,
                                              opts.divergence_threshold)
        with np.errstate(over="ignore", invalid="ignore"):
            residual = float(np.linalg.norm(P - kernels.riccati_step(P, A, B, Q, R)))
    except kernels.KERNEL_ERRORS as exc:
        raise NumericError(f"Riccati iteration failed: {exc}") from None
    status = {kernels.CONVERGED: "converged", kernels.DIVERGED: "diverged",
              kernels.MAX_ITER: "max_iter"}[code]
    if not np.isfinite(residual):
        residual = float("inf")
    return RiccatiSolution(P, int(iters), residual, code == kernels.CONVERGED, status)


def dare(A, B, Q, R, options: DareOptions | None = None) -> RiccatiSolution:
    opts = options or DareOptions()
    return solve_dare(A, B, Q, R, opts.tol, opts.max_iter, opts.divergence_threshold)


def lqr_gain(P, A, B, R) -> np.ndarray:
    """Feedback gain ``-(R + B'PB)^-1 B'PA`` so that ``u = gain @ x``."""
    A = _as2d(A, "A")
    n = A.shape[0]
    Q_dummy = np.zeros((n, n))
    P, A, B, _, R = _check(P, A, B, Q_dummy, R)
    k = B.shape[1]
    if k == 0:
        return np.zeros((0, n))
    S = R + B.T @ P @ B
    try:
        L = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError:
        raise NumericError("R + B'PB is not positive definite") from None
    d = np.diag(L)
    if d.min() <= 0 or (d.max() / d.min()) ** 2 > 1e14:
        raise NumericError("R + B'PB is numerically singular")
    G = B.T @ P @ A
    Y = np.linalg.solve(L, G)
    return -np.linalg.solve(L.T, Y)


def controllability_matrix(A, B) -> np.ndarray:
    A = _as2d(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def controllability_rank(A, B, rtol=RANK_RTOL) -> int:
    """Numerical rank of ``[B, AB, ..., A^(N-1)B]`` (singular values above ``rtol * max``)."""
    C = controllability_matrix(A, B)
    if C.size == 0:
        return 0
    s = np.linalg.svd(C, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def spectral_radius(A) -> float:
    """Largest eigenvalue magnitude of a square matrix."""
    A = _as2d(A, "A")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {A.shape}")
    if A.size == 0:
        return 0.0
    if not np.all(np.isfinite(A)):
        raise NumericError("matrix has non-finite entries")
    try:
        return float(np.max(np.abs(np.linalg.eigvals(A))))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigenvalue iteration did not converge: {exc}",
                           estimate=float(np.max(np.abs(np.diag(A))))) from None


def cholesky_psd(W, tol=1e-12) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == W`` for symmetric PSD ``W``.

    Zero pivots (within ``tol`` relative to the largest diagonal entry) are
    accepted and produce a zero column, so singular covariances factor.
    """
    W = _as2d(W, "W")
    n = W.shape[0]
    if W.shape != (n, n):
        raise DimensionError(f"W must be square, got {W.shape}")
    scale = max(1.0, float(np.abs(np.diag(W)).max(initial=0.0)))
    eps = tol * scale
    L = np.zeros_like(W)
    for j in range(n):
        d = W[j, j] - L[j, :j] @ L[j, :j]
        col = W[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]
        if d < -eps:
            raise NumericError(f"matrix is indefinite: pivot {j} is {d:.3e}")
        if d <= eps:
            if col.size and np.abs(col).max() > np.sqrt(eps) * np.sqrt(scale):
                raise NumericError(f"matrix is indefinite: zero pivot {j} with nonzero column")
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = col / L[j, j]
    return L
