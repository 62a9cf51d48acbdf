"""Least-squares identification of the dynamics matrix and finite-mode detection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError

DEFAULT_RIDGE = 1e-8
DEFAULT_WINDOW = 5


@dataclass
class History:
    """State-input record ``x(0..t)``, ``u(0..t-1)`` with the input matrix used at each step.

    Append-only; fitters read a snapshot.
    """

    n: int
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    input_matrices: list = field(default_factory=list)
    subsets: list = field(default_factory=list)

    @classmethod
    def start(cls, x0):
        x0 = np.asarray(x0, dtype=float).ravel()
        return cls(x0.size, [x0.copy()])

    def append(self, u, B, x_next, subset=None):
        u = np.asarray(u, dtype=float).ravel()
        B = np.asarray(B, dtype=float).reshape(self.n, -1)
        x_next = np.asarray(x_next, dtype=float).ravel()
        if B.shape[1] != u.size or x_next.size != self.n:
            raise DimensionError("input, input matrix and state dimensions disagree")
        if not self.states:
            raise ValueError("history has no initial state")
        self.inputs.append(u)
        self.input_matrices.append(B)
        self.states.append(x_next.copy())
        self.subsets.append(subset)

    @property
    def t(self):
        """Number of recorded transitions."""
        return len(self.inputs)

    def transitions(self, last=None):
        """Arrays ``(X, Y)`` with columns ``x(tau)`` and ``x(tau+1) - B u(tau)``."""
        t = self.t
        start = 0 if last is None else max(0, t - last)
        S = np.array(self.states[start:t + 1]).reshape(-1, self.n)
        drive = np.array([B @ u for B, u in zip(self.input_matrices[start:t], self.inputs[start:t])])
        X = S[:-1].T
        Y = (S[1:] - drive.reshape(-1, self.n)).T
        return X, Y

    def write_csv(self, path):
        """One row per transition: ``tau``, subset label, ``x``, ``u`` and ``x_next``."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            kmax = max((u.size for u in self.inputs), default=0)
            w.writerow(["tau", "subset"] + [f"x{i + 1}" for i in range(self.n)]
                       + [f"u{i + 1}" for i in range(kmax)]
                       + [f"x_next{i + 1}" for i in range(self.n)])
            for k in range(self.t):
                S = self.subsets[k]
                u = list(self.inputs[k]) + [""] * (kmax - self.inputs[k].size)
                w.writerow([k, S.label if S is not None else ""]
                           + [repr(float(v)) for v in self.states[k]]
                           + [v if v == "" else repr(float(v)) for v in u]
                           + [repr(float(v)) for v in self.states[k + 1]])


@dataclass(frozen=True)
class DynamicsFit:
    A: np.ndarray
    rank: int
    rank_deficient: bool
    samples: int


def fit_dynamics(history: History, ridge=DEFAULT_RIDGE, window=None) -> DynamicsFit:
    """Ridge least-squares estimate of ``A`` from ``x(tau+1) - B u(tau) = A x(tau)``.

    Minimizes ``sum ||x(tau+1) - A x(tau) - B u(tau)||^2 + ridge ||A||_F^2`` over
    all transitions (or the last ``window``). Each row of ``A`` is an
    independent least-squares problem sharing the same regressor, solved here
    in one call with multiple right-hand sides.
    """
    if history.t < 1:
        raise ValueError("identification needs at least one transition")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    X, Y = history.transitions(window)
    n = history.n
    rank = int(np.linalg.matrix_rank(X)) if X.size else 0
    # augmented system [X'; sqrt(ridge) I] a_i = [y_i; 0] for every row a_i of A
    lhs = np.vstack([X.T, np.sqrt(ridge) * np.eye(n)]) if ridge > 0 else X.T
    rhs = np.vstack([Y.T, np.zeros((n, n))]) if ridge > 0 else Y.T
    sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    return DynamicsFit(sol.T, rank, rank < n, X.shape[1])


def prediction_residuals(history: History, A, window=None) -> float:
    X, Y = history.transitions(window)
    E = Y - np.asarray(A, dtype=float) @ X
    return float(np.sum(E * E))


def detect_mode(history: History, modes, window=DEFAULT_WINDOW):
    """Label of the mode with the smallest one-step prediction error over the last ``window`` steps.

    Ties go to the earliest mode in ``modes``.
    """
    if history.t < 1:
        raise ValueError("mode detection needs at least one transition")
    if window < 1:
        raise ValueError("window must be >= 1")
    if not modes:
        raise ValueError("no candidate modes")
    X, Y = history.transitions(window)
    scores = []
    for m in modes:
        E = Y - m.A @ X
        scores.append(float(np.sum(E * E)))
    return modes[int(np.argmin(scores))].label
