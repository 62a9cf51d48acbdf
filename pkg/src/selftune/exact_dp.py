"""Exact finite-horizon dynamic programming over actuator subsets and inputs.

For linear dynamics with quadratic costs each cost-to-go ``J_t`` is the
pointwise minimum of quadratics ``x'Px + q``, one per actuator-subset
sequence ``(S_t, ..., S_{T-1})``. :func:`backward_pieces` builds all of them
by running the Riccati step backwards along every sequence.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError, DimensionError
from .linalg import lqr_gain, riccati_step
from .model import ActuatorSubset, Scenario, build_input_matrix, enumerate_subsets

DEFAULT_PIECE_BUDGET = 10**6


@dataclass(frozen=True)
class QuadraticPiece:
    """One candidate ``x'Px + q`` of a cost-to-go.

    ``seq`` lists the subsets applied from this time to the end of the
    horizon. ``gain`` is the feedback applied at this time when the piece is
    active (``None`` for the terminal piece) and ``child`` indexes the piece it
    continues into at ``t + 1``.
    """

    P: np.ndarray
    q: float
    seq: tuple = ()
    gain: np.ndarray | None = None
    child: int | None = None

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(x @ self.P @ x + self.q)


@dataclass
class PiecewiseQuadratic:
    """Pointwise minimum of quadratic pieces at time ``t``."""

    t: int
    pieces: list = field(default_factory=list)

    def __len__(self):
        return len(self.pieces)

    @property
    def n(self):
        return self.pieces[0].P.shape[0]

    def _stack(self):
        if not hasattr(self, "_Ps"):
            self._Ps = np.stack([p.P for p in self.pieces])
            self._qs = np.array([p.q for p in self.pieces])
        return self._Ps, self._qs

    def values(self, X) -> np.ndarray:
        """Matrix of piece values: rows are points in ``X``, columns are pieces."""
        if not self.pieces:
            raise ValueError("piecewise quadratic has no pieces")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise DimensionError(f"points have dimension {X.shape[1]}, expected {self.n}")
        Ps, qs = self._stack()
        return np.einsum("mi,pij,mj->mp", X, Ps, X) + qs

    def argmin(self, X) -> np.ndarray:
        """Index of the minimizing piece for every row of ``X`` (first on ties)."""
        return np.argmin(self.values(X), axis=1)


def _subset_blocks(scenario, subsets):
    return [(S, build_input_matrix(scenario.library, S), scenario.cost.R_for(S)) for S in subsets]


def _dominates(a, b, tol=1e-12):
    """True when piece ``a`` is nowhere above piece ``b``."""
    if a.q > b.q:
        return False
    return np.linalg.eigvalsh(b.P - a.P).min() >= -tol * max(1.0, np.abs(b.P).max())


def _prune(pieces):
    """Drop dominated pieces; of two equal pieces the earlier one survives."""
    keep = []
    for i, pi in enumerate(pieces):
        if not any(
            j != i and _dominates(pj, pi) and (j < i or not _dominates(pi, pj))
            for j, pj in enumerate(pieces)
        ):
            keep.append(pi)
    return keep


def backward_pieces(scenario: Scenario, piece_budget=DEFAULT_PIECE_BUDGET, prune=False,
                    mode=None, threads=1) -> list[PiecewiseQuadratic]:
    """Build ``J_0, ..., J_T`` for a single-mode scenario.

    Pieces at each time are ordered lexicographically by their subset
    sequence. Without pruning ``J_t`` has ``C(M, K) ** (T - t)`` pieces; a
    :class:`CapacityError` is raised up front if that exceeds ``piece_budget``.
    """
    if mode is None:
        if len(scenario.modes) != 1:
            raise ValueError("exact DP needs a single dynamics mode; pass mode= to choose one")
        mode = scenario.modes[0]
    elif isinstance(mode, str):
        mode = scenario.mode(mode)
    A, W = mode.A, mode.W
    T = scenario.horizon
    subsets = enumerate_subsets(scenario.library.m, scenario.K)
    n_sub = len(subsets)
    if not prune and n_sub**T > piece_budget:
        raise CapacityError(
            f"{n_sub}^{T} = {n_sub**T} pieces exceed the budget of {piece_budget}; "
            "enable pruning, shorten the horizon or raise the budget"
        )
    blocks = _subset_blocks(scenario, subsets)
    cost = scenario.cost

    out = [None] * (T + 1)
    out[T] = PiecewiseQuadratic(T, [QuadraticPiece(np.array(cost.Q_terminal), 0.0, ())])
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for t in range(T - 1, -1, -1):
            nxt = out[t + 1].pieces
            if len(nxt) * n_sub > piece_budget:
                raise CapacityError(
                    f"{len(nxt) * n_sub} pieces at t={t} exceed the budget of {piece_budget}"
                )
            Qt = cost.Q_at(t)
            jobs = [(S, B, R, j, child) for S, B, R in blocks for j, child in enumerate(nxt)]

            def build(job):
                S, B, R, j, child = job
                P = riccati_step(child.P, A, B, Qt, R)
                q = child.q + float(np.trace(child.P @ W))
                return QuadraticPiece(P, q, (S,) + child.seq, lqr_gain(child.P, A, B, R), j)

            pieces = list(pool.map(build, jobs)) if pool else [build(j) for j in jobs]
            if prune:
                pieces = _prune(pieces)
            out[t] = PiecewiseQuadratic(t, pieces)
    finally:
        if pool:
            pool.shutdown()
    return out


def evaluate_value(pw: PiecewiseQuadratic, x):
    """Return ``(min_i x'P_i x + q_i, i)`` with the lowest index on ties."""
    if not pw.pieces:
        raise ValueError("piecewise quadratic has no pieces")
    vals = pw.values(np.asarray(x, dtype=float).reshape(1, -1))[0]
    i = int(np.argmin(vals))
    return float(vals[i]), i


def optimal_actuator_at(pw: PiecewiseQuadratic, x) -> ActuatorSubset:
    """Head subset of the minimizing piece at ``x``."""
    _, i = evaluate_value(pw, x)
    seq = pw.pieces[i].seq
    if not seq:
        raise ValueError(f"no actuator decision at terminal time t={pw.t}")
    return seq[0]


def optimal_input_at(pw: PiecewiseQuadratic, x):
    """``(subset, u)`` for the optimal architecture-policy at ``x``."""
    x = np.asarray(x, dtype=float)
    _, i = evaluate_value(pw, x)
    piece = pw.pieces[i]
    if not piece.seq:
        raise ValueError(f"no actuator decision at terminal time t={pw.t}")
    return piece.seq[0], piece.gain @ x


@dataclass
class PartitionSample:
    """Points with their optimal subset at each requested time."""

    points: np.ndarray
    labels: dict  # t -> list[ActuatorSubset]

    def rows(self):
        for t in sorted(self.labels):
            for x, S in zip(self.points, self.labels[t]):
                yield t, x, S

    def write_csv(self, path):
        write_partition_csv(path, self)


def sample_partition(pws, times=None, samples=None, grid=None, box=(-4.0, 4.0), seed=0):
    """Label sample points with the optimal subset at each time in ``times``.

    Either ``samples`` points uniform in ``box^N`` (seeded), or a 2-D raster
    ``grid=(nx, ny)`` of cell centres. Rows are kept in sample order.
    """
    n = pws[0].n
    T = len(pws) - 1
    if times is None:
        times = range(T)
    times = list(times)
    if any(not 0 <= t < T for t in times):
        raise ValueError(f"times must lie in [0, {T - 1}]")
    lo, hi = box
    if (samples is None) == (grid is None):
        raise ValueError("give exactly one of samples or grid")
    if grid is not None:
        if n != 2:
            raise ValueError(f"raster partitions need a 2-D state, got N={n}")
        nx, ny = grid
        xs = lo + (np.arange(nx) + 0.5) * (hi - lo) / nx
        ys = lo + (np.arange(ny) + 0.5) * (hi - lo) / ny
        X = np.array([(a, b) for b in ys for a in xs])
    else:
        rng = np.random.default_rng(seed)
        X = rng.uniform(lo, hi, size=(int(samples), n))
    labels = {}
    for t in times:
        idx = pws[t].argmin(X)
        labels[t] = [pws[t].pieces[i].seq[0] for i in idx]
    return PartitionSample(X, labels)


def write_partition_csv(path, sample: PartitionSample):
    n = sample.points.shape[1]
    header = [f"x{i + 1}" for i in range(n)] + ["t", "subset"]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, x, S in sample.rows():
            w.writerow([repr(float(v)) for v in x] + [t, S.label])
