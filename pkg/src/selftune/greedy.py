"""Greedy actuator selection scored by infinite-horizon LQR cost at the current state.

Starting from the empty set, each round tries every unused library column,
solves the DARE for the enlarged set and keeps the column whose solution gives
the smallest ``x'Px``. Candidates whose Riccati iteration diverges score
``+inf``, so unstabilizable choices are skipped rather than fatal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, UnstabilizableError
from .linalg import DareOptions, RiccatiSolution, dare, lqr_gain
from .model import ActuatorLibrary, ActuatorSubset, build_input_matrix, input_cost


class DareCache:
    """Memo of DARE solutions keyed by dynamics, costs and subset.

    Greedy selection with a fixed model re-solves the same candidate sets
    every step; caching turns that into a dictionary lookup.
    """

    def __init__(self):
        self._store = {}
        self._gains = {}
        self._digests = {}
        self.hits = 0
        self.misses = 0

    def _digest(self, M):
        # read-only arrays cannot change under us, so their bytes are memoized by identity
        if M.flags.writeable:
            return (M.shape, M.tobytes())
        hit = self._digests.get(id(M))
        if hit is None or hit[0] is not M:
            hit = self._digests[id(M)] = (M, (M.shape, M.tobytes()))
        return hit[1]

    def _key(self, A, Q, R, subset, options):
        return (self._digest(A), self._digest(Q), R.tobytes(), subset.indices, options)

    def solve(self, A, B, Q, R, subset, options) -> RiccatiSolution:
        key = self._key(A, Q, R, subset, options)
        sol = self._store.get(key)
        if sol is None:
            self.misses += 1
            sol = dare(A, B, Q, R, options)
            self._store[key] = sol
        else:
            self.hits += 1
        return sol

    def gain(self, A, B, Q, R, subset, options, sol):
        """LQR gain for a cached solution, memoized alongside it."""
        key = self._key(A, Q, R, subset, options)
        K = self._gains.get(key)
        if K is None:
            K = self._gains[key] = lqr_gain(sol.P, A, B, R)
        return K

    def __len__(self):
        return len(self._store)


@dataclass
class GreedyPolicyState:
    A_hat: np.ndarray
    subset: ActuatorSubset
    P: np.ndarray
    gain: np.ndarray
    B: np.ndarray
    diagnostics: list = field(default_factory=list)

    def diagnostics_json(self, **extra):
        rounds = [
            {
                "round": d["round"],
                "selected": d["selected"],
                "scores": {str(s): (None if math.isinf(v) else v) for s, v in d["scores"].items()},
                "diverged": [s for s, v in d["scores"].items() if math.isinf(v)],
            }
            for d in self.diagnostics
        ]
        return json.dumps({"subset": list(self.subset.indices), "rounds": rounds, **extra})


def greedy_select(x, A_hat, library: ActuatorLibrary, K, Q, R_unit=1.0,
                  dare_options: DareOptions | None = None, cache: DareCache | None = None,
                  executor=None) -> GreedyPolicyState:
    """Grow a ``K``-actuator subset one column at a time and return its LQR policy.

    Ties between candidate scores go to the lowest library index. ``executor``
    (any ``concurrent.futures`` executor) runs the candidate solves of a round
    in parallel.
    """
    x = np.asarray(x, dtype=float).ravel()
    A_hat = np.asarray(A_hat, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = library.n
    if A_hat.shape != (n, n) or x.size != n or Q.shape != (n, n):
        raise DimensionError("state, A_hat, Q and library dimensions disagree")
    if not 0 <= K <= library.m:
        raise ValueError(f"budget K={K} must lie in [0, M={library.m}]")
    opts = dare_options or DareOptions()

    def solve(S):
        B = build_input_matrix(library, S)
        R = input_cost(R_unit, S)
        if cache is not None:
            return cache.solve(A_hat, B, Q, R, S, opts)
        return dare(A_hat, B, Q, R, opts)

    subset = ActuatorSubset(())
    sol = None
    diagnostics = []
    for rnd in range(K):
        cands = [s for s in range(1, library.m + 1) if s not in subset]
        sets = [subset.add(s) for s in cands]
        sols = list(executor.map(solve, sets)) if executor else [solve(S) for S in sets]
        scores = {s: (float(x @ so.P @ x) if so.converged else math.inf) for s, so in zip(cands, sols)}
        best, best_score = None, math.inf
        for s, so in zip(cands, sols):
            if scores[s] < best_score:
                best, best_score, sol = s, scores[s], so
        diagnostics.append({"round": rnd, "scores": scores, "selected": best})
        if best is None:
            raise UnstabilizableError(
                f"no candidate in round {rnd} yields a convergent Riccati iteration "
                f"(selected so far {subset})",
                diagnostics,
            )
        subset = subset.add(best)

    B = build_input_matrix(library, subset)
    R = input_cost(R_unit, subset)
    if sol is None:
        sol = solve(subset)
    if cache is not None:
        gain = cache.gain(A_hat, B, Q, R, subset, opts, sol)
    else:
        gain = lqr_gain(sol.P, A_hat, B, R)
    return GreedyPolicyState(A_hat, subset, sol.P, gain, B, diagnostics)


def greedy_input(state: GreedyPolicyState, x) -> np.ndarray:
    """``u = gain @ x`` for the selected subset."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != state.gain.shape[1]:
        raise DimensionError(f"state has dimension {x.size}, gain expects {state.gain.shape[1]}")
    return state.gain @ x
