"""Core value types: dynamics modes, actuator libraries, costs and scenarios.

Actuator indices are 1-based throughout so that subset labels match the
usual "actuator 1, actuator 2, ..." naming. Arrays held by these types are
copied and frozen on construction.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError

SYM_TOL = 1e-12
PSD_PIVOT_TOL = -1e-12
SCHEMA_VERSION = 1


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_square(M, name):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")


def _check_sym_psd(M, name):
    _check_square(M, name)
    if not np.allclose(M, M.T, rtol=0.0, atol=SYM_TOL * max(1.0, np.abs(M).max(initial=0.0))):
        raise ValueError(f"{name} is not symmetric")
    if M.size and np.linalg.eigvalsh(M).min() < PSD_PIVOT_TOL * max(1.0, np.abs(M).max()):
        raise ValueError(f"{name} is not positive semidefinite")


@dataclass(frozen=True)
class DynamicsMode:
    """One linear dynamics hypothesis ``x+ = A x + B u + w`` with ``cov(w) = W``."""

    label: str
    A: np.ndarray
    W: np.ndarray | None = None

    def __post_init__(self):
        A = _frozen(self.A, 2, "A")
        _check_square(A, "A")
        W = _frozen(self.W, 2, "W") if self.W is not None else _frozen(np.zeros_like(A))
        if W.shape != A.shape:
            raise DimensionError(f"W shape {W.shape} does not match A shape {A.shape}")
        _check_sym_psd(W, "W")
        object.__setattr__(self, "label", str(self.label))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "W", W)

    @property
    def n(self):
        return self.A.shape[0]


@dataclass(frozen=True, order=True)
class ActuatorSubset:
    """A canonical (sorted, duplicate-free) set of 1-based library indices."""

    indices: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate actuator indices in {idx}")
        if any(i < 1 for i in idx):
            raise DimensionError(f"actuator indices are 1-based, got {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in self.indices

    @property
    def cardinality(self):
        return len(self.indices)

    def add(self, i):
        return ActuatorSubset(self.indices + (i,))

    @property
    def label(self):
        """Compact text label, e.g. ``"1+4"``; the empty subset is ``"-"``."""
        return "+".join(str(i) for i in self.indices) or "-"

    @classmethod
    def from_label(cls, text):
        text = str(text).strip()
        if text in ("", "-"):
            return cls(())
        return cls(tuple(int(p) for p in text.split("+")))

    def __str__(self):
        return "{" + ",".join(str(i) for i in self.indices) + "}"


@dataclass(frozen=True)
class ActuatorLibrary:
    """Ordered candidate input columns ``b_1, ..., b_M`` stored as an N x M matrix."""

    matrix: np.ndarray
    _blocks: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        mat = _frozen(self.matrix, 2, "library matrix")
        if mat.shape[1] < 1:
            raise DimensionError("actuator library needs at least one column")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence[float]]):
        cols = [np.asarray(c, dtype=float).ravel() for c in columns]
        if not cols:
            raise DimensionError("actuator library needs at least one column")
        n = cols[0].size
        if any(c.size != n for c in cols):
            raise DimensionError("all library columns must have the same dimension")
        return cls(np.column_stack(cols))

    @classmethod
    def standard_basis(cls, n, m):
        """Columns ``e_1, ..., e_m`` of the n x n identity."""
        if m > n:
            raise DimensionError(f"cannot take {m} basis vectors in R^{n}")
        return cls(np.eye(n)[:, :m])

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def m(self):
        return self.matrix.shape[1]

    def column(self, i):
        """Return ``b_i`` (1-based)."""
        if not 1 <= i <= self.m:
            raise DimensionError(f"actuator index {i} outside [1, {self.m}]")
        return self.matrix[:, i - 1]

    def columns(self):
        return [self.matrix[:, j] for j in range(self.m)]


def build_input_matrix(library: ActuatorLibrary, subset) -> np.ndarray:
    """Stack the library columns selected by ``subset`` in ascending index order.

    The result is read-only and memoized per library.
    """
    if not isinstance(subset, ActuatorSubset):
        subset = ActuatorSubset(tuple(subset))
    B = library._blocks.get(subset.indices)
    if B is not None:
        return B
    for i in subset:
        if not 1 <= i <= library.m:
            raise DimensionError(f"actuator index {i} outside [1, {library.m}]")
    B = _frozen(library.matrix[:, [i - 1 for i in subset.indices]])
    library._blocks[subset.indices] = B
    return B


def enumerate_subsets(m: int, k: int) -> list[ActuatorSubset]:
    """All size-``k`` subsets of ``{1..m}`` in lexicographic order."""
    if k < 0 or m < 0:
        raise ValueError("m and k must be non-negative")
    if k > m:
        raise ValueError(f"budget K={k} exceeds library size M={m}")
    return [ActuatorSubset(c) for c in itertools.combinations(range(1, m + 1), k)]


def n_subsets(m, k):
    return comb(m, k)


@dataclass(frozen=True)
class CostSpec:
    """Quadratic stage/terminal costs.

    ``R_unit`` is either a scalar (R = r * I for every subset) or a length-M
    vector of per-actuator weights (R = diag of the selected weights).
    ``Q_seq`` optionally gives a time-varying state cost Q_0..Q_{T-1}; when
    shorter than the horizon the last entry is held.
    """

    Q: np.ndarray
    R_unit: float | np.ndarray = 1.0
    Q_terminal: np.ndarray | None = None
    Q_seq: tuple | None = None

    def __post_init__(self):
        Q = _frozen(self.Q, 2, "Q")
        _check_sym_psd(Q, "Q")
        Qt = Q if self.Q_terminal is None else _frozen(self.Q_terminal, 2, "Q_terminal")
        if Qt.shape != Q.shape:
            raise DimensionError("Q_terminal shape does not match Q")
        _check_sym_psd(Qt, "Q_terminal")
        r = np.array(self.R_unit, dtype=float)
        if r.ndim > 1:
            raise DimensionError("R_unit must be a scalar or a per-actuator vector")
        if np.any(r <= 0):
            raise ValueError("input cost weights must be positive")
        if r.ndim == 0:
            r = float(r)
        else:
            r.setflags(write=False)
        qseq = None
        if self.Q_seq is not None:
            qseq = tuple(_frozen(q, 2, "Q_seq entry") for q in self.Q_seq)
            for q in qseq:
                if q.shape != Q.shape:
                    raise DimensionError("Q_seq entries must match Q")
                _check_sym_psd(q, "Q_seq entry")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Q_terminal", Qt)
        object.__setattr__(self, "R_unit", r)
        object.__setattr__(self, "Q_seq", qseq)

    @property
    def n(self):
        return self.Q.shape[0]

    def Q_at(self, t):
        if not self.Q_seq:
            return self.Q
        return self.Q_seq[min(t, len(self.Q_seq) - 1)]

    def R_for(self, subset) -> np.ndarray:
        return input_cost(self.R_unit, subset)


@lru_cache(maxsize=256)
def _scaled_identity(r, k):
    return _frozen(r * np.eye(k))


def input_cost(R_unit, subset) -> np.ndarray:
    """Input cost matrix for ``subset``: ``r * I`` for scalar ``r``, else diagonal weights."""
    idx = subset.indices if isinstance(subset, ActuatorSubset) else tuple(subset)
    if np.ndim(R_unit) == 0:
        return _scaled_identity(float(R_unit), len(idx))
    w = np.asarray(R_unit, dtype=float)
    if any(i > w.size for i in idx):
        raise DimensionError("per-actuator R_unit shorter than library")
    return np.diag([w[i - 1] for i in idx]).reshape(len(idx), len(idx))


@dataclass(frozen=True)
class SwitchingSchedule:
    """Deterministic map from time to mode label.

    Either periodic over ``blocks`` of ``(label, dwell)`` pairs, or an explicit
    per-step ``labels`` list (the last label is held past its end).
    """

    blocks: tuple = ()
    labels: tuple = ()

    def __post_init__(self):
        blocks = tuple((str(lab), int(d)) for lab, d in self.blocks)
        labels = tuple(str(lab) for lab in self.labels)
        if bool(blocks) == bool(labels):
            raise ValueError("schedule needs exactly one of blocks or labels")
        if any(d < 1 for _, d in blocks):
            raise ValueError("dwell times must be >= 1")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def constant(cls, label):
        return cls(blocks=((label, 1),))

    @classmethod
    def periodic(cls, blocks):
        return cls(blocks=tuple(blocks))

    @classmethod
    def explicit(cls, labels):
        return cls(labels=tuple(labels))

    @property
    def period(self):
        return sum(d for _, d in self.blocks)

    def mode_at(self, t) -> str:
        if t < 0:
            raise ValueError("time must be non-negative")
        if self.labels:
            return self.labels[min(t, len(self.labels) - 1)]
        r = t % self.period
        for lab, d in self.blocks:
            if r < d:
                return lab
            r -= d
        raise AssertionError("unreachable")

    def mode_labels(self):
        seen = self.labels if self.labels else [lab for lab, _ in self.blocks]
        return list(dict.fromkeys(seen))

    def to_dict(self):
        if self.labels:
            return {"kind": "explicit", "labels": list(self.labels)}
        return {"kind": "periodic", "blocks": [[lab, d] for lab, d in self.blocks]}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", "periodic")
        if kind == "periodic":
            return cls.periodic(d["blocks"])
        if kind == "explicit":
            return cls.explicit(d["labels"])
        raise ValueError(f"unknown schedule kind {kind!r}")


@dataclass(frozen=True)
class Scenario:
    """A complete closed-loop experiment definition.

    ``horizon`` is the number of decision steps: inputs are applied at
    ``t = 0..horizon-1`` and the terminal cost is charged at ``t = horizon``.
    The initial state is drawn from N(x0_mean, x0_cov); a zero covariance
    gives a fixed initial state.
    """

    modes: tuple
    schedule: SwitchingSchedule
    library: ActuatorLibrary
    cost: CostSpec
    K: int
    horizon: int
    x0_mean: np.ndarray
    x0_cov: np.ndarray | None = None
    seed: int = 0
    name: str = "custom"
    _by_label: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise ValueError("scenario needs at least one dynamics mode")
        n = modes[0].n
        labels = [m.label for m in modes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels {labels}")
        for m in modes:
            if m.n != n:
                raise DimensionError(f"mode {m.label!r} has dimension {m.n}, expected {n}")
        if self.library.n != n:
            raise DimensionError(f"library columns have dimension {self.library.n}, expected {n}")
        if self.cost.n != n:
            raise DimensionError(f"cost Q has dimension {self.cost.n}, expected {n}")
        if not 0 <= self.K <= self.library.m:
            raise ValueError(f"budget K={self.K} must lie in [0, M={self.library.m}]")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        mean = _frozen(self.x0_mean, 1, "x0_mean")
        if mean.size != n:
            raise DimensionError(f"x0_mean has dimension {mean.size}, expected {n}")
        cov = _frozen(np.zeros((n, n)) if self.x0_cov is None else self.x0_cov, 2, "x0_cov")
        if cov.shape != (n, n):
            raise DimensionError(f"x0_cov shape {cov.shape}, expected {(n, n)}")
        _check_sym_psd(cov, "x0_cov")
        by_label = {m.label: m for m in modes}
        for t in range(max(self.horizon, 1)):
            lab = self.schedule.mode_at(t)
            if lab not in by_label:
                raise ValueError(f"schedule refers to unknown mode {lab!r} at t={t}")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "x0_mean", mean)
        object.__setattr__(self, "x0_cov", cov)
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "_by_label", by_label)

    @property
    def n(self):
        return self.modes[0].n

    def mode(self, label) -> DynamicsMode:
        return self._by_label[label]

    def mode_at(self, t) -> DynamicsMode:
        return self._by_label[self.schedule.mode_at(t)]

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)

    # -- serialization -------------------------------------------------

    def to_dict(self):
        r = self.cost.R_unit
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "modes": [{"label": m.label, "A": m.A.tolist(), "W": m.W.tolist()} for m in self.modes],
            "schedule": self.schedule.to_dict(),
            "library": self.library.matrix.T.tolist(),
            "cost": {
                "Q": self.cost.Q.tolist(),
                "R_unit": r if np.ndim(r) == 0 else r.tolist(),
                "Q_terminal": self.cost.Q_terminal.tolist(),
                **({"Q_seq": [q.tolist() for q in self.cost.Q_seq]} if self.cost.Q_seq else {}),
            },
            "K": self.K,
            "horizon": self.horizon,
            "x0": {"mean": self.x0_mean.tolist(), "cov": self.x0_cov.tolist()},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported scenario schema_version {version}")
        modes = tuple(DynamicsMode(m["label"], m["A"], m.get("W")) for m in d["modes"])
        n = modes[0].n
        sched = d.get("schedule")
        schedule = SwitchingSchedule.from_dict(sched) if sched else SwitchingSchedule.constant(modes[0].label)
        library = ActuatorLibrary.from_columns(d["library"])
        c = d["cost"]
        cost = CostSpec(c["Q"], c.get("R_unit", 1.0), c.get("Q_terminal"), c.get("Q_seq"))
        x0 = d.get("x0", {})
        if isinstance(x0, list):
            mean, cov = x0, None
        else:
            mean, cov = x0.get("mean", [0.0] * n), x0.get("cov")
        return cls(
            modes=modes,
            schedule=schedule,
            library=library,
            cost=cost,
            K=d["K"],
            horizon=d["horizon"],
            x0_mean=mean,
            x0_cov=cov,
            seed=d.get("seed", 0),
            name=d.get("name", "custom"),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))
