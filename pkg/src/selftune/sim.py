"""Seeded closed-loop rollouts of architecture-policies.

A policy object describes *what* to run; ``policy.controller(scenario)``
builds the per-rollout state, and ``controller.act(t, x, history)`` returns
the active subset and the input for that step.

Random numbers come from numpy's PCG64 bit generator seeded with the rollout
seed: ``N`` standard normals for the initial state, then ``N`` per step for
the process noise, each mapped through a Cholesky factor of its covariance.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exact_dp import DEFAULT_PIECE_BUDGET, backward_pieces, optimal_input_at
from .errors import UnstabilizableError
from .greedy import DareCache, greedy_select
from .linalg import DareOptions, cholesky_psd, dare, lqr_gain
from .model import ActuatorSubset, Scenario, build_input_matrix
from .sysid import DEFAULT_RIDGE, DEFAULT_WINDOW, History, detect_mode, fit_dynamics

DIVERGENCE_NORM = 1e6
OVERFLOW_NORM = 1e30


# -- policies ----------------------------------------------------------------


def _check_subset(scenario, subset):
    if len(subset) != scenario.K:
        raise ValueError(f"fixed subset {subset} has {len(subset)} actuators, budget is K={scenario.K}")
    build_input_matrix(scenario.library, subset)


@dataclass(frozen=True)
class FixedArchitectureLQR:
    """Constant subset with the LQR gain for a nominal mode.

    If the Riccati iteration for the nominal pair does not converge, the gain
    is taken from the last (finite) iterate so the policy still acts; this is
    how an unstabilizable fixed architecture is simulated.
    """

    subset: ActuatorSubset
    nominal_mode: str | None = None
    dare_options: DareOptions = DareOptions()

    @property
    def name(self):
        return f"fixed[{self.subset.label}]"

    def controller(self, scenario, cache=None):
        _check_subset(scenario, self.subset)
        mode = scenario.mode(self.nominal_mode) if self.nominal_mode else scenario.modes[0]
        B = build_input_matrix(scenario.library, self.subset)
        R = scenario.cost.R_for(self.subset)
        sol = dare(mode.A, B, scenario.cost.Q, R, self.dare_options)
        gain = lqr_gain(sol.P, mode.A, B, R)
        subset = self.subset

        class _Fixed:
            converged = sol.converged

            def act(self, t, x, history):
                return subset, gain @ x

        return _Fixed()


class _GreedyController:
    def __init__(self, scenario, period, cache, opts):
        self.scenario = scenario
        self.period = period
        self.cache = cache
        self.opts = opts
        self.state = None
        self.last = []

    def model(self, t, x, history):
        raise NotImplementedError

    def act(self, t, x, history):
        sc = self.scenario
        A = self.model(t, x, history)
        if self.state is None or t % self.period == 0:
            self.state = greedy_select(x, A, sc.library, sc.K, sc.cost.Q, sc.cost.R_unit,
                                       self.opts, self.cache)
        elif not np.array_equal(A, self.state.A_hat):
            # architecture held between selections; gain follows the model
            S = self.state.subset
            B, R = self.state.B, sc.cost.R_for(S)
            sol = self.cache.solve(A, B, sc.cost.Q, R, S, self.opts)
            if sol.converged:
                self.state.gain = self.cache.gain(A, B, sc.cost.Q, R, S, self.opts, sol)
                self.state.A_hat = A
        self.last.append(self.state.diagnostics)
        return self.state.subset, self.state.gain @ x


@dataclass(frozen=True)
class GreedyKnownModel:
    """Greedy selection using the true dynamics of the current mode."""

    period: int = 1
    dare_options: DareOptions = DareOptions()

    @property
    def name(self):
        return "greedy-known"

    def controller(self, scenario, cache=None):
        ctl = _GreedyController(scenario, self.period, cache or DareCache(), self.dare_options)
        ctl.model = lambda t, x, h: scenario.mode_at(t).A
        return ctl


@dataclass(frozen=True)
class GreedySelfTuning:
    """Identify ``A`` by least squares from the history every step, then select greedily.

    Before the first transition the ``prior`` model is used (zeros when unset).
    """

    period: int = 1
    ridge: float = DEFAULT_RIDGE
    window: int | None = None
    prior: str | None = None
    dare_options: DareOptions = DareOptions()

    @property
    def name(self):
        return "greedy-selftuning"

    def controller(self, scenario, cache=None):
        ctl = _GreedyController(scenario, self.period, cache or DareCache(), self.dare_options)
        prior = scenario.mode(self.prior).A if self.prior else np.zeros((scenario.n, scenario.n))

        def model(t, x, history):
            if history.t == 0:
                return prior
            return fit_dynamics(history, self.ridge, self.window).A

        ctl.model = model
        return ctl


@dataclass(frozen=True)
class ModeAwareGreedy:
    """Detect the active mode from recent residuals, then select greedily for it.

    The first mode is assumed until a transition has been observed.
    """

    window: int = DEFAULT_WINDOW
    period: int = 1
    dare_options: DareOptions = DareOptions()

    @property
    def name(self):
        return "greedy-modeaware"

    def controller(self, scenario, cache=None):
        ctl = _GreedyController(scenario, self.period, cache or DareCache(), self.dare_options)

        def model(t, x, history):
            if history.t == 0:
                return scenario.modes[0].A
            return scenario.mode(detect_mode(history, scenario.modes, self.window)).A

        ctl.model = model
        return ctl


@dataclass(frozen=True)
class ExactDP:
    """Optimal finite-horizon architecture-policy from the piecewise-quadratic recursion."""

    piece_budget: int = DEFAULT_PIECE_BUDGET
    prune: bool = False

    @property
    def name(self):
        return "exact-dp"

    def controller(self, scenario, cache=None):
        pws = backward_pieces(scenario, self.piece_budget, self.prune)

        class _DP:
            pieces = pws

            def act(self, t, x, history):
                return optimal_input_at(pws[t], x)

        return _DP()


POLICY_KINDS = {
    "fixed": FixedArchitectureLQR,
    "greedy-known": GreedyKnownModel,
    "greedy-selftuning": GreedySelfTuning,
    "greedy-modeaware": ModeAwareGreedy,
    "exact-dp": ExactDP,
}


def policy_from_dict(d):
    """Build a policy from ``{"kind": ..., **params}``; the inverse of :func:`policy_to_dict`."""
    d = dict(d)
    kind = d.pop("kind")
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {sorted(POLICY_KINDS)}")
    if kind == "fixed":
        d["subset"] = ActuatorSubset(tuple(d["subset"]))
    if "dare_options" in d:
        d["dare_options"] = DareOptions(**d["dare_options"])
    return POLICY_KINDS[kind](**d)


def policy_to_dict(policy):
    kind = next(k for k, v in POLICY_KINDS.items() if isinstance(policy, v))
    out = {"kind": kind}
    for name in policy.__dataclass_fields__:
        v = getattr(policy, name)
        if isinstance(v, ActuatorSubset):
            v = list(v.indices)
        elif isinstance(v, DareOptions):
            if v == DareOptions():
                continue
            v = {"tol": v.tol, "max_iter": v.max_iter, "divergence_threshold": v.divergence_threshold}
        out[name] = v
    return out


# -- rollout -------------------------------------------------------------------


@dataclass
class StepRecord:
    t: int
    mode: str
    x: np.ndarray
    subset: ActuatorSubset
    u: np.ndarray
    stage_cost: float


@dataclass
class RolloutTrace:
    """Per-step record of one rollout plus its cost.

    ``diverged`` is set once the state norm passes the divergence norm;
    ``truncated`` when it passes the overflow guard, in which case the
    simulation stops and ``total_cost`` is ``inf``. A policy that cannot
    act (every candidate architecture unstabilizable) also ends the run with
    ``inf`` cost and records the reason in ``failure``.
    """

    policy: str
    seed: int
    steps: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    terminal_cost: float = 0.0
    total_cost: float = 0.0
    diverged: bool = False
    truncated: bool = False
    max_norm: float = 0.0
    failure: str | None = None

    def stage_costs(self):
        return [s.stage_cost for s in self.steps]

    def recompute_total(self):
        if self.truncated:
            return math.inf
        return math.fsum(self.stage_costs() + [self.terminal_cost])

    def states(self):
        xs = [s.x for s in self.steps]
        if self.final_state is not None:
            xs.append(self.final_state)
        return np.array(xs)

    def write_csv(self, path, full_state=False):
        """Columns ``t,mode,subset,stage_cost,norm_x`` (plus ``x1..xN`` on request).

        The last row is the terminal state at ``t = T`` and carries the
        terminal cost, so the ``stage_cost`` column sums to the total.
        """
        with Path(path).open("w", newline="") as fh:
            write_trace_rows(csv.writer(fh, lineterminator="\n"), [self], full_state, header=True)


def write_trace_rows(writer, traces, full_state=False, header=True, extra=None):
    extra = extra or []
    if header:
        n = traces[0].states().shape[1] if traces and traces[0].states().size else 0
        cols = [name for name, _ in extra] + ["t", "mode", "subset", "stage_cost", "norm_x"]
        writer.writerow(cols + ([f"x{i + 1}" for i in range(n)] if full_state else []))
    for tr in traces:
        pre = [fn(tr) for _, fn in extra]
        for s in tr.steps:
            row = pre + [s.t, s.mode, s.subset.label, repr(float(s.stage_cost)), repr(float(np.linalg.norm(s.x)))]
            writer.writerow(row + ([repr(float(v)) for v in s.x] if full_state else []))
        if tr.final_state is not None:
            T = tr.steps[-1].t + 1 if tr.steps else 0
            row = pre + [T, "", "", repr(float(tr.terminal_cost)), repr(float(np.linalg.norm(tr.final_state)))]
            writer.writerow(row + ([repr(float(v)) for v in tr.final_state] if full_state else []))


def _stop(tr):
    tr.diverged = tr.truncated = True
    tr.final_state = None
    tr.terminal_cost = tr.total_cost = math.inf
    return tr


def rollout(scenario: Scenario, policy, seed=None, cache=None, divergence_norm=DIVERGENCE_NORM,
            overflow_norm=OVERFLOW_NORM) -> RolloutTrace:
    """Simulate ``policy`` on ``scenario`` for ``t = 0..T-1`` and charge the terminal cost."""
    seed = scenario.seed if seed is None else int(seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    n = scenario.n
    cost = scenario.cost
    chol = {m.label: cholesky_psd(m.W) for m in scenario.modes}
    x = scenario.x0_mean + cholesky_psd(scenario.x0_cov) @ rng.standard_normal(n)
    ctl = policy.controller(scenario, cache)
    hist = History.start(x)
    tr = RolloutTrace(getattr(policy, "name", type(policy).__name__), seed)
    tr.max_norm = float(np.linalg.norm(x))
    tr.diverged = tr.max_norm > divergence_norm
    for t in range(scenario.horizon):
        mode = scenario.mode_at(t)
        try:
            S, u = ctl.act(t, x, hist)
        except UnstabilizableError as exc:
            tr.failure = f"t={t}: {exc}"
            return _stop(tr)
        u = np.asarray(u, dtype=float).ravel()
        B = build_input_matrix(scenario.library, S)
        R = cost.R_for(S)
        Qt = cost.Q_at(t)
        stage = float(x @ Qt @ x + u @ R @ u)
        tr.steps.append(StepRecord(t, mode.label, x, S, u, stage))
        x = mode.A @ x + B @ u + chol[mode.label] @ rng.standard_normal(n)
        norm = float(np.linalg.norm(x))
        if not np.isfinite(norm) or norm > overflow_norm:
            tr.max_norm = math.inf if not np.isfinite(norm) else max(tr.max_norm, norm)
            return _stop(tr)
        tr.max_norm = max(tr.max_norm, norm)
        tr.diverged = tr.diverged or norm > divergence_norm
        hist.append(u, B, x, S)
    tr.final_state = x
    tr.terminal_cost = float(x @ cost.Q_terminal @ x)
    tr.total_cost = tr.recompute_total()
    return tr


# -- comparison ----------------------------------------------------------------


@dataclass
class ComparisonSummary:
    """Per (policy, seed) results plus per-policy aggregates.

    ``ratio`` entries compare each policy against the first one; a diverged
    run counts as ratio ``inf``.
    """

    policies: list
    seeds: list
    rows: list
    traces: dict

    def cost(self, policy, seed):
        return self.traces[(policy, seed)].total_cost

    def ratios(self, num, den):
        out = []
        for s in self.seeds:
            a, b = self.traces[(num, s)], self.traces[(den, s)]
            out.append(math.inf if a.diverged else _ratio(a.total_cost, b.total_cost))
        return out

    def aggregate(self):
        first = self.policies[0]
        agg = {}
        for p in self.policies:
            costs = [self.cost(p, s) for s in self.seeds]
            ratios = self.ratios(p, first)
            agg[p] = {
                "median_cost": float(np.median(costs)),
                "median_ratio_vs_first": float(np.median(ratios)),
                "diverged_runs": sum(self.traces[(p, s)].diverged for s in self.seeds),
                "max_norm": max(self.traces[(p, s)].max_norm for s in self.seeds),
            }
        return agg

    def to_dict(self):
        return {
            "policies": self.policies,
            "seeds": self.seeds,
            "rows": self.rows,
            "aggregate": self.aggregate(),
        }

    def to_json(self, **kw):
        return json.dumps(_json_safe(self.to_dict()), **kw)

    def write_costs_csv(self, path):
        """Wide table: one row per seed, one ``cost_<policy>`` and ``diverged_<policy>`` pair per policy."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["seed"]
            for p in self.policies:
                head += [f"cost_{p}", f"diverged_{p}", f"max_norm_{p}"]
            w.writerow(head)
            for s in self.seeds:
                row = [s]
                for p in self.policies:
                    tr = self.traces[(p, s)]
                    row += [repr(float(tr.total_cost)), int(tr.diverged), repr(float(tr.max_norm))]
                w.writerow(row)

    def write_states_csv(self, path, full_state=True):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            traces = [self.traces[(p, s)] for s in self.seeds for p in self.policies]
            write_trace_rows(w, traces, full_state, header=True,
                             extra=[("policy", lambda tr: tr.policy), ("seed", lambda tr: tr.seed)])


def _ratio(a, b):
    if b == 0:
        return math.inf if a > 0 else 1.0
    return a / b


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else ("inf" if obj > 0 else "-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def compare(scenario: Scenario, policies, seeds, threads=1, **rollout_kw) -> ComparisonSummary:
    """Roll out every policy for every seed and summarize.

    Rollouts for distinct ``(policy, seed)`` pairs run on ``threads`` worker
    threads; each owns its random stream, so results do not depend on the
    thread count. Greedy policies share one DARE cache per policy.
    """
    if not policies:
        raise ValueError("need at least one policy")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    names = []
    for p in policies:
        nm = p.name
        while nm in names:
            nm += "'"
        names.append(nm)
    caches = [DareCache() for _ in policies]
    jobs = [(i, s) for s in seeds for i in range(len(policies))]

    def run(job):
        i, s = job
        tr = rollout(scenario, policies[i], s, caches[i], **rollout_kw)
        tr.policy = names[i]
        return tr

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    traces = {}
    rows = []
    for (i, s), tr in zip(jobs, results):
        traces[(names[i], s)] = tr
        rows.append({"policy": names[i], "seed": s, "total_cost": tr.total_cost,
                     "diverged": tr.diverged, "max_norm": tr.max_norm,
                     **({"failure": tr.failure} if tr.failure else {})})
    return ComparisonSummary(names, seeds, rows, traces)
