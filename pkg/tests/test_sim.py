import csv
import json
import math

import numpy as np
import pytest

from selftune.model import ActuatorSubset, CostSpec, DynamicsMode, SwitchingSchedule
from selftune.scenarios import network_example, partition_example, switching_example
from selftune.sim import (
    ExactDP,
    FixedArchitectureLQR,
    GreedyKnownModel,
    GreedySelfTuning,
    ModeAwareGreedy,
    compare,
    policy_from_dict,
    policy_to_dict,
    rollout,
)

B1 = ActuatorSubset((1,))


def test_rollout_cost_accounting():
    sc = switching_example(horizon=30)
    tr = rollout(sc, ModeAwareGreedy(), seed=4)
    assert len(tr.steps) == 30
    assert tr.total_cost == tr.recompute_total()
    x = tr.steps[3].x
    u = tr.steps[3].u
    assert tr.steps[3].stage_cost == pytest.approx(x @ x + u @ u)
    assert tr.terminal_cost == pytest.approx(tr.final_state @ tr.final_state)
    assert tr.states().shape == (31, 2)


def test_rollout_dynamics_consistent_without_noise():
    sc = switching_example(horizon=12, sigma=0.0)
    tr = rollout(sc, FixedArchitectureLQR(B1), seed=0)
    xs = tr.states()
    for s in tr.steps:
        A = sc.mode(s.mode).A
        assert np.allclose(xs[s.t + 1], A @ s.x + sc.library.column(1) * s.u[0])


def test_rollout_is_seeded():
    sc = switching_example(horizon=40)
    a = rollout(sc, ModeAwareGreedy(), seed=11)
    b = rollout(sc, ModeAwareGreedy(), seed=11)
    c = rollout(sc, ModeAwareGreedy(), seed=12)
    assert a.total_cost == b.total_cost
    assert np.array_equal(a.states(), b.states())
    assert a.total_cost != c.total_cost


def test_schedule_labels_in_trace():
    sc = switching_example(dwell=3, dwell_a1=2, horizon=10)
    tr = rollout(sc, ModeAwareGreedy(), seed=0)
    assert [s.mode for s in tr.steps] == ["A1", "A1", "A2", "A2", "A2"] * 2


def test_mode_aware_uses_b2_in_a2():
    sc = switching_example(horizon=60)
    tr = rollout(sc, ModeAwareGreedy(), seed=1)
    # once the whole detection window lies inside an A2 visit
    in_a2 = [s for s in tr.steps if all(sc.mode_at(s.t - k).label == "A2" for k in range(6))]
    assert in_a2 and all(s.subset == ActuatorSubset((2,)) for s in in_a2)


def test_fixed_b1_diverges_and_flags():
    sc = switching_example()
    tr = rollout(sc, FixedArchitectureLQR(B1), seed=0)
    assert tr.diverged and tr.max_norm > 1e6


def test_overflow_truncates():
    sc = switching_example(dwell=200, horizon=400)
    tr = rollout(sc, FixedArchitectureLQR(B1), seed=0)
    assert tr.truncated and math.isinf(tr.total_cost) and tr.final_state is None
    assert len(tr.steps) < 400


def test_fixed_subset_must_match_budget():
    with pytest.raises(ValueError):
        rollout(switching_example(), FixedArchitectureLQR(ActuatorSubset((1, 2))))


def test_exact_dp_not_worse_than_greedy():
    sc = partition_example(horizon=4).replace(x0_mean=np.array([1.5, -2.0]))
    dp = rollout(sc, ExactDP(), seed=0)
    gr = rollout(sc, GreedyKnownModel(), seed=0)
    assert dp.total_cost <= gr.total_cost + 1e-9


def test_exact_dp_cost_equals_value_function():
    from selftune.exact_dp import backward_pieces, evaluate_value

    sc = partition_example(horizon=4).replace(x0_mean=np.array([0.7, 3.0]))
    tr = rollout(sc, ExactDP(), seed=0)
    assert tr.total_cost == pytest.approx(evaluate_value(backward_pieces(sc)[0], sc.x0_mean)[0], rel=1e-10)


def test_self_tuning_learns_and_stabilizes():
    sc = switching_example(horizon=80).replace(
        schedule=SwitchingSchedule.constant("A2"), x0_cov=np.eye(2))
    tr = rollout(sc, GreedySelfTuning(), seed=2)
    assert not tr.diverged
    assert all(s.subset == ActuatorSubset((2,)) for s in tr.steps[5:])


def test_reselection_period_holds_subset():
    sc = switching_example(horizon=40)
    tr = rollout(sc, ModeAwareGreedy(period=10), seed=3)
    for s in tr.steps:
        assert s.subset == tr.steps[s.t - s.t % 10].subset


def test_compare_summary_and_ratios():
    sc = switching_example(horizon=100)
    pols = [ModeAwareGreedy(), FixedArchitectureLQR(B1)]
    s = compare(sc, pols, [0, 1, 2])
    agg = s.aggregate()
    assert s.policies == ["greedy-modeaware", "fixed[1]"]
    assert agg["greedy-modeaware"]["median_ratio_vs_first"] == 1.0
    assert agg["fixed[1]"]["diverged_runs"] == 3
    assert s.ratios("fixed[1]", "greedy-modeaware") == [math.inf] * 3
    d = json.loads(s.to_json())
    assert d["aggregate"]["fixed[1]"]["median_ratio_vs_first"] == "inf"


def test_compare_threads_match_serial():
    sc = switching_example(horizon=50)
    pols = [ModeAwareGreedy(), GreedyKnownModel()]
    a = compare(sc, pols, range(4))
    b = compare(sc, pols, range(4), threads=3)
    assert a.rows == b.rows


def test_duplicate_policy_names_are_disambiguated():
    s = compare(switching_example(horizon=5), [GreedyKnownModel(), GreedyKnownModel()], [0])
    assert s.policies == ["greedy-known", "greedy-known'"]


def test_trace_and_summary_csv(tmp_path):
    sc = switching_example(horizon=20)
    s = compare(sc, [ModeAwareGreedy(), FixedArchitectureLQR(B1)], [0, 1])
    tr = s.traces[("greedy-modeaware", 0)]
    tr.write_csv(tmp_path / "t.csv", full_state=True)
    rows = list(csv.reader((tmp_path / "t.csv").open()))
    assert rows[0] == ["t", "mode", "subset", "stage_cost", "norm_x", "x1", "x2"]
    assert len(rows) == 22
    assert math.fsum(float(r[3]) for r in rows[1:]) == tr.total_cost
    s.write_costs_csv(tmp_path / "c.csv")
    s.write_states_csv(tmp_path / "s.csv")
    costs = list(csv.reader((tmp_path / "c.csv").open()))
    assert costs[0][:3] == ["seed", "cost_greedy-modeaware", "diverged_greedy-modeaware"]
    assert float(costs[1][1]) == tr.total_cost
    states = list(csv.reader((tmp_path / "s.csv").open()))
    assert states[0][:2] == ["policy", "seed"] and len(states) == 1 + 4 * 21


def test_policy_dict_round_trip():
    for p in [FixedArchitectureLQR(ActuatorSubset((1, 2)), "A"), GreedyKnownModel(period=3),
              GreedySelfTuning(ridge=0.1, window=7), ModeAwareGreedy(window=2), ExactDP(prune=True)]:
        assert policy_from_dict(json.loads(json.dumps(policy_to_dict(p)))) == p
    with pytest.raises(ValueError):
        policy_from_dict({"kind": "nope"})


def test_network_instance_is_unstable_and_seeded():
    from selftune.linalg import spectral_radius

    a = network_example(3, horizon=5)
    b = network_example(3, horizon=5)
    assert np.array_equal(a.modes[0].A, b.modes[0].A)
    assert spectral_radius(a.modes[0].A) == pytest.approx(1.3)
    assert a.library.m == 25 and a.n == 50 and a.K == 2


def test_time_varying_cost_is_charged():
    sc = switching_example(horizon=4, sigma=0.0)
    sc = sc.replace(cost=CostSpec(np.eye(2), 1.0, Q_seq=[np.zeros((2, 2))]))
    tr = rollout(sc, GreedyKnownModel(), seed=0)
    for s in tr.steps:
        assert s.stage_cost == pytest.approx(s.u @ s.u)


def test_custom_modes_without_noise():
    sc = switching_example(horizon=3).replace(
        modes=(DynamicsMode("A1", np.eye(2) * 0.5), DynamicsMode("A2", np.eye(2) * 0.5)), x0_cov=None)
    tr = rollout(sc, GreedyKnownModel(), seed=0)
    assert tr.total_cost == 0.0


def test_policy_that_cannot_act_ends_with_inf_cost():
    from selftune.model import ActuatorLibrary
    from selftune.scenarios import SWITCH_B1

    sc = switching_example(horizon=20).replace(
        library=ActuatorLibrary.from_columns([SWITCH_B1]), schedule=SwitchingSchedule.constant("A2"))
    tr = rollout(sc, GreedyKnownModel(), seed=0)
    assert math.isinf(tr.total_cost) and tr.diverged and "t=0" in tr.failure
    s = compare(sc, [GreedyKnownModel()], [0])
    assert "failure" in s.rows[0]
