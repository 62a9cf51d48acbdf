import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force, brute_force_labels
from selftune.errors import CapacityError, DimensionError
from selftune.exact_dp import (
    backward_pieces,
    evaluate_value,
    optimal_actuator_at,
    optimal_input_at,
    sample_partition,
)
from selftune.model import ActuatorLibrary, ActuatorSubset, CostSpec, DynamicsMode, Scenario, SwitchingSchedule
from selftune.scenarios import partition_example


def small_scenario(seed, n=2, m=2, K=1, T=3, W=None, Q_seq=None):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    cols = rng.standard_normal((m, n))
    G = rng.standard_normal((n, n))
    Q = G @ G.T + 0.1 * np.eye(n)
    return Scenario(
        modes=(DynamicsMode("A", A, W),),
        schedule=SwitchingSchedule.constant("A"),
        library=ActuatorLibrary.from_columns(cols),
        cost=CostSpec(Q, float(rng.uniform(0.5, 2.0)), Q_seq=Q_seq),
        K=K,
        horizon=T,
        x0_mean=np.zeros(n),
    )


def test_piece_counts_and_order():
    pws = backward_pieces(partition_example())
    assert [len(p) for p in pws] == [16, 8, 4, 2, 1]
    seqs = [tuple(S.indices for S in p.seq) for p in pws[0].pieces]
    assert seqs == sorted(seqs)
    assert pws[4].pieces[0].seq == ()


def test_single_piece_when_one_subset():
    sc = small_scenario(0, m=1)
    assert [len(p) for p in backward_pieces(sc)] == [1, 1, 1, 1]


def test_capacity_error():
    sc = small_scenario(0, m=3, T=4)
    with pytest.raises(CapacityError):
        backward_pieces(sc, piece_budget=80)
    backward_pieces(sc, piece_budget=81)


@pytest.mark.parametrize("seed", range(8))
def test_values_match_brute_force(seed):
    sc = small_scenario(seed, n=2 + seed % 2, m=2 + seed % 2, T=1 + seed % 4)
    pws = backward_pieces(sc)
    _, mats = brute_force(sc.modes[0].A, list(sc.library.columns()), sc.K, sc.horizon,
                          sc.cost.Q, sc.cost.R_unit)
    X = np.random.default_rng(seed).standard_normal((10, sc.n))
    for x in X:
        want = min(float(x @ M @ x) for M in mats)
        got, _ = evaluate_value(pws[0], x)
        assert got == pytest.approx(want, rel=1e-8)


def test_time_varying_state_cost_matches_brute_force():
    Qs = [np.eye(2), np.diag([3.0, 1.0]), np.diag([1.0, 5.0])]
    sc = small_scenario(4, T=3, Q_seq=Qs)
    pws = backward_pieces(sc)
    _, mats = brute_force(sc.modes[0].A, list(sc.library.columns()), 1, 3, sc.cost.Q, sc.cost.R_unit,
                          Q_seq=Qs)
    x = np.array([0.3, -1.2])
    assert evaluate_value(pws[0], x)[0] == pytest.approx(min(x @ M @ x for M in mats), rel=1e-9)


def test_noise_offset_accumulates_trace():
    W = np.diag([0.1, 0.2])
    sc = small_scenario(1, T=2, W=W)
    pws = backward_pieces(sc)
    for piece in pws[0].pieces:
        child = pws[1].pieces[piece.child]
        assert piece.q == pytest.approx(child.q + np.trace(child.P @ W))
    assert pws[1].pieces[0].q == pytest.approx(np.trace(sc.cost.Q_terminal @ W))


def test_tie_goes_to_lowest_index():
    # mirror-symmetric system: both actuators give identical pieces
    sc = Scenario(
        modes=(DynamicsMode("A", np.eye(2)),),
        schedule=SwitchingSchedule.constant("A"),
        library=ActuatorLibrary.standard_basis(2, 2),
        cost=CostSpec(np.eye(2)),
        K=1,
        horizon=1,
        x0_mean=np.zeros(2),
    )
    pws = backward_pieces(sc)
    assert optimal_actuator_at(pws[0], [1.0, 1.0]) == ActuatorSubset((1,))
    assert optimal_actuator_at(pws[0], [1.0, 2.0]) == ActuatorSubset((2,))


def test_optimal_input_is_piece_gain():
    pws = backward_pieces(partition_example())
    x = np.array([1.0, -2.0])
    S, u = optimal_input_at(pws[0], x)
    _, i = evaluate_value(pws[0], x)
    assert S == pws[0].pieces[i].seq[0]
    assert np.allclose(u, pws[0].pieces[i].gain @ x)
    with pytest.raises(ValueError):
        optimal_input_at(pws[-1], x)


def test_dimension_mismatch():
    pws = backward_pieces(partition_example())
    with pytest.raises(DimensionError):
        evaluate_value(pws[0], [1.0, 2.0, 3.0])


def test_multi_mode_needs_choice():
    from selftune.scenarios import switching_example

    sc = switching_example(horizon=2)
    with pytest.raises(ValueError):
        backward_pieces(sc)
    assert len(backward_pieces(sc, mode="A2")[0]) == 4


def test_pruning_keeps_value_function():
    sc = small_scenario(2, m=3, T=3)
    full = backward_pieces(sc)
    pruned = backward_pieces(sc, prune=True)
    X = np.random.default_rng(0).standard_normal((200, 2))
    for a, b in zip(full, pruned):
        assert len(b) <= len(a)
        assert np.allclose(a.values(X).min(axis=1), b.values(X).min(axis=1), rtol=1e-10)


def test_threads_give_identical_pieces():
    sc = small_scenario(3, m=3, T=3)
    a = backward_pieces(sc)
    b = backward_pieces(sc, threads=3)
    for pa, pb in zip(a, b):
        assert all(np.array_equal(x.P, y.P) and x.seq == y.seq for x, y in zip(pa.pieces, pb.pieces))


def test_partition_labels_match_oracle():
    sc = partition_example()
    pws = backward_pieces(sc)
    sample = sample_partition(pws, samples=500, seed=3)
    cols = list(sc.library.columns())
    for t in range(4):
        want, _ = brute_force_labels(sc.modes[0].A, cols, 1, 4, sc.cost.Q, 1.0, sample.points, t)
        assert [S.indices for S in sample.labels[t]] == list(want)


def test_partition_csv_layout(tmp_path):
    pws = backward_pieces(partition_example())
    sample = sample_partition(pws, samples=7, seed=1)
    path = tmp_path / "p.csv"
    sample.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["x1", "x2", "t", "subset"]
    assert len(rows) == 1 + 7 * 4
    assert [r[2] for r in rows[1:]] == [str(t) for t in range(4) for _ in range(7)]
    assert float(rows[1][0]) == sample.points[0, 0]


def test_partition_grid_and_errors():
    pws = backward_pieces(partition_example())
    s = sample_partition(pws, times=[0], grid=(4, 3))
    assert s.points.shape == (12, 2)
    assert s.points[0].tolist() == [-3.0, -4 + 8 / 6]
    with pytest.raises(ValueError):
        sample_partition(pws, samples=3, grid=(2, 2))
    with pytest.raises(ValueError):
        sample_partition(pws, times=[4], samples=3)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_argmin_scale_invariant_without_noise(seed, c):
    pws = backward_pieces(small_scenario(seed % 50, m=3, T=2))
    x = np.random.default_rng(seed).standard_normal(2)
    vals = pws[0].values(np.vstack([x, c * x]))
    assert np.allclose(vals[1], c * c * vals[0], rtol=1e-9)
    gap = np.sort(vals[0])
    if len(gap) > 1 and gap[1] - gap[0] > 1e-9 * abs(gap[0]):
        assert evaluate_value(pws[0], x)[1] == evaluate_value(pws[0], c * x)[1]
