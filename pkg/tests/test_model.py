import json

import numpy as np
import pytest

from selftune.errors import DimensionError
from selftune.model import (
    ActuatorLibrary,
    ActuatorSubset,
    CostSpec,
    DynamicsMode,
    Scenario,
    SwitchingSchedule,
    build_input_matrix,
    enumerate_subsets,
    input_cost,
    n_subsets,
)
from selftune.scenarios import network_example, partition_example, switching_example


def test_subset_sorted_and_labelled():
    S = ActuatorSubset((3, 1))
    assert S.indices == (1, 3)
    assert S.label == "1+3"
    assert str(S) == "{1,3}"
    assert ActuatorSubset.from_label("1+3") == S
    assert ActuatorSubset(()).label == "-"
    assert ActuatorSubset.from_label("-") == ActuatorSubset(())
    assert S.add(2).indices == (1, 2, 3)


@pytest.mark.parametrize("bad", [(0,), (1, 1), (-2,)])
def test_subset_rejects_bad_indices(bad):
    with pytest.raises(ValueError):
        ActuatorSubset(bad)


def test_build_input_matrix_basis():
    lib = ActuatorLibrary.standard_basis(50, 25)
    B = build_input_matrix(lib, ActuatorSubset((1, 2)))
    assert B.shape == (50, 2)
    assert np.array_equal(B, np.eye(50)[:, :2])


def test_build_input_matrix_empty_and_out_of_range():
    lib = ActuatorLibrary.standard_basis(3, 2)
    assert build_input_matrix(lib, ActuatorSubset(())).shape == (3, 0)
    with pytest.raises(DimensionError):
        build_input_matrix(lib, ActuatorSubset((3,)))


def test_enumerate_subsets_counts():
    assert len(enumerate_subsets(25, 2)) == 300 == n_subsets(25, 2)
    subs = enumerate_subsets(4, 2)
    assert subs == sorted(subs)
    assert subs[0].indices == (1, 2)
    assert enumerate_subsets(3, 0) == [ActuatorSubset(())]
    with pytest.raises(ValueError):
        enumerate_subsets(2, 3)


def test_input_cost_scalar_and_vector():
    S = ActuatorSubset((1, 3))
    assert np.array_equal(input_cost(2.0, S), 2.0 * np.eye(2))
    assert np.array_equal(input_cost([1.0, 5.0, 7.0], S), np.diag([1.0, 7.0]))
    with pytest.raises(DimensionError):
        input_cost([1.0], S)


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(-np.eye(2))
    with pytest.raises(ValueError):
        CostSpec(np.eye(2), 0.0)
    with pytest.raises(DimensionError):
        CostSpec(np.eye(2), 1.0, np.eye(3))
    c = CostSpec(np.eye(2), 1.0, Q_seq=[np.eye(2), 2 * np.eye(2)])
    assert c.Q_at(0)[0, 0] == 1.0 and c.Q_at(5)[0, 0] == 2.0
    assert np.array_equal(c.Q_terminal, c.Q)


def test_schedule_periodic_and_explicit():
    s = SwitchingSchedule.periodic([("a", 2), ("b", 3)])
    assert [s.mode_at(t) for t in range(7)] == list("aabbbaa")
    e = SwitchingSchedule.explicit(["a", "b"])
    assert e.mode_at(0) == "a" and e.mode_at(10) == "b"
    assert SwitchingSchedule.from_dict(s.to_dict()) == s
    with pytest.raises(ValueError):
        SwitchingSchedule.periodic([("a", 0)])


def test_mode_arrays_are_read_only():
    m = DynamicsMode("a", np.eye(2))
    with pytest.raises(ValueError):
        m.A[0, 0] = 3.0
    assert np.array_equal(m.W, np.zeros((2, 2)))


def test_scenario_dimension_checks():
    lib = ActuatorLibrary.standard_basis(2, 2)
    mode = DynamicsMode("a", np.eye(2))
    kw = dict(modes=(mode,), schedule=SwitchingSchedule.constant("a"), library=lib,
              cost=CostSpec(np.eye(2)), K=1, horizon=3, x0_mean=np.zeros(2))
    Scenario(**kw)
    with pytest.raises(DimensionError):
        Scenario(**{**kw, "library": ActuatorLibrary.standard_basis(3, 2)})
    with pytest.raises(ValueError):
        Scenario(**{**kw, "K": 3})
    with pytest.raises(ValueError):
        Scenario(**{**kw, "schedule": SwitchingSchedule.constant("zzz")})
    with pytest.raises(DimensionError):
        Scenario(**{**kw, "x0_mean": np.zeros(3)})


@pytest.mark.parametrize("build", [switching_example, partition_example, lambda: network_example(3)])
def test_scenario_json_round_trip(build, tmp_path):
    sc = build()
    path = tmp_path / "s.json"
    sc.save(path)
    back = Scenario.load(path)
    assert json.dumps(back.to_dict()) == json.dumps(sc.to_dict())
    for m1, m2 in zip(sc.modes, back.modes):
        assert np.array_equal(m1.A, m2.A) and np.array_equal(m1.W, m2.W)


def test_scenario_rejects_future_schema():
    d = partition_example().to_dict()
    d["schema_version"] = 99
    with pytest.raises(ValueError):
        Scenario.from_dict(d)
