"""Ready-made scenarios: the two-mode switching example, the 2-D partition system
and seeded random unstable networks."""

from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import connected_components

from .linalg import spectral_radius
from .model import (
    ActuatorLibrary,
    ActuatorSubset,
    CostSpec,
    DynamicsMode,
    Scenario,
    SwitchingSchedule,
)

SWITCH_A1 = np.array([[1.0, 0.5], [0.5, 1.0]])
SWITCH_A2 = np.array([[1.0, -0.5], [-0.5, 1.0]])
SWITCH_B1 = np.array([1.0, 1.0])
SWITCH_B2 = np.array([1.0, -1.0])

PARTITION_A = np.array([[-2.2639, 0.6379], [-0.2619, 0.6383]])


def switching_example(dwell=25, dwell_a1=5, horizon=200, sigma=0.1, x0_var=1.0, seed=0):
    """Two modes ``A1``/``A2`` sharing actuators ``b1 = [1, 1]`` and ``b2 = [1, -1]``, K = 1.

    The schedule is periodic: ``dwell_a1`` steps in ``A1`` then ``dwell`` steps
    in ``A2``. ``b1`` cannot influence the direction ``b2``, which grows by 1.5
    per step under ``A2`` and shrinks by 0.5 per step under ``A1``.
    """
    W = sigma**2 * np.eye(2)
    return Scenario(
        modes=(DynamicsMode("A1", SWITCH_A1, W), DynamicsMode("A2", SWITCH_A2, W)),
        schedule=SwitchingSchedule.periodic([("A1", dwell_a1), ("A2", dwell)]),
        library=ActuatorLibrary.from_columns([SWITCH_B1, SWITCH_B2]),
        cost=CostSpec(np.eye(2), 1.0),
        K=1,
        horizon=horizon,
        x0_mean=np.zeros(2),
        x0_cov=x0_var * np.eye(2),
        seed=seed,
        name="simple-example",
    )


def partition_example(horizon=4, x0=(1.0, 1.0)):
    """Noise-free 2-D system with actuators ``e1``/``e2``, ``Q = diag(1, 2)``, ``R = 1``, K = 1."""
    Q = np.diag([1.0, 2.0])
    return Scenario(
        modes=(DynamicsMode("A", PARTITION_A),),
        schedule=SwitchingSchedule.constant("A"),
        library=ActuatorLibrary.standard_basis(2, 2),
        cost=CostSpec(Q, 1.0),
        K=1,
        horizon=horizon,
        x0_mean=np.asarray(x0, dtype=float),
        name="partition",
    )


def random_network_matrix(rng, n=50, edge_prob=0.05, rho=1.3, max_tries=10_000):
    """Adjacency-plus-self-loop matrix of a connected Erdos-Renyi graph, scaled to spectral radius ``rho``.

    Graphs are redrawn until connected so that every node can be reached
    from every actuator.
    """
    for _ in range(max_tries):
        U = np.triu(rng.random((n, n)) < edge_prob, 1)
        adj = (U | U.T).astype(float)
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp == 1:
            break
    else:
        raise RuntimeError(f"no connected graph after {max_tries} draws; raise edge_prob")
    A = adj + np.eye(n)
    return A * (rho / spectral_radius(A))


def network_example(seed=0, n=50, m=25, K=2, edge_prob=0.05, rho=1.3, noise_var=1e-4,
                    x0_var=25.0, horizon=100):
    """Seeded unstable network with node actuators ``e_1..e_m`` and unit costs."""
    rng = np.random.Generator(np.random.PCG64(seed))
    A = random_network_matrix(rng, n, edge_prob, rho)
    return Scenario(
        modes=(DynamicsMode("A", A, noise_var * np.eye(n)),),
        schedule=SwitchingSchedule.constant("A"),
        library=ActuatorLibrary.standard_basis(n, m),
        cost=CostSpec(np.eye(n), 1.0),
        K=K,
        horizon=horizon,
        x0_mean=np.zeros(n),
        x0_cov=x0_var * np.eye(n),
        seed=seed,
        name="lqr50",
    )


NETWORK_FIXED_SUBSET = ActuatorSubset((1, 2))
