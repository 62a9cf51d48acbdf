"""Self-tuning actuator architectures for linear-quadratic network control.

Exact piecewise-quadratic dynamic programming over actuator subsets, a greedy
Riccati-scored selection heuristic with least-squares identification, and a
seeded closed-loop simulation harness.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CapacityError,
    ConfigError,
    DimensionError,
    NumericError,
    SelfTuneError,
    UnstabilizableError,
)
from .model import (  # noqa: E402
    ActuatorLibrary,
    ActuatorSubset,
    CostSpec,
    DynamicsMode,
    Scenario,
    SwitchingSchedule,
    build_input_matrix,
    enumerate_subsets,
)
from .linalg import (  # noqa: E402
    DareOptions,
    RiccatiSolution,
    controllability_rank,
    dare,
    lqr_gain,
    riccati_step,
    solve_dare,
    spectral_radius,
)
from .exact_dp import backward_pieces, evaluate_value, optimal_actuator_at, sample_partition  # noqa: E402
from .greedy import DareCache, GreedyPolicyState, greedy_input, greedy_select  # noqa: E402
from .sysid import History, detect_mode, fit_dynamics  # noqa: E402
from .sim import (  # noqa: E402
    ExactDP,
    FixedArchitectureLQR,
    GreedyKnownModel,
    GreedySelfTuning,
    ModeAwareGreedy,
    compare,
    rollout,
)

__all__ = [name for name in dir() if not name.startswith("_")]
