"""Monotonically convergent iteration schemes for bilinear quantum control."""

from .core import (
    ControlField,
    ControlProblem,
    DimensionError,
    HermitianOperator,
    ObservableOperator,
    SchemeParams,
    StateVector,
    TimeGrid,
    coupling_term,
    observable_expectation,
    operator_norm,
)
from .propagator import (
    SweepError,
    Trajectory,
    backward_sweep_with_update,
    forward_sweep_with_update,
    propagate_fixed,
    step,
)
from .scheme import (
    GainBreakdown,
    IterateState,
    RunReport,
    StoppingPolicy,
    bootstrap,
    cost,
    iterate,
    run,
)
from .analysis import (
    BoundCertificate,
    LimitSetDiagnostics,
    alpha_threshold,
    bound_m,
    check_bound,
    critical_residual,
    gronwall_check,
    limit_set_diagnostics,
)
from .problems import ProblemSpec, box1d, ladder, two_level

__version__ = "0.1.0"
