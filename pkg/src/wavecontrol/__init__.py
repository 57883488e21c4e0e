"""Exact distributed controls for the 1D semilinear wave equation.

A least-squares / damped-Newton minimizing sequence built on
conjugate-gradient HUM controls for linearized wave equations with
potential, on an exact-propagation (dt = dx) leapfrog discretization.
"""

from .core import (
    Grid,
    SpaceTimeField,
    StatePair,
    dalembert,
    energy,
    l2_QT,
    l2_qT,
    read_field,
    solve_adjoint,
    solve_forward,
    t_exceeds_geometric,
    v_norm,
    write_field,
)
from .hum import (
    AdjointData,
    BreakdownPD,
    ControlSolution,
    LinearControlProblem,
    NoConvergence,
    dual_functional,
    gramian_apply,
    minimal_norm_control,
    observability_probe,
    riesz_hminus1,
)
from .least_squares import (
    BlowUp,
    DescentFailure,
    IterateRecord,
    LSConfig,
    Stagnation,
    TrajectoryControlPair,
    descent_pair,
    error_functional,
    line_search,
    rate_diagnostics,
    residual,
    solve,
)
from .baselines import BaselineRun, newton_iterate, picard_iterate
from .nonlinearity import Nonlinearity, catalog, hat_g, make
from .config import ConfigError, ParseError, Scenario, parse_config

__version__ = "0.1.0"

__all__ = [
    "Grid", "SpaceTimeField", "StatePair", "dalembert", "energy", "l2_QT", "l2_qT",
    "read_field", "solve_adjoint", "solve_forward", "t_exceeds_geometric", "v_norm",
    "write_field",
    "AdjointData", "BreakdownPD", "ControlSolution", "LinearControlProblem",
    "NoConvergence", "dual_functional", "gramian_apply", "minimal_norm_control",
    "observability_probe", "riesz_hminus1",
    "BlowUp", "DescentFailure", "IterateRecord", "LSConfig", "Stagnation",
    "TrajectoryControlPair", "descent_pair", "error_functional", "line_search",
    "rate_diagnostics", "residual", "solve",
    "BaselineRun", "newton_iterate", "picard_iterate",
    "Nonlinearity", "catalog", "hat_g", "make",
    "ConfigError", "ParseError", "Scenario", "parse_config",
    "__version__",
]
