"""Integral-preserving Runge-Kutta schemes for the gravitational N-body problem."""

from .integrators import (
    GAUSS2,
    GAUSS3,
    MIDPOINT,
    RK4,
    ButcherTableau,
    DivergenceError,
    IterationConfig,
    RunAbortedError,
    RunSummary,
    StepStats,
    adaptive_run,
    check_symplectic_condition,
    explicit_run,
    implicit_rk_step,
    midpoint_step,
    rk4_step,
)
from .invariants import InvariantVector, drift, evaluate_all
from .model import (
    CartesianState,
    ExtendedState,
    InvalidPairError,
    Parameters,
    SingularConfigurationError,
    init_extended,
    pair_index,
    rhs_cartesian,
    rhs_extended,
    rhs_rationalized,
)
from .scenarios import ScenarioSpec, collision_line, figure_eight, lagrange_triangle, perturb

__version__ = "0.1.0"
