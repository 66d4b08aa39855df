"""Runge-Kutta stepping for the quadratized N-body system.

Implicit schemes are solved by simple (fixed-point) iteration on the stage
slopes, never by Newton's method. ``adaptive_run`` accepts a step only when the
iteration converged and every invariant stays inside a drift corridor around its
initial value; otherwise the step is halved. The step never grows back.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import invariants as inv
from .model import CartesianState, ExtendedState, Parameters, SingularConfigurationError, layout

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Fixed-point iteration did not converge within ``max_iters``."""

    def __init__(self, msg: str, iterations: int = 0, residual: float = math.inf):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual


class RunAbortedError(RuntimeError):
    """Step halving was exhausted; ``summary`` describes the run up to the abort."""

    def __init__(self, msg: str, summary: "RunSummary"):
        super().__init__(msg)
        self.summary = summary


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int = 0

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).ravel()
        c = np.array(self.c, dtype=np.float64).ravel()
        s = b.size
        if A.shape != (s, s) or c.size != s:
            raise ValueError(f"inconsistent tableau shapes A{A.shape}, b({b.size}), c({c.size})")
        if abs(b.sum() - 1.0) > 1e-14:
            raise ValueError(f"tableau {self.name}: weights sum to {b.sum()!r}, not 1")
        if np.max(np.abs(A.sum(axis=1) - c)) > 1e-14:
            raise ValueError(f"tableau {self.name}: row sums of A differ from c")
        for arr in (A, b, c):
            arr.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def s(self) -> int:
        return self.b.size

    @property
    def explicit(self) -> bool:
        return not np.any(np.triu(self.A))


def symplectic_defect(tab: ButcherTableau) -> np.ndarray:
    """Matrix ``b_i A_ij + b_j A_ji - b_i b_j``; zero for schemes that conserve quadratic invariants."""
    BA = tab.b[:, None] * tab.A
    return BA + BA.T - np.outer(tab.b, tab.b)


def check_symplectic_condition(tab: ButcherTableau, tol: float = 1e-13) -> bool:
    return bool(np.max(np.abs(symplectic_defect(tab))) <= tol)


_s3 = math.sqrt(3.0)
_s15 = math.sqrt(15.0)

MIDPOINT = ButcherTableau("midpoint", [[0.5]], [1.0], [0.5], order=2)

GAUSS2 = ButcherTableau(
    "gauss2",
    [[0.25, 0.25 - _s3 / 6], [0.25 + _s3 / 6, 0.25]],
    [0.5, 0.5],
    [0.5 - _s3 / 6, 0.5 + _s3 / 6],
    order=4,
)

GAUSS3 = ButcherTableau(
    "gauss3",
    [
        [5 / 36, 2 / 9 - _s15 / 15, 5 / 36 - _s15 / 30],
        [5 / 36 + _s15 / 24, 2 / 9, 5 / 36 - _s15 / 24],
        [5 / 36 + _s15 / 30, 2 / 9 + _s15 / 15, 5 / 36],
    ],
    [5 / 18, 4 / 9, 5 / 18],
    [0.5 - _s15 / 10, 0.5, 0.5 + _s15 / 10],
    order=6,
)

RK4 = ButcherTableau(
    "rk4",
    [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1, 0]],
    [1 / 6, 1 / 3, 1 / 3, 1 / 6],
    [0, 0.5, 0.5, 1],
    order=4,
)

TABLEAUS = {tab.name: tab for tab in (MIDPOINT, GAUSS2, GAUSS3, RK4)}
SYMPLECTIC = ("midpoint", "gauss2", "gauss3")

for _name in SYMPLECTIC:
    if not check_symplectic_condition(TABLEAUS[_name]):
        raise ImportError(f"tableau {_name} fails the symplectic condition")


def get_tableau(name: str) -> ButcherTableau:
    try:
        return TABLEAUS[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; expected one of {sorted(TABLEAUS)}") from None


@dataclass(frozen=True)
class IterationConfig:
    max_iters: int = 50
    residual_tol: float = 1e-12
    drift_tol: float = 1e-8
    max_halvings: int = 20

    def __post_init__(self):
        if self.max_iters < 1 or self.max_halvings < 1:
            raise ValueError("max_iters and max_halvings must be positive")
        if not (self.residual_tol > 0 and self.drift_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class StepStats:
    iterations: int
    final_residual: float
    drift_after_step: float
    dt_used: float
    halvings: int = 0


@dataclass
class RunSummary:
    scheme: str
    steps_accepted: int = 0
    min_dt_used: float = math.inf
    total_halvings: int = 0
    max_drift: float = 0.0
    max_drift_per_invariant: dict = field(default_factory=dict)
    max_iterations: int = 0
    t_final: float = math.nan
    wall_time: float = 0.0
    abort_reason: Optional[str] = None
    final_state: Optional[ExtendedState] = field(default=None, repr=False)

    def update_drift(self, rec: inv.DriftRecord):
        self.max_drift = max(self.max_drift, rec.max_drift)
        for k, v in rec.per_invariant().items():
            self.max_drift_per_invariant[k] = max(self.max_drift_per_invariant.get(k, 0.0), v)

    def as_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "steps_accepted": self.steps_accepted,
            "min_dt_used": None if math.isinf(self.min_dt_used) else self.min_dt_used,
            "total_halvings": self.total_halvings,
            "max_drift": self.max_drift,
            "max_drift_per_invariant": dict(self.max_drift_per_invariant),
            "max_iterations": self.max_iterations,
            "t_final": self.t_final,
            "wall_time": self.wall_time,
            "abort_reason": self.abort_reason,
            "potential_convention": inv.POTENTIAL_CONVENTION,
        }


Sink = Callable[[ExtendedState, StepStats], None]


def solve_stages(
    f: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    dt: float,
    tab: ButcherTableau,
    cfg: IterationConfig,
) -> tuple[np.ndarray, int, float]:
    """Fixed-point solve of ``K_i = f(y0 + dt * sum_j A_ij K_j)``.

    Starts from ``K_i = f(y0)``. The residual is ``|dt| * max|K_new - K_old|``,
    i.e. the change of the stage increments in state units. Returns the stage
    slopes, the iteration count and the final residual.
    """
    f0 = f(y0)
    K = np.tile(f0, (tab.s, 1))
    A = tab.A
    res = math.inf
    for it in range(1, cfg.max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            Y = y0 + dt * (A @ K)
            K_new = np.stack([f(Y[i]) for i in range(tab.s)])
            res = float(np.max(np.abs(K_new - K)))
        K = K_new
        if not math.isfinite(res):
            raise DivergenceError(f"fixed-point iteration blew up after {it} iterations", it, res)
        if res <= cfg.residual_tol:
            return K, it, res
    raise DivergenceError(
        f"no convergence in {cfg.max_iters} iterations (residual {res:.3e}, dt {dt:.3e})", cfg.max_iters, res
    )


def _implicit_vector_step(f, y0, dt, tab, cfg):
    if dt == 0.0:
        return y0.copy(), 1, 0.0
    K, it, res = solve_stages(f, y0, dt, tab, cfg)
    return y0 + dt * (tab.b @ K), it, res


def implicit_rk_step(
    s0: ExtendedState,
    dt: float,
    tab: ButcherTableau,
    p: Parameters,
    cfg: IterationConfig = IterationConfig(),
) -> tuple[ExtendedState, StepStats]:
    """One step of an implicit Runge-Kutta scheme on the quadratized system.

    ``StepStats.drift_after_step`` is the largest change of any invariant over
    this single step.
    """
    f = layout(p).extended_field
    y1, it, res = _implicit_vector_step(f, s0.to_vector(), dt, tab, cfg)
    s1 = ExtendedState.from_vector(y1, p.n)
    d = inv.drift(inv.evaluate_all(s0, p), inv.evaluate_all(s1, p)).max_drift
    return s1, StepStats(it, res, d, abs(dt), 0)


def midpoint_step(s0: ExtendedState, dt: float, p: Parameters, cfg: IterationConfig = IterationConfig()):
    return implicit_rk_step(s0, dt, MIDPOINT, p, cfg)


def explicit_rk_vector_step(f, y0: np.ndarray, dt: float, tab: ButcherTableau) -> np.ndarray:
    if not tab.explicit:
        raise ValueError(f"tableau {tab.name} is not explicit")
    K = np.empty((tab.s, y0.size))
    for i in range(tab.s):
        K[i] = f(y0 + dt * (tab.A[i, :i] @ K[:i]))
    return y0 + dt * (tab.b @ K)


def explicit_rk_step(s0: ExtendedState, dt: float, tab: ButcherTableau, p: Parameters) -> ExtendedState:
    """Explicit Runge-Kutta step on the quadratized system (no conservation guarantees)."""
    y1 = explicit_rk_vector_step(layout(p).extended_field, s0.to_vector(), dt, tab)
    return ExtendedState.from_vector(y1, p.n)


def rk4_step(c: CartesianState, dt: float, p: Parameters) -> CartesianState:
    """Classical fourth-order Runge-Kutta step on the Cartesian equations."""
    y1 = explicit_rk_vector_step(layout(p).cartesian_field, c.to_vector(), dt, RK4)
    return CartesianState.from_vector(y1, p.n)


def _next_dt(h: float, remaining: float) -> float:
    # absorb a sliver left over by rounding into the current step
    if remaining <= h * (1.0 + 1e-9):
        return remaining
    return h


def adaptive_run(
    s0: ExtendedState,
    t_end: float,
    dt0: float,
    tab: ButcherTableau,
    p: Parameters,
    cfg: IterationConfig = IterationConfig(),
    sink: Optional[Sink] = None,
) -> RunSummary:
    """Integrate from ``s0.t`` to ``t_end`` with step halving on failure.

    A trial step is rejected when the fixed-point solve fails or when any
    invariant moves more than ``cfg.drift_tol`` from its value at ``s0``. The
    last step is shortened so the run lands on ``t_end`` exactly.
    """
    if dt0 <= 0:
        raise ValueError("dt0 must be positive")
    if t_end < s0.t:
        raise ValueError(f"t_end={t_end} lies before the initial time {s0.t}")
    start = time.perf_counter()
    summary = RunSummary(scheme=tab.name, t_final=s0.t, final_state=s0)
    lay = layout(p)
    f = lay.extended_field
    ref = inv.evaluate_all(s0, p)
    y = s0.to_vector()
    h = dt0
    while y[0] < t_end:
        halvings = 0
        while True:
            remaining = t_end - y[0]
            step = _next_dt(h, remaining)
            failure = None
            try:
                y1, it, res = _implicit_vector_step(f, y, step, tab, cfg)
                if step == remaining:
                    y1[0] = t_end
                s1 = ExtendedState.from_vector(y1, p.n)
                rec = inv.drift(ref, inv.evaluate_all(s1, p), t=y1[0])
                if not rec.max_drift <= cfg.drift_tol:
                    failure = f"drift {rec.max_drift:.3e} exceeds {cfg.drift_tol:.1e}"
            except (DivergenceError, SingularConfigurationError, FloatingPointError) as exc:
                failure = str(exc)
            if failure is None:
                break
            halvings += 1
            summary.total_halvings += 1
            log.debug("t=%.6g: rejected step %.3e (%s)", y[0], step, failure)
            if halvings > cfg.max_halvings:
                summary.abort_reason = (
                    f"step halving exhausted at t={y[0]!r} after {cfg.max_halvings} halvings "
                    f"(last failure: {failure}); likely a near-collision"
                )
                summary.wall_time = time.perf_counter() - start
                raise RunAbortedError(summary.abort_reason, summary)
            h = step / 2.0
        y = y1
        stats = StepStats(it, res, rec.max_drift, step, halvings)
        summary.steps_accepted += 1
        summary.min_dt_used = min(summary.min_dt_used, step)
        summary.max_iterations = max(summary.max_iterations, it)
        summary.update_drift(rec)
        summary.t_final = y[0]
        summary.final_state = s1
        if sink is not None:
            sink(s1, stats)
    summary.wall_time = time.perf_counter() - start
    return summary


def explicit_run(
    c0: CartesianState,
    t_end: float,
    dt: float,
    p: Parameters,
    tab: ButcherTableau = RK4,
    sink: Optional[Sink] = None,
) -> RunSummary:
    """Fixed-step explicit integration of the Cartesian equations.

    There is no acceptance test. Each emitted state is lifted with exact
    distances so its invariants can be compared with those of implicit runs.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < c0.t:
        raise ValueError(f"t_end={t_end} lies before the initial time {c0.t}")
    start = time.perf_counter()
    lay = layout(p)
    f = lay.cartesian_field
    y = c0.to_vector()
    s_init = ExtendedState.from_vector(lay.extend_vector(y), p.n)
    ref = inv.evaluate_all(s_init, p)
    summary = RunSummary(scheme=tab.name, t_final=c0.t, final_state=s_init)
    while y[0] < t_end:
        remaining = t_end - y[0]
        step = _next_dt(dt, remaining)
        y = explicit_rk_vector_step(f, y, step, tab)
        if step == remaining:
            y[0] = t_end
        s1 = ExtendedState.from_vector(lay.extend_vector(y), p.n)
        rec = inv.drift(ref, inv.evaluate_all(s1, p), t=y[0])
        summary.steps_accepted += 1
        summary.min_dt_used = min(summary.min_dt_used, step)
        summary.update_drift(rec)
        summary.t_final = y[0]
        summary.final_state = s1
        if sink is not None:
            sink(s1, StepStats(0, 0.0, rec.max_drift, step, 0))
    summary.wall_time = time.perf_counter() - start
    return summary
