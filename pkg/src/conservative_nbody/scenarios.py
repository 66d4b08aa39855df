"""Initial-condition sets for the planar three-body experiments.

All scenarios use unit masses and ``gamma = 1`` and are stored in full 3D with
``z = w = 0``. Body indices are zero-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .invariants import angular_momentum, momentum
from .model import CartesianState, Parameters, init_extended

# Simo's numerical values for the figure-eight choreography (Chenciner & Montgomery, 2000).
EIGHT_X1 = (0.97000436, -0.24308753)
EIGHT_V3 = (-0.93240737, -0.86473146)
EIGHT_PERIOD = 6.32591398


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    name: str
    params: Parameters
    initial: CartesianState
    dt0: float
    t_end: float
    notes: str = ""

    def __post_init__(self):
        if not (self.dt0 > 0 and self.t_end > 0):
            raise ValueError("dt0 and t_end must be positive")
        if self.initial.n != self.params.n:
            raise ValueError("initial state and parameters disagree on the body count")
        init_extended(self.initial, self.params)  # raises on coincident bodies

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "masses": self.params.masses.tolist(),
            "gamma": self.params.gamma,
            "t0": self.initial.t,
            "positions": self.initial.pos.tolist(),
            "velocities": self.initial.vel.tolist(),
            "dt0": self.dt0,
            "t_end": self.t_end,
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        try:
            params = Parameters(d["masses"], d.get("gamma", 1.0))
            initial = CartesianState(d.get("t0", 0.0), d["positions"], d["velocities"])
            return cls(d.get("name", "custom"), params, initial, float(d["dt0"]), float(d["t_end"]), d.get("notes", ""))
        except KeyError as exc:
            raise ValueError(f"scenario is missing field {exc.args[0]!r}") from None

    def same_as(self, other: "ScenarioSpec") -> bool:
        return (
            self.params == other.params
            and self.initial.t == other.initial.t
            and np.array_equal(self.initial.pos, other.initial.pos)
            and np.array_equal(self.initial.vel, other.initial.vel)
        )


def _planar(xy) -> np.ndarray:
    xy = np.asarray(xy, dtype=np.float64)
    return np.column_stack((xy, np.zeros(len(xy))))


def lagrange_angular_speed(a: float, m: float = 1.0, gamma: float = 1.0) -> float:
    return math.sqrt(3.0 * gamma * m / a**3)


def lagrange_exact(a: float, t: float) -> np.ndarray:
    """Positions of the rigidly rotating equilateral triangle at time ``t``."""
    omega = lagrange_angular_speed(a)
    R = a / math.sqrt(3.0)
    theta = math.pi / 2 + np.array([0.0, 2 * math.pi / 3, 4 * math.pi / 3]) + omega * t
    return _planar(R * np.column_stack((np.cos(theta), np.sin(theta))))


def lagrange_triangle(a: float = 1.0) -> ScenarioSpec:
    """Equilateral triangle of side ``a`` rotating counterclockwise about its centroid."""
    if not a > 0:
        raise ValueError("side length must be positive")
    omega = lagrange_angular_speed(a)
    pos = lagrange_exact(a, 0.0)
    vel = omega * np.column_stack((-pos[:, 1], pos[:, 0], np.zeros(3)))
    return ScenarioSpec(
        "lagrange",
        Parameters([1.0, 1.0, 1.0], 1.0),
        CartesianState(0.0, pos, vel),
        dt0=0.1,
        t_end=1.0,
        notes=f"Lagrange relative equilibrium, side a={a!r}, angular speed sqrt(3/a^3), first vertex on +y",
    )


def figure_eight() -> ScenarioSpec:
    x1 = np.array(EIGHT_X1)
    v3 = np.array(EIGHT_V3)
    pos = _planar([x1, -x1, [0.0, 0.0]])
    vel = _planar([-v3 / 2, -v3 / 2, v3])
    spec = ScenarioSpec(
        "eight",
        Parameters([1.0, 1.0, 1.0], 1.0),
        CartesianState(0.0, pos, vel),
        dt0=0.1,
        t_end=200.0,
        notes="figure-eight choreography, Simo's 8-digit initial data; period ~6.32591398",
    )
    _validate_eight(spec)
    return spec


def _validate_eight(spec: ScenarioSpec):
    P = momentum(spec.initial, spec.params)
    L = angular_momentum(spec.initial, spec.params)
    if np.max(np.abs(P)) > 1e-10 or np.max(np.abs(L)) > 1e-8:
        raise RuntimeError(f"figure-eight initial data failed validation: P={P}, L={L}")


def collision_line(v3_boost: float = 0.0) -> ScenarioSpec:
    """Bodies on the x-axis at 0, 1, -1; bodies 2 and 3 launched along +y at 1 and 1.5 + boost."""
    if v3_boost < 0:
        raise ValueError("v3_boost must be non-negative")
    pos = _planar([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
    vel = _planar([[0.0, 0.0], [0.0, 1.0], [0.0, 1.5 + v3_boost]])
    return ScenarioSpec(
        "collision",
        Parameters([1.0, 1.0, 1.0], 1.0),
        CartesianState(0.0, pos, vel),
        dt0=6e-3,
        t_end=2.0,
        notes=f"close-encounter test on the x-axis, third body boosted by {v3_boost!r}",
    )


def perturb(spec: ScenarioSpec, body: int, dv) -> ScenarioSpec:
    if not 0 <= body < spec.params.n:
        raise IndexError(f"body {body} out of range for {spec.params.n} bodies")
    vel = spec.initial.vel.copy()
    vel[body] += np.asarray(dv, dtype=np.float64)
    return replace(spec, initial=CartesianState(spec.initial.t, spec.initial.pos, vel))


BUILTIN = {
    "lagrange": lagrange_triangle,
    "eight": figure_eight,
    "collision": collision_line,
}


def get_scenario(name: str, **kwargs) -> ScenarioSpec:
    try:
        factory = BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; built-ins are {sorted(BUILTIN)}") from None
    return factory(**kwargs)
