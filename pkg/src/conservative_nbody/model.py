"""Phase-space data model and right-hand sides for the gravitational N-body problem.

Three equivalent forms of the equations of motion are provided:

* ``rhs_cartesian``: positions and velocities only, distances computed on the fly.
* ``rhs_rationalized``: adds the pairwise distances ``r_ij`` as unknowns.
* ``rhs_extended``: adds the reciprocal distances ``rho_ij`` as well, so that every
  classical integral and every constraint tying the auxiliary variables to the
  coordinates is a polynomial of degree at most two.

Pairs are stored once, for ``i < j``, in lexicographic order. Time is carried as a
state component whose derivative is identically one.

The flat vector layout used by the integrators is::

    [t, x1, y1, z1, ..., xn, yn, zn, u1, v1, w1, ..., un, vn, wn,
     r_12, ..., r_(n-1)n, rho_12, ..., rho_(n-1)n]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np


class SingularConfigurationError(ValueError):
    """Two bodies coincide, or a stored distance is zero."""


class InvalidPairError(ValueError):
    """A pair index was requested for ``i == j`` or an out-of-range body."""


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.flags.writeable = False
    return arr


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Lexicographic slot of the unordered pair ``{i, j}`` among all pairs of ``n`` bodies."""
    if not (0 <= i < n and 0 <= j < n):
        raise InvalidPairError(f"pair ({i}, {j}) out of range for n={n}")
    if i == j:
        raise InvalidPairError(f"pair ({i}, {j}) is not a pair of distinct bodies")
    i, j = min(i, j), max(i, j)
    # pairs (a, b) with a < i come first: sum_{a<i} (n - 1 - a)
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def pair_arrays(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Body indices ``(I, J)`` of every pair slot, ``I[k] < J[k]``."""
    I, J = np.triu_indices(n, k=1)
    return I.astype(np.intp), J.astype(np.intp)


@dataclass(frozen=True)
class Parameters:
    masses: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        m = _frozen(self.masses).ravel()
        m.flags.writeable = False
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "gamma", float(self.gamma))
        if m.size < 2:
            raise ValueError("at least two bodies are required")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("all masses must be positive and finite")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def n(self) -> int:
        return int(self.masses.size)

    def __eq__(self, other):
        if not isinstance(other, Parameters):
            return NotImplemented
        return self.gamma == other.gamma and np.array_equal(self.masses, other.masses)

    def __hash__(self):
        return hash((self.gamma, self.masses.tobytes()))


@dataclass(frozen=True, eq=False)
class CartesianState:
    t: float
    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        pos = _frozen(self.pos)
        vel = _frozen(self.vel)
        if pos.ndim != 2 or pos.shape[1] != 3 or vel.shape != pos.shape:
            raise ValueError(f"pos and vel must both have shape (n, 3); got {pos.shape}, {vel.shape}")
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "vel", vel)

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.t], self.pos.ravel(), self.vel.ravel()))

    @classmethod
    def from_vector(cls, y: np.ndarray, n: int) -> "CartesianState":
        return cls(y[0], y[1 : 1 + 3 * n].reshape(n, 3), y[1 + 3 * n : 1 + 6 * n].reshape(n, 3))


@dataclass(frozen=True, eq=False)
class ExtendedState:
    t: float
    pos: np.ndarray
    vel: np.ndarray
    dist: np.ndarray
    recip: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        pos = _frozen(self.pos)
        vel = _frozen(self.vel)
        dist = _frozen(self.dist).ravel()
        recip = _frozen(self.recip).ravel()
        if pos.ndim != 2 or pos.shape[1] != 3 or vel.shape != pos.shape:
            raise ValueError(f"pos and vel must both have shape (n, 3); got {pos.shape}, {vel.shape}")
        P = n_pairs(pos.shape[0])
        if dist.size != P or recip.size != P:
            raise ValueError(f"dist and recip need {P} entries for n={pos.shape[0]}")
        for name, arr in (("pos", pos), ("vel", vel), ("dist", dist), ("recip", recip)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.pos.shape[0]

    def cartesian(self) -> CartesianState:
        return CartesianState(self.t, self.pos, self.vel)

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.t], self.pos.ravel(), self.vel.ravel(), self.dist, self.recip))

    @classmethod
    def from_vector(cls, y: np.ndarray, n: int) -> "ExtendedState":
        P = n_pairs(n)
        if y.size != 1 + 6 * n + 2 * P:
            raise ValueError(f"vector of length {y.size} does not match n={n}")
        o = 1 + 6 * n
        return cls(
            y[0],
            y[1 : 1 + 3 * n].reshape(n, 3),
            y[1 + 3 * n : o].reshape(n, 3),
            y[o : o + P],
            y[o + P : o + 2 * P],
        )

    def permuted(self, perm) -> "ExtendedState":
        """Relabel bodies so that new body ``k`` is old body ``perm[k]``; pair slots follow."""
        perm = np.asarray(perm, dtype=np.intp)
        n = self.n
        if sorted(perm.tolist()) != list(range(n)):
            raise ValueError(f"{perm} is not a permutation of range({n})")
        I, J = pair_arrays(n)
        slots = np.array([pair_index(perm[a], perm[b], n) for a, b in zip(I, J)], dtype=np.intp)
        return ExtendedState(self.t, self.pos[perm], self.vel[perm], self.dist[slots], self.recip[slots])


# The time derivative of a state has the same layout as the state, with t == 1.
Derivative = Union[ExtendedState, CartesianState]


@dataclass(frozen=True, eq=False)
class Layout:
    """Index bookkeeping and vectorised kernels for a fixed body count and mass set."""

    params: Parameters
    I: np.ndarray = field(init=False)
    J: np.ndarray = field(init=False)

    def __post_init__(self):
        I, J = pair_arrays(self.params.n)
        object.__setattr__(self, "I", I)
        object.__setattr__(self, "J", J)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def npairs(self) -> int:
        return self.I.size

    @property
    def size(self) -> int:
        return 1 + 6 * self.n + 2 * self.npairs

    @property
    def cartesian_size(self) -> int:
        return 1 + 6 * self.n

    @cached_property
    def _scatter(self) -> np.ndarray:
        # acc = gamma * scatter @ (w * dr), dr = r_I - r_J, force on I is -m_J w dr, on J is +m_I w dr
        m = self.params.masses
        S = np.zeros((self.n, self.npairs))
        k = np.arange(self.npairs)
        S[self.I, k] -= m[self.J]
        S[self.J, k] += m[self.I]
        S.flags.writeable = False
        return S

    def split(self, y: np.ndarray):
        n, P = self.n, self.npairs
        o = 1 + 6 * n
        return (
            y[1 : 1 + 3 * n].reshape(n, 3),
            y[1 + 3 * n : o].reshape(n, 3),
            y[o : o + P],
            y[o + P : o + 2 * P],
        )

    def _accelerations(self, dr: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.params.gamma * (self._scatter @ (w[:, None] * dr))

    def extended_field(self, y: np.ndarray) -> np.ndarray:
        """Right-hand side of the quadratized system on a flat state vector."""
        pos, vel, r, rho = self.split(y)
        if np.any(r == 0.0):
            raise SingularConfigurationError("stored pair distance is zero")
        dr = pos[self.I] - pos[self.J]
        dv = vel[self.I] - vel[self.J]
        s = np.einsum("ij,ij->i", dr, dv)
        inv_r2 = 1.0 / (r * r)
        out = np.empty_like(y)
        n, P = self.n, self.npairs
        o = 1 + 6 * n
        out[0] = 1.0
        out[1 : 1 + 3 * n] = vel.ravel()
        out[1 + 3 * n : o] = self._accelerations(dr, rho * inv_r2).ravel()
        out[o : o + P] = s / r
        out[o + P :] = -rho * inv_r2 * s
        return out

    def rationalized_field(self, y: np.ndarray) -> np.ndarray:
        """Right-hand side with the force law written in the stored distances only."""
        pos, vel, r, _ = self.split(y)
        if np.any(r == 0.0):
            raise SingularConfigurationError("stored pair distance is zero")
        dr = pos[self.I] - pos[self.J]
        dv = vel[self.I] - vel[self.J]
        s = np.einsum("ij,ij->i", dr, dv)
        out = np.zeros_like(y)
        n, P = self.n, self.npairs
        o = 1 + 6 * n
        out[0] = 1.0
        out[1 : 1 + 3 * n] = vel.ravel()
        out[1 + 3 * n : o] = self._accelerations(dr, 1.0 / r**3).ravel()
        out[o : o + P] = s / r
        return out

    def cartesian_field(self, y: np.ndarray) -> np.ndarray:
        """Classical right-hand side on ``[t, pos, vel]``."""
        n = self.n
        pos = y[1 : 1 + 3 * n].reshape(n, 3)
        dr = pos[self.I] - pos[self.J]
        d2 = np.einsum("ij,ij->i", dr, dr)
        if np.any(d2 == 0.0):
            raise SingularConfigurationError("two bodies coincide")
        out = np.empty_like(y)
        out[0] = 1.0
        out[1 : 1 + 3 * n] = y[1 + 3 * n : 1 + 6 * n]
        out[1 + 3 * n :] = self._accelerations(dr, d2**-1.5).ravel()
        return out

    def distances(self, pos: np.ndarray) -> np.ndarray:
        dr = pos[self.I] - pos[self.J]
        return np.sqrt(np.einsum("ij,ij->i", dr, dr))

    def extend_vector(self, yc: np.ndarray) -> np.ndarray:
        """Append distances and reciprocals to a ``[t, pos, vel]`` vector."""
        n = self.n
        r = self.distances(yc[1 : 1 + 3 * n].reshape(n, 3))
        if np.any(r == 0.0):
            raise SingularConfigurationError("two bodies coincide")
        return np.concatenate((yc, r, 1.0 / r))


def layout(p: Parameters) -> Layout:
    return _layout_cache(p)


_LAYOUTS: dict[Parameters, Layout] = {}


def _layout_cache(p: Parameters) -> Layout:
    lay = _LAYOUTS.get(p)
    if lay is None:
        if len(_LAYOUTS) > 64:
            _LAYOUTS.clear()
        lay = _LAYOUTS[p] = Layout(p)
    return lay


def _check_n(state, p: Parameters):
    if state.n != p.n:
        raise ValueError(f"state has {state.n} bodies but parameters describe {p.n}")


def init_extended(c: CartesianState, p: Parameters) -> ExtendedState:
    """Lift a Cartesian state onto the constraint manifold ``r_ij = |r_i - r_j|``, ``rho_ij = 1/r_ij``."""
    _check_n(c, p)
    lay = layout(p)
    r = lay.distances(c.pos)
    if np.any(r == 0.0):
        raise SingularConfigurationError("two bodies coincide")
    return ExtendedState(c.t, c.pos, c.vel, r, 1.0 / r)


def rhs_cartesian(c: CartesianState, p: Parameters) -> CartesianState:
    _check_n(c, p)
    d = layout(p).cartesian_field(c.to_vector())
    return CartesianState.from_vector(d, p.n)


def rhs_rationalized(s: ExtendedState, p: Parameters) -> ExtendedState:
    """Derivative of the rationalized system; the ``recip`` components are zero."""
    _check_n(s, p)
    return ExtendedState.from_vector(layout(p).rationalized_field(s.to_vector()), p.n)


def rhs_extended(s: ExtendedState, p: Parameters) -> ExtendedState:
    _check_n(s, p)
    return ExtendedState.from_vector(layout(p).extended_field(s.to_vector()), p.n)


def extended_field(p: Parameters) -> Callable[[np.ndarray], np.ndarray]:
    return layout(p).extended_field
