"""Conserved quantities of the quadratized N-body system and drift bookkeeping.

All quantities except ``energy_cartesian`` are polynomials of degree at most two in
the extended state (time included), so any symplectic Runge-Kutta step preserves
them up to the accuracy of the implicit solve. ``energy_cartesian`` is the
classical ``1/r`` energy, kept as a diagnostic for schemes that work on the
Cartesian state only.

The potential energy sums over unordered pairs ``i < j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CartesianState, ExtendedState, Parameters, SingularConfigurationError, layout

POTENTIAL_CONVENTION = "unordered pairs i<j"

# Names of the scalar invariants that are quadratic in the extended state, in vector order.
CLASSICAL_NAMES = ("px", "py", "pz", "Lx", "Ly", "Lz", "Cx", "Cy", "Cz", "E")


def momentum(s: ExtendedState | CartesianState, p: Parameters) -> np.ndarray:
    return p.masses @ s.vel


def angular_momentum(s: ExtendedState | CartesianState, p: Parameters) -> np.ndarray:
    """Sum of ``m_i v_i x r_i``; note the velocity-first order of the cross product."""
    return p.masses @ np.cross(s.vel, s.pos)


def com_integral(s: ExtendedState | CartesianState, p: Parameters) -> np.ndarray:
    return p.masses @ s.pos - s.t * (p.masses @ s.vel)


def kinetic_energy(s, p: Parameters) -> float:
    return 0.5 * float(p.masses @ np.einsum("ij,ij->i", s.vel, s.vel))


def energy_rho(s: ExtendedState, p: Parameters) -> float:
    lay = layout(p)
    m = p.masses
    return kinetic_energy(s, p) - p.gamma * float(np.sum(m[lay.I] * m[lay.J] * s.recip))


def energy_cartesian(c: CartesianState | ExtendedState, p: Parameters) -> float:
    lay = layout(p)
    r = lay.distances(c.pos)
    if np.any(r == 0.0):
        raise SingularConfigurationError("two bodies coincide")
    m = p.masses
    return kinetic_energy(c, p) - p.gamma * float(np.sum(m[lay.I] * m[lay.J] / r))


def constraint_residuals(s: ExtendedState) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair ``r_ij^2 - |r_i - r_j|^2`` and ``r_ij rho_ij - 1``."""
    I, J = np.triu_indices(s.n, k=1)
    dr = s.pos[I] - s.pos[J]
    return s.dist**2 - np.einsum("ij,ij->i", dr, dr), s.dist * s.recip - 1.0


@dataclass(frozen=True, eq=False)
class InvariantVector:
    momentum: np.ndarray
    angular_momentum: np.ndarray
    com_integral: np.ndarray
    energy_rho: float
    energy_cartesian: float
    constraint_dist: np.ndarray
    constraint_recip: np.ndarray

    def classical(self) -> np.ndarray:
        """The ten classical integrals as ``[px, py, pz, Lx, Ly, Lz, Cx, Cy, Cz, E]``."""
        return np.concatenate((self.momentum, self.angular_momentum, self.com_integral, [self.energy_rho]))

    def quadratic(self) -> np.ndarray:
        """Every scalar invariant that is quadratic in the extended state."""
        return np.concatenate((self.classical(), self.constraint_dist, self.constraint_recip))

    def as_dict(self) -> dict:
        return {
            "momentum": self.momentum.tolist(),
            "angular_momentum": self.angular_momentum.tolist(),
            "com_integral": self.com_integral.tolist(),
            "energy_rho": self.energy_rho,
            "energy_cartesian": self.energy_cartesian,
            "constraint_dist": self.constraint_dist.tolist(),
            "constraint_recip": self.constraint_recip.tolist(),
        }


def evaluate_all(s: ExtendedState, p: Parameters) -> InvariantVector:
    if s.n != p.n:
        raise ValueError(f"state has {s.n} bodies but parameters describe {p.n}")
    cd, cr = constraint_residuals(s)
    return InvariantVector(
        momentum=momentum(s, p),
        angular_momentum=angular_momentum(s, p),
        com_integral=com_integral(s, p),
        energy_rho=energy_rho(s, p),
        energy_cartesian=energy_cartesian(s, p),
        constraint_dist=cd,
        constraint_recip=cr,
    )


@dataclass(frozen=True, eq=False)
class DriftRecord:
    t: float
    momentum: np.ndarray
    angular_momentum: np.ndarray
    com_integral: np.ndarray
    energy_rho: float
    energy_cartesian: float
    constraint_dist: np.ndarray
    constraint_recip: np.ndarray
    max_drift: float

    def per_invariant(self) -> dict[str, float]:
        """Largest absolute deviation within each invariant family."""
        return {
            "momentum": float(np.max(self.momentum)),
            "angular_momentum": float(np.max(self.angular_momentum)),
            "com_integral": float(np.max(self.com_integral)),
            "energy_rho": self.energy_rho,
            "energy_cartesian": self.energy_cartesian,
            "constraint_dist": float(np.max(self.constraint_dist, initial=0.0)),
            "constraint_recip": float(np.max(self.constraint_recip, initial=0.0)),
        }


def drift(reference: InvariantVector, current: InvariantVector, t: float = float("nan")) -> DriftRecord:
    """Componentwise absolute deviation of ``current`` from ``reference``."""
    dp = np.abs(current.momentum - reference.momentum)
    dL = np.abs(current.angular_momentum - reference.angular_momentum)
    dC = np.abs(current.com_integral - reference.com_integral)
    dE = abs(current.energy_rho - reference.energy_rho)
    dEc = abs(current.energy_cartesian - reference.energy_cartesian)
    dcd = np.abs(current.constraint_dist - reference.constraint_dist)
    dcr = np.abs(current.constraint_recip - reference.constraint_recip)
    max_drift = max(dp.max(), dL.max(), dC.max(), dE, dEc, dcd.max(initial=0.0), dcr.max(initial=0.0))
    return DriftRecord(t, dp, dL, dC, dE, dEc, dcd, dcr, float(max_drift))


def quadratic_gradients(s: ExtendedState, p: Parameters) -> np.ndarray:
    """Analytic gradients of ``InvariantVector.quadratic()`` w.r.t. the flat state vector.

    Row ``k`` is the gradient of scalar invariant ``k``; columns follow
    ``ExtendedState.to_vector``.
    """
    lay = layout(p)
    n, P = lay.n, lay.npairs
    m = p.masses
    t = s.t
    ip = lambda i, a: 1 + 3 * i + a  # noqa: E731
    iv = lambda i, a: 1 + 3 * n + 3 * i + a  # noqa: E731
    o = 1 + 6 * n
    G = np.zeros((10 + 2 * P, lay.size))
    eye = np.eye(3)
    for i in range(n):
        for a in range(3):
            # momentum
            G[a, iv(i, a)] = m[i]
            # angular momentum: d/dr of (v x r) along e_a is v x e_a, d/dv is e_a x r
            G[3:6, ip(i, a)] = m[i] * np.cross(s.vel[i], eye[a])
            G[3:6, iv(i, a)] = m[i] * np.cross(eye[a], s.pos[i])
            # center-of-mass integral
            G[6 + a, ip(i, a)] = m[i]
            G[6 + a, iv(i, a)] = -t * m[i]
            # energy, kinetic part
            G[9, iv(i, a)] = m[i] * s.vel[i, a]
    G[6:9, 0] = -momentum(s, p)
    G[9, o + P : o + 2 * P] = -p.gamma * m[lay.I] * m[lay.J]
    for k, (i, j) in enumerate(zip(lay.I, lay.J)):
        dr = s.pos[i] - s.pos[j]
        row = 10 + k
        G[row, o + k] = 2.0 * s.dist[k]
        G[row, ip(i, 0) : ip(i, 0) + 3] = -2.0 * dr
        G[row, ip(j, 0) : ip(j, 0) + 3] = 2.0 * dr
        row = 10 + P + k
        G[row, o + k] = s.recip[k]
        G[row, o + P + k] = s.dist[k]
    return G


def quadratic_values(s: ExtendedState, p: Parameters) -> np.ndarray:
    return evaluate_all(s, p).quadratic()
