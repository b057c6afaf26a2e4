"""Abstract and auxiliary abstract states of a swarm on the plane.

The abstract state keeps the mass moment ``M1 = sum(m p)`` rather than the
gravity torque ``g * M1``; the plant applies ``g`` itself. Every swarm-side
formula below is therefore written in mass-moment units.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptySwarm, SingularSwarm
from .plant import SwarmState

SINGULAR_REL_TOL = 1e-12


@dataclass(frozen=True)
class AbstractState:
    M1: float
    J_s: float
    Jdot_s: float = 0.0
    M1_dot: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.M1, self.J_s])

    @property
    def rate(self) -> np.ndarray:
        return np.array([self.M1_dot, self.Jdot_s])


@dataclass(frozen=True)
class AuxAbstractState:
    """Swarm-internal sums every member needs to compute its own input.

    ``Ca`` is the 2x2 damping-compensation matrix for DI members and
    ``phidot_pdot`` the second component of Phi_dot @ p_dot (the first is 0).
    """

    S0: float
    S1: float
    S2: float
    S3: float
    Ca: Optional[np.ndarray] = None
    phidot_pdot: float = 0.0

    def pinv_row(self, mass, position) -> np.ndarray:
        """Row(s) of the Jacobian pseudo-inverse for members with these masses/positions."""
        mass = np.asarray(mass, dtype=float)
        position = np.asarray(position, dtype=float)
        c0 = mass * (self.S2 - position * self.S1) / self.S3
        c1 = 0.5 * mass * (position * self.S0 - self.S1) / self.S3
        return np.stack([c0, c1], axis=-1)


def _require_members(s: SwarmState):
    if s.n == 0:
        raise EmptySwarm("swarm has no members")


def abstract_map(s: SwarmState) -> AbstractState:
    _require_members(s)
    m, p, v = s.masses, s.positions, s.velocities
    return AbstractState(
        M1=float(np.sum(m * p)),
        J_s=float(np.sum(m * p * p)),
        Jdot_s=float(np.sum(2.0 * m * p * v)),
        M1_dot=float(np.sum(m * v)),
    )


def s_sums(masses, positions) -> tuple[float, float, float, float]:
    """S0..S3. S3 is evaluated in centred form, S0 * sum(w (p - pbar)^2) with w = m^2."""
    w = masses * masses
    S0 = float(np.sum(w))
    S1 = float(np.sum(w * positions))
    S2 = float(np.sum(w * positions * positions))
    pbar = S1 / S0
    S3 = S0 * float(np.sum(w * (positions - pbar) ** 2))
    return S0, S1, S2, S3


def damping_compensation(s: SwarmState, S, k_sd: float) -> np.ndarray:
    """Ca = Phi diag((c_i + k_sd)/m_i) Phi^+ restricted to DI members.

    Equivalent to the per-entry sums over DI members, each divided by S3.
    """
    S0, S1, S2, S3 = S
    di = s.is_di
    m, p, c = s.masses[di], s.positions[di], s.dampings[di]
    gain = c + k_sd
    a = m * (S2 - p * S1)
    b = 0.5 * m * (p * S0 - S1)
    return np.array([
        [np.sum(gain * a), np.sum(gain * b)],
        [2.0 * np.sum(p * gain * a), 2.0 * np.sum(p * gain * b)],
    ]) / S3


def aux_state(s: SwarmState, k_sd: Optional[float] = None) -> AuxAbstractState:
    _require_members(s)
    S = s_sums(s.masses, s.positions)
    Ca = None
    if k_sd is not None and np.any(s.is_di) and S[3] > 0:
        Ca = damping_compensation(s, S, k_sd)
    phidot_pdot = float(np.sum(2.0 * s.masses * s.velocities**2))
    return AuxAbstractState(*S, Ca=Ca, phidot_pdot=phidot_pdot)


def jacobian(s: SwarmState) -> np.ndarray:
    """2 x N Jacobian of (M1, J_s) with respect to member positions."""
    return np.vstack([s.masses, 2.0 * s.masses * s.positions])


def singular_threshold(S0: float, half_length: float = 0.5) -> float:
    return SINGULAR_REL_TOL * S0 * S0 * half_length * half_length


def check_regular(aux: AuxAbstractState, half_length: float = 0.5):
    if not aux.S3 > singular_threshold(aux.S0, half_length):
        raise SingularSwarm(f"S3 = {aux.S3:.3e}: members are (nearly) co-located")


def pinv_jacobian(aux: AuxAbstractState, s: SwarmState, half_length: float = 0.5) -> np.ndarray:
    """N x 2 closed-form Moore-Penrose pseudo-inverse of the Jacobian."""
    check_regular(aux, half_length)
    return aux.pinv_row(s.masses, s.positions)
