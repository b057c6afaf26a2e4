"""Tilting-plane parent dynamics, axle friction and the swarm member models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySwarm, NonPositiveInertia

SI = "SI"
DI = "DI"


@dataclass(frozen=True)
class PhysicalParams:
    """Plane and friction parameters. Defaults are the desk-scale rig values."""

    J: float = 0.5
    L: float = 1.0
    g: float = 9.81
    gamma1: float = 0.01
    gamma2: float = 1000.0
    gamma3: float = 700.0
    gamma4: float = 0.02
    gamma5: float = 1000.0
    gamma6: float = 1.0
    theta_max: float = 0.2
    tau_max: float = 5.0

    def __post_init__(self):
        gam = self.gammas
        if any(not v > 0 for v in gam):
            raise ValueError("friction parameters must all be positive")
        if not self.gamma2 > self.gamma3:
            raise ValueError("gamma2 must exceed gamma3")
        # gamma4 <= gamma1 is not enforced: the rig values have gamma4 = 2 * gamma1.
        # See `friction_ordering_ok`.
        if not self.J > 0 or not self.L > 0:
            raise ValueError("J and L must be positive")
        if not 0 < self.theta_max < math.pi / 2:
            raise ValueError("theta_max must lie in (0, pi/2)")
        if not self.tau_max > 0:
            raise ValueError("tau_max must be positive")

    @property
    def gammas(self) -> tuple[float, ...]:
        return (self.gamma1, self.gamma2, self.gamma3, self.gamma4, self.gamma5, self.gamma6)

    @property
    def friction_ordering_ok(self) -> bool:
        return self.gamma4 <= self.gamma1

    @property
    def half_length(self) -> float:
        return 0.5 * self.L

    @property
    def true_lambda(self) -> np.ndarray:
        """Parameter vector the adaptive regressor multiplies: (J, g1, g4, g6)."""
        return np.array([self.J, self.gamma1, self.gamma4, self.gamma6])


@dataclass(frozen=True)
class ParentState:
    theta: float
    omega: float

    def satisfies_constraint(self, params: PhysicalParams) -> bool:
        return abs(self.theta) <= params.theta_max

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.omega])


@dataclass(frozen=True)
class SwarmMember:
    """One robot. For SI members `velocity` records the last commanded input."""

    kind: str
    mass: float
    position: float
    velocity: float = 0.0
    damping: float = 0.0

    def __post_init__(self):
        if self.kind not in (SI, DI):
            raise ValueError(f"unknown member kind {self.kind!r}")
        if not self.mass > 0:
            raise ValueError("member mass must be positive")
        if self.kind == DI and not self.damping > 0:
            raise ValueError("DI members need positive damping")

    @property
    def is_di(self) -> bool:
        return self.kind == DI

    def satisfies_constraint(self, params: PhysicalParams) -> bool:
        return abs(self.position) <= params.half_length


@dataclass
class SwarmState:
    """Column-wise swarm storage; index i across all arrays is member i."""

    is_di: np.ndarray
    masses: np.ndarray
    dampings: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray = field(default=None)

    def __post_init__(self):
        self.is_di = np.asarray(self.is_di, dtype=bool)
        self.masses = np.asarray(self.masses, dtype=float)
        self.dampings = np.asarray(self.dampings, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)
        self.velocities = np.asarray(self.velocities, dtype=float)
        n = self.masses.size
        if n == 0:
            raise EmptySwarm("swarm has no members")
        for name in ("is_di", "dampings", "positions", "velocities"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        if np.any(self.masses <= 0):
            raise ValueError("member masses must be positive")

    @classmethod
    def from_members(cls, members: Iterable[SwarmMember]) -> "SwarmState":
        members = list(members)
        if not members:
            raise EmptySwarm("swarm has no members")
        return cls(
            is_di=[m.is_di for m in members],
            masses=[m.mass for m in members],
            dampings=[m.damping for m in members],
            positions=[m.position for m in members],
            velocities=[m.velocity for m in members],
        )

    @property
    def n(self) -> int:
        return self.masses.size

    def member(self, i: int) -> SwarmMember:
        return SwarmMember(
            kind=DI if self.is_di[i] else SI,
            mass=float(self.masses[i]),
            position=float(self.positions[i]),
            velocity=float(self.velocities[i]),
            damping=float(self.dampings[i]),
        )

    @property
    def members(self) -> list[SwarmMember]:
        return [self.member(i) for i in range(self.n)]

    def with_positions(self, positions, velocities=None) -> "SwarmState":
        return SwarmState(
            self.is_di, self.masses, self.dampings, positions,
            self.velocities if velocities is None else velocities,
        )

    def constraint_violations(self, params: PhysicalParams) -> np.ndarray:
        return np.abs(self.positions) > params.half_length


@dataclass(frozen=True)
class Disturbance:
    """Sinusoidal load torque amplitude * sin(frequency * t)."""

    amplitude: float = 0.0
    frequency: float = 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude * math.sin(self.frequency * t)

    def rate(self, t: float) -> float:
        return self.amplitude * self.frequency * math.cos(self.frequency * t)

    def second_rate(self, t: float) -> float:
        return -self.amplitude * self.frequency**2 * math.sin(self.frequency * t)


NO_DISTURBANCE = Disturbance(0.0, 0.0)


def friction_torque(omega, params: PhysicalParams):
    """Stribeck axle friction. Accepts scalars or arrays."""
    g1, g2, g3, g4, g5, g6 = params.gammas
    return g1 * (np.tanh(g2 * omega) - np.tanh(g3 * omega)) + g4 * np.tanh(g5 * omega) + g6 * omega


def friction_slope(omega, params: PhysicalParams):
    """d f_f / d omega."""
    g1, g2, g3, g4, g5, g6 = params.gammas
    sech2 = lambda x: 1.0 - np.tanh(x) ** 2  # noqa: E731
    return g1 * (g2 * sech2(g2 * omega) - g3 * sech2(g3 * omega)) + g4 * g5 * sech2(g5 * omega) + g6


def parent_accel(p: ParentState, a, params: PhysicalParams, tau_d: float = 0.0) -> float:
    """Plane angular acceleration given the swarm's abstract state `a`.

    The gravity torque of the swarm is g * a.M1 (a.M1 is the mass moment).
    """
    inertia = params.J + a.J_s
    if not inertia > 0:
        raise NonPositiveInertia(f"J + J_s = {inertia} is not positive")
    num = (
        -math.cos(p.theta) * params.g * a.M1
        - p.omega * a.Jdot_s
        - float(friction_torque(p.omega, params))
        - tau_d
    )
    return num / inertia


def full_state_accel(theta: float, omega: float, swarm: SwarmState, params: PhysicalParams,
                     tau_d: float = 0.0) -> float:
    """Plane acceleration written directly over member positions/velocities."""
    m, p, v = swarm.masses, swarm.positions, swarm.velocities
    inertia = params.J + np.sum(m * p**2)
    rhs = (
        -params.g * math.cos(theta) * np.sum(m * p)
        - 2.0 * omega * np.sum(m * p * v)
        - float(friction_torque(omega, params))
        - tau_d
    )
    return float(rhs / inertia)


def member_deriv(m: SwarmMember, u: float) -> tuple[float, ...]:
    """SI: (p_dot,). DI: (p_dot, v_dot)."""
    if m.is_di:
        return (m.velocity, (u - m.damping * m.velocity) / m.mass)
    return (u,)


def reference_swarm(kinds: Sequence[str] = (SI, SI, SI, SI)) -> SwarmState:
    """The 4-robot roster used throughout the desk-scale scenarios."""
    masses = (0.3552, 0.3532, 0.6762, 0.4596)
    dampings = (0.7290, 1.4133, 0.6524, 1.3258)
    positions = (0.125, -0.125, 0.125, -0.125)
    return SwarmState.from_members(
        SwarmMember(k, m, p, 0.0, c) for k, m, c, p in zip(kinds, masses, dampings, positions)
    )
