"""Fixed-step classic Runge-Kutta integration."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NonFiniteState


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, x: np.ndarray,
             dt: float) -> np.ndarray:
    """Advance x' = f(t, x) by one step. Anything f holds fixed stays fixed over the step."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("state became non-finite", t + dt)
    return out


def integrate(f, x0, t0: float, dt: float, n_steps: int) -> np.ndarray:
    """Trajectory of n_steps + 1 samples."""
    xs = np.empty((n_steps + 1, np.size(x0)))
    xs[0] = x0
    t = t0
    for k in range(n_steps):
        xs[k + 1] = rk4_step(f, t, xs[k], dt)
        t = t0 + (k + 1) * dt
    return xs
