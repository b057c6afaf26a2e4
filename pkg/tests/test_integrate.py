import math

import numpy as np
import pytest

from parentswarm.errors import NonFiniteState
from parentswarm.sim.integrate import integrate, rk4_step


def oscillator(t, x):
    return np.array([x[1], -x[0]])


def period_error(n):
    xs = integrate(oscillator, np.array([1.0, 0.0]), 0.0, 2 * math.pi / n, n)
    return float(np.max(np.abs(xs[-1] - [1.0, 0.0])))


def test_one_period_accuracy():
    assert period_error(10000) < 1e-9


def test_fourth_order_convergence():
    ratio = period_error(200) / period_error(400)
    assert ratio == pytest.approx(16.0, rel=0.05)


def test_time_dependent_rhs():
    xs = integrate(lambda t, x: np.array([math.cos(t)]), np.array([0.0]), 0.0, 0.01, 100)
    assert xs[-1, 0] == pytest.approx(math.sin(1.0), abs=1e-10)


def test_nonfinite_is_reported():
    with pytest.raises(NonFiniteState):
        rk4_step(lambda t, x: np.array([np.inf]), 0.0, np.array([1.0]), 0.1)
    with pytest.raises(ValueError):
        rk4_step(oscillator, 0.0, np.array([1.0, 0.0]), 0.0)
