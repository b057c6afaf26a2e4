"""Abstract closed-loop checks with the parent removed."""

import numpy as np
import pytest

from parentswarm.control import SwarmGains
from parentswarm.plant import DI, SI, SwarmState, reference_swarm
from parentswarm.sim.harness import TorqueReference, decay_rates, second_order_residual, track_abstract

SMOOTH = TorqueReference(offset=0.5, amplitude=0.5, frequency=2.0)


def test_si_channels_decay_at_gain():
    s = reference_swarm()
    log = track_abstract(s, TorqueReference(offset=1.0), SwarmGains(), dt=1e-3, duration=1.0)
    np.testing.assert_allclose(decay_rates(log), [10.0, 10.0], rtol=0.01)


def test_si_decay_follows_gain_choice():
    s = reference_swarm()
    log = track_abstract(s, TorqueReference(offset=1.0), SwarmGains(K=(4.0, 7.0)), dt=1e-3, duration=2.0)
    np.testing.assert_allclose(decay_rates(log), [4.0, 7.0], rtol=0.01)


def test_di_uniform_ratio_is_exact():
    """Uniform (c + k_sd)/m removes the null-space coupling, so the target dynamics hold."""
    m = np.array([0.3552, 0.3532, 0.6762, 0.4596])
    g = SwarmGains()
    s = SwarmState([True] * 4, m, 3.0 * m - g.k_sd, [0.125, -0.125, 0.125, -0.125])
    log = track_abstract(s, SMOOTH, g, dt=1e-4, duration=1.0)
    res, scale = second_order_residual(log, g, t_min=0.05)
    assert res / scale < 1e-6


def test_di_pair_is_exact():
    s = SwarmState([True, True], [0.4, 0.7], [0.7, 1.4], [0.125, -0.2])
    g = SwarmGains()
    log = track_abstract(s, SMOOTH, g, dt=1e-4, duration=1.0)
    res, scale = second_order_residual(log, g, t_min=0.05)
    assert res / scale < 1e-6


def test_di_error_converges_on_reference_roster():
    s = reference_swarm((DI, DI, DI, DI))
    log = track_abstract(s, SMOOTH, SwarmGains(), dt=1e-3, duration=6.0)
    assert np.max(np.abs(log.e[-500:])) < 2e-3
