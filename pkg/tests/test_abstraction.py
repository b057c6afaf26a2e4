import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from parentswarm.abstraction import (abstract_map, aux_state, check_regular, damping_compensation,
                                     jacobian, pinv_jacobian, s_sums)
from parentswarm.errors import SingularSwarm
from parentswarm.plant import DI, SI, SwarmState, reference_swarm


def swarm_of(m, p, v=None, kinds=None, c=None):
    n = len(m)
    kinds = kinds if kinds is not None else [False] * n
    c = c if c is not None else np.ones(n)
    return SwarmState(kinds, m, c, p, v)


@st.composite
def swarms(draw, min_n=2, max_n=10):
    n = draw(st.integers(min_n, max_n))
    m = draw(arrays(float, n, elements=st.floats(0.05, 5.0)))
    p = draw(arrays(float, n, elements=st.floats(-0.5, 0.5)))
    v = draw(arrays(float, n, elements=st.floats(-1.0, 1.0)))
    return swarm_of(m, p, v)


def test_reference_roster_abstract_state(roster):
    a = abstract_map(roster)
    assert a.M1 == pytest.approx(0.0273, abs=5e-4)
    assert a.J_s == pytest.approx(0.0288, abs=5e-4)
    assert a.Jdot_s == 0.0 and a.M1_dot == 0.0


@given(swarms())
def test_s3_matches_pairwise_sum(s):
    S0, S1, S2, S3 = s_sums(s.masses, s.positions)
    w = s.masses**2
    pair = 0.5 * np.sum(np.outer(w, w) * np.subtract.outer(s.positions, s.positions) ** 2)
    assert S3 == pytest.approx(pair, rel=1e-9, abs=1e-14)
    assert S3 == pytest.approx(S0 * S2 - S1 * S1, rel=1e-6, abs=1e-12)


@given(swarms())
@settings(max_examples=200)
def test_pinv_matches_numpy(s):
    aux = aux_state(s)
    if aux.S3 <= 1e-8 * aux.S0**2:
        return
    P = pinv_jacobian(aux, s)
    np.testing.assert_allclose(P, np.linalg.pinv(jacobian(s)), rtol=1e-7, atol=1e-8)


@given(swarms())
def test_rate_is_jacobian_times_velocity(s):
    a = abstract_map(s)
    np.testing.assert_allclose(jacobian(s) @ s.velocities, a.rate, rtol=1e-12, atol=1e-14)


def test_coincident_positions_are_singular():
    s = swarm_of([1.0, 2.0, 3.0], [0.2, 0.2, 0.2])
    with pytest.raises(SingularSwarm):
        pinv_jacobian(aux_state(s), s)
    s = swarm_of([1.0, 2.0, 3.0], [0.2, 0.2, 0.2 + 1e-4])
    pinv_jacobian(aux_state(s), s)  # nearly singular, still regular
    s = swarm_of([1.0, 2.0, 3.0], [0.2, 0.2, 0.2 + 1e-3])
    P = pinv_jacobian(aux_state(s), s)
    np.testing.assert_allclose(jacobian(s) @ P, np.eye(2), atol=1e-9)


def test_singularity_threshold_is_scale_free():
    s = swarm_of([1.0, 1.0], [0.0, 1e-5])
    check_regular(aux_state(s))
    big = swarm_of([1e3, 1e3], [0.0, 1e-5])
    check_regular(aux_state(big))


def test_damping_compensation_is_projected_damping():
    s = reference_swarm((DI, SI, DI, DI)).with_positions([0.2, -0.1, 0.05, -0.3])
    k_sd = 1.0
    S = s_sums(s.masses, s.positions)
    Ca = damping_compensation(s, S, k_sd)
    D = np.diag(np.where(s.is_di, (s.dampings + k_sd) / s.masses, 0.0))
    Phi = jacobian(s)
    np.testing.assert_allclose(Ca, Phi @ D @ np.linalg.pinv(Phi), rtol=1e-10, atol=1e-12)


def test_aux_state_phidot_term():
    s = swarm_of([1.0, 2.0], [0.1, -0.1], [0.5, -0.25])
    assert aux_state(s).phidot_pdot == pytest.approx(2 * (0.25 + 2 * 0.0625))
