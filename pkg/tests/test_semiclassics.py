import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from bloch2d.lattice import ForceSpec, HoppingSet, canonicalize_k, group_velocity, triangular_hoppings
from bloch2d.semiclassics import (
    IncommensurateForceError,
    bloch_period,
    closed_form_displacement,
    drift_vector,
    oscillation_bound,
    rationalize_force,
    semiclassical_trajectory,
)

J_TRI = triangular_hoppings()
J1 = 0.0765
K0 = (0.05, 0.03)


def quad_displacement(J, k0, F, t):
    """Independent oracle: adaptive quadrature of the group velocity along k0 + F s."""
    F = np.asarray(F, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    # short pieces keep each quad call well inside its accuracy limits
    edges = np.linspace(0.0, t, max(2, int(np.ceil(t / 10.0)) + 1))
    return np.array([
        sum(quad(lambda s, i=i: group_velocity(J, k0 + F * s)[i], a, b,
                 epsabs=1e-14, epsrel=1e-12, limit=200)[0]
            for a, b in zip(edges[:-1], edges[1:]))
        for i in range(2)
    ])


def exhaustive_best(F, q_max):
    F1, F2 = F
    best = math.inf
    for q in range(-q_max, q_max + 1):
        for r in range(-q_max, q_max + 1):
            if (q, r) != (0, 0) and math.gcd(q, r) == 1:
                best = min(best, abs(F1 * r - F2 * q) / math.hypot(F1, F2))
    return best


coprime = st.tuples(st.integers(-4, 4), st.integers(-4, 4)).filter(
    lambda qr: qr != (0, 0) and math.gcd(*qr) == 1)


def test_bloch_period_examples():
    assert bloch_period(ForceSpec(2 * np.pi, 0.0, (1, 0))) == 1.0
    T = bloch_period(ForceSpec(0.5 * J1, -0.5 * J1, (1, -1)))
    assert T == pytest.approx(4 * np.pi / J1) and T == pytest.approx(164.3, abs=0.05)
    assert bloch_period(ForceSpec(0.4 * J1, -0.8 * J1, (1, -2))) == pytest.approx(2 * np.pi / (0.4 * J1))
    assert bloch_period(ForceSpec(0.0, -0.3, (0, -1))) == pytest.approx(2 * np.pi / 0.3)


def test_period_requires_a_direction():
    with pytest.raises(IncommensurateForceError, match="rationalize"):
        bloch_period(ForceSpec(0.5, 0.3))
    loose = ForceSpec(0.505, -1.0, (1, -2), residual=0.01)
    with pytest.raises(IncommensurateForceError, match="commensurate"):
        drift_vector(J_TRI, K0, loose)
    assert bloch_period(loose.commensurate()) > 0


def test_displacement_at_time_zero_is_zero():
    out = closed_form_displacement(J_TRI, K0, ForceSpec(0.5, -0.5, (1, -1)), 0.0)
    assert np.array_equal(out, [0.0, 0.0])


def test_chain_displacement_matches_analytic_and_closes():
    J = 0.3
    chain = HoppingSet({(1, 0): J, (-1, 0): J})
    F1, k0 = 0.17, 0.4
    t = np.linspace(0, 60, 37)
    got = closed_form_displacement(chain, (k0, 0.0), (F1, 0.0), t)
    want = 2 * J / F1 * (np.cos(k0) - np.cos(k0 + F1 * t))
    np.testing.assert_allclose(got[:, 0], want, atol=1e-13)
    assert np.all(got[:, 1] == 0)
    T = bloch_period(ForceSpec(F1, 0.0, (1, 0)))
    assert np.abs(closed_form_displacement(chain, (k0, 0.0), ForceSpec(F1, 0.0, (1, 0)), T)).max() < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi), st.floats(0.0, 400.0),
       st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_closed_form_matches_quadrature(k1, k2, t, F1, F2):
    F = (F1, F2)
    got = closed_form_displacement(J_TRI, (k1, k2), F, t)
    np.testing.assert_allclose(got, quad_displacement(J_TRI, (k1, k2), F, t), atol=1e-9)


def test_force_case_drifts_match_hand_sums():
    Fi = ForceSpec(0.5 * J1, -0.5 * J1, (1, -1))
    res = drift_vector(J_TRI, K0, Fi)
    v = 2 * (J1 * np.sin(0.08) + 2 * -0.0078 * np.sin(0.16))
    np.testing.assert_allclose(res.velocity, [v, v], rtol=1e-12)
    assert res.velocity[0] == pytest.approx(0.00726, abs=5e-6)
    np.testing.assert_allclose(res.displacement, [1.19, 1.19], atol=0.01)
    assert sorted(res.contributing) == [(-2, -2), (-1, -1), (1, 1), (2, 2)]

    Fiii = ForceSpec(0.4 * J1, -0.8 * J1, (1, -2))
    res = drift_vector(J_TRI, K0, Fiii)
    assert sorted(res.contributing) == [(-2, -1), (2, 1)]
    np.testing.assert_allclose(res.velocity, 2 * np.array([2, 1]) * -0.0149 * np.sin(0.13), rtol=1e-12)
    np.testing.assert_allclose(res.velocity, [-0.00773, -0.00386], atol=5e-6)
    assert res.velocity[0] == pytest.approx(2 * res.velocity[1], rel=1e-14)


def test_drift_vanishes_at_zone_centre():
    res = drift_vector(J_TRI, (0.0, 0.0), ForceSpec(0.3, -0.3, (1, -1)))
    assert np.array_equal(res.displacement, [0.0, 0.0])


@settings(max_examples=60, deadline=None)
@given(coprime, st.floats(0.01, 1.0), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_drift_is_exactly_perpendicular(qr, mag, k1, k2):
    q, r = qr
    scale = mag / math.hypot(q, r)
    F = ForceSpec(q * scale, r * scale, qr)
    res = drift_vector(J_TRI, (k1, k2), F)
    # D_T is a multiple of the integer vector (-r, q)
    assert res.displacement[0] * q + res.displacement[1] * r == 0.0
    np.testing.assert_allclose(res.displacement, res.velocity * res.period, rtol=1e-15)
    bound = sum(math.hypot(*m) * abs(J_TRI[m]) for m in res.contributing)
    assert res.speed <= bound + 1e-15


@settings(max_examples=40, deadline=None)
@given(coprime, st.floats(0.02, 1.0), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi),
       st.integers(1, 4))
def test_displacement_at_whole_periods(qr, mag, k1, k2, n):
    q, r = qr
    scale = mag / math.hypot(q, r)
    F = ForceSpec(q * scale, r * scale, qr)
    res = drift_vector(J_TRI, (k1, k2), F)
    at_T = closed_form_displacement(J_TRI, (k1, k2), F, res.period)
    assert np.abs(at_T - res.displacement).max() < 1e-12 * max(1.0, res.period)
    at_nT = closed_form_displacement(J_TRI, (k1, k2), F, n * res.period)
    np.testing.assert_allclose(at_nT, n * res.displacement, atol=1e-11 * n * max(1.0, res.period))


def test_drift_matches_quadrature_over_one_period():
    for F in (ForceSpec(0.5 * J1, -0.5 * J1, (1, -1)), ForceSpec(0.7 * J1, -0.7 * J1, (1, -1)),
              ForceSpec(0.4 * J1, -0.8 * J1, (1, -2))):
        res = drift_vector(J_TRI, K0, F)
        oracle = quad_displacement(J_TRI, K0, F.vector, res.period)
        assert np.abs(oracle - res.displacement).max() < 1e-10


@pytest.mark.parametrize("F, q_max, expected", [
    ((0.5, -0.5), 10, (1, -1)),
    ((0.4, -0.8), 10, (1, -2)),
    ((0.0, 2.0), 3, (0, 1)),
    ((-3.0, 0.0), 3, (-1, 0)),
    ((0.505, -1.0), 10, (1, -2)),
    ((0.505, -1.0), 200, (101, -200)),
])
def test_rationalize_examples(F, q_max, expected):
    spec = rationalize_force(F, q_max)
    assert spec.direction == expected
    if F == (0.505, -1.0) and q_max == 10:
        assert spec.residual > 0 and not spec.is_commensurate
    if F in ((0.5, -0.5), (0.4, -0.8)):
        assert spec.residual == 0.0 and spec.is_commensurate


def test_rationalize_guards():
    with pytest.raises(ValueError, match="zero"):
        rationalize_force((0.0, 0.0), 5)
    with pytest.raises(ValueError, match="q_max"):
        rationalize_force((1.0, 0.5), 0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10, allow_nan=False), st.floats(-10, 10, allow_nan=False),
       st.integers(1, 12))
def test_rationalize_matches_exhaustive_search(F1, F2, q_max):
    assume(math.hypot(F1, F2) > 1e-6)
    spec = rationalize_force((F1, F2), q_max)
    q, r = spec.direction
    assert max(abs(q), abs(r)) <= q_max and math.gcd(q, r) == 1
    assert spec.residual == pytest.approx(exhaustive_best((F1, F2), q_max), rel=1e-9, abs=1e-15)
    assert F1 * q + F2 * r >= 0


def test_trajectory_sampling():
    F = ForceSpec(0.5 * J1, -0.5 * J1, (1, -1))
    traj = semiclassical_trajectory(J_TRI, K0, F, 100.0, 0.5)
    assert len(traj.t) == 201 and traj.t[-1] == 100.0
    assert np.array_equal(traj.r[0], [0.0, 0.0])
    np.testing.assert_array_equal(traj.k, canonicalize_k(np.asarray(K0) + traj.t[:, None] * F.vector))
    assert traj.rows()[3] == (1.5, float(traj.r[3, 0]), float(traj.r[3, 1]))


def test_zero_force_moves_in_a_straight_line():
    traj = semiclassical_trajectory(J_TRI, K0, (0.0, 0.0), 50.0, 1.0)
    np.testing.assert_allclose(traj.r, traj.t[:, None] * group_velocity(J_TRI, K0), atol=1e-14)


def test_oscillation_stays_within_bound():
    F = ForceSpec(0.5 * J1, -0.5 * J1, (1, -1))
    res = drift_vector(J_TRI, K0, F)
    t = np.linspace(0, 3 * res.period, 3000)
    dev = closed_form_displacement(J_TRI, K0, F, t) - t[:, None] * res.velocity
    assert np.linalg.norm(dev, axis=1).max() <= oscillation_bound(J_TRI, F)


def test_trajectory_argument_checks():
    with pytest.raises(ValueError):
        semiclassical_trajectory(J_TRI, K0, (0.1, 0.0), 1.0, 0.0)
    with pytest.raises(ValueError):
        semiclassical_trajectory(J_TRI, K0, (0.1, 0.0), -1.0, 0.1)
