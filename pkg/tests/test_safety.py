import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import lex_projection_oracle
from spqc.dynamics import ControlInput, State, VehicleParams, integrate_step, rotation_from_euler
from spqc.ellipsoid import SafeEllipsoid
from spqc.safety import (BarrierGains, SafetyRow, attitude_safety_row, filter_rates,
                         filter_thrust, h_attitude, h_position, position_safety_row)
from spqc.wind import ConstantWind

P = VehicleParams()
B = BarrierGains()
Z3 = np.zeros(3)
BALL = SafeEllipsoid(2 * np.eye(3), Z3)


def test_h_position_examples():
    assert h_position(BALL, Z3) == 1.0
    assert h_position(BALL, [2.0, 0, 0]) == 0.0
    assert h_position(BALL, [1.0, 0, 0]) == pytest.approx(0.75)


def test_h_attitude_examples():
    ell = SafeEllipsoid(np.eye(3), [0.0, 0.0, 0.7])
    assert h_attitude(ell, Z3, np.eye(3)) == pytest.approx(0.7)
    ell = SafeEllipsoid(np.eye(3), [0.7, 0.0, 0.0])
    assert h_attitude(ell, Z3, np.eye(3)) == pytest.approx(0.0, abs=1e-15)
    # tilted toward the center beats tilted away
    toward = h_attitude(ell, Z3, rotation_from_euler([0, 0.4, 0]))
    away = h_attitude(ell, Z3, rotation_from_euler([0, -0.4, 0]))
    assert toward > 0 > away


def test_position_row_deep_interior():
    s = State(Z3, Z3, [0.1, -0.2, 0.3])
    row = position_safety_row(s, BALL, Z3, Z3, 3.0, B, P)
    assert row.coeff[0] == 0.0
    assert row.rhs_const == pytest.approx(B.alpha1b * B.alpha1a)
    assert all(row.value([F]) > 0 for F in np.linspace(0, P.F_max, 7))


def test_position_row_braking_direction():
    # near the +x boundary, moving outward, tilted back: more thrust helps
    s = State([1.8, 0, 0], [1.0, 0, 0], [0.0, -0.3, 0.0])
    row = position_safety_row(s, BALL, Z3, Z3, 3.0, B, P)
    assert row.coeff[0] > 0
    assert row.value([0.0]) < 0


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_position_row_matches_flow(seed):
    r = np.random.default_rng(seed)
    ell = SafeEllipsoid(np.diag(r.uniform(0.5, 2, 3)), r.uniform(-0.3, 0.3, 3))
    s = State(r.uniform(-0.5, 0.5, 3), r.uniform(-1, 1, 3), [*r.uniform(-0.4, 0.4, 2), 0.2])
    mu, F = r.uniform(-0.1, 0.1, 3), r.uniform(0, P.F_max)

    def psi1(x):
        d = x.p - ell.zeta
        return -2 * d @ ell.M @ x.v + B.alpha1a * (1 - d @ ell.M @ d)

    eps = 1e-6
    x1 = integrate_step(s, ControlInput(F, Z3), ConstantWind(mu), 0.0, eps, P)
    fd = (psi1(x1) - psi1(s)) / eps
    row = position_safety_row(s, ell, mu, Z3, 3.0, B, P)
    pred = row.value([F]) - B.alpha1b * psi1(s)
    assert abs(fd - pred) <= 1e-3 * max(1.0, abs(pred))


def test_sigma_zero_no_robust_term():
    s = State([0.5, 0.2, 0.1], [0.3, 0.1, 0], Z3)
    a = position_safety_row(s, BALL, Z3, Z3, 3.0, B, P)
    b = position_safety_row(s, BALL, Z3, Z3, 0.0, B, P)
    assert a.rhs_const == b.rhs_const


def test_sigma_tightens_row():
    s = State([0.5, 0.2, 0.1], [0.3, 0.1, 0], Z3)
    a = position_safety_row(s, BALL, Z3, Z3, 3.0, B, P)
    b = position_safety_row(s, BALL, Z3, np.full(3, 0.01), 3.0, B, P)
    assert b.rhs_const < a.rhs_const


def test_attitude_row_aligned_stationary():
    ell = SafeEllipsoid(np.eye(3), [0.0, 0.0, 0.5])
    row = attitude_safety_row(State(Z3, Z3, Z3), ell, B)
    assert row.rhs_const == pytest.approx(B.alpha2 * 0.5)
    assert row.value(Z3) > 0


@given(st.tuples(*[st.floats(-1, 1)] * 3), st.tuples(st.floats(-1, 1), st.floats(-1, 1),
                                                      st.floats(-3, 3)))
def test_attitude_row_yaw_coefficient_zero(zeta, ang):
    row = attitude_safety_row(State(Z3, Z3, ang), SafeEllipsoid(np.eye(3), zeta), B)
    assert row.coeff[2] == 0.0


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_attitude_row_matches_flow(seed):
    r = np.random.default_rng(seed)
    ell = SafeEllipsoid(np.eye(3), r.uniform(-1, 1, 3))
    s = State(r.uniform(-0.5, 0.5, 3), r.uniform(-1, 1, 3), [*r.uniform(-0.5, 0.5, 2), 1.0])
    w = r.uniform(-5, 5, 3)
    eps = 1e-6

    def hR(x):
        return h_attitude(ell, x.p, rotation_from_euler(x.omega_euler))

    x1 = integrate_step(s, ControlInput(P.hover_thrust, w), ConstantWind(), 0.0, eps, P)
    fd = (hR(x1) - hR(s)) / eps
    pred = attitude_safety_row(s, ell, B).value(w) - B.alpha2 * hR(s)
    assert abs(fd - pred) <= 1e-3 * max(1.0, abs(pred))


def _oracle(u_n, row, lb, ub):
    return lex_projection_oracle(u_n, row.coeff, row.rhs_const, lb, ub)


def test_thrust_filter_inactive():
    row = SafetyRow(np.array([1.0]), 0.0)
    F, eta = filter_thrust(0.3, row, (0.0, P.F_max), B)
    assert F == 0.3 and eta == 0.0


def test_thrust_filter_projects():
    row = SafetyRow(np.array([2.0]), -0.8)  # needs F >= 0.4
    F, eta = filter_thrust(0.3, row, (0.0, P.F_max), B)
    assert F == pytest.approx(0.4, abs=1e-9) and eta == pytest.approx(0.0, abs=1e-12)
    u, s = _oracle([0.3], row, [0.0], [P.F_max])
    assert np.allclose([F, eta], [u[0], s], atol=1e-9)


# the oracle is the infinite-weight limit, exact once K c^2 >> 1; the finite
# weight regime is pinned analytically in test_tiny_coefficients_finite_weight
coef = st.floats(-10, 10).filter(lambda c: c == 0 or abs(c) >= 1e-6)


@given(st.floats(-0.2, 0.8), coef, st.floats(-5, 5))
@settings(max_examples=80, deadline=None)
def test_thrust_filter_matches_oracle_and_bounds(F_n, c, r):
    row = SafetyRow(np.array([c]), r)
    F, eta = filter_thrust(F_n, row, (0.0, P.F_max), B)
    assert 0.0 <= F <= P.F_max
    u, s = _oracle([F_n], row, [0.0], [P.F_max])
    assert np.allclose([F, eta], [u[0], s], atol=1e-6)
    if row.value([np.clip(F_n, 0, P.F_max)]) >= 0 and 0 <= F_n <= P.F_max:
        assert abs(F - F_n) <= 1e-9


def test_rate_filter_inactive():
    w_n = np.array([1.0, -2.0, 0.5])
    w, eps = filter_rates(w_n, SafetyRow(np.array([1.0, 0.0, 0.0]), 5.0), P.omega_max, B)
    assert np.array_equal(w, w_n) and eps == 0.0


@given(st.tuples(*[st.floats(-12, 12)] * 3), st.tuples(coef, coef), st.floats(-20, 20))
@settings(max_examples=80, deadline=None)
def test_rate_filter_matches_oracle_and_bounds(w_n, c, r):
    row = SafetyRow(np.array([c[0], c[1], 0.0]), r)
    w, eps = filter_rates(np.array(w_n), row, P.omega_max, B)
    assert np.all(np.abs(w) <= P.omega_max)
    lb = np.full(3, -P.omega_max)
    u, s = _oracle(w_n, row, lb, -lb)
    assert np.allclose(np.append(w, eps), np.append(u, s), atol=1e-6)


def test_tiny_coefficients_finite_weight():
    # min w_x^2 + K (0.5 - c w_x)^2 with c = 1e-30, K = 1e30: w_x = K c 0.5 / (1 + K c^2)
    row = SafetyRow(np.array([1e-30, 0.25, 0.0]), -3.0)
    w, eps = filter_rates(Z3, row, P.omega_max, B)
    assert np.allclose(w, [0.5, 10.0, 0.0], atol=1e-12) and eps == pytest.approx(0.5)
    # c = 1e-18: the same balance wants 5e11, so w_x saturates
    w, _ = filter_rates(Z3, SafetyRow(np.array([1e-18, 0.25, 0.0]), -3.0), P.omega_max, B)
    assert np.allclose(w, [10.0, 10.0, 0.0])
    # a negligible row leaves the nominal thrust alone
    F, _ = filter_thrust(0.5, SafetyRow(np.array([-1e-90]), 0.0), (0.0, P.F_max), B)
    assert F == pytest.approx(0.5, abs=1e-12)


def test_gain_validation():
    with pytest.raises(ValueError):
        BarrierGains(alpha2=0.0)
