import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from spqc.dynamics import (THETA_MAX, ControlInput, State, VehicleParams, dynamics_derivative,
                           euler_rate_matrix, integrate_step, rotation_from_euler, skew,
                           thrust_axis, thrust_direction_to_attitude, wrap_angle)
from spqc.wind import ConstantWind

P = VehicleParams()
ZERO = ConstantWind()
angles = st.tuples(st.floats(-np.pi, np.pi), st.floats(-1.4, 1.4), st.floats(-np.pi, np.pi))


def rest():
    return State(np.zeros(3), np.zeros(3), np.zeros(3))


def test_rotation_identity_at_zero():
    assert np.array_equal(rotation_from_euler(np.zeros(3)), np.eye(3))


def test_rotation_pure_pitch_thrust_axis():
    R = rotation_from_euler([0.0, 0.5, 0.0])
    assert np.allclose(R[:, 2], [np.sin(0.5), 0.0, np.cos(0.5)], atol=1e-15)


@given(angles)
def test_rotation_matches_scipy_zyx(a):
    phi, theta, psi = a
    ref = Rotation.from_euler("ZYX", [psi, theta, phi]).as_matrix()
    assert np.allclose(rotation_from_euler(a), ref, atol=1e-12)


@given(angles)
def test_rotation_orthonormal(a):
    R = rotation_from_euler(a)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(R), 1.0, atol=1e-12)


@given(angles)
def test_thrust_axis_is_third_column(a):
    assert np.allclose(thrust_axis(a), rotation_from_euler(a)[:, 2], atol=1e-15)


def test_euler_rate_identity_level():
    assert np.array_equal(euler_rate_matrix(np.zeros(3)), np.eye(3))


def test_euler_rate_matches_finite_difference_of_rotation():
    ang = np.array([0.3, 0.2, 0.0])
    R = rotation_from_euler(ang)
    E = euler_rate_matrix(ang)
    for axis in np.eye(3):
        dt = 1e-6
        R1 = rotation_from_euler(ang + E @ axis * dt)
        # body rates from R^T R_dot = S(w)
        S = R.T @ (R1 - R) / dt
        w = np.array([S[2, 1], S[0, 2], S[1, 0]])
        assert np.allclose(w, axis, atol=1e-5)


@given(angles, st.tuples(*[st.floats(-5, 5)] * 3))
@settings(max_examples=50)
def test_euler_rate_consistent_with_body_rotation(a, w):
    w = np.array(w)
    dt = 1e-6
    step = euler_rate_matrix(a) @ w * dt
    Rdot = (rotation_from_euler(np.array(a) + step) - rotation_from_euler(np.array(a) - step)) / (2 * dt)
    expected = rotation_from_euler(a) @ skew(w)
    assert np.linalg.norm(Rdot - expected) <= 1e-5 * np.linalg.norm(expected) + 1e-9


def test_euler_rate_finite_at_pitch_guard():
    assert np.all(np.isfinite(euler_rate_matrix([0.4, THETA_MAX, 0.2])))


def test_hover_balance():
    assert P.hover_thrust == pytest.approx(0.26487, abs=1e-12)
    xdot = dynamics_derivative(rest(), ControlInput(P.hover_thrust, np.zeros(3)), np.zeros(3), P)
    assert np.allclose(xdot[3:6], 0.0, atol=1e-15)


def test_free_fall():
    xdot = dynamics_derivative(rest(), ControlInput(0.0, np.zeros(3)), np.zeros(3), P)
    assert np.allclose(xdot[3:6], [0.0, 0.0, -9.81])


def test_wind_force_scaling():
    xdot = dynamics_derivative(rest(), ControlInput(0.0, np.zeros(3)), [0.027, 0.0, 0.0], P)
    assert xdot[3] == pytest.approx(1.0)


def test_ballistic_step():
    s = integrate_step(rest(), ControlInput(0.0, np.zeros(3)), ZERO, 0.0, 0.02, P)
    assert s.p[2] == pytest.approx(-0.5 * 9.81 * 0.02 ** 2, abs=1e-9)


def test_hover_equilibrium_step():
    s = integrate_step(rest(), ControlInput(P.hover_thrust, np.zeros(3)), ZERO, 0.0, 0.02, P)
    assert np.allclose(s.as_vector(), 0.0, atol=1e-10)


def _maneuver(dt, T=1.0):
    s = State([0.0, 0.0, 1.0], [0.5, 0.0, 0.0], [0.1, -0.1, 0.0])
    u = ControlInput(0.3, [0.4, -0.3, 0.2])
    for k in range(int(round(T / dt))):
        s = integrate_step(s, u, ConstantWind([0.01, -0.02, 0.0]), k * dt, dt, P)
    return s.as_vector()


def test_rk4_fourth_order_convergence():
    ref = _maneuver(1e-4)
    e1 = np.linalg.norm(_maneuver(0.02) - ref)
    e2 = np.linalg.norm(_maneuver(0.01) - ref)
    assert 12.0 < e1 / e2 < 20.0


def test_energy_conserved_in_free_flight():
    s = State([0.0, 0.0, 0.0], [1.0, -0.5, 3.0], np.zeros(3))
    u = ControlInput(0.0, np.zeros(3))

    def energy(x):
        return 0.5 * x.v @ x.v + 9.81 * x.p[2]

    e0 = energy(s)
    for k in range(1000):
        s = integrate_step(s, u, ZERO, k * 0.02, 0.02, P)
    assert abs(energy(s) - e0) <= 1e-6 * abs(e0)


def test_integrate_deterministic():
    a, b = _maneuver(0.02, 0.2), _maneuver(0.02, 0.2)
    assert a.tobytes() == b.tobytes()


def test_integrate_rejects_bad_dt():
    with pytest.raises(ValueError):
        integrate_step(rest(), ControlInput(0.0, np.zeros(3)), ZERO, 0.0, 0.0, P)


def test_vehicle_param_validation():
    with pytest.raises(ValueError):
        VehicleParams(m=-1.0)
    with pytest.raises(ValueError):
        VehicleParams(F_max=0.1)


def test_direction_to_attitude_examples():
    assert np.allclose(thrust_direction_to_attitude([0, 0, 1]), 0.0)
    out = thrust_direction_to_attitude([np.sin(0.3), 0.0, np.cos(0.3)])
    assert out[1] == pytest.approx(0.3) and out[0] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        thrust_direction_to_attitude([0, 0, -1])


def test_direction_to_attitude_round_trip(rng):
    worst = 0.0
    for _ in range(1000):
        b3 = rng.normal(size=3)
        b3[2] = abs(b3[2])
        b3 /= np.linalg.norm(b3)
        if b3[2] < 0.2:
            # beyond the pitch clamp; covered below
            continue
        psi = rng.uniform(-np.pi, np.pi)
        ang = thrust_direction_to_attitude(b3, psi)
        worst = max(worst, np.linalg.norm(thrust_axis(ang) - b3))
        assert ang[2] == psi
    assert worst < 1e-9


def test_direction_to_attitude_clamps_pitch():
    ang = thrust_direction_to_attitude([1.0, 0.0, 0.01])
    assert ang[1] == THETA_MAX


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = float(wrap_angle(a))
    assert -np.pi < w <= np.pi
    assert np.isclose(np.cos(w), np.cos(a), atol=1e-9) and np.isclose(np.sin(w), np.sin(a), atol=1e-9)
