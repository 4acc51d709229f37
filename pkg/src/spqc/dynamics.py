"""Rigid-body quadrotor model with body-rate inputs.

Inertial z points up and gravity is the vector (0, 0, -9.81), so hover thrust
is +m*9.81. Attitude uses Z-Y-X (yaw, pitch, roll) Euler angles.
"""

from dataclasses import dataclass, field

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.81])
THETA_MAX = 1.48
E3 = np.array([0.0, 0.0, 1.0])


class SimulationFault(RuntimeError):
    pass


@dataclass
class VehicleParams:
    m: float = 0.027
    F_max: float = 0.6
    omega_max: float = 10.0
    s_r: float = 2.0
    g_vec: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        self.g_vec = np.asarray(self.g_vec, dtype=float)
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if not self.F_max > self.m * abs(self.g_vec[2]):
            raise ValueError("F_max cannot hold hover")
        if not self.s_r > 0:
            raise ValueError("sensing range must be positive")

    @property
    def hover_thrust(self):
        return -self.m * self.g_vec[2]


@dataclass
class State:
    p: np.ndarray
    v: np.ndarray
    omega_euler: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        self.omega_euler = np.asarray(self.omega_euler, dtype=float).reshape(3)

    def as_vector(self):
        return np.concatenate([self.p, self.v, self.omega_euler])

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:9].copy())

    def copy(self):
        return State(self.p.copy(), self.v.copy(), self.omega_euler.copy())


@dataclass
class ControlInput:
    F: float
    omega_body: np.ndarray

    def __post_init__(self):
        self.F = float(self.F)
        self.omega_body = np.asarray(self.omega_body, dtype=float).reshape(3)


def rotation_from_euler(omega_euler):
    """R = Rz(psi) Ry(theta) Rx(phi); body z is the third column."""
    phi, theta, psi = omega_euler
    if abs(theta) >= np.pi / 2:
        raise ValueError("pitch at the Euler singularity")
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
        [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
        [-st, ct * sf, ct * cf],
    ])


def thrust_axis(omega_euler):
    phi, theta, psi = omega_euler
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([cp * st * cf + sp * sf, sp * st * cf - cp * sf, ct * cf])


def euler_rate_matrix(omega_euler):
    """Maps body rates to Z-Y-X Euler angle rates."""
    phi, theta, _ = omega_euler
    cf, sf = np.cos(phi), np.sin(phi)
    ct, tt = np.cos(theta), np.tan(theta)
    return np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])


def skew(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def wrap_angle(a):
    # result in (-pi, pi]
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


def _deriv(x, F, omega_body, wind_force, params):
    ang = x[6:9]
    acc = params.g_vec + (thrust_axis(ang) * F + wind_force) / params.m
    return np.concatenate([x[3:6], acc, euler_rate_matrix(ang) @ omega_body])


def dynamics_derivative(state, u, wind_force, params):
    x = state.as_vector()
    return _deriv(x, u.F, u.omega_body, np.asarray(wind_force, dtype=float), params)


def _guard(x):
    x = x.copy()
    x[7] = np.clip(x[7], -THETA_MAX, THETA_MAX)
    return x


def integrate_step(state, u, wind_field, t, dt, params):
    """Classic RK4 with the input held; wind is re-evaluated at each stage."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = state.as_vector()

    def f(tt, xx):
        xx = _guard(xx)
        w = wind_field.force(xx[0:3], tt)
        return _deriv(xx, u.F, u.omega_body, w, params)

    k1 = f(t, x)
    k2 = f(t + dt / 2, x + dt / 2 * k1)
    k3 = f(t + dt / 2, x + dt / 2 * k2)
    k4 = f(t + dt, x + dt * k3)
    xn = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(xn)):
        raise SimulationFault("non-finite state after integration step")
    xn[7] = np.clip(xn[7], -THETA_MAX, THETA_MAX)
    xn[6] = wrap_angle(xn[6])
    xn[8] = wrap_angle(xn[8])
    return State.from_vector(xn)


def thrust_direction_to_attitude(b3, psi_d=0.0):
    """Euler angles whose thrust axis is b3, for the given yaw.

    Directions in the lower hemisphere are rejected; callers clamp first.
    """
    b3 = np.asarray(b3, dtype=float)
    b3 = b3 / np.linalg.norm(b3)
    if b3[2] <= 0:
        raise ValueError("thrust direction must point upward")
    c, s = np.cos(psi_d), np.sin(psi_d)
    # undo yaw: b' = Rz(psi)^T b3 = (st cf, -sf, ct cf)
    bx = c * b3[0] + s * b3[1]
    by = -s * b3[0] + c * b3[1]
    bz = b3[2]
    phi = np.arcsin(np.clip(-by, -1.0, 1.0))
    theta = np.arctan2(bx, bz)
    phi = float(np.clip(phi, -THETA_MAX, THETA_MAX))
    theta = float(np.clip(theta, -THETA_MAX, THETA_MAX))
    return np.array([phi, theta, psi_d])
