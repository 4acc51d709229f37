"""Nominal cascaded CLF-QP tracking: thrust QP, local motion planning, rates QP."""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import euler_rate_matrix, thrust_axis, thrust_direction_to_attitude, wrap_angle
from .qp import QPProblem, QPError, solve_qp


THRUST_COSTS = ("linear", "quadratic", "feedforward")


@dataclass(frozen=True)
class ReferencePoint:
    p_d: np.ndarray
    v_d: np.ndarray
    a_d: np.ndarray
    psi_d: float = 0.0


@dataclass
class TrackingGains:
    lambda1: float = 40.0
    lambda2: float = 5.0
    lambda_c: float = 12.0
    c_p: float = 3.0
    lambda3: float = 0.5
    lambda4: float = 8.0
    c_a: float = 40.0
    H1: float = 1.0
    H2: np.ndarray = field(default_factory=lambda: np.eye(3))
    K_beta: float = 100.0
    K_gamma: float = 1e20
    thrust_cost: str = "feedforward"
    max_tilt: float = 1.3
    lmp_horizon: float = 0.15

    def __post_init__(self):
        self.H2 = np.asarray(self.H2, dtype=float).reshape(3, 3)
        for name in ("lambda1", "lambda2", "c_p", "lambda4", "c_a", "H1", "K_beta", "K_gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_c < 0 or self.lambda_c ** 2 >= self.lambda1 * self.lambda2:
            raise ValueError("lambda_c must satisfy 0 <= lambda_c^2 < lambda1*lambda2")
        if not 0 <= self.lambda3 <= 1:
            raise ValueError("lambda3 must lie in [0, 1]")
        if not np.allclose(self.H2, self.H2.T) or np.linalg.eigvalsh(self.H2).min() <= 0:
            raise ValueError("H2 must be symmetric positive definite")
        if not self.lmp_horizon > 0:
            raise ValueError("lmp_horizon must be positive")
        if self.thrust_cost not in THRUST_COSTS:
            raise ValueError(f"thrust_cost must be one of {THRUST_COSTS}")
        if not 0 < self.max_tilt <= 1.48:
            raise ValueError("max_tilt must lie in (0, 1.48]")


@dataclass(frozen=True)
class StabilityRow:
    """coeff . u + slack_coeff * slack <= rhs_const.

    `scale` > 0 only changes the units the slack is measured in: the QP uses
    the row divided by it, which leaves the hard constraint unchanged.
    """

    coeff: np.ndarray
    rhs_const: float
    slack_coeff: float = -1.0
    scale: float = 1.0

    def value(self, u):
        # left side minus right side at zero slack; <= 0 means satisfied
        return float(np.dot(self.coeff, u) - self.rhs_const)


def clf_position(state, ref, gains):
    e_p = state.p - ref.p_d
    e_v = state.v - ref.v_d
    V = (0.5 * gains.lambda1 * e_p @ e_p + 0.5 * gains.lambda2 * e_v @ e_v
         + gains.lambda_c * e_p @ e_v)
    return V, e_p, e_v


def position_stability_row(state, ref, mu, sigma, c_delta, gains, params):
    """V_dot = L_fV + L_gV F + (w . d)/m with w = dV/de_v = lambda2 e_v + lambda_c e_p.

    The disturbance enters through w, so its worst case over the confidence
    box is c_delta/m * sum_i |w_i| sigma_i.
    """
    V, e_p, e_v = clf_position(state, ref, gains)
    m = params.m
    w = gains.lambda2 * e_v + gains.lambda_c * e_p
    LgV = w @ thrust_axis(state.omega_euler) / m
    LfV = gains.lambda1 * e_p @ e_v + gains.lambda_c * e_v @ e_v + w @ (params.g_vec - ref.a_d)
    LmuV = w @ np.asarray(mu) / m
    LsigV = c_delta / m * np.abs(w) @ np.asarray(sigma)
    # slack in newtons: divide by |dV/dv| = |w|/m
    scale = max(float(np.linalg.norm(w)) / m, 1e-12)
    return StabilityRow(np.array([LgV]), -(LfV + LmuV + LsigV + gains.c_p * V), scale=scale)


def slack_start(u, row_coeff, rhs, lb, ub):
    """Clipped u plus the slack that makes a single row hold: a feasible QP start."""
    u = np.minimum(np.maximum(np.asarray(u, dtype=float), lb), ub)
    return np.append(u, max(0.0, float(np.dot(row_coeff, u) - rhs)))


def _solve(problem, what, x0=None):
    sol = solve_qp(problem, x0=x0)
    if not sol.ok:
        raise QPError(f"{what} QP infeasible")
    return sol.x


def feedforward_thrust(ref, mu, params):
    """Thrust magnitude that would carry the reference acceleration exactly."""
    return float(np.linalg.norm(params.m * (ref.a_d - params.g_vec) - np.asarray(mu)))


def solve_nominal_thrust(row, F_max, gains, F_ff=0.0):
    """QP over (F, beta). Cost on F: 'linear' 0.5 H1 F, 'quadratic' 0.5 H1 F^2,
    'feedforward' 0.5 H1 (F - F_ff)^2."""
    if gains.thrust_cost == "linear":
        hF, fF = 0.0, 0.5 * gains.H1
    elif gains.thrust_cost == "quadratic":
        hF, fF = gains.H1, 0.0
    else:
        hF, fF = gains.H1, -gains.H1 * F_ff
    H = np.diag([hF, 2 * gains.K_beta])
    f = np.array([fF, 0.0])
    c, r = row.coeff[0] / row.scale, row.rhs_const / row.scale
    A = np.array([[c, row.slack_coeff]])
    start = slack_start([0.0], [c], r, 0.0, F_max)
    x = _solve(QPProblem(H, f, A, [r], lb=[0.0, 0.0], ub=[F_max, np.inf]),
               "nominal thrust", start)
    return float(x[0]), float(x[1])


def lmp_nominal_propagation(state, F_n_star, mu, dt, params):
    acc = params.g_vec + (thrust_axis(state.omega_euler) * F_n_star + np.asarray(mu)) / params.m
    return state.p + state.v * dt, state.v + acc * dt


def _direction_to_attitude(n, psi_d, max_tilt):
    b3 = n / np.linalg.norm(n)
    tilt = np.arccos(np.clip(b3[2], -1.0, 1.0))
    if tilt > max_tilt:
        h = b3[:2] / np.linalg.norm(b3[:2])
        b3 = np.array([h[0] * np.sin(max_tilt), h[1] * np.sin(max_tilt), np.cos(max_tilt)])
    return thrust_direction_to_attitude(b3, psi_d)


def lmp_desired_attitude(p_tilde, v_tilde, ref_next, mu_p, mu_v, dt, gains, g_vec,
                         previous=None):
    """Blend of the thrust directions that land on the look-ahead waypoint
    (position) and match its velocity, each one step after the nominal step."""
    n_p = ref_next.p_d - p_tilde - mu_p - v_tilde * dt - g_vec * dt ** 2 / 2
    n_v = ref_next.v_d - v_tilde - mu_v - g_vec * dt
    hold = np.zeros(3) if previous is None else np.asarray(previous, dtype=float)
    if np.linalg.norm(n_p) < 1e-12 or np.linalg.norm(n_v) < 1e-12:
        return hold.copy()
    om_p = _direction_to_attitude(n_p, ref_next.psi_d, gains.max_tilt)
    om_v = _direction_to_attitude(n_v, ref_next.psi_d, gains.max_tilt)
    return gains.lambda3 * om_p + (1 - gains.lambda3) * om_v


def clf_attitude(omega_euler, omega_d, gains):
    e = wrap_angle(np.asarray(omega_euler) - np.asarray(omega_d))
    return 0.5 * gains.lambda4 * e @ e, e


def attitude_stability_row(state, omega_d, mu, sigma, c_delta, gains):
    V, e = clf_attitude(state.omega_euler, omega_d, gains)
    LgV = gains.lambda4 * e @ euler_rate_matrix(state.omega_euler)
    # wind enters only the velocity equation, so the drift and GP slots vanish
    LfV = 0.0
    LmuV = 0.0
    LsigV = 0.0
    return StabilityRow(LgV, -(LfV + LmuV + LsigV + gains.c_a * V))


def solve_nominal_rates(row, omega_max, gains):
    H = np.zeros((4, 4))
    H[:3, :3] = gains.H2
    H[3, 3] = 2 * gains.K_gamma
    A = np.append(row.coeff, row.slack_coeff)[None, :]
    lb = np.array([-omega_max] * 3 + [0.0])
    ub = np.array([omega_max] * 3 + [np.inf])
    start = slack_start(np.zeros(3), row.coeff, row.rhs_const, lb[:3], ub[:3])
    x = _solve(QPProblem(H, np.zeros(4), A, [row.rhs_const], lb, ub), "nominal rates", start)
    return x[:3].copy(), float(x[3])
